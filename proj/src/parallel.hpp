#pragma once

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace procsplat::detail {

/// Worker count: `requested` if positive, else hardware concurrency, capped by the
/// PROCSPLAT_THREADS environment variable when set.
inline int worker_count(int requested) {
    int n = requested > 0 ? requested : static_cast<int>(std::thread::hardware_concurrency());
    if (const char* env = std::getenv("PROCSPLAT_THREADS")) {
        const int cap = std::atoi(env);
        if (cap > 0) n = std::min(n, cap);
    }
    return std::max(n, 1);
}

/// Calls fn(begin, end, worker) over contiguous static chunks of [0, n). Chunk
/// boundaries depend only on n and the worker count, so per-worker reductions
/// done in worker order are deterministic.
template <class Fn>
int parallel_for(std::size_t n, int workers, Fn&& fn) {
    workers = static_cast<int>(std::min<std::size_t>(std::max(workers, 1), std::max<std::size_t>(n, 1)));
    if (workers == 1) {
        fn(std::size_t{0}, n, 0);
        return 1;
    }
    std::vector<std::thread> pool;
    std::exception_ptr error;
    std::mutex error_mutex;
    const std::size_t chunk = (n + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        const std::size_t b = std::min(n, w * chunk);
        const std::size_t e = std::min(n, b + chunk);
        pool.emplace_back([&, b, e, w] {
            try {
                fn(b, e, w);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
    return workers;
}

}  // namespace procsplat::detail
