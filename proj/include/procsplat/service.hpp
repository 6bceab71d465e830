#pragma once

#include "procsplat/citygen.hpp"
#include "procsplat/renderer.hpp"

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

namespace procsplat {

enum class JobKind { Fit, Assemble, Generate };
enum class JobStatus { Queued, Running, Done, Failed };

const char* to_string(JobKind k);
const char* to_string(JobStatus s);

struct JobState {
    std::string id;
    JobKind kind = JobKind::Assemble;
    JobStatus status = JobStatus::Queued;
    double progress = 0.0;
    std::vector<std::string> artifacts;
    std::string error;

    Json to_json() const;
};

/// Thread-safe job table. Status only moves forward: queued, running, then done or failed.
class JobRegistry {
public:
    std::string create(JobKind kind);
    /// Throws ContractViolation on a backwards or unknown transition.
    void advance(const std::string& id, JobStatus next, const std::string& error = {});
    void set_progress(const std::string& id, double fraction);
    void add_artifact(const std::string& id, const std::string& artifact);
    std::optional<JobState> get(const std::string& id) const;

private:
    JobState& at(const std::string& id);
    mutable std::mutex mutex_;
    std::map<std::string, JobState> jobs_;
    std::uint64_t next_ = 1;
};

struct Response {
    int status = 200;
    std::string content_type = "application/json";
    std::string body;
};

/// Request handling behind the HTTP routes. Scenes are immutable once registered,
/// so renders can run concurrently with each other and with new registrations.
class Workshop {
public:
    explicit Workshop(AssetLibrary library, CityConfig city = {}, RenderConfig render = {});

    Response get_assets() const;
    Response get_code(const std::string& building) const;
    Response post_assemble(const std::string& body);
    Response post_render(const std::string& body) const;
    Response post_layout(const std::string& body) const;
    Response post_city(const std::string& body);
    Response get_job(const std::string& id) const;

    std::string add_scene(Scene scene);
    std::shared_ptr<const Scene> scene(const std::string& id) const;
    const AssetLibrary& library() const { return library_; }
    JobRegistry& jobs() { return jobs_; }

private:
    AssetLibrary library_;
    CityConfig city_;
    RenderConfig render_;
    JobRegistry jobs_;
    mutable std::shared_mutex scenes_mutex_;
    std::map<std::string, std::shared_ptr<const Scene>> scenes_;
    std::uint64_t next_scene_ = 1;
};

/// Scene statistics reported by /assemble and /city.
Json scene_stats(const Scene& scene);

/// PNG bytes of a render, as served by /render and written by the render command.
std::vector<std::uint8_t> render_png(const Scene& scene, const Camera& camera, const RenderConfig& config = {});

/// The HTTP front end for a Workshop.
class HttpServer {
public:
    explicit HttpServer(Workshop& workshop);
    ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    /// Binds to `port` (0 picks a free one) and returns the bound port, or -1.
    int bind(const std::string& host, int port);
    /// Serves until stop(); call after bind().
    bool listen();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Entry point of the `procsplat` command line tool. Returns the process exit code:
/// 0 on success, 2 for invalid input (missing files, bad polygons, parse errors).
int run_cli(int argc, const char* const* argv);

}  // namespace procsplat
