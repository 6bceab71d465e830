#pragma once

#include "procsplat/assembly.hpp"
#include "procsplat/io.hpp"
#include "procsplat/renderer.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

namespace procsplat {

struct TrainConfig {
    int iterations = 30000;
    int densify_from = 500;
    int densify_until = 15000;
    int densify_every = 100;
    int clamp_every = 100;
    bool clamp_enabled = true;
    double lambda_ssim = 0.2;
    double soft_margin = 0.2;  // meters
    int n_init = 10000;
    /// Points per variance asset as a fraction of its base asset's allocation; 0 disables variance assets.
    double variance_ratio = 1.0;
    int sh_degree = kDefaultShDegree;

    double lr_position = 1.6e-4;  // times the asset's box diagonal
    double lr_position_final = 1.6e-6;
    double lr_rotation = 1e-3;
    double lr_scale = 5e-3;
    double lr_opacity = 5e-2;
    double lr_sh_dc = 2.5e-3;
    double lr_sh_rest = 2.5e-3 / 20.0;

    /// Mean NDC-space screen gradient above which a Gaussian is densified.
    double densify_grad_threshold = 2e-4;
    /// Clone below, split above this fraction of the asset's box diagonal.
    double percent_dense = 0.01;
    double prune_opacity = 0.005;

    /// Test-split PSNR/SSIM every this many iterations (and at the end); 0 = end only.
    int eval_every = 1000;
    std::uint64_t seed = 0;
    int threads = 0;
    Vec3 background = Vec3::Zero();
    /// Where to dump the model if the loss goes non-finite.
    std::optional<std::filesystem::path> diagnostic_dir;

    /// Throws ConfigError on out-of-range values.
    void validate() const;
};

/// Overlays the keys present in `j` onto `base`. Unknown keys are errors.
TrainConfig train_config_from_json(const Json& j, TrainConfig base = {});
Json train_config_to_json(const TrainConfig& c);

struct ClampReport {
    int scale_count = 0;
    int position_count = 0;
    ClampReport& operator+=(const ClampReport& o) {
        scale_count += o.scale_count;
        position_count += o.position_count;
        return *this;
    }
};

/// Axis-aligned box of a Gaussian's 3-sigma ellipsoid: center +- 3 sqrt(diag Sigma).
Box3 three_sigma_box(const Gaussian3D& g);

/// Halves the scale of every Gaussian whose 3-sigma box leaves the asset box grown by
/// soft_margin (at most once per call), then clamps centers onto the hard box.
ClampReport bbox_clamp(std::vector<Gaussian3D>& gaussians, const AssetSpec& spec, double soft_margin);

/// Running sums of screen-space gradient norms per asset Gaussian.
struct GradStats {
    std::vector<double> sum;
    std::vector<int> count;

    explicit GradStats(std::size_t n = 0) : sum(n, 0.0), count(n, 0) {}
    void add(std::size_t i, double norm) {
        sum[i] += norm;
        ++count[i];
    }
    double mean(std::size_t i) const { return count[i] ? sum[i] / count[i] : 0.0; }
};

struct DensifyReport {
    int cloned = 0;
    int split = 0;
    int pruned = 0;
};

/// Clones small and splits large high-gradient Gaussians, then prunes near-transparent
/// ones. `origin[i]` of the result names the input Gaussian that output i continues
/// (-1 for newly created ones), so optimizer state can follow.
DensifyReport densify_and_prune(std::vector<Gaussian3D>& gaussians, const GradStats& stats,
                                const AssetSpec& spec, const TrainConfig& config, Rng& rng,
                                std::vector<int>& origin, bool densify = true);

struct MetricsRecord {
    int iter = 0;
    double loss = 0.0;
    std::optional<double> psnr;
    std::optional<double> ssim;
    std::size_t n_gaussians = 0;
    int clamp_scale_count = 0;
    int clamp_pos_count = 0;
    bool clamp = false;  // a clamp pass ran at this iteration

    Json to_json() const;
};

void write_metrics_log(const std::filesystem::path& path, const std::vector<MetricsRecord>& log);

struct Evaluation {
    double psnr = 0.0;  // mean over views
    double ssim = 0.0;
};

Evaluation evaluate(const Scene& scene, std::span<const View> views, const RenderConfig& cfg);

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<MetricsRecord> log;
    std::optional<Evaluation> initial;  // test metrics before the first step
    std::optional<Evaluation> final;
};

using ProgressFn = std::function<void(int iter, int total)>;

/// Fits base and variance assets for the given layout from posed images.
TrainResult train(const Dataset& data, const Layout& layout, std::span<const AssetSpec> manifest,
                  const TrainConfig& config, const ProgressFn& progress = {});

/// Continues optimizing an existing model, as train() does after initialization.
TrainResult train_from(const Dataset& data, Checkpoint init, const TrainConfig& config,
                       const ProgressFn& progress = {});

/// Model in which every placement owns an independent copy of its asset (base and
/// variance merged), so nothing is shared between instances.
Checkpoint unshare(const Checkpoint& model);

/// The unshared baseline: unshare(init), then the same loop with clamping off.
TrainResult fit_baseline(const Dataset& data, const Checkpoint& init, const TrainConfig& config,
                         const ProgressFn& progress = {});

/// The model train() starts from for this layout and config.
Checkpoint initial_model(const Layout& layout, std::span<const AssetSpec> manifest, const TrainConfig& config);

}  // namespace procsplat
