#pragma once

#include "procsplat/assembly.hpp"
#include "procsplat/image.hpp"
#include "procsplat/splat.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace procsplat {

struct RenderConfig {
    int tile_size = 16;
    Vec3 background = Vec3::Zero();
    double near_plane = kDefaultNearPlane;
    double low_pass = kLowPassFloor;
    /// Compositing stops once transmittance falls below this.
    double min_transmittance = 1e-4;
    /// 0 = hardware concurrency (capped by PROCSPLAT_THREADS).
    int threads = 0;
};

/// Smallest contribution a splat may make to a pixel before it is skipped.
constexpr double kMinContribution = 1.0 / 255.0;

/// Everything the backward pass needs about one projected scene entry.
struct ProjectedSplat {
    bool visible = false;
    Vec2 mean2d = Vec2::Zero();
    Mat2 cov2d = Mat2::Identity();
    Vec3 conic = Vec3::Zero();  // (a, b, c) of the inverse 2D covariance [[a, b], [b, c]]
    Vec3 color = Vec3::Zero();  // after clamping at 0
    std::array<bool, 3> color_clamped{};
    double alpha = 0.0;
    double depth = 0.0;
    Vec3 cam_point = Vec3::Zero();  // center in camera space
    Vec3 view_dir = Vec3::Zero();   // normalized world direction camera -> center
    double view_dist = 0.0;
    Vec3 sh_dir = Vec3::Zero();  // view_dir expressed in the SH frame
    int x0 = 0, x1 = -1, y0 = 0, y1 = -1;  // pixel bounds that can receive >= kMinContribution
};

struct RenderOutput {
    Image color;
    std::vector<double> alpha;  // row-major, one per pixel

    Camera camera;
    RenderConfig config;
    std::vector<ProjectedSplat> splats;  // one per scene entry
    int tiles_x = 0;
    int tiles_y = 0;
    std::vector<std::vector<int>> tile_lists;  // per tile, front to back

    std::size_t scene_size = 0;
    std::uint64_t scene_digest = 0;

    /// Number of (pixel, entry) pairs that took part in compositing, plus an
    /// order-independent hash of that set. Two renders with equal signatures
    /// composited the same entries at the same pixels.
    std::size_t blended_pairs = 0;
    std::uint64_t blend_digest = 0;

    double alpha_at(int x, int y) const { return alpha[static_cast<std::size_t>(y) * color.width + x]; }
};

/// Per-entry gradients in the flat parameter layout of params.hpp, plus the
/// screen-space mean gradient used by densification.
struct SceneGradients {
    int sh_count = 0;
    int stride = 0;
    std::vector<double> values;
    std::vector<Vec2> mean2d;

    SceneGradients() = default;
    SceneGradients(std::size_t entries, int sh_count);

    std::size_t size() const { return mean2d.size(); }
    std::span<double> entry(std::size_t i) { return {values.data() + i * stride, static_cast<std::size_t>(stride)}; }
    std::span<const double> entry(std::size_t i) const {
        return {values.data() + i * stride, static_cast<std::size_t>(stride)};
    }
};

/// Gradients routed back to base and variance assets, same flat layout.
struct AssetGradients {
    int stride = 0;
    std::vector<std::vector<double>> bases;      // per asset, size = base_sizes[a] * stride
    std::vector<std::vector<double>> variances;  // per variance slot
};

/// Hash of every Gaussian parameter; used to detect forward/backward mismatches.
std::uint64_t scene_digest(const Scene& scene);

RenderOutput render(const Scene& scene, const Camera& cam, const RenderConfig& config = {});

/// Gradients of sum(dl_dimage .* output.color) with respect to every scene entry.
/// Throws ContractViolation if `scene` is not the one `output` was rendered from.
SceneGradients render_backward(const Scene& scene, const RenderOutput& output,
                               const Image& dl_dimage);

/// Pulls per-entry gradients back through each instance transform and sums them
/// into the shared assets.
AssetGradients accumulate_shared(const SceneGradients& grads, const Scene& scene);

}  // namespace procsplat
