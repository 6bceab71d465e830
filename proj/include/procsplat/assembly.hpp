#pragma once

#include "procsplat/grammar.hpp"
#include "procsplat/splat.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace procsplat {

using Rng = std::mt19937_64;

struct BaseAsset {
    AssetSpec spec;
    std::vector<Gaussian3D> gaussians;  // asset-local frame
};

/// Per-placement residual Gaussians, stored in the owner's local frame.
struct VarianceAsset {
    std::string owner_asset_id;
    int instance_index = 0;
    std::vector<Gaussian3D> gaussians;
};

enum class Source : std::uint8_t { Base, Variance };

struct Provenance {
    Source source = Source::Base;
    int asset_index = 0;     // into Scene::asset_ids (and the bases passed to assemble)
    int instance_index = 0;  // into Scene::instances
    int variance_slot = -1;  // into the variances passed to assemble, or -1
    int local_index = 0;     // Gaussian index inside the base or variance asset
};

/// Flat, render-ready list of world-space Gaussians plus enough bookkeeping to route
/// gradients back to the assets they came from.
struct Scene {
    std::vector<Gaussian3D> gaussians;
    std::vector<Provenance> provenance;
    std::vector<InstanceTransform> instances;  // one per instantiation, list order
    std::vector<std::string> asset_ids;
    std::vector<int> base_sizes;      // per asset
    std::vector<int> variance_sizes;  // per variance slot

    std::size_t size() const { return gaussians.size(); }
    bool empty() const { return gaussians.empty(); }
    const InstanceTransform& transform_of(std::size_t entry) const {
        return instances[provenance[entry].instance_index];
    }

    /// Scene whose entries are independent world-space Gaussians (one asset, one
    /// identity instance).
    static Scene flat(std::vector<Gaussian3D> gaussians);
};

struct Box3 {
    Vec3 min = Vec3::Zero();
    Vec3 max = Vec3::Zero();

    Vec3 extent() const { return max - min; }
    bool contains(const Vec3& p, double tol = 0.0) const {
        return (p.array() >= min.array() - tol).all() && (p.array() <= max.array() + tol).all();
    }
    bool contains(const Box3& b, double tol = 0.0) const {
        return contains(b.min, tol) && contains(b.max, tol);
    }
};

/// Splits a point budget across assets in proportion to box volume (largest
/// remainder, ties to the lower index, at least one point per asset).
std::vector<int> allocate_points(std::span<const AssetSpec> manifest, int total);

/// Initial log-scale for each point: log of its nearest-neighbour distance, clamped
/// to [1e-4, max_scale].
std::vector<double> nearest_neighbor_log_scales(std::span<const Vec3> points, double max_scale);

BaseAsset init_base_asset(const AssetSpec& spec, int count, Rng& rng,
                          int sh_degree = kDefaultShDegree);

/// One variance asset per instantiation of `spec` in `list`, `count` points each,
/// starting near-transparent.
std::vector<VarianceAsset> init_variance_assets(const AssetSpec& spec, const InstantiationList& list,
                                                int count, Rng& rng,
                                                int sh_degree = kDefaultShDegree);

struct PointInitResult {
    BaseAsset asset;
    bool fell_back = false;  // no point survived filtering; uniform init was used
    std::size_t gathered = 0;
};

/// Seeds a base asset from a reconstructed point cloud: points inside each instance
/// box are pulled back to the local frame, concatenated and downsampled by K.
PointInitResult init_from_points(const AssetSpec& spec, const InstantiationList& list,
                                 std::span<const Vec3> points, int fallback_count, Rng& rng,
                                 int sh_degree = kDefaultShDegree);

/// mu' = R S mu + T, q' = q_R q, s' = S s. Opacity and SH pass through.
Gaussian3D instantiate(const Gaussian3D& g, const InstanceTransform& t);

/// Precomputed pieces of an InstanceTransform used in the hot assembly loop.
struct InstanceFrame {
    Mat3 linear;  // R * diag(S)
    Vec3 translation;
    Vec4 quat;
    Vec3 log_scale;

    explicit InstanceFrame(const InstanceTransform& t);
    Gaussian3D apply(const Gaussian3D& g) const;
};

Scene assemble(const InstantiationList& list, std::span<const BaseAsset> bases,
               std::span<const VarianceAsset> variances);

struct Disassembly {
    std::vector<std::vector<Gaussian3D>> bases;
    std::vector<std::vector<Gaussian3D>> variances;
};

/// Inverts assemble using provenance (first occurrence of each asset Gaussian wins).
Disassembly disassemble(const Scene& scene);

Box3 local_box(const AssetSpec& spec);
Box3 world_bbox(const AssetSpec& spec, const InstanceTransform& t);

}  // namespace procsplat
