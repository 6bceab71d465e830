#include "procsplat/assembly.hpp"

#include "procsplat/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

namespace procsplat {

namespace {

constexpr double kBaseOpacity = 0.1;
constexpr double kVarianceOpacity = 0.02;
constexpr double kMinScale = 1e-4;

Gaussian3D blank_gaussian(const Vec3& position, double log_scale, double opacity, int sh_degree) {
    Gaussian3D g;
    g.position = position;
    g.rotation = identity_quat();
    g.log_scale = Vec3::Constant(log_scale);
    g.opacity_logit = logit(opacity);
    // DC = 0 renders as mid-gray (0.5).
    g.sh.assign(sh_coeff_count(sh_degree), Vec3::Zero());
    return g;
}

std::vector<Vec3> uniform_points(const AssetSpec& spec, int count, Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const Vec3 lo = spec.box_min();
    std::vector<Vec3> pts(count);
    for (auto& p : pts) {
        for (int k = 0; k < 3; ++k) p[k] = lo[k] + u(rng) * spec.extent[k];
    }
    return pts;
}

std::vector<Gaussian3D> gaussians_at(std::span<const Vec3> pts, const AssetSpec& spec,
                                     double opacity, int sh_degree) {
    const double diag = spec.extent.norm();
    const auto ls = nearest_neighbor_log_scales(pts, diag / 4.0);
    std::vector<Gaussian3D> out;
    out.reserve(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i)
        out.push_back(blank_gaussian(pts[i], ls[i], opacity, sh_degree));
    return out;
}

void check_degree(int sh_degree) {
    if (sh_degree < 0 || sh_degree > kMaxShDegree)
        throw InvalidParameter("SH degree must be in [0, " + std::to_string(kMaxShDegree) + "]");
}

}  // namespace

Scene Scene::flat(std::vector<Gaussian3D> gaussians) {
    Scene s;
    s.asset_ids = {"flat"};
    s.base_sizes = {static_cast<int>(gaussians.size())};
    s.instances = {InstanceTransform{}};
    s.provenance.resize(gaussians.size());
    for (std::size_t i = 0; i < gaussians.size(); ++i)
        s.provenance[i] = {Source::Base, 0, 0, -1, static_cast<int>(i)};
    s.gaussians = std::move(gaussians);
    return s;
}

std::vector<int> allocate_points(std::span<const AssetSpec> manifest, int total) {
    const int m = static_cast<int>(manifest.size());
    if (m == 0) throw InvalidParameter("allocate_points: empty manifest");
    if (total < m)
        throw InvalidParameter("allocate_points: budget " + std::to_string(total) +
                               " is smaller than the asset count " + std::to_string(m));
    double vol_sum = 0.0;
    for (const auto& s : manifest) {
        if (!(s.volume() > 0.0) || !std::isfinite(s.volume()))
            throw InvalidParameter("allocate_points: asset '" + s.id + "' has no volume");
        vol_sum += s.volume();
    }
    std::vector<double> quota(m);
    std::vector<int> count(m);
    int assigned = 0;
    for (int i = 0; i < m; ++i) {
        quota[i] = total * (manifest[i].volume() / vol_sum);
        count[i] = static_cast<int>(std::floor(quota[i]));
        assigned += count[i];
    }
    std::vector<int> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return (quota[a] - count[a]) > (quota[b] - count[b]);
    });
    // floor() can undershoot by m at most; the first `total - assigned` remainders win.
    for (int k = 0; assigned < total; ++k, ++assigned) ++count[order[k % m]];

    // Floor of one point per asset, taken from assets that were rounded up.
    for (int i = 0; i < m; ++i) {
        if (count[i] > 0) continue;
        int donor = -1;
        for (int j = 0; j < m; ++j) {
            if (count[j] < 2) continue;
            const bool rounded_up = count[j] >= quota[j];
            if (donor < 0) {
                donor = j;
                continue;
            }
            const bool donor_up = count[donor] >= quota[donor];
            if (rounded_up != donor_up) {
                if (rounded_up) donor = j;
            } else if (count[j] - quota[j] > count[donor] - quota[donor]) {
                donor = j;
            }
        }
        --count[donor];
        count[i] = 1;
    }
    return count;
}

std::vector<double> nearest_neighbor_log_scales(std::span<const Vec3> points, double max_scale) {
    const std::size_t n = points.size();
    const double hi = std::max(max_scale, kMinScale);
    std::vector<double> best(n, std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double d2 = (points[i] - points[j]).squaredNorm();
            best[i] = std::min(best[i], d2);
            best[j] = std::min(best[j], d2);
        }
    }
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double d = std::isfinite(best[i]) ? std::sqrt(best[i]) : hi;
        out[i] = std::log(std::clamp(d, kMinScale, hi));
    }
    return out;
}

BaseAsset init_base_asset(const AssetSpec& spec, int count, Rng& rng, int sh_degree) {
    if (count < 1) throw InvalidParameter("init_base_asset: count must be >= 1");
    check_degree(sh_degree);
    const auto pts = uniform_points(spec, count, rng);
    return BaseAsset{spec, gaussians_at(pts, spec, kBaseOpacity, sh_degree)};
}

std::vector<VarianceAsset> init_variance_assets(const AssetSpec& spec, const InstantiationList& list,
                                                int count, Rng& rng, int sh_degree) {
    check_degree(sh_degree);
    std::vector<VarianceAsset> out;
    int ordinal = 0;
    for (const Instantiation& inst : list) {
        if (inst.asset_id != spec.id) continue;
        VarianceAsset v;
        v.owner_asset_id = spec.id;
        v.instance_index = inst.variance_index.value_or(ordinal);
        ++ordinal;
        if (count > 0) {
            const auto pts = uniform_points(spec, count, rng);
            v.gaussians = gaussians_at(pts, spec, kVarianceOpacity, sh_degree);
        }
        out.push_back(std::move(v));
    }
    return out;
}

PointInitResult init_from_points(const AssetSpec& spec, const InstantiationList& list,
                                 std::span<const Vec3> points, int fallback_count, Rng& rng,
                                 int sh_degree) {
    check_degree(sh_degree);
    const Box3 box = local_box(spec);
    std::vector<Vec3> gathered;
    std::size_t k_instances = 0;
    for (const Instantiation& inst : list) {
        if (inst.asset_id != spec.id) continue;
        ++k_instances;
        for (const Vec3& p : points) {
            const Vec3 local = inst.transform.inverse_apply(p);
            if (box.contains(local)) gathered.push_back(local);
        }
    }
    PointInitResult res;
    res.gathered = gathered.size();
    if (gathered.empty() || k_instances == 0) {
        res.asset = init_base_asset(spec, std::max(1, fallback_count), rng, sh_degree);
        res.fell_back = true;
        return res;
    }
    std::vector<Vec3> kept;
    for (std::size_t i = 0; i < gathered.size(); i += k_instances) kept.push_back(gathered[i]);
    res.asset = BaseAsset{spec, gaussians_at(kept, spec, kBaseOpacity, sh_degree)};
    return res;
}

InstanceFrame::InstanceFrame(const InstanceTransform& t)
    : linear(t.R * t.S.asDiagonal()),
      translation(t.T),
      quat(matrix_to_quat(t.R)),
      log_scale(t.S.array().log()) {}

Gaussian3D InstanceFrame::apply(const Gaussian3D& g) const {
    Gaussian3D out;
    out.position = linear * g.position + translation;
    out.rotation = quat_multiply(quat, g.rotation);
    out.log_scale = g.log_scale + log_scale;
    out.opacity_logit = g.opacity_logit;
    out.sh = g.sh;
    return out;
}

Gaussian3D instantiate(const Gaussian3D& g, const InstanceTransform& t) {
    return InstanceFrame(t).apply(g);
}

Scene assemble(const InstantiationList& list, std::span<const BaseAsset> bases,
               std::span<const VarianceAsset> variances) {
    Scene scene;
    std::unordered_map<std::string, int> asset_of;
    for (std::size_t a = 0; a < bases.size(); ++a) {
        asset_of.emplace(bases[a].spec.id, static_cast<int>(a));
        scene.asset_ids.push_back(bases[a].spec.id);
        scene.base_sizes.push_back(static_cast<int>(bases[a].gaussians.size()));
    }
    std::unordered_map<std::string, std::unordered_map<int, int>> variance_of;
    for (std::size_t v = 0; v < variances.size(); ++v) {
        variance_of[variances[v].owner_asset_id][variances[v].instance_index] = static_cast<int>(v);
        scene.variance_sizes.push_back(static_cast<int>(variances[v].gaussians.size()));
    }

    // Bucket instances per asset, keeping list order.
    std::vector<std::vector<int>> per_asset(bases.size());
    std::vector<int> slot_of(list.size(), -1);
    std::size_t total = 0;
    for (std::size_t k = 0; k < list.size(); ++k) {
        const auto it = asset_of.find(list[k].asset_id);
        if (it == asset_of.end())
            throw ResolveError("assemble: instantiation " + std::to_string(k) +
                               " references unknown asset '" + list[k].asset_id + "'");
        per_asset[it->second].push_back(static_cast<int>(k));
        total += bases[it->second].gaussians.size();
        if (list[k].variance_index) {
            int slot = -1;
            if (const auto owner = variance_of.find(list[k].asset_id); owner != variance_of.end()) {
                if (const auto s = owner->second.find(*list[k].variance_index); s != owner->second.end())
                    slot = s->second;
            }
            if (slot < 0)
                throw ResolveError("assemble: variance " + std::to_string(*list[k].variance_index) +
                                   " of asset '" + list[k].asset_id + "' does not exist");
            slot_of[k] = slot;
            total += variances[slot].gaussians.size();
        }
    }

    scene.instances.reserve(list.size());
    for (const auto& inst : list) scene.instances.push_back(inst.transform);
    scene.gaussians.reserve(total);
    scene.provenance.reserve(total);
    for (std::size_t a = 0; a < bases.size(); ++a) {
        for (int k : per_asset[a]) {
            const InstanceFrame frame(list[k].transform);
            const auto& base = bases[a].gaussians;
            for (std::size_t i = 0; i < base.size(); ++i) {
                scene.gaussians.push_back(frame.apply(base[i]));
                scene.provenance.push_back(
                    {Source::Base, static_cast<int>(a), k, -1, static_cast<int>(i)});
            }
            if (slot_of[k] >= 0) {
                const auto& var = variances[slot_of[k]].gaussians;
                for (std::size_t i = 0; i < var.size(); ++i) {
                    scene.gaussians.push_back(frame.apply(var[i]));
                    scene.provenance.push_back(
                        {Source::Variance, static_cast<int>(a), k, slot_of[k], static_cast<int>(i)});
                }
            }
        }
    }
    return scene;
}

Disassembly disassemble(const Scene& scene) {
    Disassembly out;
    out.bases.resize(scene.base_sizes.size());
    for (std::size_t a = 0; a < scene.base_sizes.size(); ++a) out.bases[a].resize(scene.base_sizes[a]);
    out.variances.resize(scene.variance_sizes.size());
    for (std::size_t v = 0; v < scene.variance_sizes.size(); ++v)
        out.variances[v].resize(scene.variance_sizes[v]);
    std::vector<std::vector<bool>> seen_base(out.bases.size()), seen_var(out.variances.size());
    for (std::size_t a = 0; a < out.bases.size(); ++a) seen_base[a].assign(out.bases[a].size(), false);
    for (std::size_t v = 0; v < out.variances.size(); ++v) seen_var[v].assign(out.variances[v].size(), false);

    for (std::size_t e = 0; e < scene.size(); ++e) {
        const Provenance& p = scene.provenance[e];
        auto& seen = p.source == Source::Base ? seen_base[p.asset_index] : seen_var[p.variance_slot];
        if (seen[p.local_index]) continue;
        seen[p.local_index] = true;
        const InstanceTransform& t = scene.transform_of(e);
        const Gaussian3D& w = scene.gaussians[e];
        Gaussian3D g = w;
        g.position = t.inverse_apply(w.position);
        const Vec4 qr = matrix_to_quat(t.R);
        const Vec4 qr_conj(qr[0], -qr[1], -qr[2], -qr[3]);
        g.rotation = quat_multiply(qr_conj, w.rotation);
        g.log_scale = w.log_scale - Vec3(t.S.array().log());
        (p.source == Source::Base ? out.bases[p.asset_index] : out.variances[p.variance_slot])[p.local_index] = g;
    }
    return out;
}

Box3 local_box(const AssetSpec& spec) { return {spec.box_min(), spec.box_max()}; }

Box3 world_bbox(const AssetSpec& spec, const InstanceTransform& t) {
    const Vec3 lo = spec.box_min(), hi = spec.box_max();
    Box3 b{Vec3::Constant(std::numeric_limits<double>::infinity()),
           Vec3::Constant(-std::numeric_limits<double>::infinity())};
    for (int c = 0; c < 8; ++c) {
        const Vec3 corner((c & 1) ? hi.x() : lo.x(), (c & 2) ? hi.y() : lo.y(), (c & 4) ? hi.z() : lo.z());
        const Vec3 w = t.apply(corner);
        b.min = b.min.cwiseMin(w);
        b.max = b.max.cwiseMax(w);
    }
    return b;
}

}  // namespace procsplat
