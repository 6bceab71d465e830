#include "procsplat/renderer.hpp"

#include "parallel.hpp"
#include "procsplat/error.hpp"
#include "procsplat/params.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <string>

namespace procsplat {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

std::uint64_t pair_hash(std::size_t pixel, int entry) {
    return splitmix((static_cast<std::uint64_t>(pixel) << 32) ^ static_cast<std::uint32_t>(entry));
}

int uniform_sh_count(const Scene& scene) {
    if (scene.empty()) return sh_coeff_count(kDefaultShDegree);
    const std::size_t n = scene.gaussians.front().sh.size();
    if (sh_degree_for(n) < 0) throw ShapeError("scene uses an unsupported SH coefficient count");
    for (const auto& g : scene.gaussians)
        if (g.sh.size() != n) throw ShapeError("scene mixes SH degrees");
    return static_cast<int>(n);
}

ProjectedSplat project_entry(const Gaussian3D& g, const Mat3& sh_frame, const Camera& cam,
                             const RenderConfig& cfg) {
    ProjectedSplat p;
    if (!g.position.allFinite() || !g.log_scale.allFinite() || !g.rotation.allFinite() ||
        !std::isfinite(g.opacity_logit))
        throw InvalidParameter("render: scene contains non-finite parameters");
    const Mat3 w = cam.rotation();
    const Vec3 t = w * g.position + cam.translation();
    p.cam_point = t;
    p.depth = t.z();
    if (!(t.z() > cfg.near_plane)) return p;

    p.alpha = g.opacity();
    if (p.alpha < kMinContribution) return p;

    const double iz = 1.0 / t.z();
    Eigen::Matrix<double, 2, 3> j;
    j << cam.fx * iz, 0.0, -cam.fx * t.x() * iz * iz,
         0.0, cam.fy * iz, -cam.fy * t.y() * iz * iz;
    const Eigen::Matrix<double, 2, 3> jw = j * w;
    const Mat3 sigma = covariance3d(g.rotation, g.scale());
    p.cov2d = jw * sigma * jw.transpose() + cfg.low_pass * Mat2::Identity();
    p.cov2d(1, 0) = p.cov2d(0, 1);
    const double det = p.cov2d.determinant();
    if (!(det > 0.0)) return p;
    p.conic = {p.cov2d(1, 1) / det, -p.cov2d(0, 1) / det, p.cov2d(0, 0) / det};
    p.mean2d = {cam.fx * t.x() * iz + cam.cx, cam.fy * t.y() * iz + cam.cy};

    // sigma >= kMinContribution  <=>  d^T K d <= 2 ln(255 alpha); the AABB of that
    // ellipse is +-sqrt(r2 * cov_kk) on each axis.
    const double r2 = 2.0 * std::log(p.alpha / kMinContribution);
    const double rx = std::sqrt(r2 * p.cov2d(0, 0)) + 1e-6;
    const double ry = std::sqrt(r2 * p.cov2d(1, 1)) + 1e-6;
    const double fx0 = std::ceil(p.mean2d.x() - rx - 0.5), fx1 = std::floor(p.mean2d.x() + rx - 0.5);
    const double fy0 = std::ceil(p.mean2d.y() - ry - 0.5), fy1 = std::floor(p.mean2d.y() + ry - 0.5);
    if (fx1 < 0.0 || fy1 < 0.0 || fx0 > cam.width - 1.0 || fy0 > cam.height - 1.0) return p;
    p.x0 = static_cast<int>(std::max(fx0, 0.0));
    p.x1 = static_cast<int>(std::min(fx1, cam.width - 1.0));
    p.y0 = static_cast<int>(std::max(fy0, 0.0));
    p.y1 = static_cast<int>(std::min(fy1, cam.height - 1.0));

    const Vec3 v = g.position - cam.center();
    p.view_dist = v.norm();
    p.view_dir = p.view_dist > 0.0 ? Vec3(v / p.view_dist) : Vec3::UnitZ();
    p.sh_dir = sh_frame.transpose() * p.view_dir;
    const Vec3 raw = sh_color(g.sh, p.sh_dir);
    for (int c = 0; c < 3; ++c) {
        p.color_clamped[c] = raw[c] < 0.0;
        p.color[c] = std::max(raw[c], 0.0);
    }
    p.visible = true;
    return p;
}

struct PixelSample {
    int entry;
    double sigma;
    double gauss;
    double trans;  // transmittance in front of this entry
};

/// Hot-loop copy of the fields compositing reads.
struct Candidate {
    double mx, my, a, b, c, alpha;
    double min_power;  // below this, alpha * exp(power) < kMinContribution
    int x0, x1, y0, y1;
    int entry;
};

/// Walks one pixel's candidates front to back; calls on_blend for every contributing
/// entry and returns the final transmittance.
template <class F>
double composite_pixel(const std::vector<Candidate>& row, int x, int y, double min_trans, F&& on_blend) {
    const double px = x + 0.5, py = y + 0.5;
    double trans = 1.0;
    for (const Candidate& p : row) {
        if (x < p.x0 || x > p.x1) continue;
        const double dx = px - p.mx, dy = py - p.my;
        const double power = -0.5 * (p.a * dx * dx + p.c * dy * dy) - p.b * dx * dy;
        if (power > 0.0 || power < p.min_power) continue;
        const double gauss = std::exp(power);
        const double sigma = p.alpha * gauss;
        if (sigma < kMinContribution) continue;
        on_blend(PixelSample{p.entry, sigma, gauss, trans});
        trans *= 1.0 - sigma;
        if (trans < min_trans) break;
    }
    return trans;
}

/// Calls fn(x, y, row_candidates) for every pixel of a tile; the candidate list holds,
/// in depth order, the tile's entries whose pixel bounds cover row y.
template <class F>
void for_each_tile_pixel(const RenderOutput& out, std::size_t tile, std::vector<Candidate>& all,
                         std::vector<Candidate>& row, F&& fn) {
    const int ts = out.config.tile_size;
    const int tx = static_cast<int>(tile) % out.tiles_x, ty = static_cast<int>(tile) / out.tiles_x;
    const int xb = tx * ts, yb = ty * ts;
    const int xe = std::min(xb + ts, out.color.width), ye = std::min(yb + ts, out.color.height);
    all.clear();
    for (const int idx : out.tile_lists[tile]) {
        const ProjectedSplat& p = out.splats[idx];
        all.push_back({p.mean2d.x(), p.mean2d.y(), p.conic[0], p.conic[1], p.conic[2], p.alpha,
                       std::log(kMinContribution / p.alpha) - 1e-9, p.x0, p.x1, p.y0, p.y1, idx});
    }
    for (int y = yb; y < ye; ++y) {
        row.clear();
        for (const Candidate& c : all)
            if (y >= c.y0 && y <= c.y1) row.push_back(c);
        for (int x = xb; x < xe; ++x) fn(x, y, row);
    }
}

}  // namespace

SceneGradients::SceneGradients(std::size_t entries, int sh_count_)
    : sh_count(sh_count_),
      stride(param::stride(sh_count_)),
      values(entries * param::stride(sh_count_), 0.0),
      mean2d(entries, Vec2::Zero()) {}

std::uint64_t scene_digest(const Scene& scene) {
    std::uint64_t h = splitmix(scene.size());
    auto mix = [&h](double v) { h = splitmix(h ^ std::bit_cast<std::uint64_t>(v)); };
    for (const auto& g : scene.gaussians) {
        for (int k = 0; k < 3; ++k) mix(g.position[k]);
        for (int k = 0; k < 4; ++k) mix(g.rotation[k]);
        for (int k = 0; k < 3; ++k) mix(g.log_scale[k]);
        mix(g.opacity_logit);
        for (const auto& c : g.sh)
            for (int k = 0; k < 3; ++k) mix(c[k]);
    }
    return h;
}

RenderOutput render(const Scene& scene, const Camera& cam, const RenderConfig& config) {
    if (cam.width <= 0 || cam.height <= 0) throw ConfigError("render: image size must be positive");
    if (config.tile_size <= 0) throw ConfigError("render: tile size must be positive");
    cam.validate();
    uniform_sh_count(scene);
    if (scene.provenance.size() != scene.size())
        throw ContractViolation("render: provenance does not match scene size");

    RenderOutput out;
    out.camera = cam;
    out.config = config;
    out.scene_size = scene.size();
    out.scene_digest = scene_digest(scene);
    out.color = Image(cam.width, cam.height);
    out.alpha.assign(static_cast<std::size_t>(cam.width) * cam.height, 0.0);
    out.tiles_x = (cam.width + config.tile_size - 1) / config.tile_size;
    out.tiles_y = (cam.height + config.tile_size - 1) / config.tile_size;
    out.tile_lists.resize(static_cast<std::size_t>(out.tiles_x) * out.tiles_y);

    const int workers = detail::worker_count(config.threads);
    const std::size_t n = scene.size();
    out.splats.resize(n);
    detail::parallel_for(n, workers, [&](std::size_t b, std::size_t e, int) {
        for (std::size_t i = b; i < e; ++i)
            out.splats[i] = project_entry(scene.gaussians[i], scene.transform_of(i).R, cam, config);
    });

    std::vector<int> order;
    order.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        if (out.splats[i].visible) order.push_back(static_cast<int>(i));
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        const double da = out.splats[a].depth, db = out.splats[b].depth;
        return da < db || (da == db && a < b);
    });
    const int ts = config.tile_size;
    for (const int idx : order) {
        const ProjectedSplat& p = out.splats[idx];
        for (int ty = p.y0 / ts; ty <= p.y1 / ts; ++ty)
            for (int tx = p.x0 / ts; tx <= p.x1 / ts; ++tx)
                out.tile_lists[static_cast<std::size_t>(ty) * out.tiles_x + tx].push_back(idx);
    }

    std::vector<std::size_t> pairs(workers, 0);
    std::vector<std::uint64_t> digests(workers, 0);
    detail::parallel_for(out.tile_lists.size(), workers, [&](std::size_t b, std::size_t e, int w) {
        std::vector<Candidate> all, row;
        for (std::size_t tile = b; tile < e; ++tile) {
            for_each_tile_pixel(out, tile, all, row, [&](int x, int y, const std::vector<Candidate>& cands) {
                const std::size_t pix = static_cast<std::size_t>(y) * cam.width + x;
                Vec3 c = Vec3::Zero();
                const double trans = composite_pixel(cands, x, y, config.min_transmittance, [&](const PixelSample& s) {
                    c += out.splats[s.entry].color * (s.sigma * s.trans);
                    ++pairs[w];
                    digests[w] += pair_hash(pix, s.entry);
                });
                c += trans * config.background;
                for (int k = 0; k < 3; ++k) out.color.pixels[pix * 3 + k] = c[k];
                out.alpha[pix] = 1.0 - trans;
            });
        }
    });
    for (int w = 0; w < workers; ++w) {
        out.blended_pairs += pairs[w];
        out.blend_digest += digests[w];
    }
    return out;
}

namespace {

struct SplatAccum {
    Vec3 color = Vec3::Zero();
    double alpha = 0.0;
    Vec2 mean = Vec2::Zero();
    Vec3 conic = Vec3::Zero();
};

void entry_backward(const Gaussian3D& g, const Mat3& sh_frame, const ProjectedSplat& p,
                    const SplatAccum& acc, const Camera& cam, std::span<double> out, Vec2& dmean_out) {
    dmean_out = acc.mean;
    const double fx = cam.fx, fy = cam.fy;
    const Vec3& t = p.cam_point;
    const double iz = 1.0 / t.z(), iz2 = iz * iz, iz3 = iz2 * iz;
    const Mat3 w = cam.rotation();

    // Conic -> 2D covariance.
    const Mat2 k{{p.conic[0], p.conic[1]}, {p.conic[1], p.conic[2]}};
    const Mat2 gk{{acc.conic[0], 0.5 * acc.conic[1]}, {0.5 * acc.conic[1], acc.conic[2]}};
    const Mat2 g_cov2 = -k * gk * k;

    Eigen::Matrix<double, 2, 3> j;
    j << fx * iz, 0.0, -fx * t.x() * iz2,
         0.0, fy * iz, -fy * t.y() * iz2;
    const Eigen::Matrix<double, 2, 3> tm = j * w;
    const Vec3 scale = g.scale();
    const double qn = g.rotation.norm();
    const Vec4 q_unit = g.rotation / qn;
    const Mat3 r = unit_quat_to_matrix(q_unit);
    const Mat3 m = r * scale.asDiagonal();
    const Mat3 sigma = m * m.transpose();

    const Mat3 g_sigma = tm.transpose() * g_cov2 * tm;
    const Eigen::Matrix<double, 2, 3> g_t = 2.0 * g_cov2 * tm * sigma;
    const Eigen::Matrix<double, 2, 3> g_j = g_t * w.transpose();

    Vec3 dt;
    dt.x() = g_j(0, 2) * (-fx * iz2) + acc.mean.x() * fx * iz;
    dt.y() = g_j(1, 2) * (-fy * iz2) + acc.mean.y() * fy * iz;
    dt.z() = g_j(0, 0) * (-fx * iz2) + g_j(0, 2) * (2.0 * fx * t.x() * iz3) + g_j(1, 1) * (-fy * iz2) +
             g_j(1, 2) * (2.0 * fy * t.y() * iz3) - acc.mean.x() * fx * t.x() * iz2 -
             acc.mean.y() * fy * t.y() * iz2;
    Vec3 dpos = w.transpose() * dt;

    // SH color.
    const int degree = sh_degree_for(g.sh.size());
    std::array<double, 9> basis{};
    std::array<Vec3, 9> basis_grad{};
    sh_basis(degree, p.sh_dir, basis);
    sh_basis_grad(degree, p.sh_dir, basis_grad);
    Vec3 draw = acc.color;
    for (int c = 0; c < 3; ++c)
        if (p.color_clamped[c]) draw[c] = 0.0;
    Vec3 ddir_local = Vec3::Zero();
    for (std::size_t kk = 0; kk < g.sh.size(); ++kk) {
        for (int c = 0; c < 3; ++c) out[param::kSh + 3 * kk + c] = draw[c] * basis[kk];
        ddir_local += draw.dot(g.sh[kk]) * basis_grad[kk];
    }
    if (p.view_dist > 0.0) {
        const Vec3 ddir = sh_frame * ddir_local;
        dpos += (ddir - p.view_dir * p.view_dir.dot(ddir)) / p.view_dist;
    }

    // Sigma = M M^T, M = R diag(s).
    const Mat3 g_m = 2.0 * g_sigma * m;
    const Mat3 g_r = g_m * scale.asDiagonal();
    Vec3 dlog_scale;
    for (int c = 0; c < 3; ++c) dlog_scale[c] = r.col(c).dot(g_m.col(c)) * scale[c];
    const Vec4 dq = normalize_grad(g.rotation, unit_quat_matrix_grad(q_unit, g_r));

    for (int c = 0; c < 3; ++c) out[param::kPosition + c] = dpos[c];
    for (int c = 0; c < 4; ++c) out[param::kRotation + c] = dq[c];
    for (int c = 0; c < 3; ++c) out[param::kLogScale + c] = dlog_scale[c];
    out[param::kOpacity] = acc.alpha * p.alpha * (1.0 - p.alpha);
}

}  // namespace

SceneGradients render_backward(const Scene& scene, const RenderOutput& output, const Image& dl_dimage) {
    if (scene.size() != output.scene_size || scene_digest(scene) != output.scene_digest)
        throw ContractViolation("render_backward: scene differs from the one rendered");
    if (!dl_dimage.same_shape(output.color))
        throw ShapeError("render_backward: gradient image has the wrong size");

    const int sh_count = uniform_sh_count(scene);
    const std::size_t n = scene.size();
    SceneGradients grads(n, sh_count);
    if (n == 0) return grads;

    const int workers = detail::worker_count(output.config.threads);
    std::vector<std::vector<SplatAccum>> accum(workers);
    const Vec3 bg = output.config.background;
    const int width = output.color.width;
    const int used = detail::parallel_for(output.tile_lists.size(), workers, [&](std::size_t b, std::size_t e, int wk) {
        auto& acc = accum[wk];
        acc.assign(n, SplatAccum{});
        std::vector<PixelSample> chain;
        std::vector<Candidate> all, row;
        for (std::size_t tile = b; tile < e; ++tile) {
            if (output.tile_lists[tile].empty()) continue;
            for_each_tile_pixel(output, tile, all, row, [&](int x, int y, const std::vector<Candidate>& cands) {
                const std::size_t pix = static_cast<std::size_t>(y) * width + x;
                const Vec3 gpix(dl_dimage.pixels[pix * 3], dl_dimage.pixels[pix * 3 + 1], dl_dimage.pixels[pix * 3 + 2]);
                if (gpix.isZero(0.0)) return;
                chain.clear();
                composite_pixel(cands, x, y, output.config.min_transmittance,
                                [&](const PixelSample& s) { chain.push_back(s); });
                const double px = x + 0.5, py = y + 0.5;
                Vec3 behind = bg;  // color composited behind the current entry
                for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
                    const ProjectedSplat& p = output.splats[it->entry];
                    SplatAccum& a = acc[it->entry];
                    const double weight = it->sigma * it->trans;
                    a.color += gpix * weight;
                    const double dsigma = it->trans * gpix.dot(p.color - behind);
                    behind = p.color * it->sigma + (1.0 - it->sigma) * behind;
                    a.alpha += dsigma * it->gauss;
                    const double dpower = dsigma * it->sigma;
                    const double dx = px - p.mean2d.x(), dy = py - p.mean2d.y();
                    a.conic[0] += -0.5 * dx * dx * dpower;
                    a.conic[1] += -dx * dy * dpower;
                    a.conic[2] += -0.5 * dy * dy * dpower;
                    a.mean.x() += (p.conic[0] * dx + p.conic[1] * dy) * dpower;
                    a.mean.y() += (p.conic[1] * dx + p.conic[2] * dy) * dpower;
                }
            });
        }
    });
    std::vector<SplatAccum>& total = accum[0];
    for (int wk = 1; wk < used; ++wk) {
        for (std::size_t i = 0; i < n; ++i) {
            total[i].color += accum[wk][i].color;
            total[i].alpha += accum[wk][i].alpha;
            total[i].mean += accum[wk][i].mean;
            total[i].conic += accum[wk][i].conic;
        }
    }

    detail::parallel_for(n, workers, [&](std::size_t b, std::size_t e, int) {
        for (std::size_t i = b; i < e; ++i) {
            if (!output.splats[i].visible) continue;
            entry_backward(scene.gaussians[i], scene.transform_of(i).R, output.splats[i], total[i],
                           output.camera, grads.entry(i), grads.mean2d[i]);
        }
    });
    return grads;
}

AssetGradients accumulate_shared(const SceneGradients& grads, const Scene& scene) {
    if (grads.size() != scene.size())
        throw ContractViolation("accumulate_shared: gradient count does not match scene");
    AssetGradients out;
    out.stride = grads.stride;
    const std::size_t stride = grads.stride;
    out.bases.resize(scene.base_sizes.size());
    for (std::size_t a = 0; a < scene.base_sizes.size(); ++a) out.bases[a].assign(scene.base_sizes[a] * stride, 0.0);
    out.variances.resize(scene.variance_sizes.size());
    for (std::size_t v = 0; v < scene.variance_sizes.size(); ++v)
        out.variances[v].assign(scene.variance_sizes[v] * stride, 0.0);

    std::vector<InstanceFrame> frames;
    frames.reserve(scene.instances.size());
    for (const auto& t : scene.instances) frames.emplace_back(t);
    std::vector<Eigen::Matrix4d> quat_adjoint;
    quat_adjoint.reserve(frames.size());
    for (const auto& f : frames) quat_adjoint.push_back(quat_left_matrix(f.quat).transpose());

    for (std::size_t i = 0; i < scene.size(); ++i) {
        const Provenance& prov = scene.provenance[i];
        std::vector<double>& dst = prov.source == Source::Base ? out.bases[prov.asset_index]
                                                               : out.variances[prov.variance_slot];
        double* d = dst.data() + prov.local_index * stride;
        const auto src = grads.entry(i);
        const InstanceFrame& f = frames[prov.instance_index];

        const Vec3 dpos(src[param::kPosition], src[param::kPosition + 1], src[param::kPosition + 2]);
        const Vec3 dlocal = f.linear.transpose() * dpos;
        const Vec4 dq_world(src[param::kRotation], src[param::kRotation + 1], src[param::kRotation + 2],
                            src[param::kRotation + 3]);
        const Vec4 dq = quat_adjoint[prov.instance_index] * dq_world;
        for (int c = 0; c < 3; ++c) d[param::kPosition + c] += dlocal[c];
        for (int c = 0; c < 4; ++c) d[param::kRotation + c] += dq[c];
        for (std::size_t k = param::kLogScale; k < stride; ++k) d[k] += src[k];
    }
    return out;
}

}  // namespace procsplat
