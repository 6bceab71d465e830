#pragma once

#include "procsplat/assembly.hpp"
#include "procsplat/params.hpp"
#include "procsplat/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace procsplat::test_support {

inline Gaussian3D random_gaussian(Rng& rng, int sh_degree, double spread = 0.6) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Gaussian3D g;
    g.position = {spread * u(rng), spread * u(rng), spread * u(rng)};
    g.rotation = {u(rng), u(rng), u(rng), u(rng)};
    if (g.rotation.norm() < 0.2) g.rotation[0] += 1.0;
    g.log_scale = {std::log(0.08 + 0.1 * (u(rng) + 1.0)), std::log(0.08 + 0.1 * (u(rng) + 1.0)),
                   std::log(0.08 + 0.1 * (u(rng) + 1.0))};
    g.opacity_logit = 1.5 * u(rng);
    g.sh.assign(sh_coeff_count(sh_degree), Vec3::Zero());
    for (auto& c : g.sh) c = {0.4 * u(rng), 0.4 * u(rng), 0.4 * u(rng)};
    g.sh[0] = {u(rng), u(rng), u(rng)};
    return g;
}

/// Camera on a sphere around the origin looking at it.
inline Camera orbit_camera(double azimuth, double elevation, double radius, int w, int h, double focal) {
    const Vec3 eye(radius * std::cos(elevation) * std::cos(azimuth),
                   radius * std::cos(elevation) * std::sin(azimuth), radius * std::sin(elevation));
    return Camera::look_at(eye, Vec3::Zero(), Vec3::UnitZ(), focal, focal, w, h);
}

inline Image random_image(Rng& rng, int w, int h, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Image img(w, h);
    for (double& v : img.pixels) v = u(rng);
    return img;
}

inline double weighted_sum(const Image& a, const Image& weights) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.pixels[i] * weights.pixels[i];
    return s;
}

}  // namespace procsplat::test_support

namespace procsplat::test_support {

struct FdReport {
    int checked = 0;
    int excluded = 0;
    int failures = 0;
    double worst_rel = 0.0;
    std::string first_failure;
};

/// Central finite differences of L = sum(weights .* render(scene).color) for every
/// parameter of every entry. A parameter is excluded when either perturbed render
/// composites a different set of (pixel, entry) pairs than the unperturbed one,
/// i.e. the step crosses a cull or early-termination boundary. Passing means
/// |a - f| <= rel_tol * max(|a|, |f|) or |a - f| <= abs_floor.
inline FdReport fd_check(const Scene& scene, const Camera& cam, const Image& weights,
                         const RenderConfig& cfg, double step = 1e-5, double rel_tol = 1e-4,
                         double abs_floor = 1e-9) {
    FdReport rep;
    const RenderOutput base = render(scene, cam, cfg);
    const SceneGradients grads = render_backward(scene, base, weights);
    Scene probe = scene;
    for (std::size_t i = 0; i < scene.size(); ++i) {
        for (int k = 0; k < grads.stride; ++k) {
            double& v = param::at(probe.gaussians[i], k);
            const double orig = v;
            v = orig + step;
            const RenderOutput plus = render(probe, cam, cfg);
            v = orig - step;
            const RenderOutput minus = render(probe, cam, cfg);
            v = orig;
            const bool same = plus.blended_pairs == base.blended_pairs && minus.blended_pairs == base.blended_pairs &&
                              plus.blend_digest == base.blend_digest && minus.blend_digest == base.blend_digest;
            if (!same) {
                ++rep.excluded;
                continue;
            }
            const double fd = (weighted_sum(plus.color, weights) - weighted_sum(minus.color, weights)) / (2 * step);
            const double an = grads.entry(i)[k];
            const double diff = std::abs(an - fd);
            const double scale = std::max(std::abs(an), std::abs(fd));
            ++rep.checked;
            if (diff > abs_floor) rep.worst_rel = std::max(rep.worst_rel, diff / scale);
            if (diff > abs_floor && diff > rel_tol * scale) {
                if (rep.failures++ == 0)
                    rep.first_failure = "entry " + std::to_string(i) + " param " + std::to_string(k) +
                                        ": analytic " + std::to_string(an) + " fd " + std::to_string(fd);
            }
        }
    }
    return rep;
}

}  // namespace procsplat::test_support

namespace procsplat::test_support {

/// Forward-mode dual number, enough to differentiate the instance transform.
struct Dual {
    double v = 0.0;
    double d = 0.0;
};
inline Dual operator+(Dual a, Dual b) { return {a.v + b.v, a.d + b.d}; }
inline Dual operator-(Dual a, Dual b) { return {a.v - b.v, a.d - b.d}; }
inline Dual operator*(Dual a, Dual b) { return {a.v * b.v, a.d * b.v + a.v * b.d}; }
inline Dual constant(double v) { return {v, 0.0}; }

/// Gradient of a loss with respect to one asset Gaussian, given dL/d(world copy)
/// for each of its placements. Differentiates world = R S mu + T, q' = q_R q,
/// log s' = log s + log S one input at a time and dots with the world gradient.
inline std::vector<double> pullback_oracle(const Gaussian3D& local,
                                           const std::vector<InstanceTransform>& placements,
                                           const std::vector<std::vector<double>>& world_grads) {
    const int stride = param::stride(static_cast<int>(local.sh.size()));
    std::vector<double> out(stride, 0.0);
    for (std::size_t k = 0; k < placements.size(); ++k) {
        const InstanceTransform& t = placements[k];
        const Eigen::Quaterniond qr(t.R);
        const Dual qr_d[4] = {constant(qr.w()), constant(qr.x()), constant(qr.y()), constant(qr.z())};
        for (int p = 0; p < stride; ++p) {
            std::vector<Dual> x(stride);
            std::vector<double> flat(stride);
            param::pack(local, flat);
            for (int j = 0; j < stride; ++j) x[j] = {flat[j], j == p ? 1.0 : 0.0};
            std::vector<Dual> y(stride);
            for (int r = 0; r < 3; ++r) {
                Dual acc = constant(t.T[r]);
                for (int c = 0; c < 3; ++c) acc = acc + constant(t.R(r, c) * t.S[c]) * x[param::kPosition + c];
                y[param::kPosition + r] = acc;
            }
            const Dual* a = qr_d;
            const Dual* b = &x[param::kRotation];
            y[param::kRotation + 0] = a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3];
            y[param::kRotation + 1] = a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2];
            y[param::kRotation + 2] = a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1];
            y[param::kRotation + 3] = a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0];
            for (int c = 0; c < 3; ++c)
                y[param::kLogScale + c] = x[param::kLogScale + c] + constant(std::log(t.S[c]));
            for (int j = param::kOpacity; j < stride; ++j) y[j] = x[j];
            double dot = 0.0;
            for (int j = 0; j < stride; ++j) dot += y[j].d * world_grads[k][j];
            out[p] += dot;
        }
    }
    return out;
}

inline InstanceTransform random_transform(Rng& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_real_distribution<double> s(0.5, 1.8);
    Eigen::Quaterniond q(u(rng), u(rng), u(rng), u(rng));
    if (q.norm() < 0.1) q.w() += 1.0;
    q.normalize();
    InstanceTransform t;
    t.R = q.toRotationMatrix();
    t.T = {u(rng), u(rng), u(rng)};
    t.S = {s(rng), s(rng), s(rng)};
    return t;
}

}  // namespace procsplat::test_support

namespace procsplat::test_support {

// Covariance AABB written from the rotation columns: half-extent along axis k is
// 3 sqrt(sum_j (R_kj s_j)^2).
inline Box3 reach_oracle(const Gaussian3D& g) {
    const Vec4 q = g.rotation / g.rotation.norm();
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    const Vec3 s = g.log_scale.array().exp();
    Vec3 half;
    for (int k = 0; k < 3; ++k) {
        double acc = 0.0;
        for (int j = 0; j < 3; ++j) acc += std::pow(r(k, j) * s[j], 2);
        half[k] = 3.0 * std::sqrt(acc);
    }
    return {g.position - half, g.position + half};
}

// Plain largest-remainder apportionment in long double, for manifests where every
// quota is at least one (so the one-point floor never binds).
inline std::vector<int> largest_remainder(const std::vector<AssetSpec>& m, int total) {
    long double sum = 0;
    for (const auto& s : m) sum += static_cast<long double>(s.extent.x()) * s.extent.y() * s.extent.z();
    std::vector<long double> rem(m.size());
    std::vector<int> out(m.size());
    int given = 0;
    for (std::size_t i = 0; i < m.size(); ++i) {
        const long double q = total * (static_cast<long double>(m[i].extent.x()) * m[i].extent.y() * m[i].extent.z()) / sum;
        out[i] = static_cast<int>(std::floor(q));
        rem[i] = q - out[i];
        given += out[i];
    }
    std::vector<std::size_t> idx(m.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return rem[a] > rem[b]; });
    for (int k = 0; given < total; ++k, ++given) ++out[idx[k]];
    return out;
}

}  // namespace procsplat::test_support
