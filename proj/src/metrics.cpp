#include "procsplat/metrics.hpp"

#include "procsplat/error.hpp"

#include <array>
#include <cmath>
#include <limits>

namespace procsplat {

namespace {

using Kernel = std::array<double, kSsimWindow>;

const Kernel& gaussian_kernel() {
    static const Kernel k = [] {
        Kernel w{};
        double sum = 0.0;
        for (int i = 0; i < kSsimWindow; ++i) {
            const double d = i - kSsimWindow / 2;
            w[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
            sum += w[i];
        }
        for (double& v : w) v /= sum;
        return w;
    }();
    return k;
}

/// Single-channel plane.
struct Plane {
    int w = 0, h = 0;
    std::vector<double> v;
    Plane(int w_, int h_) : w(w_), h(h_), v(static_cast<std::size_t>(w_) * h_, 0.0) {}
    double& at(int x, int y) { return v[static_cast<std::size_t>(y) * w + x]; }
    double at(int x, int y) const { return v[static_cast<std::size_t>(y) * w + x]; }
};

Plane channel(const Image& img, int c, bool square = false) {
    Plane p(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const double v = img.at(x, y, c);
            p.at(x, y) = square ? v * v : v;
        }
    return p;
}

/// Valid-mode separable correlation with the SSIM window.
Plane filter_valid(const Plane& in) {
    const Kernel& k = gaussian_kernel();
    Plane tmp(in.w - kSsimWindow + 1, in.h);
    for (int y = 0; y < in.h; ++y)
        for (int x = 0; x < tmp.w; ++x) {
            double s = 0.0;
            for (int i = 0; i < kSsimWindow; ++i) s += k[i] * in.at(x + i, y);
            tmp.at(x, y) = s;
        }
    Plane out(tmp.w, in.h - kSsimWindow + 1);
    for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x) {
            double s = 0.0;
            for (int i = 0; i < kSsimWindow; ++i) s += k[i] * tmp.at(x, y + i);
            out.at(x, y) = s;
        }
    return out;
}

/// Adjoint of filter_valid: scatters a window-grid map back onto the image grid.
Plane filter_adjoint(const Plane& in, int w, int h) {
    const Kernel& k = gaussian_kernel();
    Plane tmp(in.w, h);
    for (int y = 0; y < in.h; ++y)
        for (int x = 0; x < in.w; ++x)
            for (int i = 0; i < kSsimWindow; ++i) tmp.at(x, y + i) += k[i] * in.at(x, y);
    Plane out(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < in.w; ++x)
            for (int i = 0; i < kSsimWindow; ++i) out.at(x + i, y) += k[i] * tmp.at(x, y);
    return out;
}

void check_pair(const Image& a, const Image& b, const char* what) {
    if (!a.same_shape(b) || a.size() != b.size())
        throw ShapeError(std::string(what) + ": image dimensions differ");
}

double ssim_impl(const Image& a, const Image& b, Image* grad) {
    check_pair(a, b, "ssim");
    if (a.width < kSsimWindow || a.height < kSsimWindow)
        throw ShapeError("ssim: images must be at least 11x11");
    const int vw = a.width - kSsimWindow + 1, vh = a.height - kSsimWindow + 1;
    const double count = 3.0 * vw * vh;
    double total = 0.0;
    if (grad) *grad = Image(a.width, a.height);
    for (int c = 0; c < 3; ++c) {
        const Plane pa = channel(a, c), pb = channel(b, c);
        Plane ab(a.width, a.height);
        for (std::size_t i = 0; i < ab.v.size(); ++i) ab.v[i] = pa.v[i] * pb.v[i];
        const Plane mu_a = filter_valid(pa), mu_b = filter_valid(pb);
        const Plane e_aa = filter_valid(channel(a, c, true)), e_bb = filter_valid(channel(b, c, true));
        const Plane e_ab = filter_valid(ab);
        Plane g_mu(vw, vh), g_aa(vw, vh), g_ab(vw, vh);
        for (std::size_t i = 0; i < mu_a.v.size(); ++i) {
            const double ma = mu_a.v[i], mb = mu_b.v[i];
            const double a1 = 2.0 * ma * mb + kSsimC1;
            const double a2 = 2.0 * (e_ab.v[i] - ma * mb) + kSsimC2;
            const double b1 = ma * ma + mb * mb + kSsimC1;
            const double b2 = (e_aa.v[i] - ma * ma) + (e_bb.v[i] - mb * mb) + kSsimC2;
            const double s = (a1 * a2) / (b1 * b2);
            total += s;
            if (grad) {
                g_mu.v[i] = s * (2.0 * mb / a1 - 2.0 * mb / a2 - 2.0 * ma / b1 + 2.0 * ma / b2) / count;
                g_ab.v[i] = s * 2.0 / a2 / count;
                g_aa.v[i] = -s / b2 / count;
            }
        }
        if (grad) {
            const Plane t_mu = filter_adjoint(g_mu, a.width, a.height);
            const Plane t_aa = filter_adjoint(g_aa, a.width, a.height);
            const Plane t_ab = filter_adjoint(g_ab, a.width, a.height);
            for (int y = 0; y < a.height; ++y)
                for (int x = 0; x < a.width; ++x)
                    grad->at(x, y, c) =
                        t_mu.at(x, y) + 2.0 * pa.at(x, y) * t_aa.at(x, y) + pb.at(x, y) * t_ab.at(x, y);
        }
    }
    return total / count;
}

}  // namespace

double ssim(const Image& a, const Image& b) { return ssim_impl(a, b, nullptr); }

double ssim_with_grad(const Image& a, const Image& b, Image& grad_a) { return ssim_impl(a, b, &grad_a); }

double psnr(const Image& a, const Image& b) {
    check_pair(a, b, "psnr");
    if (a.size() == 0) throw ShapeError("psnr: empty images");
    double se = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.pixels[i] - b.pixels[i];
        se += d * d;
    }
    if (se == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / (se / static_cast<double>(a.size())));
}

double mean_abs_error(const Image& a, const Image& b) {
    check_pair(a, b, "mean_abs_error");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a.pixels[i] - b.pixels[i]);
    return a.size() ? s / static_cast<double>(a.size()) : 0.0;
}

LossResult loss(const Image& rendered, const Image& target, double lambda_ssim) {
    check_pair(rendered, target, "loss");
    if (!(lambda_ssim >= 0.0 && lambda_ssim <= 1.0)) throw ConfigError("loss: lambda_ssim must be in [0, 1]");
    LossResult r;
    const double n = static_cast<double>(rendered.size());
    r.grad = Image(rendered.width, rendered.height);
    for (std::size_t i = 0; i < rendered.size(); ++i) {
        const double d = rendered.pixels[i] - target.pixels[i];
        r.l1 += std::abs(d);
        r.grad.pixels[i] = d > 0.0 ? 1.0 / n : (d < 0.0 ? -1.0 / n : 0.0);
    }
    r.l1 /= n;
    r.value = r.l1;
    if (lambda_ssim > 0.0) {
        Image g;
        r.ssim = ssim_with_grad(rendered, target, g);
        r.value += lambda_ssim * (1.0 - r.ssim);
        for (std::size_t i = 0; i < g.size(); ++i) r.grad.pixels[i] -= lambda_ssim * g.pixels[i];
    }
    return r;
}

}  // namespace procsplat
