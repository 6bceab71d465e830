#pragma once

#include "procsplat/splat.hpp"

#include <span>

namespace procsplat {

/// Flat layout of one Gaussian's learnable parameters, shared by gradients,
/// optimizer state and finite-difference probes:
/// [position 3 | rotation 4 | log_scale 3 | opacity_logit 1 | sh 3 * count (coeff-major, rgb)]
namespace param {
constexpr int kPosition = 0;
constexpr int kRotation = 3;
constexpr int kLogScale = 7;
constexpr int kOpacity = 10;
constexpr int kSh = 11;

constexpr int stride(int sh_count) { return kSh + 3 * sh_count; }

inline void pack(const Gaussian3D& g, std::span<double> out) {
    for (int k = 0; k < 3; ++k) out[kPosition + k] = g.position[k];
    for (int k = 0; k < 4; ++k) out[kRotation + k] = g.rotation[k];
    for (int k = 0; k < 3; ++k) out[kLogScale + k] = g.log_scale[k];
    out[kOpacity] = g.opacity_logit;
    for (std::size_t c = 0; c < g.sh.size(); ++c)
        for (int ch = 0; ch < 3; ++ch) out[kSh + 3 * c + ch] = g.sh[c][ch];
}

inline void unpack(std::span<const double> in, Gaussian3D& g) {
    for (int k = 0; k < 3; ++k) g.position[k] = in[kPosition + k];
    for (int k = 0; k < 4; ++k) g.rotation[k] = in[kRotation + k];
    for (int k = 0; k < 3; ++k) g.log_scale[k] = in[kLogScale + k];
    g.opacity_logit = in[kOpacity];
    for (std::size_t c = 0; c < g.sh.size(); ++c)
        for (int ch = 0; ch < 3; ++ch) g.sh[c][ch] = in[kSh + 3 * c + ch];
}

/// Mutable reference to parameter `index` of g, using the flat layout.
inline double& at(Gaussian3D& g, int index) {
    if (index < kRotation) return g.position[index - kPosition];
    if (index < kLogScale) return g.rotation[index - kRotation];
    if (index < kOpacity) return g.log_scale[index - kLogScale];
    if (index == kOpacity) return g.opacity_logit;
    const int s = index - kSh;
    return g.sh[s / 3][s % 3];
}
}  // namespace param

}  // namespace procsplat
