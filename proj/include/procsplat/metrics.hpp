#pragma once

#include "procsplat/image.hpp"

namespace procsplat {

/// Side of the SSIM window; images smaller than this cannot be scored.
constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;

/// Mean SSIM over every fully-contained 11x11 window and all three channels.
double ssim(const Image& a, const Image& b);

/// SSIM plus d ssim / d a.
double ssim_with_grad(const Image& a, const Image& b, Image& grad_a);

/// 10 log10(1 / MSE); +infinity for identical images.
double psnr(const Image& a, const Image& b);

double mean_abs_error(const Image& a, const Image& b);

struct LossResult {
    double value = 0.0;
    double l1 = 0.0;
    double ssim = 1.0;  // left at 1 when lambda_ssim is 0
    Image grad;         // d value / d rendered
};

/// L1 + lambda_ssim * (1 - SSIM), with its gradient with respect to `rendered`.
LossResult loss(const Image& rendered, const Image& target, double lambda_ssim);

}  // namespace procsplat
