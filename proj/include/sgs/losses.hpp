#pragma once

#include "sgs/image.hpp"

#include <optional>

namespace sgs {

// Mean absolute difference over all pixels and channels.
double l1_loss(const Image& a, const Image& b);
// d(l1)/da scaled by `upstream`; subgradient 0 where a == b.
Image l1_loss_backward(const Image& a, const Image& b, double upstream);

// SSIM with 11x11 Gaussian window (sigma 1.5), C1=0.01^2, C2=0.03^2,
// valid-window mean over all channels. Images must be at least 11x11.
double ssim(const Image& a, const Image& b);
// Also returns d(ssim)/da scaled by `upstream`.
double ssim_with_grad(const Image& a, const Image& b, double upstream, Image* grad_a);

// (1 - SSIM) / 2.
double dssim_loss(const Image& a, const Image& b);
double dssim_loss_with_grad(const Image& a, const Image& b, double upstream,
                            Image* grad_a);

// 1 - Pearson correlation over pixels where mask (alpha) > 0.5. Invariant to
// positive affine rescaling of either argument; variance floor 1e-8.
// Throws InsufficientCoverage when fewer than 16 pixels are valid.
double pearson_depth_loss(const Image& reference, const Image& rendered,
                          const Image& alpha);
double pearson_depth_loss_with_grad(const Image& reference, const Image& rendered,
                                    const Image& alpha, double upstream,
                                    Image* grad_rendered);
std::optional<double> try_pearson_depth_loss(const Image& reference,
                                             const Image& rendered, const Image& alpha);

// Pearson correlation coefficient between two images over all pixels (used by
// the pseudo-label quality score).
double image_correlation(const Image& a, const Image& b);

double mse(const Image& a, const Image& b);
// 10*log10(1/MSE), capped at 100 dB when MSE < 1e-10.
double psnr(const Image& a, const Image& b);

struct LossBreakdown {
    double l1 = 0;
    double dssim = 0;
    std::optional<double> pearson_depth;
    double guidance_total = 0;       // L_g
    double reconstruction_total = 0; // L_r
    double total = 0;                // lambda_g * L_g + L_r
};

} // namespace sgs
