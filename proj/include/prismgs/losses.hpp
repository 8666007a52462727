// Copyright Contributors to the PrismGS Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "prismgs/image.hpp"

namespace prismgs {

template <typename Scalar> struct ImageLoss {
    Scalar value = 0;
    ImageBuffer<Scalar> gradient; // d value / d first argument
};

/// Mean absolute error over all pixels and channels.
template <typename Scalar> ImageLoss<Scalar> l1_image_loss(const ImageBuffer<Scalar> &a, const ImageBuffer<Scalar> &b);

constexpr int kSsimWindow       = 11;
constexpr double kSsimSigma     = 1.5;
constexpr double kSsimC1        = 0.01 * 0.01;
constexpr double kSsimC2        = 0.03 * 0.03;

/// Mean SSIM over valid (unpadded) 11x11 Gaussian windows, averaged over channels.
template <typename Scalar> ImageLoss<Scalar> ssim(const ImageBuffer<Scalar> &a, const ImageBuffer<Scalar> &b);

template <typename Scalar> struct BaseLoss {
    Scalar value = 0;
    Scalar l1    = 0;
    Scalar ssim  = 0;
    ImageBuffer<Scalar> gradient;
};

/// (1 - lambda) * L1 + lambda * (1 - SSIM) at full resolution.
template <typename Scalar>
BaseLoss<Scalar> base_loss(const ImageBuffer<Scalar> &render, const ImageBuffer<Scalar> &gt, double lambda_dssim);

/// Per-iteration objective terms. All unitless.
struct LossBreakdown {
    double l1    = 0;
    double dssim = 0;
    double base  = 0;
    double mss   = 0;
    double size  = 0;
    double total = 0;

    bool operator==(const LossBreakdown &) const = default;
};

/// total = base + lambda_mss * mss + lambda_size * size.
LossBreakdown total_loss(double base, double mss, double size, double lambda_mss, double lambda_size);

constexpr double kPsnrCap = 100.0;

/// 10 log10(1 / MSE) on the [0, 1] range, capped at kPsnrCap.
template <typename Scalar> double psnr(const ImageBuffer<Scalar> &a, const ImageBuffer<Scalar> &b);

} // namespace prismgs
