// Copyright Contributors to the PrismGS Project
// SPDX-License-Identifier: Apache-2.0

#include "prismgs/losses.hpp"

#include <cmath>

namespace prismgs {

namespace {

template <typename Scalar> using Plane = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar> Plane<Scalar> channel(const ImageBuffer<Scalar> &img, int c) {
    Plane<Scalar> p(img.height, img.width);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) p(y, x) = img(x, y, c);
    return p;
}

// Separable correlation keeping only fully covered windows.
template <typename Scalar>
Plane<Scalar> correlate_valid(const Plane<Scalar> &in, const Eigen::Array<Scalar, Eigen::Dynamic, 1> &k) {
    const Eigen::Index r = k.size(), wv = in.cols() - r + 1, hv = in.rows() - r + 1;
    Plane<Scalar> tmp = Plane<Scalar>::Zero(in.rows(), wv);
    for (Eigen::Index i = 0; i < r; ++i) tmp += k[i] * in.middleCols(i, wv);
    Plane<Scalar> out = Plane<Scalar>::Zero(hv, wv);
    for (Eigen::Index i = 0; i < r; ++i) out += k[i] * tmp.middleRows(i, hv);
    return out;
}

// Adjoint of correlate_valid: scatters each window value back over its support.
template <typename Scalar>
Plane<Scalar> correlate_valid_adjoint(const Plane<Scalar> &g, const Eigen::Array<Scalar, Eigen::Dynamic, 1> &k,
                                      Eigen::Index rows, Eigen::Index cols) {
    const Eigen::Index r = k.size(), wv = g.cols(), hv = g.rows();
    Plane<Scalar> tmp = Plane<Scalar>::Zero(rows, wv);
    for (Eigen::Index i = 0; i < r; ++i) tmp.middleRows(i, hv) += k[i] * g;
    Plane<Scalar> out = Plane<Scalar>::Zero(rows, cols);
    for (Eigen::Index i = 0; i < r; ++i) out.middleCols(i, wv) += k[i] * tmp;
    return out;
}

} // namespace

template <typename Scalar> ImageLoss<Scalar> l1_image_loss(const ImageBuffer<Scalar> &a, const ImageBuffer<Scalar> &b) {
    require_same_shape(a, b, "l1_image_loss");
    const Scalar n  = static_cast<Scalar>(a.size());
    const auto diff = (a.data - b.data).eval();
    ImageLoss<Scalar> out;
    out.value    = n > 0 ? diff.abs().sum() / n : Scalar(0);
    out.gradient = ImageBuffer<Scalar>(a.width, a.height, n > 0 ? (diff.sign() / n).eval() : diff);
    return out;
}

template <typename Scalar> ImageLoss<Scalar> ssim(const ImageBuffer<Scalar> &a, const ImageBuffer<Scalar> &b) {
    require_same_shape(a, b, "ssim");
    if (a.width < kSsimWindow || a.height < kSsimWindow) {
        throw InvalidInput("ssim: images must be at least 11x11 (got " + std::to_string(a.width) + "x" +
                           std::to_string(a.height) + ")");
    }
    // The window is the 11-tap Gaussian (sigma 1.5), not gaussian_kernel's 3-sigma radius.
    Eigen::ArrayXd kd(kSsimWindow);
    for (int i = 0; i < kSsimWindow; ++i) {
        const double x = i - kSsimWindow / 2;
        kd[i]          = std::exp(-x * x / (2 * kSsimSigma * kSsimSigma));
    }
    kd /= kd.sum();
    const Eigen::Array<Scalar, Eigen::Dynamic, 1> k = kd.cast<Scalar>();
    const Scalar C1 = static_cast<Scalar>(kSsimC1), C2 = static_cast<Scalar>(kSsimC2);

    ImageLoss<Scalar> out;
    out.gradient = ImageBuffer<Scalar>(a.width, a.height);
    const Eigen::Index maps = Eigen::Index(a.width - kSsimWindow + 1) * (a.height - kSsimWindow + 1);
    const Scalar scale      = Scalar(1) / (Scalar(3) * static_cast<Scalar>(maps));

    for (int c = 0; c < 3; ++c) {
        const Plane<Scalar> pa = channel(a, c), pb = channel(b, c);
        const Plane<Scalar> mu_a = correlate_valid<Scalar>(pa, k);
        const Plane<Scalar> mu_b = correlate_valid<Scalar>(pb, k);
        const Plane<Scalar> var_a  = correlate_valid<Scalar>(pa * pa, k) - mu_a * mu_a;
        const Plane<Scalar> var_b  = correlate_valid<Scalar>(pb * pb, k) - mu_b * mu_b;
        const Plane<Scalar> cov_ab = correlate_valid<Scalar>(pa * pb, k) - mu_a * mu_b;

        const Plane<Scalar> n1 = 2 * mu_a * mu_b + C1;
        const Plane<Scalar> n2 = 2 * cov_ab + C2;
        const Plane<Scalar> d1 = mu_a * mu_a + mu_b * mu_b + C1;
        const Plane<Scalar> d2 = var_a + var_b + C2;
        const Plane<Scalar> s  = (n1 * n2) / (d1 * d2);
        out.value += s.sum() * scale;

        // Chain rule through mu_a, E[a^2] and E[ab].
        const Plane<Scalar> ds_dvar = -s / d2;
        const Plane<Scalar> ds_dcov = 2 * n1 / (d1 * d2);
        const Plane<Scalar> g_mu    = 2 * mu_b * n2 / (d1 * d2) - 2 * mu_a * s / d1 - 2 * mu_a * ds_dvar - mu_b * ds_dcov;

        const Plane<Scalar> grad = correlate_valid_adjoint<Scalar>(g_mu, k, pa.rows(), pa.cols()) +
                                   2 * pa * correlate_valid_adjoint<Scalar>(ds_dvar, k, pa.rows(), pa.cols()) +
                                   pb * correlate_valid_adjoint<Scalar>(ds_dcov, k, pa.rows(), pa.cols());
        for (int y = 0; y < a.height; ++y)
            for (int x = 0; x < a.width; ++x) out.gradient(x, y, c) = grad(y, x) * scale;
    }
    return out;
}

template <typename Scalar>
BaseLoss<Scalar> base_loss(const ImageBuffer<Scalar> &render, const ImageBuffer<Scalar> &gt, double lambda_dssim) {
    if (!(lambda_dssim >= 0.0 && lambda_dssim <= 1.0)) {
        throw InvalidInput("base_loss: lambda_dssim must lie in [0, 1]");
    }
    ImageLoss<Scalar> l1 = l1_image_loss(render, gt);
    BaseLoss<Scalar> out;
    out.l1 = l1.value;
    if (lambda_dssim == 0.0) {
        // Degenerate weight: exactly the L1 term, SSIM is never evaluated.
        out.ssim     = Scalar(1);
        out.value    = l1.value;
        out.gradient = std::move(l1.gradient);
        return out;
    }
    const Scalar lam      = static_cast<Scalar>(lambda_dssim);
    ImageLoss<Scalar> sim = ssim(render, gt);
    out.ssim              = sim.value;
    out.value             = (Scalar(1) - lam) * l1.value + lam * (Scalar(1) - sim.value);
    out.gradient = ImageBuffer<Scalar>(render.width, render.height,
                                       ((Scalar(1) - lam) * l1.gradient.data - lam * sim.gradient.data).eval());
    return out;
}

LossBreakdown total_loss(double base, double mss, double size, double lambda_mss, double lambda_size) {
    if (!(lambda_mss >= 0) || !(lambda_size >= 0)) {
        throw InvalidInput("total_loss: loss weights must be non-negative");
    }
    LossBreakdown b;
    b.base  = base;
    b.mss   = mss;
    b.size  = size;
    b.total = base + lambda_mss * mss + lambda_size * size;
    return b;
}

template <typename Scalar> double psnr(const ImageBuffer<Scalar> &a, const ImageBuffer<Scalar> &b) {
    require_same_shape(a, b, "psnr");
    if (a.size() == 0) return kPsnrCap;
    const double mse = (a.data.template cast<double>() - b.data.template cast<double>()).square().mean();
    if (mse <= 0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

#define PRISMGS_INSTANTIATE_LOSSES(S)                                                                       \
    template ImageLoss<S> l1_image_loss<S>(const ImageBuffer<S> &, const ImageBuffer<S> &);                 \
    template ImageLoss<S> ssim<S>(const ImageBuffer<S> &, const ImageBuffer<S> &);                          \
    template BaseLoss<S> base_loss<S>(const ImageBuffer<S> &, const ImageBuffer<S> &, double);              \
    template double psnr<S>(const ImageBuffer<S> &, const ImageBuffer<S> &);

PRISMGS_INSTANTIATE_LOSSES(float)
PRISMGS_INSTANTIATE_LOSSES(double)

} // namespace prismgs
