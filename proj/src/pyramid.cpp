// Copyright Contributors to the PrismGS Project
// SPDX-License-Identifier: Apache-2.0

#include "prismgs/pyramid.hpp"

#include <algorithm>
#include <cmath>

namespace prismgs {

int max_pyramid_levels(int width, int height) {
    int levels = 1;
    while ((width >> levels) >= kMinPyramidSide && (height >> levels) >= kMinPyramidSide) ++levels;
    return levels;
}

Eigen::ArrayXd gaussian_kernel(double sigma) {
    if (!(sigma > 0) || !std::isfinite(sigma)) {
        throw InvalidInput("gaussian_blur: sigma must be positive");
    }
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    Eigen::ArrayXd k(2 * radius + 1);
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-0.5 * double(i) * double(i) / (sigma * sigma));
    }
    return k / k.sum();
}

template <typename Scalar> ImageBuffer<Scalar> gaussian_blur(const ImageBuffer<Scalar> &img, double sigma) {
    const Eigen::ArrayXd kd = gaussian_kernel(sigma);
    const Eigen::Array<Scalar, Eigen::Dynamic, 1> k = kd.cast<Scalar>();
    const int r = static_cast<int>(k.size() / 2);
    const int W = img.width, H = img.height;

    ImageBuffer<Scalar> tmp(W, H), out(W, H);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            for (int c = 0; c < 3; ++c) {
                Scalar acc = 0;
                for (int i = -r; i <= r; ++i) acc += k[i + r] * img(std::clamp(x + i, 0, W - 1), y, c);
                tmp(x, y, c) = acc;
            }
        }
    }
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            for (int c = 0; c < 3; ++c) {
                Scalar acc = 0;
                for (int i = -r; i <= r; ++i) acc += k[i + r] * tmp(x, std::clamp(y + i, 0, H - 1), c);
                out(x, y, c) = acc;
            }
        }
    }
    return out;
}

template <typename Scalar> ImageBuffer<Scalar> downsample2(const ImageBuffer<Scalar> &img) {
    if (img.width < 2 || img.height < 2) {
        throw InvalidInput("downsample2: image must be at least 2x2");
    }
    ImageBuffer<Scalar> out(img.width / 2, img.height / 2);
    for (int y = 0; y < out.height; ++y) {
        for (int x = 0; x < out.width; ++x) {
            for (int c = 0; c < 3; ++c) out(x, y, c) = img(2 * x, 2 * y, c);
        }
    }
    return out;
}

template <typename Scalar> ImagePyramid<Scalar> build_gt_pyramid(const ImageBuffer<Scalar> &img, int levels, double sigma) {
    if (levels < 1) {
        throw InvalidInput("build_gt_pyramid: at least one level is required");
    }
    ImagePyramid<Scalar> pyr;
    pyr.kind             = PyramidKind::GroundTruth;
    pyr.sigma            = sigma;
    pyr.requested_levels = levels;
    const int n          = std::min(levels, max_pyramid_levels(img.width, img.height));
    pyr.levels.reserve(n);
    pyr.levels.push_back(img);
    for (int l = 1; l < n; ++l) {
        pyr.levels.push_back(downsample2(gaussian_blur(pyr.levels.back(), sigma)));
    }
    return pyr;
}

template <typename Scalar>
ImagePyramid<Scalar> build_rendered_pyramid(std::span<const GaussianPrimitive<Scalar>> gaussians, const Camera &cam,
                                            int levels, const RenderOptions &options,
                                            std::vector<RenderOutput<Scalar>> *outputs) {
    if (levels < 1) {
        throw InvalidInput("build_rendered_pyramid: at least one level is required");
    }
    ImagePyramid<Scalar> pyr;
    pyr.kind             = PyramidKind::Rendered;
    pyr.requested_levels = levels;
    const int n          = std::min(levels, max_pyramid_levels(cam.width, cam.height));
    if (outputs) outputs->clear();
    for (int l = 0; l < n; ++l) {
        RenderOutput<Scalar> r = render_at_level(gaussians, cam, l, options);
        pyr.levels.push_back(r.image);
        if (outputs) outputs->push_back(std::move(r));
    }
    return pyr;
}

template <typename Scalar>
MssLoss<Scalar> mss_loss(const ImagePyramid<Scalar> &rendered, const ImagePyramid<Scalar> &gt,
                         std::optional<std::span<const double>> weights) {
    if (rendered.size() != gt.size()) {
        throw ContractViolation("mss_loss: pyramids have different level counts (" + std::to_string(rendered.size()) +
                                " vs " + std::to_string(gt.size()) + ")");
    }
    const int L = rendered.size();
    if (weights && static_cast<int>(weights->size()) < L) {
        throw ContractViolation("mss_loss: fewer weights than pyramid levels");
    }
    MssLoss<Scalar> out;
    out.per_level.assign(L, Scalar(0));
    out.gradients.reserve(L);
    for (int l = 0; l < L; ++l) {
        require_same_shape(rendered.levels[l], gt.levels[l], "mss_loss");
        const auto &r = rendered.levels[l];
        if (l == 0) {
            out.gradients.emplace_back(r.width, r.height);
            continue;
        }
        const Scalar w    = weights ? static_cast<Scalar>((*weights)[l]) : Scalar(1);
        const Scalar n    = static_cast<Scalar>(r.size());
        const auto diff   = (r.data - gt.levels[l].data).eval();
        out.per_level[l]  = w * diff.abs().sum() / n;
        out.value += out.per_level[l];
        out.gradients.emplace_back(r.width, r.height, (w / n) * diff.sign());
    }
    return out;
}

#define PRISMGS_INSTANTIATE_PYRAMID(S)                                                                            \
    template ImageBuffer<S> gaussian_blur<S>(const ImageBuffer<S> &, double);                                     \
    template ImageBuffer<S> downsample2<S>(const ImageBuffer<S> &);                                               \
    template ImagePyramid<S> build_gt_pyramid<S>(const ImageBuffer<S> &, int, double);                            \
    template ImagePyramid<S> build_rendered_pyramid<S>(std::span<const GaussianPrimitive<S>>, const Camera &, int, \
                                                       const RenderOptions &, std::vector<RenderOutput<S>> *);    \
    template MssLoss<S> mss_loss<S>(const ImagePyramid<S> &, const ImagePyramid<S> &,                             \
                                    std::optional<std::span<const double>>);

PRISMGS_INSTANTIATE_PYRAMID(float)
PRISMGS_INSTANTIATE_PYRAMID(double)

} // namespace prismgs
