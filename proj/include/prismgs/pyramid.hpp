// Copyright Contributors to the PrismGS Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "prismgs/camera.hpp"
#include "prismgs/image.hpp"
#include "prismgs/rasterizer.hpp"

#include <Eigen/Core>

#include <optional>
#include <span>
#include <vector>

namespace prismgs {

constexpr int kMinPyramidSide = 8;

enum class PyramidKind { GroundTruth, Rendered };

template <typename Scalar> struct ImagePyramid {
    std::vector<ImageBuffer<Scalar>> levels;
    double sigma     = 0; // blur used between levels; 0 for rendered pyramids
    PyramidKind kind = PyramidKind::GroundTruth;
    int requested_levels = 0;

    int size() const { return static_cast<int>(levels.size()); }
    bool was_clamped() const { return requested_levels > size(); }
};

/// Deepest pyramid whose coarsest level is still kMinPyramidSide on each side
/// (never less than 1).
int max_pyramid_levels(int width, int height);

/// Normalised 1D Gaussian kernel of radius ceil(3 sigma).
Eigen::ArrayXd gaussian_kernel(double sigma);

/// Separable Gaussian blur with edge replication; output has the input size.
template <typename Scalar> ImageBuffer<Scalar> gaussian_blur(const ImageBuffer<Scalar> &img, double sigma);

/// Stride-2 subsampling: out(x, y) = in(2x, 2y).
template <typename Scalar> ImageBuffer<Scalar> downsample2(const ImageBuffer<Scalar> &img);

/// levels[l + 1] = downsample2(gaussian_blur(levels[l], sigma)).
template <typename Scalar> ImagePyramid<Scalar> build_gt_pyramid(const ImageBuffer<Scalar> &img, int levels, double sigma);

/// levels[l] = render_at_level(gaussians, cam, l).image, no filtering. When
/// `outputs` is given the full render outputs are kept for backpropagation.
template <typename Scalar>
ImagePyramid<Scalar> build_rendered_pyramid(std::span<const GaussianPrimitive<Scalar>> gaussians, const Camera &cam,
                                            int levels, const RenderOptions &options = {},
                                            std::vector<RenderOutput<Scalar>> *outputs = nullptr);

template <typename Scalar> struct MssLoss {
    Scalar value = 0;
    std::vector<Scalar> per_level;               // weighted mean |diff| per level; level 0 is always 0
    std::vector<ImageBuffer<Scalar>> gradients; // d loss / d rendered level; level 0 is all zero
};

/// sum_{l >= 1} w_l * mean |rendered_l - gt_l|. Weights default to 1.
template <typename Scalar>
MssLoss<Scalar> mss_loss(const ImagePyramid<Scalar> &rendered, const ImagePyramid<Scalar> &gt,
                         std::optional<std::span<const double>> weights = std::nullopt);

} // namespace prismgs
