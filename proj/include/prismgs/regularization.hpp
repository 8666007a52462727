// Copyright Contributors to the PrismGS Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "prismgs/gaussian.hpp"
#include "prismgs/scene.hpp"

#include <span>
#include <utility>
#include <vector>

namespace prismgs {

/// World-space footprint of one pixel at `depth` for focal length `focal`: d / f.
double pixel_sampling_interval(double depth, double focal);

/// Lower bound on Gaussian extent derived from the training views.
struct SamplingBound {
    std::vector<std::pair<int, double>> per_camera_T; // (camera id, d_min / f_eff)
    double T_min    = 0;
    double tau_size = 0;
};

struct SamplingBoundOptions {
    double near_clamp     = 0.01;
    double nyquist_factor = 2.0;
};

/// Per training camera: d_min is the smallest positive depth of a point that
/// projects inside the image (clamped below by near_clamp) and
/// T = d_min / min(fx, fy). T_min is the minimum over cameras that see at
/// least one point; tau_size = nyquist_factor * T_min.
SamplingBound compute_sampling_bound(std::span<const Camera> cameras, const SparsePointCloud &points,
                                     const SamplingBoundOptions &options = {});

template <typename Scalar> struct SizeLoss {
    Scalar value = 0;
    std::vector<Vec3<Scalar>> log_scale_grad;
    int active = 0; // primitives whose hinge is active
};

/// sum_i max(0, tau - min_k exp(log_scale_ik)); with `normalize` the sum
/// becomes a mean over primitives. The subgradient is 0 at the kink and ties
/// for the smallest axis resolve to the lowest index.
template <typename Scalar>
SizeLoss<Scalar> size_loss(std::span<const GaussianPrimitive<Scalar>> gaussians, Scalar tau_size, bool normalize = false);

/// Number of primitives whose smallest axis is below tau - tolerance.
template <typename Scalar>
int count_undersized(std::span<const GaussianPrimitive<Scalar>> gaussians, double tau_size, double tolerance = 1e-6);

} // namespace prismgs
