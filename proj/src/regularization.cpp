// Copyright Contributors to the PrismGS Project
// SPDX-License-Identifier: Apache-2.0

#include "prismgs/regularization.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace prismgs {

double pixel_sampling_interval(double depth, double focal) {
    if (!(depth > 0) || !(focal > 0)) {
        throw InvalidInput("pixel_sampling_interval: depth and focal length must be positive");
    }
    return depth / focal;
}

SamplingBound compute_sampling_bound(std::span<const Camera> cameras, const SparsePointCloud &points,
                                     const SamplingBoundOptions &options) {
    if (!(options.near_clamp > 0) || !(options.nyquist_factor > 0)) {
        throw InvalidInput("compute_sampling_bound: near_clamp and nyquist_factor must be positive");
    }
    SamplingBound bound;
    bound.T_min = std::numeric_limits<double>::infinity();
    bool any_train = false;
    for (const Camera &cam : cameras) {
        if (cam.split != Split::Train) continue;
        any_train    = true;
        double d_min = std::numeric_limits<double>::infinity();
        for (const ScenePoint &pt : points.points) {
            const Vec3<double> p = cam.to_camera(pt.position);
            if (!(p.z() > 0)) continue;
            const double u = cam.fx * p.x() / p.z() + cam.cx;
            const double v = cam.fy * p.y() / p.z() + cam.cy;
            if (u < -0.5 || u >= cam.width - 0.5 || v < -0.5 || v >= cam.height - 0.5) continue;
            d_min = std::min(d_min, p.z());
        }
        if (!std::isfinite(d_min)) continue;
        const double T = pixel_sampling_interval(std::max(options.near_clamp, d_min), cam.focal_min());
        bound.per_camera_T.emplace_back(cam.id, T);
        bound.T_min = std::min(bound.T_min, T);
    }
    if (!any_train) {
        throw ConfigError("compute_sampling_bound: no training cameras");
    }
    if (bound.per_camera_T.empty()) {
        throw ConfigError("compute_sampling_bound: no training camera sees any point; set tau_size explicitly");
    }
    bound.tau_size = options.nyquist_factor * bound.T_min;
    return bound;
}

template <typename Scalar>
SizeLoss<Scalar> size_loss(std::span<const GaussianPrimitive<Scalar>> gaussians, Scalar tau_size, bool normalize) {
    if (!(tau_size > Scalar(0))) {
        throw InvalidInput("size_loss: tau_size must be positive");
    }
    SizeLoss<Scalar> out;
    out.log_scale_grad.assign(gaussians.size(), Vec3<Scalar>::Zero());
    const Scalar weight = normalize && !gaussians.empty() ? Scalar(1) / Scalar(gaussians.size()) : Scalar(1);
    for (std::size_t i = 0; i < gaussians.size(); ++i) {
        const Vec3<Scalar> s = gaussians[i].scale();
        int axis             = 0;
        for (int k = 1; k < 3; ++k) {
            if (s[k] < s[axis]) axis = k;
        }
        if (!(s[axis] < tau_size)) continue;
        out.value += weight * (tau_size - s[axis]);
        // d/dlog s of (tau - exp(log s)) = -s
        out.log_scale_grad[i][axis] = -weight * s[axis];
        ++out.active;
    }
    return out;
}

template <typename Scalar>
int count_undersized(std::span<const GaussianPrimitive<Scalar>> gaussians, double tau_size, double tolerance) {
    int n = 0;
    for (const auto &g : gaussians) {
        if (static_cast<double>(g.scale().minCoeff()) < tau_size - tolerance) ++n;
    }
    return n;
}

template SizeLoss<float> size_loss<float>(std::span<const GaussianPrimitive<float>>, float, bool);
template SizeLoss<double> size_loss<double>(std::span<const GaussianPrimitive<double>>, double, bool);
template int count_undersized<float>(std::span<const GaussianPrimitive<float>>, double, double);
template int count_undersized<double>(std::span<const GaussianPrimitive<double>>, double, double);

} // namespace prismgs
