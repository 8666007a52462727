// Copyright Contributors to the PrismGS Project
// SPDX-License-Identifier: Apache-2.0

// Per-pixel reference splatter for cross-checking the tiled renderer. It
// shares no code with the rasterizer except SH evaluation: every pixel visits
// every Gaussian in global (depth, index) order.

#pragma once

#include "prismgs/camera.hpp"
#include "prismgs/gaussian.hpp"
#include "prismgs/image.hpp"
#include "prismgs/rasterizer.hpp"

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

namespace prismgs::testing {

struct ReferenceSplat {
    double depth = 0;
    int index    = 0;
    Eigen::Vector2d mean;
    Eigen::Matrix2d inv_cov;
    Eigen::Vector3d color;
    double opacity = 0;
};

inline ImageBuffer<double> reference_render(std::span<const GaussianPrimitive<double>> gaussians, const Camera &cam,
                                            const RenderOptions &options = {}) {
    std::vector<ReferenceSplat> splats;
    for (std::size_t i = 0; i < gaussians.size(); ++i) {
        const auto &g = gaussians[i];
        const Eigen::Vector3d p = cam.rotation * g.position + cam.translation;
        if (!(p.z() > options.near_plane)) continue;

        const Eigen::Quaterniond q(g.rotation[0], g.rotation[1], g.rotation[2], g.rotation[3]);
        const Eigen::Matrix3d R = q.normalized().toRotationMatrix();
        const Eigen::Vector3d s = g.log_scale.array().exp();
        const Eigen::Matrix3d sigma = R * s.array().square().matrix().asDiagonal() * R.transpose();

        Eigen::Matrix<double, 2, 3> J;
        J << cam.fx / p.z(), 0, -cam.fx * p.x() / (p.z() * p.z()), 0, cam.fy / p.z(), -cam.fy * p.y() / (p.z() * p.z());
        Eigen::Matrix2d cov = J * cam.rotation * sigma * cam.rotation.transpose() * J.transpose();
        cov += options.dilation * Eigen::Matrix2d::Identity();
        if (!(cov.determinant() > 0)) continue;

        ReferenceSplat sp;
        sp.depth   = p.z();
        sp.index   = static_cast<int>(i);
        sp.mean    = Eigen::Vector2d(cam.fx * p.x() / p.z() + cam.cx, cam.fy * p.y() / p.z() + cam.cy);
        sp.inv_cov = cov.inverse();
        const Eigen::Vector3d dir = (g.position - cam.center()).normalized();
        sp.color   = eval_sh_color<double>(g.sh, dir, options.sh_degree).cwiseMax(0.0);
        sp.opacity = 1.0 / (1.0 + std::exp(-g.opacity_logit));
        splats.push_back(sp);
    }
    std::sort(splats.begin(), splats.end(), [](const ReferenceSplat &a, const ReferenceSplat &b) {
        return a.depth != b.depth ? a.depth < b.depth : a.index < b.index;
    });

    ImageBuffer<double> img(cam.width, cam.height);
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            double T = 1;
            Eigen::Vector3d C = Eigen::Vector3d::Zero();
            for (const auto &sp : splats) {
                const Eigen::Vector2d d = Eigen::Vector2d(x, y) - sp.mean;
                const double alpha      = sp.opacity * std::exp(-0.5 * d.dot(sp.inv_cov * d));
                if (alpha < options.alpha_cutoff) continue;
                C += T * alpha * sp.color;
                T *= 1 - alpha;
                if (T < options.transmittance_stop) break;
            }
            for (int c = 0; c < 3; ++c) img(x, y, c) = std::clamp(C[c], 0.0, 1.0);
        }
    }
    return img;
}

} // namespace prismgs::testing
