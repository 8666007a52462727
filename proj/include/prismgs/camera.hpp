// Copyright Contributors to the PrismGS Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "prismgs/common.hpp"

#include <string>

namespace prismgs {

enum class Split { Train, Test };

/// Pinhole camera with a rigid world-to-camera transform
/// p_cam = rotation * p_world + translation. Pixel centers sit at integer
/// coordinates, so pixel (i, j) covers [i - 0.5, i + 0.5] x [j - 0.5, j + 0.5].
struct Camera {
    int id        = 0;
    double fx     = 1;
    double fy     = 1;
    double cx     = 0;
    double cy     = 0;
    int width     = 1;
    int height    = 1;
    Mat3<double> rotation    = Mat3<double>::Identity();
    Vec3<double> translation = Vec3<double>::Zero();
    Split split   = Split::Train;
    std::string image_path;

    Vec3<double> center() const { return -rotation.transpose() * translation; }
    Vec3<double> to_camera(const Vec3<double> &world) const { return rotation * world + translation; }

    /// Smaller of the two focal lengths (conservative for sampling bounds).
    double focal_min() const { return fx < fy ? fx : fy; }

    /// Throws ValidationError when the intrinsics or rotation are unusable.
    void validate(double orthonormal_tol = 1e-6) const;

    bool operator==(const Camera &) const = default;
};

/// Camera for pyramid level `level`: dimensions floor-halved `level` times,
/// focal lengths and principal point divided by 2^level, so that level
/// pixel (x, y) projects like level-0 pixel (2^level x, 2^level y).
/// Level 0 returns the camera unchanged.
Camera camera_at_level(const Camera &cam, int level);

/// Camera rendering the same view at `factor` times the resolution.
Camera camera_supersampled(const Camera &cam, int factor);

/// Camera at pinhole position `eye` looking at `target`, with +y of the image
/// pointing toward -`up` (image rows grow downward).
Camera look_at(const Vec3<double> &eye, const Vec3<double> &target, const Vec3<double> &up,
               double focal, int width, int height);

} // namespace prismgs
