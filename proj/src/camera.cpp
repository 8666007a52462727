// Copyright Contributors to the PrismGS Project
// SPDX-License-Identifier: Apache-2.0

#include "prismgs/camera.hpp"

#include <Eigen/Geometry>

#include <cmath>

namespace prismgs {

void Camera::validate(double orthonormal_tol) const {
    if (!(fx > 0) || !(fy > 0)) {
        throw ValidationError("camera " + std::to_string(id) + ": focal lengths must be positive");
    }
    if (width <= 0 || height <= 0) {
        throw ValidationError("camera " + std::to_string(id) + ": image dimensions must be positive");
    }
    const double err = (rotation * rotation.transpose() - Mat3<double>::Identity()).cwiseAbs().maxCoeff();
    if (!(err <= orthonormal_tol)) {
        throw ValidationError("camera " + std::to_string(id) + ": rotation is not orthonormal (max deviation " +
                              std::to_string(err) + ")");
    }
}

Camera camera_at_level(const Camera &cam, int level) {
    if (level < 0) {
        throw InvalidInput("camera_at_level: level must be non-negative");
    }
    if (level == 0) return cam;
    if (level >= 31 || (cam.width >> level) < 1 || (cam.height >> level) < 1) {
        throw InvalidInput("camera_at_level: level " + std::to_string(level) + " shrinks " +
                           std::to_string(cam.width) + "x" + std::to_string(cam.height) + " below one pixel");
    }
    const double s = std::ldexp(1.0, -level);
    Camera out = cam;
    out.width  = cam.width >> level;
    out.height = cam.height >> level;
    out.fx     = cam.fx * s;
    out.fy     = cam.fy * s;
    // pixel (x, y) here is pixel (2^l x, 2^l y) at level 0, the sample that
    // downsample2 keeps, so a plain scale keeps both pyramids on one grid
    out.cx     = cam.cx * s;
    out.cy     = cam.cy * s;
    return out;
}

Camera camera_supersampled(const Camera &cam, int factor) {
    if (factor < 1) {
        throw InvalidInput("camera_supersampled: factor must be >= 1");
    }
    Camera out = cam;
    out.width  = cam.width * factor;
    out.height = cam.height * factor;
    out.fx     = cam.fx * factor;
    out.fy     = cam.fy * factor;
    out.cx     = (cam.cx + 0.5) * factor - 0.5;
    out.cy     = (cam.cy + 0.5) * factor - 0.5;
    return out;
}

Camera look_at(const Vec3<double> &eye, const Vec3<double> &target, const Vec3<double> &up, double focal,
               int width, int height) {
    const Vec3<double> forward = (target - eye).normalized();
    Vec3<double> down          = -up + up.dot(forward) * forward;
    if (down.norm() < 1e-12) {
        throw InvalidInput("look_at: up vector is parallel to the viewing direction");
    }
    down.normalize();
    const Vec3<double> right = down.cross(forward);

    Camera cam;
    cam.rotation.row(0) = right.transpose();
    cam.rotation.row(1) = down.transpose();
    cam.rotation.row(2) = forward.transpose();
    cam.translation     = -cam.rotation * eye;
    cam.fx = cam.fy = focal;
    cam.width       = width;
    cam.height      = height;
    cam.cx          = 0.5 * (width - 1);
    cam.cy          = 0.5 * (height - 1);
    return cam;
}

} // namespace prismgs
