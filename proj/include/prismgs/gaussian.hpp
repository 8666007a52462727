// Copyright Contributors to the PrismGS Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "prismgs/common.hpp"

#include <Eigen/Core>

#include <cmath>
#include <vector>

namespace prismgs {

constexpr int kMaxShDegree = 3;
constexpr int kMaxShBasis  = 16;

/// Number of real SH basis functions up to and including `degree`.
constexpr int sh_basis_count(int degree) { return (degree + 1) * (degree + 1); }

/// Inverse of sh_basis_count; returns -1 when `count` is not a valid basis size.
constexpr int sh_degree_for_count(int count) {
    for (int d = 0; d <= kMaxShDegree; ++d) {
        if (sh_basis_count(d) == count) {
            return d;
        }
    }
    return -1;
}

/// SH coefficients, one row per basis function, one column per RGB channel.
/// Storage is inline (at most 16x3) so primitives never touch the heap.
template <typename Scalar>
using ShCoeffs = Eigen::Matrix<Scalar, Eigen::Dynamic, 3, Eigen::ColMajor, kMaxShBasis, 3>;

template <typename Scalar> Scalar sigmoid(Scalar x) { return Scalar(1) / (Scalar(1) + std::exp(-x)); }
template <typename Scalar> Scalar logit(Scalar p) { return std::log(p / (Scalar(1) - p)); }

// Real SH normalisation constants in the ordering used by the 3DGS reference code.
namespace sh {
inline constexpr double kC0 = 0.28209479177387814;
inline constexpr double kC1 = 0.4886025119029199;
inline constexpr double kC2[5] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                                  -1.0925484305920792, 0.5462742152960396};
inline constexpr double kC3[7] = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
                                  0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                                  -0.5900435899266435};
} // namespace sh

/// One anisotropic 3D Gaussian. Scale and opacity live in log / logit space so
/// any real-valued parameter vector is a valid primitive. The same layout is
/// reused to hold per-parameter gradients and optimizer moments.
template <typename Scalar> struct GaussianPrimitive {
    Vec3<Scalar> position     = Vec3<Scalar>::Zero();
    Vec3<Scalar> log_scale    = Vec3<Scalar>::Zero();
    Vec4<Scalar> rotation     = Vec4<Scalar>(1, 0, 0, 0); // (w, x, y, z)
    Scalar opacity_logit      = 0;
    ShCoeffs<Scalar> sh       = ShCoeffs<Scalar>::Zero(1, 3);

    int sh_degree() const { return sh_degree_for_count(static_cast<int>(sh.rows())); }
    Vec3<Scalar> scale() const { return log_scale.array().exp().matrix(); }
    Scalar opacity() const { return sigmoid(opacity_logit); }

    /// All-zero primitive with `degree` SH bands; the neutral element for gradient sums.
    static GaussianPrimitive zero(int degree) {
        GaussianPrimitive g;
        g.rotation.setZero();
        g.sh = ShCoeffs<Scalar>::Zero(sh_basis_count(degree), 3);
        return g;
    }

    template <typename To> GaussianPrimitive<To> cast() const {
        GaussianPrimitive<To> out;
        out.position      = position.template cast<To>();
        out.log_scale     = log_scale.template cast<To>();
        out.rotation      = rotation.template cast<To>();
        out.opacity_logit = static_cast<To>(opacity_logit);
        out.sh            = sh.template cast<To>();
        return out;
    }

    GaussianPrimitive &operator+=(const GaussianPrimitive &o) {
        position += o.position;
        log_scale += o.log_scale;
        rotation += o.rotation;
        opacity_logit += o.opacity_logit;
        sh += o.sh;
        return *this;
    }

    bool operator==(const GaussianPrimitive &o) const {
        return position == o.position && log_scale == o.log_scale && rotation == o.rotation &&
               opacity_logit == o.opacity_logit && sh.rows() == o.sh.rows() && sh == o.sh;
    }
};

/// Number of scalar parameters in a primitive of the given SH degree.
constexpr int parameter_count(int degree) { return 3 + 3 + 4 + 1 + 3 * sh_basis_count(degree); }

/// Flat view for finite-difference probing: index in [0, parameter_count).
/// Order is position, log_scale, rotation, opacity_logit, sh (row-major).
template <typename Scalar> Scalar &parameter_at(GaussianPrimitive<Scalar> &g, int index) {
    if (index < 3) return g.position[index];
    index -= 3;
    if (index < 3) return g.log_scale[index];
    index -= 3;
    if (index < 4) return g.rotation[index];
    index -= 4;
    if (index == 0) return g.opacity_logit;
    index -= 1;
    return g.sh(index / 3, index % 3);
}

template <typename Scalar> Scalar parameter_at(const GaussianPrimitive<Scalar> &g, int index) {
    return parameter_at(const_cast<GaussianPrimitive<Scalar> &>(g), index);
}

/// Rotation matrix of the normalised quaternion q = (w, x, y, z).
template <typename Scalar> Mat3<Scalar> quat_to_rotation(const Vec4<Scalar> &q) {
    const Scalar n = q.norm();
    if (!(n > Scalar(0)) || !std::isfinite(n)) {
        throw InvalidInput("quat_to_rotation: quaternion has zero or non-finite norm");
    }
    const Vec4<Scalar> u = q / n;
    const Scalar w = u[0], x = u[1], y = u[2], z = u[3];
    Mat3<Scalar> R;
    R << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
         2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
         2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return R;
}

/// Pulls dL/dR back to the raw (unnormalised) quaternion.
template <typename Scalar>
Vec4<Scalar> quat_to_rotation_backward(const Vec4<Scalar> &q, const Mat3<Scalar> &dR) {
    const Scalar n = q.norm();
    const Vec4<Scalar> u = q / n;
    const Scalar w = u[0], x = u[1], y = u[2], z = u[3];
    Vec4<Scalar> du;
    du[0] = 2 * (-z * dR(0, 1) + y * dR(0, 2) + z * dR(1, 0) - x * dR(1, 2) - y * dR(2, 0) + x * dR(2, 1));
    du[1] = 2 * (y * dR(0, 1) + z * dR(0, 2) + y * dR(1, 0) - 2 * x * dR(1, 1) - w * dR(1, 2) +
                 z * dR(2, 0) + w * dR(2, 1) - 2 * x * dR(2, 2));
    du[2] = 2 * (-2 * y * dR(0, 0) + x * dR(0, 1) + w * dR(0, 2) + x * dR(1, 0) + z * dR(1, 2) -
                 w * dR(2, 0) + z * dR(2, 1) - 2 * y * dR(2, 2));
    du[3] = 2 * (-2 * z * dR(0, 0) - w * dR(0, 1) + x * dR(0, 2) + w * dR(1, 0) - 2 * z * dR(1, 1) +
                 y * dR(1, 2) + x * dR(2, 0) + y * dR(2, 1));
    // d(q/|q|)/dq = (I - u u^T) / |q|
    return (du - u * u.dot(du)) / n;
}

/// Sigma = R diag(s)^2 R^T.
template <typename Scalar>
Mat3<Scalar> build_covariance(const Vec3<Scalar> &scale, const Vec4<Scalar> &rotation) {
    if (!(scale.array() > Scalar(0)).all()) {
        throw InvalidInput("build_covariance: scale components must be positive");
    }
    const Mat3<Scalar> M = quat_to_rotation(rotation) * scale.asDiagonal();
    return M * M.transpose();
}

/// Real SH basis values up to `degree` for a unit direction, and optionally
/// their Jacobian with respect to the direction (rows: basis, cols: x,y,z).
template <typename Scalar>
void sh_basis(int degree, const Vec3<Scalar> &dir, Eigen::Matrix<Scalar, kMaxShBasis, 1> &Y,
              Eigen::Matrix<Scalar, kMaxShBasis, 3> *dY = nullptr) {
    using sh::kC0, sh::kC1, sh::kC2, sh::kC3;
    const Scalar x = dir[0], y = dir[1], z = dir[2];
    Y.setZero();
    if (dY) dY->setZero();
    Y[0] = Scalar(kC0);
    if (degree < 1) return;
    const Scalar c1 = Scalar(kC1);
    Y[1] = -c1 * y;
    Y[2] = c1 * z;
    Y[3] = -c1 * x;
    if (dY) {
        (*dY)(1, 1) = -c1;
        (*dY)(2, 2) = c1;
        (*dY)(3, 0) = -c1;
    }
    if (degree < 2) return;
    const Scalar xx = x * x, yy = y * y, zz = z * z;
    Y[4] = Scalar(kC2[0]) * x * y;
    Y[5] = Scalar(kC2[1]) * y * z;
    Y[6] = Scalar(kC2[2]) * (2 * zz - xx - yy);
    Y[7] = Scalar(kC2[3]) * x * z;
    Y[8] = Scalar(kC2[4]) * (xx - yy);
    if (dY) {
        auto &J = *dY;
        J(4, 0) = Scalar(kC2[0]) * y;
        J(4, 1) = Scalar(kC2[0]) * x;
        J(5, 1) = Scalar(kC2[1]) * z;
        J(5, 2) = Scalar(kC2[1]) * y;
        J(6, 0) = Scalar(kC2[2]) * -2 * x;
        J(6, 1) = Scalar(kC2[2]) * -2 * y;
        J(6, 2) = Scalar(kC2[2]) * 4 * z;
        J(7, 0) = Scalar(kC2[3]) * z;
        J(7, 2) = Scalar(kC2[3]) * x;
        J(8, 0) = Scalar(kC2[4]) * 2 * x;
        J(8, 1) = Scalar(kC2[4]) * -2 * y;
    }
    if (degree < 3) return;
    Y[9]  = Scalar(kC3[0]) * y * (3 * xx - yy);
    Y[10] = Scalar(kC3[1]) * x * y * z;
    Y[11] = Scalar(kC3[2]) * y * (4 * zz - xx - yy);
    Y[12] = Scalar(kC3[3]) * z * (2 * zz - 3 * xx - 3 * yy);
    Y[13] = Scalar(kC3[4]) * x * (4 * zz - xx - yy);
    Y[14] = Scalar(kC3[5]) * z * (xx - yy);
    Y[15] = Scalar(kC3[6]) * x * (xx - 3 * yy);
    if (dY) {
        auto &J = *dY;
        J(9, 0)  = Scalar(kC3[0]) * 6 * x * y;
        J(9, 1)  = Scalar(kC3[0]) * (3 * xx - 3 * yy);
        J(10, 0) = Scalar(kC3[1]) * y * z;
        J(10, 1) = Scalar(kC3[1]) * x * z;
        J(10, 2) = Scalar(kC3[1]) * x * y;
        J(11, 0) = Scalar(kC3[2]) * -2 * x * y;
        J(11, 1) = Scalar(kC3[2]) * (4 * zz - xx - 3 * yy);
        J(11, 2) = Scalar(kC3[2]) * 8 * y * z;
        J(12, 0) = Scalar(kC3[3]) * -6 * x * z;
        J(12, 1) = Scalar(kC3[3]) * -6 * y * z;
        J(12, 2) = Scalar(kC3[3]) * (6 * zz - 3 * xx - 3 * yy);
        J(13, 0) = Scalar(kC3[4]) * (4 * zz - 3 * xx - yy);
        J(13, 1) = Scalar(kC3[4]) * -2 * x * y;
        J(13, 2) = Scalar(kC3[4]) * 8 * x * z;
        J(14, 0) = Scalar(kC3[5]) * 2 * x * z;
        J(14, 1) = Scalar(kC3[5]) * -2 * y * z;
        J(14, 2) = Scalar(kC3[5]) * (xx - yy);
        J(15, 0) = Scalar(kC3[6]) * (3 * xx - 3 * yy);
        J(15, 1) = Scalar(kC3[6]) * -6 * x * y;
    }
}

/// Resolves the evaluation degree: -1 selects everything stored.
inline int resolve_sh_degree(long rows, int degree) {
    const int stored = sh_degree_for_count(static_cast<int>(rows));
    if (stored < 0) {
        throw InvalidInput("eval_sh_color: coefficient count " + std::to_string(rows) +
                           " is not (d+1)^2 for any degree 0..3");
    }
    if (degree < 0) return stored;
    if (degree > stored) {
        throw InvalidInput("eval_sh_color: requested degree " + std::to_string(degree) +
                           " exceeds stored degree " + std::to_string(stored));
    }
    return degree;
}

/// View-dependent color: max(0, 0.5 + sum_k c_k Y_k(dir)).
template <typename Scalar>
Vec3<Scalar> eval_sh_color(const ShCoeffs<Scalar> &coeffs, const Vec3<Scalar> &dir, int degree = -1) {
    degree = resolve_sh_degree(coeffs.rows(), degree);
    Eigen::Matrix<Scalar, kMaxShBasis, 1> Y;
    sh_basis(degree, dir, Y);
    const int n = sh_basis_count(degree);
    Vec3<Scalar> c = coeffs.topRows(n).transpose() * Y.head(n);
    c.array() += Scalar(0.5);
    return c.cwiseMax(Scalar(0));
}

} // namespace prismgs
