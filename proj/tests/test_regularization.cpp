// Copyright Contributors to the PrismGS Project
// SPDX-License-Identifier: Apache-2.0

#include "prismgs/regularization.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace prismgs;

namespace {

GaussianPrimitive<double> with_scale(const Vec3<double> &s) {
    GaussianPrimitive<double> g;
    g.log_scale = s.array().log().matrix();
    return g;
}

Camera axis_camera(int id, double z, double focal) {
    Camera cam;
    cam.id = id;
    cam.width = cam.height = 32;
    cam.fx = cam.fy = focal;
    cam.cx = cam.cy = 15.5;
    cam.translation = Vec3<double>(0, 0, -z); // center at (0, 0, z), looking along +z
    return cam;
}

SparsePointCloud points_at(std::initializer_list<Vec3<double>> ps) {
    SparsePointCloud c;
    for (const auto &p : ps) c.points.push_back({p, {0, 0, 0}});
    return c;
}

} // namespace

TEST(SamplingInterval, DepthOverFocal) {
    EXPECT_DOUBLE_EQ(pixel_sampling_interval(10, 1000), 0.01);
    EXPECT_DOUBLE_EQ(pixel_sampling_interval(1, 1), 1.0);
    EXPECT_DOUBLE_EQ(pixel_sampling_interval(4, 50), 2 * pixel_sampling_interval(2, 50));
    EXPECT_DOUBLE_EQ(pixel_sampling_interval(4, 100), 0.5 * pixel_sampling_interval(4, 50));
    EXPECT_THROW(pixel_sampling_interval(0, 1), InvalidInput);
    EXPECT_THROW(pixel_sampling_interval(1, -1), InvalidInput);
}

TEST(SamplingBound, SingleCameraFormulaChain) {
    const std::vector cams = {axis_camera(0, -5, 100)};
    const auto b = compute_sampling_bound(cams, points_at({{0, 0, 0}, {0, 0, 3}}));
    EXPECT_DOUBLE_EQ(b.T_min, 0.05);
    EXPECT_DOUBLE_EQ(b.tau_size, 0.10);
    ASSERT_EQ(b.per_camera_T.size(), 1u);
}

TEST(SamplingBound, GlobalMinimumOverCameras) {
    const std::vector cams = {axis_camera(0, -5, 100), axis_camera(1, -2, 100)};
    const auto b = compute_sampling_bound(cams, points_at({{0, 0, 0}}));
    EXPECT_DOUBLE_EQ(b.per_camera_T[0].second, 0.05);
    EXPECT_DOUBLE_EQ(b.per_camera_T[1].second, 0.02);
    EXPECT_DOUBLE_EQ(b.T_min, 0.02);
}

TEST(SamplingBound, IgnoresPointsOutsideTheImageAndBehind) {
    const std::vector cams = {axis_camera(0, -5, 100)};
    // (10, 0, -4) is 1 unit deep but projects far outside; (0, 0, -7) is behind
    const auto b = compute_sampling_bound(cams, points_at({{10, 0, -4}, {0, 0, -7}, {0, 0, 1}}));
    EXPECT_DOUBLE_EQ(b.T_min, 6.0 / 100);
}

TEST(SamplingBound, NearClampAndFocalMin) {
    std::vector cams = {axis_camera(0, -5, 100)};
    cams[0].fy       = 50;
    SamplingBoundOptions o;
    o.near_clamp     = 2.0;
    o.nyquist_factor = 3.0;
    const auto b = compute_sampling_bound(cams, points_at({{0, 0, -4.5}}), o);
    EXPECT_DOUBLE_EQ(b.T_min, 2.0 / 50);
    EXPECT_DOUBLE_EQ(b.tau_size, 3 * 2.0 / 50);
}

TEST(SamplingBound, SkipsTestCamerasAndBlindCameras) {
    std::vector cams = {axis_camera(0, -5, 100), axis_camera(1, -1, 100), axis_camera(2, 20, 100)};
    cams[1].split    = Split::Test;
    const auto b     = compute_sampling_bound(cams, points_at({{0, 0, 0}}));
    ASSERT_EQ(b.per_camera_T.size(), 1u); // camera 2 sits behind the point
    EXPECT_EQ(b.per_camera_T[0].first, 0);
    EXPECT_THROW(compute_sampling_bound(std::vector{axis_camera(2, 20, 100)}, points_at({{0, 0, 0}})), ConfigError);
}

TEST(SizeLoss, InactiveWhenEveryMinimumClearsTau) {
    const std::vector gs = {with_scale({0.2, 0.3, 0.4}), with_scale({0.1, 0.1, 0.1})};
    const auto l         = size_loss<double>(gs, 0.1);
    EXPECT_EQ(l.value, 0.0);
    EXPECT_EQ(l.active, 0);
    for (const auto &g : l.log_scale_grad) EXPECT_EQ(g, Vec3<double>::Zero());
}

TEST(SizeLoss, HalfTauClosedForm) {
    const double tau     = 0.08;
    const std::vector gs = {with_scale({0.5 * tau, 2 * tau, 2 * tau})};
    const auto l         = size_loss<double>(gs, tau);
    EXPECT_NEAR(l.value, 0.5 * tau, 1e-15);
    // d/dlog s0 of (tau - s0) = -s0; the optimiser moves against it, raising axis 0
    EXPECT_NEAR(l.log_scale_grad[0][0], -0.5 * tau, 1e-15);
    EXPECT_EQ(l.log_scale_grad[0][1], 0.0);
}

TEST(SizeLoss, MatchesBruteForceOnRandomInputs) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(std::log(0.01), std::log(0.5));
    std::vector<GaussianPrimitive<double>> gs;
    for (int i = 0; i < 100; ++i) gs.push_back(with_scale(Vec3<double>(u(rng), u(rng), u(rng)).array().exp()));
    const double tau = 0.1;
    double expect    = 0;
    for (const auto &g : gs) {
        const double m = std::min({std::exp(g.log_scale[0]), std::exp(g.log_scale[1]), std::exp(g.log_scale[2])});
        expect += std::max(0.0, tau - m);
    }
    const auto l = size_loss<double>(gs, tau);
    EXPECT_NEAR(l.value, expect, 1e-9);

    for (std::size_t i = 0; i < gs.size(); ++i) {
        for (int k = 0; k < 3; ++k) {
            auto p = gs, m = gs;
            p[i].log_scale[k] += 1e-6;
            m[i].log_scale[k] -= 1e-6;
            const double fd = (size_loss<double>(p, tau).value - size_loss<double>(m, tau).value) / 2e-6;
            EXPECT_NEAR(l.log_scale_grad[i][k], fd, 1e-6) << i << " " << k;
        }
    }
}

TEST(SizeLoss, TiesBreakToTheLowestAxis) {
    const std::vector gs = {with_scale({0.3, 0.05, 0.05})};
    const auto l         = size_loss<double>(gs, 0.1);
    EXPECT_NE(l.log_scale_grad[0][1], 0.0);
    EXPECT_EQ(l.log_scale_grad[0][2], 0.0);
}

TEST(SizeLoss, KinkUsesTheInactiveSide) {
    const std::vector gs = {with_scale({0.1, 0.2, 0.3})};
    const auto l         = size_loss<double>(gs, std::exp(std::log(0.1)));
    EXPECT_EQ(l.value, 0.0);
    EXPECT_EQ(l.log_scale_grad[0], Vec3<double>::Zero());
}

TEST(SizeLoss, PropertiesOfTheSum) {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n(0, 1);
    std::uniform_real_distribution<double> u(0.01, 0.3);
    std::vector<GaussianPrimitive<double>> gs;
    for (int i = 0; i < 20; ++i) gs.push_back(with_scale({u(rng), u(rng), u(rng)}));
    const double tau  = 0.15;
    const double base = size_loss<double>(gs, tau).value;
    EXPECT_GE(base, 0.0);

    // independent of position and rotation
    auto moved = gs;
    for (auto &g : moved) {
        g.position = Vec3<double>(n(rng), n(rng), n(rng));
        g.rotation = Vec4<double>(n(rng), n(rng), n(rng), n(rng));
    }
    EXPECT_EQ(size_loss<double>(moved, tau).value, base);

    // duplication doubles the sum; the normalised form is unchanged
    auto twice = gs;
    twice.insert(twice.end(), gs.begin(), gs.end());
    EXPECT_NEAR(size_loss<double>(twice, tau).value, 2 * base, 1e-12);
    EXPECT_NEAR(size_loss<double>(twice, tau, true).value, size_loss<double>(gs, tau, true).value, 1e-12);

    // raising any below-threshold minimum lowers the loss
    for (std::size_t i = 0; i < gs.size(); ++i) {
        const Vec3<double> s = gs[i].scale();
        int axis             = 0;
        for (int k = 1; k < 3; ++k)
            if (s[k] < s[axis]) axis = k;
        if (s[axis] >= tau) continue;
        auto up = gs;
        up[i].log_scale[axis] += 1e-3;
        EXPECT_LT(size_loss<double>(up, tau).value, base);
    }
    EXPECT_THROW(size_loss<double>(gs, 0.0), InvalidInput);
}

TEST(SizeLoss, UndersizedCountUsesTolerance) {
    const std::vector gs = {with_scale({0.1 - 2e-6, 1, 1}), with_scale({0.1 - 5e-7, 1, 1}), with_scale({0.2, 1, 1})};
    EXPECT_EQ(count_undersized<double>(gs, 0.1), 1);
    EXPECT_EQ(count_undersized<double>(gs, 0.1, 0.0), 2);
}
