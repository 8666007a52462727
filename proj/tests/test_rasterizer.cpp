// Copyright Contributors to the PrismGS Project
// SPDX-License-Identifier: Apache-2.0

#include "prismgs/rasterizer.hpp"

#include "support/gradcheck.hpp"
#include "support/random_scene.hpp"
#include "support/reference_renderer.hpp"

#include <gtest/gtest.h>

#include <cstdlib>

using namespace prismgs;
using prismgs::testing::random_scene;
using prismgs::testing::RandomSceneOptions;

namespace {

GaussianPrimitive<double> isotropic(const Vec3<double> &p, double scale, double opacity, const Vec3<double> &color) {
    GaussianPrimitive<double> g;
    g.position      = p;
    g.log_scale     = Vec3<double>::Constant(std::log(scale));
    g.opacity_logit = logit(opacity);
    g.sh            = ShCoeffs<double>::Zero(1, 3);
    for (int c = 0; c < 3; ++c) g.sh(0, c) = (color[c] - 0.5) / sh::kC0;
    return g;
}

Camera front_camera(int w = 32, int h = 32, double focal = 30) {
    Camera cam;
    cam.width = w;
    cam.height = h;
    cam.fx = cam.fy = focal;
    cam.cx = 0.5 * (w - 1);
    cam.cy = 0.5 * (h - 1);
    cam.translation = Vec3<double>(0, 0, 5);
    return cam;
}

double max_abs_diff(const ImageBuffer<double> &a, const ImageBuffer<double> &b) {
    return (a.data - b.data).abs().maxCoeff();
}

} // namespace

TEST(Project, CentredGaussianLandsOnPrincipalPoint) {
    const Camera cam = front_camera();
    const auto proj  = project_gaussian(isotropic(Vec3<double>::Zero(), 0.1, 0.5, {0.5, 0.5, 0.5}), cam);
    ASSERT_TRUE(proj.visible());
    EXPECT_NEAR(proj.gaussian.mean2d.x(), cam.cx, 1e-12);
    EXPECT_NEAR(proj.gaussian.mean2d.y(), cam.cy, 1e-12);
    // isotropic: cov2d = (f s / z)^2 I + dilation
    const double expect = std::pow(30 * 0.1 / 5, 2) + 0.3;
    EXPECT_NEAR(proj.gaussian.cov2d(0, 0), expect, 1e-12);
    EXPECT_NEAR(proj.gaussian.cov2d(1, 1), expect, 1e-12);
    EXPECT_NEAR(proj.gaussian.cov2d(0, 1), 0.0, 1e-12);
}

TEST(Project, BehindCameraIsCulled) {
    const Camera cam = front_camera();
    const auto proj  = project_gaussian(isotropic(Vec3<double>(0, 0, -6), 0.1, 0.5, {0.5, 0.5, 0.5}), cam);
    EXPECT_EQ(proj.cull, Cull::Near);
}

TEST(Render, EmptySceneIsBlack) {
    const std::vector<GaussianPrimitive<double>> none;
    const auto out = render<double>(none, front_camera());
    EXPECT_EQ(out.image.data.abs().maxCoeff(), 0.0);
    EXPECT_EQ(out.visible, 0);
}

TEST(Render, SingleOpaqueGaussianPeakMatchesOpacityTimesColor) {
    const std::vector gs = {isotropic(Vec3<double>::Zero(), 0.2, 0.7, {0.8, 0.4, 0.2})};
    Camera cam           = front_camera(33, 33);
    const auto out       = render<double>(gs, cam);
    EXPECT_NEAR(out.image(16, 16, 0), 0.7 * 0.8, 1e-12);
    EXPECT_NEAR(out.image(16, 16, 1), 0.7 * 0.4, 1e-12);
    EXPECT_NEAR(out.image(16, 16, 2), 0.7 * 0.2, 1e-12);
    EXPECT_NEAR(out.alpha[16 * 33 + 16], 0.7, 1e-12);
}

TEST(Render, FrontGaussianOccludesBack) {
    const std::vector gs = {isotropic(Vec3<double>(0, 0, 1), 0.3, 0.99, {0.1, 0.1, 0.1}),
                            isotropic(Vec3<double>(0, 0, -1), 0.3, 0.99, {0.9, 0.9, 0.9})};
    const auto out       = render<double>(gs, front_camera(33, 33));
    // back one is nearer to the camera (camera at z = -5 in world)
    EXPECT_NEAR(out.image(16, 16, 0), 0.99 * 0.9 + 0.01 * 0.99 * 0.1, 1e-9);
}

TEST(Render, MatchesReferenceWithDefaultOptions) {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 10; ++trial) {
        RandomSceneOptions o;
        o.count = 40;
        o.width = 40;
        o.height = 24;
        const auto scene = random_scene(rng, o);
        const auto tiled = render<double>(scene.gaussians, scene.camera).image;
        const auto naive = prismgs::testing::reference_render(scene.gaussians, scene.camera);
        EXPECT_LE(max_abs_diff(tiled, naive), 1e-5) << "trial " << trial;
    }
}

TEST(Render, MatchesReferenceWithOracleOptions) {
    std::mt19937_64 rng(8);
    const auto opts = RenderOptions::oracle();
    for (int trial = 0; trial < 5; ++trial) {
        RandomSceneOptions o;
        o.count = 30;
        o.width = 20;
        o.height = 36;
        const auto scene = random_scene(rng, o);
        EXPECT_LE(max_abs_diff(render<double>(scene.gaussians, scene.camera, opts).image,
                               prismgs::testing::reference_render(scene.gaussians, scene.camera, opts)),
                  1e-12);
    }
}

TEST(Render, ResultIndependentOfThreadCount) {
    std::mt19937_64 rng(9);
    RandomSceneOptions o;
    o.count = 50;
    o.width = o.height = 48;
    const auto scene = random_scene(rng, o);
    setenv("PRISMGS_THREADS", "1", 1);
    const auto a = render<double>(scene.gaussians, scene.camera);
    const auto ga = render_backward<double>(scene.gaussians, a, a.image);
    setenv("PRISMGS_THREADS", "4", 1);
    const auto b = render<double>(scene.gaussians, scene.camera);
    const auto gb = render_backward<double>(scene.gaussians, b, b.image);
    unsetenv("PRISMGS_THREADS");
    EXPECT_TRUE(a.image == b.image);
    for (std::size_t i = 0; i < ga.params.size(); ++i) EXPECT_TRUE(ga.params[i] == gb.params[i]);
}

TEST(Render, DegenerateGaussianIsSkippedAndCounted) {
    auto g = isotropic(Vec3<double>::Zero(), 0.2, 0.5, {0.5, 0.5, 0.5});
    RenderOptions opts;
    opts.dilation = 0.0;
    g.log_scale = Vec3<double>(std::log(0.2), -800.0, -800.0); // underflows to a zero-width needle
    const std::vector gs = {g};
    const auto out       = render<double>(gs, front_camera(), opts);
    EXPECT_EQ(out.degenerate_skipped, 1);
    EXPECT_EQ(out.image.data.abs().maxCoeff(), 0.0);
}

TEST(Render, RenderAtLevelHalvesDimensions) {
    const std::vector gs = {isotropic(Vec3<double>::Zero(), 0.2, 0.5, {0.5, 0.5, 0.5})};
    const auto out       = render_at_level<double>(gs, front_camera(37, 20), 1);
    EXPECT_EQ(out.image.width, 18);
    EXPECT_EQ(out.image.height, 10);
}

TEST(Backward, RejectsMismatchedGaussians) {
    std::vector gs = {isotropic(Vec3<double>::Zero(), 0.2, 0.5, {0.5, 0.5, 0.5})};
    const auto out = render<double>(gs, front_camera());
    gs[0].position.x() += 1e-3;
    EXPECT_THROW(render_backward<double>(gs, out, out.image), ContractViolation);
    RenderOutput<double> stateless = out;
    stateless.state.reset();
    EXPECT_THROW(render_backward<double>(gs, stateless, out.image), ContractViolation);
    gs[0].position.x() -= 1e-3;
    EXPECT_THROW(render_backward<double>(gs, out, ImageBuffer<double>(3, 3)), ContractViolation);
}

TEST(Backward, MatchesFiniteDifferences) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 6; ++trial) {
        RandomSceneOptions o;
        o.count = 1 + trial;
        const auto scene   = random_scene(rng, o);
        const auto weights = prismgs::testing::random_image(rng, o.width, o.height);
        const auto check   = prismgs::testing::check_render_gradients(scene.gaussians, scene.camera, weights);
        EXPECT_TRUE(check.ok()) << check.failures << "/" << check.checked << " " << check.first_failure;
    }
}

TEST(Backward, ClampedColorChannelHasNoGradient) {
    auto g = isotropic(Vec3<double>::Zero(), 0.2, 0.5, {0.5, 0.5, 0.5});
    g.sh(0, 0) = -1.0 / sh::kC0; // raw red = -0.5
    const std::vector gs = {g};
    const auto out       = render<double>(gs, front_camera());
    const auto grads     = render_backward<double>(gs, out, ImageBuffer<double>(32, 32, 1.0));
    EXPECT_EQ(grads.params[0].sh(0, 0), 0.0);
    EXPECT_GT(grads.params[0].sh(0, 1), 0.0);
}

TEST(Backward, FloatAgreesWithDouble) {
    std::mt19937_64 rng(12);
    const auto scene = random_scene(rng);
    std::vector<GaussianPrimitive<float>> gf;
    for (const auto &g : scene.gaussians) gf.push_back(g.cast<float>());
    const auto outd = render<double>(scene.gaussians, scene.camera);
    const auto outf = render<float>(gf, scene.camera);
    EXPECT_LE((outd.image.data - outf.image.data.cast<double>()).abs().maxCoeff(), 1e-5);
}
