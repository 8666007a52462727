// Copyright Contributors to the PrismGS Project
// SPDX-License-Identifier: Apache-2.0

#include "prismgs/losses.hpp"

#include "support/gradcheck.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace prismgs;
using prismgs::testing::check_image_gradient;
using prismgs::testing::random_image;

namespace {

// Window-by-window SSIM straight from the definition.
double ssim_brute_force(const ImageBuffer<double> &a, const ImageBuffer<double> &b) {
    double w[11][11], wsum = 0;
    for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) wsum += (w[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / 4.5));
    double total = 0;
    int count    = 0;
    for (int c = 0; c < 3; ++c) {
        for (int y0 = 0; y0 + 11 <= a.height; ++y0) {
            for (int x0 = 0; x0 + 11 <= a.width; ++x0) {
                double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
                for (int i = 0; i < 11; ++i) {
                    for (int j = 0; j < 11; ++j) {
                        const double k = w[i][j] / wsum, va = a(x0 + j, y0 + i, c), vb = b(x0 + j, y0 + i, c);
                        ma += k * va;
                        mb += k * vb;
                        saa += k * va * va;
                        sbb += k * vb * vb;
                        sab += k * va * vb;
                    }
                }
                const double C1 = 1e-4, C2 = 9e-4;
                total += (2 * ma * mb + C1) * (2 * (sab - ma * mb) + C2) /
                         ((ma * ma + mb * mb + C1) * (saa - ma * ma + sbb - mb * mb + C2));
                ++count;
            }
        }
    }
    return total / count;
}

} // namespace

TEST(L1, ClosedFormsAndBruteForce) {
    std::mt19937_64 rng(1);
    const auto a = random_image(rng, 9, 7, 0, 1);
    EXPECT_EQ(l1_image_loss(a, a).value, 0.0);
    ImageBuffer<double> b = a;
    b.data += 0.25;
    EXPECT_NEAR(l1_image_loss(a, b).value, 0.25, 1e-15);

    const auto c = random_image(rng, 9, 7, 0, 1);
    double sum   = 0;
    for (int y = 0; y < 7; ++y)
        for (int x = 0; x < 9; ++x)
            for (int k = 0; k < 3; ++k) sum += std::abs(a(x, y, k) - c(x, y, k));
    EXPECT_NEAR(l1_image_loss(a, c).value, sum / (9 * 7 * 3), 1e-15);
    EXPECT_THROW(l1_image_loss(a, ImageBuffer<double>(7, 9)), ContractViolation);
}

TEST(L1, GradientMatchesFiniteDifferencesAwayFromKinks) {
    std::mt19937_64 rng(2);
    const auto a = random_image(rng, 8, 8, 0, 1), b = random_image(rng, 8, 8, 0, 1);
    const auto loss = l1_image_loss(a, b);
    const auto check = check_image_gradient([&](const ImageBuffer<double> &x) { return l1_image_loss(x, b).value; }, a,
                                            loss.gradient);
    EXPECT_TRUE(check.ok()) << check.first_failure;
}

TEST(Ssim, IdenticalImagesGiveOne) {
    std::mt19937_64 rng(3);
    const auto a = random_image(rng, 16, 16, 0, 1);
    EXPECT_NEAR(ssim(a, a).value, 1.0, 1e-12);
    EXPECT_LT(ssim(a, a).gradient.data.abs().maxCoeff(), 1e-12);
}

TEST(Ssim, ConstantBlackAgainstWhiteIsTiny) {
    const ImageBuffer<double> a(16, 16, 0.0), b(16, 16, 1.0);
    // all windows: (C1)(C2) / ((1 + C1) C2)
    EXPECT_NEAR(ssim(a, b).value, kSsimC1 / (1 + kSsimC1), 1e-15);
    EXPECT_LT(ssim(a, b).value, 0.01);
}

TEST(Ssim, MatchesWindowBruteForceAndIsSymmetric) {
    std::mt19937_64 rng(4);
    const auto a = random_image(rng, 19, 14, 0, 1), b = random_image(rng, 19, 14, 0, 1);
    EXPECT_NEAR(ssim(a, b).value, ssim_brute_force(a, b), 1e-12);
    EXPECT_LT(std::abs(ssim(a, b).value - ssim(b, a).value), 1e-9);
}

TEST(Ssim, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(5);
    const auto a = random_image(rng, 16, 16, 0, 1), b = random_image(rng, 16, 16, 0, 1);
    const auto s = ssim(a, b);
    int checked  = 0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        ImageBuffer<double> p = a, m = a;
        p.data[i] += 1e-4;
        m.data[i] -= 1e-4;
        const double fd = (ssim(p, b).value - ssim(m, b).value) / 2e-4;
        EXPECT_NEAR(s.gradient.data[i], fd, 1e-5);
        ++checked;
    }
    EXPECT_EQ(checked, 16 * 16 * 3);
}

TEST(Ssim, TooSmallImagesThrow) {
    const ImageBuffer<double> a(10, 20);
    EXPECT_THROW(ssim(a, a), InvalidInput);
}

TEST(BaseLoss, RecomposesFromComponents) {
    std::mt19937_64 rng(6);
    const auto a = random_image(rng, 16, 16, 0, 1), b = random_image(rng, 16, 16, 0, 1);
    const auto base = base_loss(a, b, 0.2);
    EXPECT_NEAR(base.value, 0.8 * l1_image_loss(a, b).value + 0.2 * (1 - ssim_brute_force(a, b)), 1e-12);
    EXPECT_EQ(base_loss(a, a, 0.2).value, 0.0);

    const auto l1only = base_loss(a, b, 0.0);
    EXPECT_EQ(l1only.value, l1_image_loss(a, b).value);
    EXPECT_EQ(l1only.gradient, l1_image_loss(a, b).gradient);
    EXPECT_THROW(base_loss(a, b, 1.5), InvalidInput);
}

TEST(BaseLoss, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(7);
    const auto a = random_image(rng, 16, 16, 0, 1), b = random_image(rng, 16, 16, 0, 1);
    const auto base  = base_loss(a, b, 0.2);
    const auto check = check_image_gradient([&](const ImageBuffer<double> &x) { return base_loss(x, b, 0.2).value; },
                                            a, base.gradient, 5);
    EXPECT_TRUE(check.ok()) << check.first_failure;
}

TEST(TotalLoss, WeightedSum) {
    const auto t = total_loss(1, 2, 3, 0.1, 0.01);
    EXPECT_NEAR(t.total, 1.23, 1e-12);
    EXPECT_EQ(total_loss(0.7, 5, 9, 0, 0).total, 0.7);
    EXPECT_THROW(total_loss(1, 1, 1, -0.1, 0), InvalidInput);

    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0, 2);
    for (int i = 0; i < 100; ++i) {
        const double b = u(rng), m = u(rng), s = u(rng), lm = u(rng), ls = u(rng);
        const auto r = total_loss(b, m, s, lm, ls);
        EXPECT_NEAR(r.total, r.base + lm * r.mss + ls * r.size, 1e-9);
        // linear in each term
        EXPECT_NEAR(total_loss(b, 2 * m, s, lm, ls).total - r.total, lm * m, 1e-12);
    }
}

TEST(Psnr, CapAndFormula) {
    std::mt19937_64 rng(9);
    const auto a = random_image(rng, 8, 8, 0, 1);
    EXPECT_EQ(psnr(a, a), kPsnrCap);
    ImageBuffer<double> b = a;
    b.data += 0.1; // MSE 0.01
    EXPECT_NEAR(psnr(a, b), 20.0, 1e-9);

    const auto c = random_image(rng, 8, 8, 0, 1);
    double se = 0;
    for (Eigen::Index i = 0; i < a.size(); ++i) se += (a.data[i] - c.data[i]) * (a.data[i] - c.data[i]);
    EXPECT_NEAR(psnr(a, c), 10 * std::log10(a.size() / se), 1e-9);
    EXPECT_THROW(psnr(a, ImageBuffer<double>(4, 4)), ContractViolation);
}

TEST(Psnr, DecreasesWithNoiseAmplitude) {
    std::mt19937_64 rng(10);
    const auto a     = random_image(rng, 16, 16, 0, 1);
    const auto noise = random_image(rng, 16, 16, -1, 1);
    double last      = kPsnrCap + 1;
    for (double amp : {0.001, 0.01, 0.05, 0.1, 0.3}) {
        ImageBuffer<double> b = a;
        b.data += amp * noise.data;
        const double p = psnr(a, b);
        EXPECT_LT(p, last);
        last = p;
    }
}
