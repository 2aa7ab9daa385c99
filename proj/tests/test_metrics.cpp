// Copyright (c) 2026 the relight authors.
// The relight source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "relight/metrics.hpp"

using namespace relight;

namespace {

RasterImage random_image(int w, int h, int c, uint64_t seed, float lo = 0.0f, float hi = 1.0f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(lo, hi);
  RasterImage img(w, h, c);
  for (float& v : img.data) v = dist(rng);
  return img;
}

std::vector<double> random_plane(int n, uint64_t seed, double lo, double hi) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

}  // namespace

TEST(L1L2, IdenticalInputsAreZero) {
  const RasterImage x = random_image(8, 8, 3, 1);
  EXPECT_DOUBLE_EQ(l1(x, x), 0.0);
  EXPECT_DOUBLE_EQ(l2(x, x), 0.0);
}

TEST(L1L2, ConstantImages) {
  const RasterImage ones(4, 4, 3, 1.0f);
  const RasterImage zeros(4, 4, 3, 0.0f);
  EXPECT_DOUBLE_EQ(l1(ones, zeros), 1.0);
  EXPECT_DOUBLE_EQ(l2(ones, zeros), 1.0);
  const RasterImage a(4, 4, 3, 0.75f);
  const RasterImage b(4, 4, 3, 0.25f);
  EXPECT_NEAR(l1(a, b), 0.5, 1e-7);
  EXPECT_NEAR(l2(a, b), 0.25, 1e-7);
}

TEST(L1L2, InputsClampedToUnitRange) {
  const RasterImage big(2, 2, 1, 3.0f);   // clamps to 1
  const RasterImage neg(2, 2, 1, -2.0f);  // clamps to 0
  EXPECT_DOUBLE_EQ(l1(big, neg), 1.0);
}

TEST(Gradients, L2IsTwoDeltaOverN) {
  const RasterImage a = random_image(6, 5, 3, 2);
  const RasterImage b = random_image(6, 5, 3, 3);
  const RasterImage g = metric_grad(Metric::L2, a, b);
  const double n = a.data.size();
  for (size_t i = 0; i < a.data.size(); ++i)
    EXPECT_NEAR(g.data[i], 2.0 * (a.data[i] - b.data[i]) / n, 1e-6);
}

TEST(Gradients, L1SubgradientZeroAtTies) {
  const RasterImage a(3, 3, 1, 0.5f);
  const RasterImage g = metric_grad(Metric::L1, a, a);
  for (float v : g.data) EXPECT_FLOAT_EQ(v, 0.0f);
}

TEST(Dssim, IdenticalInputsAreExactlyZero) {
  const RasterImage x = random_image(16, 16, 3, 4);
  EXPECT_EQ(dssim(x, x), 0.0);
}

TEST(Dssim, Symmetric) {
  const RasterImage a = random_image(20, 16, 3, 5);
  const RasterImage b = random_image(20, 16, 3, 6);
  EXPECT_NEAR(dssim(a, b), dssim(b, a), 1e-12);
}

TEST(Dssim, ConstantImagesMatchClosedForm) {
  const RasterImage a(16, 16, 3, 0.5f);
  const RasterImage b(16, 16, 3, 0.25f);
  // zero variance: SSIM = (2 mu1 mu2 + C1) / (mu1^2 + mu2^2 + C1), cs term = 1
  const double c1 = 1e-4;
  const double ssim = (2 * 0.5 * 0.25 + c1) / (0.5 * 0.5 + 0.25 * 0.25 + c1);
  const double expected = (1.0 - ssim) / 2.0;
  EXPECT_NEAR(dssim(a, b), expected, 1e-6);
  EXPECT_NEAR(expected, 0.09997, 5e-6);
}

TEST(Dssim, ThrowsBelowWindowSize) {
  const RasterImage small(8, 8, 1, 0.5f);
  EXPECT_THROW(dssim(small, small), DataError);
  EXPECT_THROW(ssim_map(small, small), DataError);
}

TEST(Dssim, MapHasValidGridShape) {
  const RasterImage a = random_image(32, 20, 3, 7);
  const RasterImage b = random_image(32, 20, 3, 8);
  const RasterImage map = ssim_map(a, b);
  EXPECT_EQ(map.width, 22);
  EXPECT_EQ(map.height, 10);
  EXPECT_EQ(map.channels, 1);
  for (float v : map.data) {
    EXPECT_GE(v, -1.0f);
    EXPECT_LE(v, 1.0f);
  }
}

TEST(MsDssim, WeightsSumToOne) {
  const double* w = metrics_detail::ms_ssim_weights();
  double sum = 0.0;
  for (int i = 0; i < 5; ++i) sum += w[i];
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(MsDssim, IdenticalInputsAreExactlyZero) {
  const RasterImage x = random_image(64, 48, 3, 9);
  EXPECT_EQ(ms_dssim(x, x), 0.0);
}

TEST(MsDssim, FullFiveScalesAt176) {
  const RasterImage a = random_image(176, 176, 3, 10);
  const RasterImage b = random_image(176, 176, 3, 11);
  const MsDssimResult r = ms_dssim_result(a, b);
  EXPECT_EQ(r.scales, 5);
  EXPECT_FALSE(r.reduced);
  EXPECT_GE(r.value, 0.0);
  EXPECT_LE(r.value, 1.0);
}

TEST(MsDssim, ReducedScalesAreFlagged) {
  const RasterImage a = random_image(64, 64, 3, 12);
  const RasterImage b = random_image(64, 64, 3, 13);
  const MsDssimResult r = ms_dssim_result(a, b);
  EXPECT_EQ(r.scales, 3);  // 64 -> 32 -> 16; 8 is below the window
  EXPECT_TRUE(r.reduced);
  EXPECT_GE(r.value, 0.0);
  EXPECT_LE(r.value, 1.0);
}

TEST(Gradients, DssimMatchesFiniteDifferences64Bit) {
  const int w = 32, h = 32, c = 3;
  const auto a = random_plane(w * h * c, 20, 0.05, 0.95);
  const auto b = random_plane(w * h * c, 21, 0.0, 1.0);
  std::vector<double> grad(a.size());
  dssim_grad(a.data(), b.data(), w, h, c, grad.data());

  std::mt19937_64 rng(22);
  std::uniform_int_distribution<size_t> pick(0, a.size() - 1);
  const double hstep = 1e-6;
  double max_rel = 0.0;
  for (int s = 0; s < 60; ++s) {
    const size_t i = pick(rng);
    std::vector<double> ap = a, am = a;
    ap[i] += hstep;
    am[i] -= hstep;
    const double fd =
        (dssim_value(ap.data(), b.data(), w, h, c) - dssim_value(am.data(), b.data(), w, h, c)) /
        (2 * hstep);
    const double denom = std::max({std::abs(fd), std::abs(grad[i]), 1e-5});
    max_rel = std::max(max_rel, std::abs(fd - grad[i]) / denom);
  }
  EXPECT_LT(max_rel, 1e-5);
}

TEST(Gradients, MsDssimMatchesFiniteDifferences64Bit) {
  const int w = 48, h = 48, c = 3;
  const auto a = random_plane(w * h * c, 30, 0.05, 0.95);
  const auto b = random_plane(w * h * c, 31, 0.0, 1.0);
  std::vector<double> grad(a.size());
  ms_dssim_grad(a.data(), b.data(), w, h, c, grad.data());

  std::mt19937_64 rng(32);
  std::uniform_int_distribution<size_t> pick(0, a.size() - 1);
  const double hstep = 1e-6;
  double max_rel = 0.0;
  for (int s = 0; s < 40; ++s) {
    const size_t i = pick(rng);
    std::vector<double> ap = a, am = a;
    ap[i] += hstep;
    am[i] -= hstep;
    const double fd = (ms_dssim_value(ap.data(), b.data(), w, h, c) -
                       ms_dssim_value(am.data(), b.data(), w, h, c)) /
                      (2 * hstep);
    const double denom = std::max({std::abs(fd), std::abs(grad[i]), 1e-5});
    max_rel = std::max(max_rel, std::abs(fd - grad[i]) / denom);
  }
  EXPECT_LT(max_rel, 1e-5);
}

TEST(Gradients, VanishAtIdenticalInputsForSmoothMetrics) {
  const RasterImage x = random_image(24, 24, 3, 40, 0.1f, 0.9f);
  for (Metric m : {Metric::L2, Metric::DSSIM, Metric::MSDSSIM}) {
    const RasterImage g = metric_grad(m, x, x);
    for (float v : g.data) EXPECT_NEAR(v, 0.0f, 1e-6f) << metric_name(m);
  }
}

TEST(Metrics, NonnegativeAndZeroOnlyAtIdentity) {
  const RasterImage a = random_image(24, 24, 3, 41);
  const RasterImage b = random_image(24, 24, 3, 42);
  for (Metric m : {Metric::L1, Metric::L2, Metric::DSSIM, Metric::MSDSSIM}) {
    EXPECT_GT(metric_value(m, a, b), 0.0) << metric_name(m);
    EXPECT_EQ(metric_value(m, a, a), 0.0) << metric_name(m);
  }
}

TEST(Metrics, ParseNames) {
  EXPECT_EQ(metric_from_string("dssim"), Metric::DSSIM);
  EXPECT_EQ(metric_from_string("msdssim"), Metric::MSDSSIM);
  EXPECT_THROW(metric_from_string("lpips"), DataError);
}
