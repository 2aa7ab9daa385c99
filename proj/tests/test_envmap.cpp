// Copyright (c) 2026 the relight authors.
// The relight source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>
#include <random>

#include "relight/envmap.hpp"
#include "relight/synth.hpp"

using namespace relight;

namespace {

RasterImage test_image() {
  return render_olat(build_scene(12, 32, 32), standard_rig(32).lights[9]).image;
}

const DirectionalLight kSrc{normalized({0.2, 0.3, 0.93}), {1, 1, 1}};

}  // namespace

TEST(EnvToLights, SinglePixelGivesSingleMatchingLight) {
  RasterImage env(64, 32, 3, 0.0f);
  env.at(10, 7, 0) = 1.0f;
  env.at(10, 7, 1) = 2.0f;
  env.at(10, 7, 2) = 0.5f;
  const auto lights = env_to_lights(env);
  ASSERT_EQ(lights.size(), 1u);
  const Vec3 expect = equirect_direction(10, 7, 64, 32);
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(lights[0].light.direction[k], expect[k], 1e-12);
  EXPECT_NEAR(length(lights[0].light.direction), 1.0, 1e-12);
  EXPECT_GT(lights[0].weight.y, lights[0].weight.x);
  EXPECT_NEAR(lights[0].weight.y / lights[0].weight.x, 2.0, 1e-9);
}

TEST(EnvToLights, ConstantEnvTotalsSphereSolidAngle) {
  const RasterImage env(64, 32, 3, 1.0f);
  const auto lights = env_to_lights(env);
  EXPECT_EQ(lights.size(), 64u * 32u);
  Vec3 total{0, 0, 0};
  for (const WeightedLight& wl : lights) total += wl.weight;
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(total[k], 4.0 * M_PI, 1e-3);
}

TEST(EnvToLights, ConstantEnvWeightsSymmetricAboutEquator) {
  const RasterImage env(64, 32, 3, 1.0f);
  const auto lights = env_to_lights(env);
  // rows v and 31-v carry the same band weight
  auto weight_of_row = [&](int v) {
    for (const WeightedLight& wl : lights) {
      const Vec3 d = equirect_direction(0, v, 64, 32);
      if (std::abs(dot(wl.light.direction, d) - 1.0) < 1e-12) return wl.weight.x;
    }
    return -1.0;
  };
  for (int v = 0; v < 16; ++v)
    EXPECT_NEAR(weight_of_row(v), weight_of_row(31 - v), 1e-12) << "row " << v;
}

TEST(EnvToLights, DownsamplesLargerMaps) {
  RasterImage env(128, 64, 3, 0.25f);
  const auto lights = env_to_lights(env);
  EXPECT_EQ(lights.size(), 64u * 32u);
  Vec3 total{0, 0, 0};
  for (const WeightedLight& wl : lights) total += wl.weight;
  EXPECT_NEAR(total.x, M_PI, 1e-3);  // 0.25 * 4 pi
}

TEST(EnvToLights, RejectsNonEquirectOrientation) {
  EXPECT_THROW(env_to_lights(RasterImage(32, 64, 3, 1.0f)), DataError);
}

TEST(RelightEnv, SingleLightEnvEqualsScaledSingleRelight) {
  const ModelParams mp = init_model(ModelConfig{}, 21);
  const RasterImage img = test_image();
  RasterImage env(64, 32, 3, 0.0f);
  env.at(20, 9, 0) = env.at(20, 9, 1) = env.at(20, 9, 2) = 2.0f;
  const auto lights = env_to_lights(env);
  ASSERT_EQ(lights.size(), 1u);
  const RasterImage mixed = relight_env(mp, img, kSrc, lights, 0, /*clamp=*/false);
  const RasterImage single = relight_image(mp, img, kSrc, lights[0].light, /*clamp=*/false);
  for (size_t i = 0; i < mixed.data.size(); ++i)
    EXPECT_NEAR(mixed.data[i], static_cast<float>(lights[0].weight.x) * single.data[i], 1e-6f);
}

TEST(RelightEnv, LinearInEnvironmentRadiancePreClamp) {
  const ModelParams mp = init_model(ModelConfig{}, 22);
  const RasterImage img = test_image();
  RasterImage env(64, 32, 3, 0.0f);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> dist(0.0f, 1.0f);
  for (int i = 0; i < 40; ++i)
    env.at(static_cast<int>(dist(rng) * 63), static_cast<int>(dist(rng) * 31), i % 3) = dist(rng);
  RasterImage env2 = env;
  for (float& v : env2.data) v *= 2.0f;
  const RasterImage a = relight_env(mp, img, kSrc, env_to_lights(env), 0, false);
  const RasterImage b = relight_env(mp, img, kSrc, env_to_lights(env2), 0, false);
  for (size_t i = 0; i < a.data.size(); ++i) EXPECT_NEAR(b.data[i], 2.0f * a.data[i], 1e-5f);
}

TEST(RelightEnv, PermutationInvariantWithinTolerance) {
  const ModelParams mp = init_model(ModelConfig{}, 23);
  const RasterImage img = test_image();
  RasterImage env(64, 32, 3, 0.0f);
  for (int i = 0; i < 12; ++i) env.at(i * 5 + 1, (i * 2) % 32, i % 3) = 0.5f + 0.04f * i;
  auto lights = env_to_lights(env);
  const RasterImage a = relight_env(mp, img, kSrc, lights);
  std::mt19937_64 rng(6);
  std::shuffle(lights.begin(), lights.end(), rng);
  const RasterImage b = relight_env(mp, img, kSrc, lights);
  for (size_t i = 0; i < a.data.size(); ++i) EXPECT_NEAR(a.data[i], b.data[i], 1e-6f);
}

TEST(RelightEnv, TopKKeepsStrongestLights) {
  const ModelParams mp = init_model(ModelConfig{}, 24);
  const RasterImage img = test_image();
  RasterImage env(64, 32, 3, 0.0f);
  env.at(5, 10, 0) = env.at(5, 10, 1) = env.at(5, 10, 2) = 10.0f;   // dominant
  env.at(40, 20, 0) = env.at(40, 20, 1) = env.at(40, 20, 2) = 0.01f;  // negligible
  const auto lights = env_to_lights(env);
  const RasterImage full = relight_env(mp, img, kSrc, lights, 0, false);
  const RasterImage topk = relight_env(mp, img, kSrc, lights, 1, false);
  double max_gap = 0;
  for (size_t i = 0; i < full.data.size(); ++i)
    max_gap = std::max(max_gap, std::abs(static_cast<double>(full.data[i]) - topk.data[i]));
  EXPECT_LT(max_gap, 0.05);
  EXPECT_GT(max_gap, 0.0);  // the weak light was actually dropped
}

TEST(RelightEnv, EmptyLightListIsAnError) {
  const ModelParams mp = init_model(ModelConfig{}, 25);
  EXPECT_THROW(relight_env(mp, test_image(), kSrc, {}), DataError);
}

TEST(RelightEnvDiffuse, MatchesPerLightDiffuseSum) {
  // additive mixing of per-light diffuse renders equals one render under the
  // summed light bank
  const IntrinsicSet f = render_olat(build_scene(14, 32, 32), standard_rig(32).lights[0]);
  RasterImage env(64, 32, 3, 0.0f);
  for (int i = 0; i < 16; ++i) env.at(i * 4, 8 + (i % 8), i % 3) = 0.3f + 0.02f * i;
  const auto lights = env_to_lights(env);

  RasterImage mixed(32, 32, 3, 0.0f);
  for (const WeightedLight& wl : lights) {
    const RasterImage one = relight_diffuse(f.albedo, f.normals, wl.light);
    for (size_t i = 0; i < mixed.pixel_count(); ++i)
      for (int c = 0; c < 3; ++c)
        mixed.data[i * 3 + c] += static_cast<float>(wl.weight[c]) * one.data[i * 3 + c];
  }
  const RasterImage direct = relight_env_diffuse(f.albedo, f.normals, lights);
  for (size_t i = 0; i < mixed.data.size(); ++i)
    EXPECT_NEAR(mixed.data[i], direct.data[i], 1e-5f);
}

TEST(ColorMatch, IdentityWhenAlreadyAtTarget) {
  RasterImage img(80, 100, 3, 0.3f);
  const RasterImage out = color_match_linear(img, {0.3, 0.3, 0.3});
  for (size_t i = 0; i < img.data.size(); ++i) EXPECT_NEAR(out.data[i], img.data[i], 1e-6f);
}

TEST(ColorMatch, ScalesUniformGrayToTarget) {
  RasterImage img(60, 80, 3, 0.2f);
  const RasterImage out = color_match_linear(img, {0.4, 0.4, 0.4});
  for (float v : out.data) EXPECT_NEAR(v, 0.4f, 1e-6f);
}

TEST(ColorMatch, DiagonalAndHomogeneous) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<float> dist(0.1f, 0.9f);
  RasterImage img(60, 80, 3);
  for (float& v : img.data) v = dist(rng);
  const Vec3 target{0.5, 0.4, 0.3};
  const RasterImage out1 = color_match_linear(img, target);
  RasterImage doubled = img;
  for (float& v : doubled.data) v *= 2.0f;
  const RasterImage out2 = color_match_linear(doubled, target);
  // f(2x) = f(x): the gain renormalizes the patch mean
  for (size_t i = 0; i < out1.data.size(); ++i) EXPECT_NEAR(out2.data[i], out1.data[i], 1e-5f);
}

TEST(ColorMatch, ZeroMeanChannelIsAnError) {
  RasterImage img(60, 80, 3, 0.0f);
  EXPECT_THROW(color_match_linear(img, {0.4, 0.4, 0.4}), DataError);
}
