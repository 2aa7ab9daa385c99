// Copyright (c) 2026 the relight authors.
// The relight source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>

#include "relight/dataset.hpp"
#include "relight/metrics.hpp"
#include "relight/train.hpp"

using namespace relight;
namespace fs = std::filesystem;

namespace {

std::string small_dataset(const std::string& name, int scenes, int lights, int size,
                          uint64_t seed) {
  fs::path dir = fs::temp_directory_path() / "relight_train_tests" / name;
  if (!fs::exists(dir / "manifest.json")) {
    fs::create_directories(dir);
    generate_dataset(scenes, seed, standard_rig(lights), dir.string(), size, size);
  }
  return (dir / "manifest.json").string();
}

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.pairs_per_scene = 4;
  cfg.crop_w = cfg.crop_h = 48;
  cfg.seed = 3;
  cfg.learning_rate = 1e-3;
  cfg.model.base_channels = 8;
  return cfg;
}

}  // namespace

TEST(TrainConfig, JsonRoundTripAndValidation) {
  nlohmann::json j = {{"loss", "l2"},
                      {"loss_weights", {{"image", 1.0}, {"albedo", 0.5}}},
                      {"learning_rate", 1e-3},
                      {"epochs", 5},
                      {"batch_size", 2},
                      {"seed", 9},
                      {"known_source_illumination", false},
                      {"crop", {32, 32}},
                      {"augment", {{"flips", false}}}};
  const TrainConfig cfg = train_config_from_json(j);
  EXPECT_EQ(cfg.loss_for("image"), Metric::L2);
  EXPECT_EQ(cfg.weight_for("albedo"), 0.5);
  EXPECT_EQ(cfg.weight_for("residual"), 1.0);  // default
  EXPECT_FALSE(cfg.model.known_source_illumination);
  EXPECT_FALSE(cfg.augment_flips);
  EXPECT_TRUE(cfg.augment_scale);

  nlohmann::json bad = {{"loss_weights", {{"image", 0.0}}}};
  EXPECT_THROW(train_config_from_json(bad), DataError);
  nlohmann::json neg = {{"loss_weights", {{"albedo", -1.0}}}};
  EXPECT_THROW(train_config_from_json(neg), DataError);
  nlohmann::json unknown = {{"loss_weights", {{"speculars", 1.0}}}};
  EXPECT_THROW(train_config_from_json(unknown), DataError);
}

TEST(Train, SmokeRunLossDecreases) {
  const Manifest m = load_manifest(small_dataset("smoke", 4, 8, 48, 500));
  TrainConfig cfg = tiny_config();
  cfg.epochs = 2;
  const TrainedModel tm = train(cfg, m);
  ASSERT_EQ(tm.history.size(), 2u);
  EXPECT_LT(tm.history.back().train_loss, tm.history.front().train_loss);
  for (const auto& [name, t] : tm.params.weights)
    for (float v : t.v) ASSERT_TRUE(std::isfinite(v)) << name;

  // the unclamped residual head swings both ways once trained on specular
  // scenes
  const LoadedDataset ds = load_dataset(m);
  const IntrinsicSet& f = ds.scenes[0].frames[0];
  const RelightResult r = relight_full(tm.params, f.image, f.light,
                                       ds.scenes[0].frames[5].light, /*clamp=*/false);
  bool pos = false, neg = false;
  for (float v : r.residual.data) {
    pos |= v > 0.0f;
    neg |= v < 0.0f;
  }
  EXPECT_TRUE(pos);
  EXPECT_TRUE(neg);
}

TEST(Train, SeededRunsAreIdentical) {
  const Manifest m = load_manifest(small_dataset("det", 2, 6, 48, 600));
  TrainConfig cfg = tiny_config();
  cfg.epochs = 1;
  cfg.pairs_per_scene = 3;
  const TrainedModel a = train(cfg, m);
  const TrainedModel b = train(cfg, m);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (size_t i = 0; i < a.history.size(); ++i)
    EXPECT_DOUBLE_EQ(a.history[i].train_loss, b.history[i].train_loss);
  for (const auto& [name, t] : a.params.weights)
    EXPECT_EQ(t.v, b.params.weights.at(name).v) << name;
}

TEST(Train, ValidationHistoryIsRecorded) {
  const Manifest m = load_manifest(small_dataset("val_train", 2, 6, 48, 700));
  const Manifest v = load_manifest(small_dataset("val_val", 1, 6, 48, 800));
  TrainConfig cfg = tiny_config();
  cfg.epochs = 1;
  cfg.pairs_per_scene = 2;
  const TrainedModel tm = train(cfg, m, &v);
  ASSERT_EQ(tm.history.size(), 1u);
  EXPECT_TRUE(std::isfinite(tm.history[0].val_loss));
}

TEST(Train, ImageOnlyLossStillReachesStage1) {
  // gradient path exists through the formation layers and the stage-2
  // conditioning even when only the final-image loss is active
  const Manifest m = load_manifest(small_dataset("gradflow", 1, 6, 48, 900));
  const LoadedDataset ds = load_dataset(m);
  TrainConfig cfg = tiny_config();
  for (const auto& t : loss_target_names()) cfg.weights[t] = 0.0;
  cfg.weights["image"] = 1.0;
  cfg.validate();

  std::mt19937_64 rng(4);
  const PairSample ps =
      train_detail::make_sample(ds.scenes[0].frames[0], ds.scenes[0].frames[3], cfg, rng);
  const train_detail::BatchTensors batch = train_detail::make_batch({ps});

  const ModelParams mp = init_model(cfg.model, 1);
  Graph<float> g;
  const GraphParams<float> gp = bind_params(g, mp.weights, true);
  const int img = g.constant(batch.src_image);
  const GeneratorNodes<float> gen =
      generator_forward(g, gp, cfg.model, img, batch.l_src, batch.l_dst);
  const train_detail::LossNodes losses = train_detail::build_losses(g, gen, batch, cfg);
  EXPECT_EQ(losses.per_target.size(), 1u);
  g.backward(losses.total);

  double stage1_grad_norm = 0;
  for (const auto& [name, node] : gp.ids) {
    if (name.rfind("s1.", 0) != 0) continue;
    if (g.grad(node).size() == 0) continue;
    for (float v : g.grad(node).v) stage1_grad_norm += static_cast<double>(v) * v;
  }
  EXPECT_GT(stage1_grad_norm, 0.0);
}

TEST(Train, DivergenceAbortsWithNumericalError) {
  const Manifest m = load_manifest(small_dataset("nan", 1, 6, 48, 1000));
  TrainConfig cfg = tiny_config();
  cfg.epochs = 3;
  cfg.learning_rate = 1e15;  // guaranteed blow-up
  for (const auto& t : loss_target_names()) cfg.losses[t] = Metric::L2;
  EXPECT_THROW(train(cfg, m), NumericalError);
}

TEST(Train, FlipEquivarianceHoldsForLinearStub) {
  // a pointwise-linear "generator" commutes with flips, so the data
  // pipeline's flip adaptation must leave the loss unchanged
  const Manifest m = load_manifest(small_dataset("equiv", 1, 6, 48, 1100));
  const LoadedDataset ds = load_dataset(m);
  const IntrinsicSet& src = ds.scenes[0].frames[1];
  const IntrinsicSet& dst = ds.scenes[0].frames[4];

  auto stub = [](const RasterImage& img) {
    RasterImage out = img;
    for (size_t i = 0; i < out.data.size(); ++i)
      out.data[i] = 0.7f * out.data[i] + 0.1f;  // pointwise linear
    return out;
  };

  const double base = dssim(stub(src.image), dst.image);
  for (FlipAxis axis : {FlipAxis::Horizontal, FlipAxis::Vertical}) {
    const IntrinsicSet fsrc = flip_sample(src, axis);
    const IntrinsicSet fdst = flip_sample(dst, axis);
    // window sums accumulate in mirrored order, so agreement is to float
    // rounding, not bitwise
    const double flipped = dssim(stub(fsrc.image), fdst.image);
    EXPECT_NEAR(flipped, base, 2e-6) << "axis " << int(axis);
    // the adapted lights still describe the flipped geometry exactly
    const RasterImage s = shading(fsrc.normals, fsrc.light);
    double gap = 0;
    for (size_t i = 0; i < s.data.size(); ++i)
      gap = std::max(gap, std::abs(static_cast<double>(s.data[i]) - fsrc.shading.data[i]));
    EXPECT_LT(gap, 1e-6);
  }
}

TEST(Adam, StepMovesAgainstGradient) {
  ParamMap<float> weights;
  weights["w"] = Tensor<float>(1, 1, 1, 1, 1.0f);
  std::map<std::string, Tensor<float>> grads;
  grads["w"] = Tensor<float>(1, 1, 1, 1, 0.5f);
  AdamState state;
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  adam_step(weights, grads, state, cfg);
  EXPECT_LT(weights["w"].v[0], 1.0f);
  EXPECT_NEAR(weights["w"].v[0], 0.9f, 1e-5f);  // first step is ~lr * sign(g)
}
