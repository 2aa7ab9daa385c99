// Copyright (c) 2026 the relight authors.
// The relight source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#ifndef RELIGHT_TRAIN_HPP
#define RELIGHT_TRAIN_HPP

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "relight/augment.hpp"
#include "relight/autodiff.hpp"
#include "relight/dataset.hpp"
#include "relight/metrics.hpp"
#include "relight/model.hpp"
#include "relight/synth.hpp"

namespace relight {

inline const std::vector<std::string>& loss_target_names() {
  static const std::vector<std::string> names = {"albedo",   "normals",    "shading", "diffuse",
                                                 "residual", "visibility", "image"};
  return names;
}

struct TrainConfig {
  ModelConfig model;
  std::map<std::string, Metric> losses;     // per-target; normals always uses raw L2
  std::map<std::string, double> weights;    // per-target, >= 0
  double learning_rate = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int epochs = 10;
  int batch_size = 4;
  uint64_t seed = 0;
  int pairs_per_scene = 8;  // relighting pairs drawn per scene per epoch
  int crop_w = 128, crop_h = 128;
  bool augment_flips = true;
  bool augment_scale = true;
  bool augment_jitter = true;
  bool deterministic = false;

  Metric loss_for(const std::string& target) const {
    auto it = losses.find(target);
    return it == losses.end() ? Metric::DSSIM : it->second;
  }
  double weight_for(const std::string& target) const {
    auto it = weights.find(target);
    return it == weights.end() ? 1.0 : it->second;
  }

  void validate() const {
    for (const auto& [k, w] : weights) {
      if (w < 0.0) throw DataError("train config: negative weight for '" + k + "'");
      bool known = false;
      for (const auto& n : loss_target_names()) known |= (n == k);
      if (!known) throw DataError("train config: unknown loss target '" + k + "'");
    }
    if (weight_for("image") <= 0.0)
      throw DataError("train config: the final-image loss must stay active");
    if (epochs < 1 || batch_size < 1 || pairs_per_scene < 1)
      throw DataError("train config: epochs, batch_size and pairs_per_scene must be positive");
    if (learning_rate <= 0.0) throw DataError("train config: non-positive learning rate");
  }
};

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.model.depth = j.value("depth", 3);
  c.model.base_channels = j.value("base_channels", 16);
  c.model.grouped_trunk = j.value("grouped_trunk", false);
  c.model.known_source_illumination = j.value("known_source_illumination", true);
  if (j.contains("loss")) {
    const Metric m = metric_from_string(j["loss"].get<std::string>());
    for (const auto& t : loss_target_names()) c.losses[t] = m;
  }
  if (j.contains("losses"))
    for (const auto& [k, v] : j["losses"].items())
      c.losses[k] = metric_from_string(v.get<std::string>());
  if (j.contains("loss_weights"))
    for (const auto& [k, v] : j["loss_weights"].items()) c.weights[k] = v.get<double>();
  c.learning_rate = j.value("learning_rate", 2e-4);
  c.beta1 = j.value("beta1", 0.9);
  c.beta2 = j.value("beta2", 0.999);
  c.epsilon = j.value("epsilon", 1e-8);
  c.epochs = j.value("epochs", 10);
  c.batch_size = j.value("batch_size", 4);
  c.seed = j.value("seed", 0ULL);
  c.pairs_per_scene = j.value("pairs_per_scene", 8);
  if (j.contains("crop")) {
    c.crop_w = j["crop"].at(0).get<int>();
    c.crop_h = j["crop"].at(1).get<int>();
  }
  if (j.contains("augment")) {
    const auto& a = j["augment"];
    c.augment_flips = a.value("flips", true);
    c.augment_scale = a.value("scale", true);
    c.augment_jitter = a.value("jitter", true);
  }
  c.deterministic = j.value("deterministic", false);
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// In-memory dataset
// ---------------------------------------------------------------------------

struct LoadedScene {
  uint64_t seed = 0;
  std::vector<IntrinsicSet> frames;
};

struct LoadedDataset {
  LightSet lights;
  std::vector<LoadedScene> scenes;
};

inline LoadedDataset load_dataset(const Manifest& m) {
  LoadedDataset ds;
  ds.lights = load_manifest_lights(m);
  std::map<std::string, RasterImage> cache;  // scene-level layers repeat per frame
  auto cached = [&](const std::string& rel) -> const RasterImage& {
    auto it = cache.find(rel);
    if (it == cache.end()) it = cache.emplace(rel, load_pfm(m.resolve(rel).string())).first;
    return it->second;
  };
  for (const SceneEntry& scene : m.scenes) {
    LoadedScene ls;
    ls.seed = scene.scene_seed;
    for (const FrameEntry& f : scene.frames) {
      IntrinsicSet s;
      s.image = cached(f.files.at("image"));
      s.albedo = cached(f.files.at("albedo"));
      s.normals = cached(f.files.at("normals"));
      s.shading = cached(f.files.at("shading"));
      s.visibility = cached(f.files.at("visibility"));
      s.residual = cached(f.files.at("residual"));
      bool found = false;
      for (size_t i = 0; i < ds.lights.size(); ++i)
        if (ds.lights.ids[i] == f.light_id) {
          s.light = ds.lights.lights[i];
          found = true;
        }
      if (!found)
        throw DataError("load_dataset: frame references unknown light id " +
                        std::to_string(f.light_id));
      ls.frames.push_back(std::move(s));
    }
    if (ls.frames.empty()) throw DataError("load_dataset: scene without frames");
    ds.scenes.push_back(std::move(ls));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Relighting pairs and batches
// ---------------------------------------------------------------------------

struct PairSample {
  RasterImage src_image;
  DirectionalLight l_src, l_dst;
  IntrinsicSet target;  // augmented destination frame
};

namespace train_detail {

// One source/target pair with consistent augmentation across both frames.
inline PairSample make_sample(const IntrinsicSet& src_frame, const IntrinsicSet& dst_frame,
                              const TrainConfig& cfg, std::mt19937_64& rng) {
  IntrinsicSet src = src_frame;
  IntrinsicSet dst = dst_frame;
  if (cfg.augment_flips) {
    std::uniform_int_distribution<int> coin(0, 1);
    if (coin(rng)) {
      src = flip_sample(src, FlipAxis::Horizontal);
      dst = flip_sample(dst, FlipAxis::Horizontal);
    }
    if (coin(rng)) {
      src = flip_sample(src, FlipAxis::Vertical);
      dst = flip_sample(dst, FlipAxis::Vertical);
    }
  }
  if (cfg.augment_scale) {
    std::uniform_real_distribution<double> s(kScaleLo, kScaleHi);
    const double factor = s(rng);
    src = scale_sample(src, factor);
    dst = scale_sample(dst, factor);
  }
  if (cfg.crop_w < src.image.width || cfg.crop_h < src.image.height) {
    std::uniform_int_distribution<int> dx(0, src.image.width - cfg.crop_w);
    std::uniform_int_distribution<int> dy(0, src.image.height - cfg.crop_h);
    const int x0 = dx(rng), y0 = dy(rng);
    src = crop_sample(src, x0, y0, cfg.crop_w, cfg.crop_h);
    dst = crop_sample(dst, x0, y0, cfg.crop_w, cfg.crop_h);
  }
  PairSample ps;
  ps.l_src = cfg.augment_jitter ? jitter_light(src.light, rng) : src.light;
  ps.l_dst = cfg.augment_jitter ? jitter_light(dst.light, rng) : dst.light;
  ps.src_image = std::move(src.image);
  ps.target = std::move(dst);
  return ps;
}

template <class T>
Tensor<T> stack_rasters(const std::vector<const RasterImage*>& imgs) {
  const RasterImage& first = *imgs.front();
  Tensor<T> t(static_cast<int>(imgs.size()), first.channels, first.height, first.width);
  for (size_t in = 0; in < imgs.size(); ++in) {
    require_same_shape(*imgs[in], first, "stack_rasters");
    const Tensor<T> one = tensor_from_raster<T>(*imgs[in]);
    std::copy(one.v.begin(), one.v.end(), t.v.begin() + in * one.size());
  }
  return t;
}

struct BatchTensors {
  Tensor<float> src_image;
  Tensor<float> albedo, normals, shading, diffuse, residual, visibility, image;
  std::vector<DirectionalLight> l_src, l_dst;
};

inline BatchTensors make_batch(const std::vector<PairSample>& samples) {
  BatchTensors b;
  auto gather = [&](auto pick) {
    std::vector<const RasterImage*> v;
    v.reserve(samples.size());
    for (const PairSample& s : samples) v.push_back(pick(s));
    return stack_rasters<float>(v);
  };
  b.src_image = gather([](const PairSample& s) { return &s.src_image; });
  b.albedo = gather([](const PairSample& s) { return &s.target.albedo; });
  b.normals = gather([](const PairSample& s) { return &s.target.normals; });
  b.shading = gather([](const PairSample& s) { return &s.target.shading; });
  b.residual = gather([](const PairSample& s) { return &s.target.residual; });
  b.visibility = gather([](const PairSample& s) { return &s.target.visibility; });
  b.image = gather([](const PairSample& s) { return &s.target.image; });
  // diffuse target: A * S of the (augmented) ground truth
  b.diffuse = b.albedo;
  for (size_t i = 0; i < b.diffuse.size(); ++i) b.diffuse.v[i] *= b.shading.v[i];
  for (const PairSample& s : samples) {
    b.l_src.push_back(s.l_src);
    b.l_dst.push_back(s.l_dst);
  }
  return b;
}

struct LossNodes {
  int total = -1;
  std::map<std::string, int> per_target;
};

template <class T>
LossNodes build_losses(Graph<T>& g, const GeneratorNodes<T>& gen, const BatchTensors& batch,
                       const TrainConfig& cfg) {
  LossNodes out;
  std::vector<std::pair<int, T>> terms;
  auto add_term = [&](const std::string& name, int node) {
    out.per_target[name] = node;
    terms.push_back({node, static_cast<T>(cfg.weight_for(name))});
  };
  auto active = [&](const std::string& name) { return cfg.weight_for(name) > 0.0; };
  auto cast_target = [](const Tensor<float>& t) {
    if constexpr (std::is_same_v<T, float>)
      return t;
    else
      return t.template cast<T>();
  };

  if (active("albedo"))
    add_term("albedo", g.metric_loss(cfg.loss_for("albedo"), gen.albedo, cast_target(batch.albedo)));
  if (active("normals"))  // image metrics are ill-defined on signed vector fields
    add_term("normals", g.mse_loss(gen.normals, cast_target(batch.normals)));
  if (active("shading"))
    add_term("shading",
             g.metric_loss(cfg.loss_for("shading"), gen.shading, cast_target(batch.shading)));
  if (active("diffuse"))
    add_term("diffuse",
             g.metric_loss(cfg.loss_for("diffuse"), gen.diffuse, cast_target(batch.diffuse)));
  if (active("residual")) {
    const Metric m = cfg.loss_for("residual");
    if (m == Metric::L1) {
      add_term("residual", g.mae_loss(gen.residual, cast_target(batch.residual)));
    } else if (m == Metric::L2) {
      add_term("residual", g.mse_loss(gen.residual, cast_target(batch.residual)));
    } else {
      // sign-free residual shifted into the metric's [0,1] range
      Tensor<float> shifted = batch.residual;
      for (float& v : shifted.v) v += 0.5f;
      add_term("residual",
               g.metric_loss(m, g.add_scalar(gen.residual, T(0.5)), cast_target(shifted)));
    }
  }
  if (active("visibility"))
    add_term("visibility", g.metric_loss(cfg.loss_for("visibility"), gen.visibility,
                                         cast_target(batch.visibility)));
  add_term("image", g.metric_loss(cfg.loss_for("image"), gen.output, cast_target(batch.image)));

  out.total = g.weighted_sum(terms);
  return out;
}

}  // namespace train_detail

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamState {
  ParamMap<float> m, v;
  int64_t t = 0;
};

inline void adam_step(ParamMap<float>& weights, const std::map<std::string, Tensor<float>>& grads,
                      AdamState& state, const TrainConfig& cfg) {
  if (state.t == 0) {
    for (const auto& [name, w] : weights) {
      state.m[name] = Tensor<float>(w.n, w.c, w.h, w.w, 0.0f);
      state.v[name] = Tensor<float>(w.n, w.c, w.h, w.w, 0.0f);
    }
  }
  ++state.t;
  const double b1t = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double b2t = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (auto& [name, w] : weights) {
    auto git = grads.find(name);
    if (git == grads.end()) continue;
    const Tensor<float>& grad = git->second;
    Tensor<float>& m = state.m[name];
    Tensor<float>& v = state.v[name];
    for (size_t i = 0; i < w.size(); ++i) {
      const double gi = grad.v[i];
      m.v[i] = static_cast<float>(cfg.beta1 * m.v[i] + (1.0 - cfg.beta1) * gi);
      v.v[i] = static_cast<float>(cfg.beta2 * v.v[i] + (1.0 - cfg.beta2) * gi * gi);
      const double mhat = m.v[i] / b1t;
      const double vhat = v.v[i] / b2t;
      w.v[i] -= static_cast<float>(cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon));
    }
  }
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct EpochStats {
  double train_loss = 0.0;
  double val_loss = std::numeric_limits<double>::quiet_NaN();
};

struct TrainedModel {
  ModelParams params;
  std::vector<EpochStats> history;
};

namespace train_detail {

inline void check_finite(const ParamMap<float>& weights, int step) {
  for (const auto& [name, w] : weights)
    for (float v : w.v)
      if (!std::isfinite(v))
        throw NumericalError("training diverged: non-finite value in '" + name +
                             "' after step " + std::to_string(step));
}

inline double run_validation(const ModelParams& mp, const LoadedDataset& val,
                             const TrainConfig& cfg) {
  // fixed pair list and center crops: comparable across epochs
  std::mt19937_64 rng(cfg.seed ^ 0x76e15d3efefdcbbfULL);
  TrainConfig plain = cfg;
  plain.augment_flips = plain.augment_scale = plain.augment_jitter = false;
  double total = 0.0;
  int count = 0;
  for (const LoadedScene& scene : val.scenes) {
    std::uniform_int_distribution<size_t> pick(0, scene.frames.size() - 1);
    for (int k = 0; k < cfg.pairs_per_scene; ++k) {
      const IntrinsicSet& src = scene.frames[pick(rng)];
      const IntrinsicSet& dst = scene.frames[pick(rng)];
      PairSample ps = make_sample(src, dst, plain, rng);
      const BatchTensors batch = make_batch({ps});
      Graph<float> g;
      const GraphParams<float> gp = bind_params(g, mp.weights, false);
      const int img = g.constant(batch.src_image);
      const GeneratorNodes<float> gen = generator_forward(
          g, gp, mp.config, img,
          mp.config.known_source_illumination ? batch.l_src : std::vector<DirectionalLight>{},
          batch.l_dst);
      const LossNodes losses = build_losses(g, gen, batch, plain);
      total += g.value(losses.total).v[0];
      ++count;
    }
  }
  return count ? total / count : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace train_detail

// End-to-end training on relighting pairs with losses on every intrinsic
// prediction. Deterministic for a fixed seed; `resume_from` continues from
// existing weights instead of a fresh initialization.
inline TrainedModel train(const TrainConfig& cfg, const Manifest& manifest,
                          const Manifest* val_manifest = nullptr, std::ostream* log = nullptr,
                          const ModelParams* resume_from = nullptr) {
  cfg.validate();
  if (cfg.deterministic) set_thread_count(1);

  const LoadedDataset ds = load_dataset(manifest);
  std::optional<LoadedDataset> val;
  if (val_manifest) val = load_dataset(*val_manifest);

  for (const LoadedScene& s : ds.scenes)
    for (const IntrinsicSet& f : s.frames)
      if (f.image.width < cfg.crop_w || f.image.height < cfg.crop_h)
        throw DataError("train: frames smaller than the crop window");

  TrainedModel tm;
  tm.params = resume_from ? *resume_from : init_model(cfg.model, cfg.seed);
  AdamState adam;
  std::mt19937_64 rng(cfg.seed * 0x9e3779b97f4a7c15ULL + 1);

  int step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // fresh pair list each epoch
    std::vector<std::pair<size_t, std::pair<size_t, size_t>>> pair_ids;
    for (size_t si = 0; si < ds.scenes.size(); ++si) {
      std::uniform_int_distribution<size_t> pick(0, ds.scenes[si].frames.size() - 1);
      for (int k = 0; k < cfg.pairs_per_scene; ++k)
        pair_ids.push_back({si, {pick(rng), pick(rng)}});
    }
    std::shuffle(pair_ids.begin(), pair_ids.end(), rng);

    double epoch_loss = 0.0;
    int epoch_batches = 0;
    for (size_t start = 0; start < pair_ids.size(); start += cfg.batch_size) {
      const size_t end = std::min(pair_ids.size(), start + cfg.batch_size);
      std::vector<PairSample> samples;
      samples.reserve(end - start);
      for (size_t i = start; i < end; ++i) {
        const auto& [si, fp] = pair_ids[i];
        samples.push_back(train_detail::make_sample(ds.scenes[si].frames[fp.first],
                                                    ds.scenes[si].frames[fp.second], cfg, rng));
      }
      const train_detail::BatchTensors batch = train_detail::make_batch(samples);

      Graph<float> g;
      const GraphParams<float> gp = bind_params(g, tm.params.weights, true);
      const int img = g.constant(batch.src_image);
      const GeneratorNodes<float> gen = generator_forward(
          g, gp, cfg.model, img,
          cfg.model.known_source_illumination ? batch.l_src : std::vector<DirectionalLight>{},
          batch.l_dst);
      const train_detail::LossNodes losses = train_detail::build_losses(g, gen, batch, cfg);

      const double loss = g.value(losses.total).v[0];
      if (!std::isfinite(loss))
        throw NumericalError("training diverged: non-finite loss at step " +
                             std::to_string(step));
      g.backward(losses.total);

      std::map<std::string, Tensor<float>> grads;
      for (const auto& [name, node] : gp.ids)
        if (g.grad(node).size() > 0) grads[name] = g.grad(node);
      adam_step(tm.params.weights, grads, adam, cfg);
      train_detail::check_finite(tm.params.weights, step);

      epoch_loss += loss;
      ++epoch_batches;
      ++step;
    }

    EpochStats stats;
    stats.train_loss = epoch_loss / std::max(1, epoch_batches);
    if (val) stats.val_loss = train_detail::run_validation(tm.params, *val, cfg);
    tm.history.push_back(stats);
    if (log) {
      (*log) << "epoch " << (epoch + 1) << "/" << cfg.epochs << " train " << stats.train_loss;
      if (val) (*log) << " val " << stats.val_loss;
      (*log) << "\n";
      log->flush();
    }
  }
  return tm;
}

}  // namespace relight

#endif  // RELIGHT_TRAIN_HPP
