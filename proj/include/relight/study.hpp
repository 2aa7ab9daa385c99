// Copyright (c) 2026 the relight authors.
// The relight source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#ifndef RELIGHT_STUDY_HPP
#define RELIGHT_STUDY_HPP

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include <json.hpp>

#include "relight/dataset.hpp"
#include "relight/metrics.hpp"
#include "relight/model.hpp"
#include "relight/train.hpp"

namespace relight {

// Loss-selection study: the same model trained under each candidate loss,
// scored under every metric on held-out relighting pairs.

struct StudyOptions {
  std::string out_dir;
  int scenes = 6;
  int val_scenes = 2;
  int epochs = 12;
  int size = 64;
  int lights = 16;
  int pairs = 8;
  uint64_t seed = 1;
  double learning_rate = 1e-3;
};

struct StudyResult {
  // grid[train_loss][eval_metric] = mean score on held-out pairs
  std::map<std::string, std::map<std::string, double>> grid;
  std::string table;
};

// Mean metric over deterministic held-out relighting pairs.
inline double evaluate_model_metric(const ModelParams& mp, const LoadedDataset& val,
                                    Metric metric, int pairs_per_scene, uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0xb5026f5aa96619e9ULL);
  double total = 0.0;
  int count = 0;
  for (const LoadedScene& scene : val.scenes) {
    std::uniform_int_distribution<size_t> pick(0, scene.frames.size() - 1);
    for (int k = 0; k < pairs_per_scene; ++k) {
      const IntrinsicSet& src = scene.frames[pick(rng)];
      const IntrinsicSet& dst = scene.frames[pick(rng)];
      const RasterImage pred = relight_image(
          mp, src.image,
          mp.config.known_source_illumination ? std::optional<DirectionalLight>(src.light)
                                              : std::nullopt,
          dst.light);
      total += metric_value(metric, pred, dst.image);
      ++count;
    }
  }
  return total / std::max(1, count);
}

inline StudyResult run_study(const StudyOptions& opt, std::ostream* log = nullptr) {
  namespace fs = std::filesystem;
  fs::create_directories(opt.out_dir);
  const LightSet rig = standard_rig(opt.lights);

  const std::string train_manifest_path = generate_dataset(
      opt.scenes, opt.seed, rig, (fs::path(opt.out_dir) / "train").string(), opt.size, opt.size);
  const std::string val_manifest_path =
      generate_dataset(opt.val_scenes, opt.seed + 1000, rig,
                       (fs::path(opt.out_dir) / "val").string(), opt.size, opt.size);
  const Manifest train_manifest = load_manifest(train_manifest_path);
  const LoadedDataset val = load_dataset(load_manifest(val_manifest_path));

  const std::vector<Metric> metrics = {Metric::L1, Metric::L2, Metric::DSSIM, Metric::MSDSSIM};
  StudyResult result;
  std::ostringstream table;
  table << "train\\eval";
  for (Metric m : metrics) table << "\t" << metric_name(m);
  table << "\n";

  for (Metric train_loss : metrics) {
    TrainConfig cfg;
    for (const auto& t : loss_target_names()) cfg.losses[t] = train_loss;
    cfg.epochs = opt.epochs;
    cfg.seed = opt.seed;
    cfg.learning_rate = opt.learning_rate;
    cfg.pairs_per_scene = opt.pairs;
    cfg.crop_w = cfg.crop_h = opt.size;
    if (log) (*log) << "study: training with " << metric_name(train_loss) << " loss\n";
    const TrainedModel tm = train(cfg, train_manifest, nullptr, log);
    save_model(tm.params, (fs::path(opt.out_dir) /
                           (std::string("model_") + metric_name(train_loss) + ".rlm"))
                              .string());
    table << metric_name(train_loss);
    for (Metric eval : metrics) {
      const double score = evaluate_model_metric(tm.params, val, eval, opt.pairs, opt.seed);
      result.grid[metric_name(train_loss)][metric_name(eval)] = score;
      table << "\t" << std::fixed << std::setprecision(6) << score;
    }
    table << "\n";
  }
  result.table = table.str();

  std::ofstream((fs::path(opt.out_dir) / "grid.txt").string()) << result.table;
  nlohmann::json j;
  for (const auto& [row, cols] : result.grid)
    for (const auto& [col, v] : cols) j[row][col] = v;
  std::ofstream((fs::path(opt.out_dir) / "grid.json").string()) << j.dump(2) << "\n";
  return result;
}

}  // namespace relight

#endif  // RELIGHT_STUDY_HPP
