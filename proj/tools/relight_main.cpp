// Copyright (c) 2026 the relight authors.
// The relight source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

// Single executable for the whole pipeline: dataset synthesis, photometric
// stereo, training, relighting, environment-map relighting, evaluation,
// calibration, offline augmentation, the gradient audit, and the
// loss-vs-metric study grid.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "relight/augment.hpp"
#include "relight/dataset.hpp"
#include "relight/envmap.hpp"
#include "relight/gradcheck.hpp"
#include "relight/metrics.hpp"
#include "relight/model.hpp"
#include "relight/pfm.hpp"
#include "relight/png.hpp"
#include "relight/pms.hpp"
#include "relight/study.hpp"
#include "relight/train.hpp"

namespace {

using namespace relight;

DirectionalLight parse_light_arg(const std::string& s) {
  std::istringstream ss(s);
  double dx, dy, dz, ir = 1, ig = 1, ib = 1;
  if (!(ss >> dx >> dy >> dz)) throw DataError("light argument must be 'dx dy dz [ir ig ib]'");
  ss >> ir >> ig >> ib;
  const Vec3 dir{dx, dy, dz};
  if (length(dir) == 0.0) throw DataError("light argument has zero direction");
  return {normalized(dir), {ir, ig, ib}};
}

void parse_size_arg(const std::string& s, int& w, int& h) {
  if (std::sscanf(s.c_str(), "%dx%d", &w, &h) != 2 || w < 1 || h < 1)
    throw DataError("size argument must be WxH");
}

int run(int argc, char** argv) {
  CLI::App app{"physics-guided directional-light relighting pipeline"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags remain valid after a subcommand

  int threads = 0;
  bool deterministic = false;
  uint64_t global_seed = 0;
  app.add_option("--threads", threads, "worker thread cap (default: hardware)");
  app.add_flag("--deterministic", deterministic, "single-threaded deterministic mode");
  app.add_option("--seed", global_seed, "global seed");

  // synth-gen
  auto* synth_cmd = app.add_subcommand("synth-gen", "render a synthetic OLAT dataset");
  int sg_scenes = 4, sg_light_count = 32;
  std::string sg_out, sg_size = "128x128", sg_lights_file;
  synth_cmd->add_option("--scenes", sg_scenes, "number of scenes")->required();
  synth_cmd->add_option("--out", sg_out, "output directory")->required();
  synth_cmd->add_option("--size", sg_size, "frame size WxH (default 128x128)");
  synth_cmd->add_option("--lights", sg_lights_file, "light set file (default: built-in rig)");
  synth_cmd->add_option("--light-count", sg_light_count, "built-in rig size (default 32)");

  // pms solve
  auto* pms_cmd = app.add_subcommand("pms", "photometric stereo");
  pms_cmd->require_subcommand(1);
  auto* pms_solve = pms_cmd->add_subcommand("solve", "reconstruct intrinsics from an OLAT stack");
  std::string ps_manifest, ps_out;
  double ps_tlo = 0.02, ps_thi = 0.98;
  pms_solve->add_option("--manifest", ps_manifest, "dataset manifest")->required();
  pms_solve->add_option("--out", ps_out, "output directory")->required();
  pms_solve->add_option("--tlo", ps_tlo, "shadow rejection threshold");
  pms_solve->add_option("--thi", ps_thi, "highlight rejection threshold");

  // train
  auto* train_cmd = app.add_subcommand("train", "train the two-stage generator");
  std::string tr_manifest, tr_config, tr_out, tr_val_manifest;
  train_cmd->add_option("--manifest", tr_manifest, "training manifest")->required();
  train_cmd->add_option("--config", tr_config, "training config JSON")->required();
  train_cmd->add_option("--out", tr_out, "output model file")->required();
  train_cmd->add_option("--val-manifest", tr_val_manifest, "validation manifest");

  // relight
  auto* rel_cmd = app.add_subcommand("relight", "relight one image to a target light");
  std::string rl_model, rl_input, rl_src, rl_dst, rl_out, rl_png, rl_intrinsics;
  rel_cmd->add_option("--model", rl_model)->required();
  rel_cmd->add_option("--input", rl_input, "source image PFM")->required();
  rel_cmd->add_option("--src-light", rl_src, "source light 'dx dy dz ir ig ib'");
  rel_cmd->add_option("--dst-light", rl_dst, "target light 'dx dy dz ir ig ib'")->required();
  rel_cmd->add_option("--out", rl_out, "output PFM")->required();
  rel_cmd->add_option("--png", rl_png, "also export an sRGB PNG");
  rel_cmd->add_option("--intrinsics", rl_intrinsics, "directory for intermediate predictions");

  // relight-env
  auto* env_cmd = app.add_subcommand("relight-env", "relight under an environment map");
  std::string re_model, re_input, re_src, re_env, re_out;
  int re_topk = 0;
  env_cmd->add_option("--model", re_model)->required();
  env_cmd->add_option("--input", re_input)->required();
  env_cmd->add_option("--src-light", re_src, "source light 'dx dy dz ir ig ib'");
  env_cmd->add_option("--envmap", re_env, "equirectangular PFM radiance map")->required();
  env_cmd->add_option("--topk", re_topk, "keep only the K strongest lights");
  env_cmd->add_option("--out", re_out)->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "compare two images under a metric");
  std::string ev_metric;
  std::vector<std::string> ev_files;
  eval_cmd->add_option("--metric", ev_metric, "l1|l2|dssim|msdssim")->required();
  eval_cmd->add_option("files", ev_files, "two PFM files")->expected(2);

  // calibrate
  auto* cal_cmd = app.add_subcommand("calibrate", "recover a light from a chrome sphere");
  std::string cb_sphere, cb_center;
  double cb_radius = 0, cb_reflectance = 1.0;
  cal_cmd->add_option("--sphere", cb_sphere, "sphere image PFM")->required();
  cal_cmd->add_option("--center", cb_center, "disc center 'x,y'")->required();
  cal_cmd->add_option("--radius", cb_radius, "disc radius in pixels")->required();
  cal_cmd->add_option("--reflectance", cb_reflectance, "sphere reflectance (default 1)");

  // augment
  auto* aug_cmd = app.add_subcommand("augment", "offline dataset expansion");
  std::string ag_manifest, ag_out, ag_crop;
  bool ag_flips = false;
  double ag_scale = 0.0;
  aug_cmd->add_option("--manifest", ag_manifest)->required();
  aug_cmd->add_option("--out", ag_out)->required();
  aug_cmd->add_flag("--flips", ag_flips, "4x expansion over {id, h, v, hv}");
  aug_cmd->add_option("--scale", ag_scale, "apply a fixed radiometric scale");
  aug_cmd->add_option("--crop", ag_crop, "random crop WxH (seeded)");

  // gradcheck
  auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference audit of the autodiff core");
  int gc_samples = 24;
  double gc_tol = 1e-5;
  gc_cmd->add_option("--samples", gc_samples, "samples per input tensor");
  gc_cmd->add_option("--tolerance", gc_tol, "max relative error");

  // study
  auto* study_cmd = app.add_subcommand("study", "train-loss x eval-metric grid");
  StudyOptions st;
  std::string st_size = "64x64";
  study_cmd->add_option("--out", st.out_dir)->required();
  study_cmd->add_option("--scenes", st.scenes, "training scenes");
  study_cmd->add_option("--val-scenes", st.val_scenes, "held-out scenes");
  study_cmd->add_option("--epochs", st.epochs);
  study_cmd->add_option("--size", st_size, "frame size WxH");
  study_cmd->add_option("--lights-per-scene", st.lights);
  study_cmd->add_option("--pairs", st.pairs, "pairs per scene per epoch");
  study_cmd->add_option("--learning-rate", st.learning_rate);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  }

  if (deterministic) threads = 1;
  if (threads > 0) set_thread_count(threads);

  if (synth_cmd->parsed()) {
    int w, h;
    parse_size_arg(sg_size, w, h);
    const LightSet rig =
        sg_lights_file.empty() ? standard_rig(sg_light_count) : load_lights(sg_lights_file);
    const std::string manifest = generate_dataset(sg_scenes, global_seed, rig, sg_out, w, h);
    std::cout << manifest << "\n";
    return 0;
  }

  if (pms_solve->parsed()) {
    PmsThresholds thr;
    thr.tau_lo = ps_tlo;
    thr.tau_hi = ps_thi;
    const std::string manifest = pms_reconstruct(load_manifest(ps_manifest), ps_out, thr);
    std::cout << manifest << "\n";
    return 0;
  }

  if (train_cmd->parsed()) {
    std::ifstream cf(tr_config);
    if (!cf) throw DataError("cannot open config '" + tr_config + "'");
    nlohmann::json cj;
    try {
      cf >> cj;
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(tr_config + ": invalid JSON: " + std::string(e.what()));
    }
    TrainConfig cfg = train_config_from_json(cj);
    if (deterministic) cfg.deterministic = true;
    if (global_seed) cfg.seed = global_seed;
    const Manifest manifest = load_manifest(tr_manifest);
    std::optional<Manifest> val;
    if (!tr_val_manifest.empty()) val = load_manifest(tr_val_manifest);
    const TrainedModel tm = train(cfg, manifest, val ? &*val : nullptr, &std::cerr);
    save_model(tm.params, tr_out);
    nlohmann::json hist;
    for (const EpochStats& e : tm.history) {
      nlohmann::json je = {{"train_loss", e.train_loss}};
      if (std::isfinite(e.val_loss)) je["val_loss"] = e.val_loss;
      hist.push_back(je);
    }
    std::ofstream(tr_out + ".history.json") << hist.dump(2) << "\n";
    return 0;
  }

  if (rel_cmd->parsed()) {
    const ModelParams mp = load_model(rl_model);
    const RasterImage input = load_pfm(rl_input);
    std::optional<DirectionalLight> l_src;
    if (!rl_src.empty()) l_src = parse_light_arg(rl_src);
    const DirectionalLight l_dst = parse_light_arg(rl_dst);
    const RelightResult r = relight_full(mp, input, l_src, l_dst);
    save_pfm(r.output, rl_out);
    if (!rl_png.empty()) save_png_srgb(r.output, rl_png);
    if (!rl_intrinsics.empty()) {
      std::filesystem::create_directories(rl_intrinsics);
      const auto dir = std::filesystem::path(rl_intrinsics);
      save_pfm(r.albedo, (dir / "albedo.pfm").string());
      save_pfm(r.normals, (dir / "normals.pfm").string());
      save_pfm(r.shading, (dir / "shading.pfm").string());
      save_pfm(r.diffuse, (dir / "diffuse.pfm").string());
      save_pfm(r.residual, (dir / "residual.pfm").string());
      save_pfm(r.visibility, (dir / "visibility.pfm").string());
    }
    return 0;
  }

  if (env_cmd->parsed()) {
    const ModelParams mp = load_model(re_model);
    const RasterImage input = load_pfm(re_input);
    const RasterImage env = load_pfm(re_env);
    std::optional<DirectionalLight> l_src;
    if (!re_src.empty()) l_src = parse_light_arg(re_src);
    const std::vector<WeightedLight> lights = env_to_lights(env);
    const RasterImage out = relight_env(mp, input, l_src, lights, re_topk);
    save_pfm(out, re_out);
    return 0;
  }

  if (eval_cmd->parsed()) {
    const Metric m = metric_from_string(ev_metric);
    const RasterImage a = load_pfm(ev_files[0]);
    const RasterImage b = load_pfm(ev_files[1]);
    std::printf("%.6f\n", metric_value(m, a, b));
    return 0;
  }

  if (cal_cmd->parsed()) {
    double cx, cy;
    if (std::sscanf(cb_center.c_str(), "%lf,%lf", &cx, &cy) != 2)
      throw DataError("--center must be 'x,y'");
    const RasterImage sphere = load_pfm(cb_sphere);
    const DirectionalLight l = calibrate_from_sphere(sphere, cx, cy, cb_radius, cb_reflectance);
    std::cout << format_light_line(0, l) << "\n";
    return 0;
  }

  if (aug_cmd->parsed()) {
    namespace fs = std::filesystem;
    const Manifest in = load_manifest(ag_manifest);
    const LightSet lights = load_manifest_lights(in);
    int crop_w = 0, crop_h = 0;
    if (!ag_crop.empty()) parse_size_arg(ag_crop, crop_w, crop_h);
    fs::create_directories(ag_out);
    std::mt19937_64 rng(global_seed * 0x9e3779b97f4a7c15ULL + 3);

    // expanded light set: one block of ids per flip variant
    const std::vector<std::vector<FlipAxis>> variants =
        ag_flips ? std::vector<std::vector<FlipAxis>>{{},
                                                      {FlipAxis::Horizontal},
                                                      {FlipAxis::Vertical},
                                                      {FlipAxis::Horizontal, FlipAxis::Vertical}}
                 : std::vector<std::vector<FlipAxis>>{{}};
    Manifest out;
    out.base_dir = ag_out;
    out.light_file = "lights.txt";
    LightSet expanded;
    const int block = static_cast<int>(lights.size());
    for (size_t vi = 0; vi < variants.size(); ++vi)
      for (size_t li = 0; li < lights.size(); ++li) {
        DirectionalLight l = lights.lights[li];
        for (FlipAxis ax : variants[vi]) l = mirror_light(l, ax);
        if (ag_scale > 0.0) l.intensity = l.intensity * ag_scale;
        expanded.ids.push_back(static_cast<int>(vi) * block + lights.ids[li]);
        expanded.lights.push_back(l);
      }
    save_lights(expanded, (fs::path(ag_out) / out.light_file).string());

    for (const SceneEntry& scene : in.scenes) {
      SceneEntry entry;
      entry.scene_seed = scene.scene_seed;
      char scene_dir[64];
      std::snprintf(scene_dir, sizeof(scene_dir), "scene_%05llu",
                    static_cast<unsigned long long>(scene.scene_seed));
      fs::create_directories(fs::path(ag_out) / scene_dir);
      for (const FrameEntry& fe : scene.frames) {
        IntrinsicSet base = load_frame(in, scene, fe, lights);
        for (size_t vi = 0; vi < variants.size(); ++vi) {
          IntrinsicSet s = base;
          for (FlipAxis ax : variants[vi]) s = flip_sample(s, ax);
          if (ag_scale > 0.0) s = scale_sample(s, ag_scale);
          if (crop_w > 0) s = random_crop(s, crop_w, crop_h, rng);
          FrameEntry ne;
          ne.light_id = static_cast<int>(vi) * block + fe.light_id;
          const RasterImage* layers[6] = {&s.image,      &s.albedo,   &s.normals,
                                          &s.shading,    &s.visibility, &s.residual};
          for (int k = 0; k < 6; ++k) {
            char name[96];
            std::snprintf(name, sizeof(name), "%s/l%03d_%s.pfm", scene_dir, ne.light_id,
                          frame_layer_names()[k].c_str());
            save_pfm(*layers[k], (fs::path(ag_out) / name).string());
            ne.files[frame_layer_names()[k]] = name;
          }
          entry.frames.push_back(std::move(ne));
        }
      }
      out.scenes.push_back(std::move(entry));
    }
    const std::string manifest_path = (fs::path(ag_out) / "manifest.json").string();
    save_manifest(out, manifest_path);
    std::cout << manifest_path << "\n";
    return 0;
  }

  if (gc_cmd->parsed()) {
    GradCheckReport report = check_all_ops(global_seed ? global_seed : 7, gc_samples);
    report.results.push_back(check_full_graph(global_seed ? global_seed : 11));
    bool ok = true;
    for (const GradCheckResult& r : report.results) {
      const bool pass = r.passed(gc_tol);
      ok &= pass;
      std::printf("%-22s %s  checked %3d  skipped %2d  max rel err %.3e\n", r.name.c_str(),
                  pass ? "PASS" : "FAIL", r.checked, r.skipped, r.max_rel_err);
    }
    if (!ok) throw NumericalError("gradient audit failed");
    return 0;
  }

  if (study_cmd->parsed()) {
    int w, h;
    parse_size_arg(st_size, w, h);
    st.size = w;
    if (global_seed) st.seed = global_seed;
    const StudyResult result = run_study(st, &std::cerr);
    std::cout << result.table;
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const CLI::ParseError&) {
    std::cerr << "usage error: invalid arguments (see --help)\n";
    return 1;
  } catch (const relight::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const relight::FormatError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const relight::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
