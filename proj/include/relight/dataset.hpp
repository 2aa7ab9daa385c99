// Copyright (c) 2026 the relight authors.
// The relight source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#ifndef RELIGHT_DATASET_HPP
#define RELIGHT_DATASET_HPP

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "relight/common.hpp"
#include "relight/pfm.hpp"
#include "relight/pms.hpp"
#include "relight/synth.hpp"

namespace relight {

// On-disk dataset: per-frame PFM layers plus a JSON manifest. The same
// schema carries oracle renders and photometric-stereo reconstructions.

inline const std::vector<std::string>& frame_layer_names() {
  static const std::vector<std::string> names = {"image",      "albedo",   "normals",
                                                 "shading",    "visibility", "residual"};
  return names;
}

struct FrameEntry {
  int light_id = 0;
  std::map<std::string, std::string> files;  // layer name -> path relative to manifest
};

struct SceneEntry {
  uint64_t scene_seed = 0;
  std::vector<FrameEntry> frames;
  std::string validity;  // optional per-scene PMS validity mask
};

struct Manifest {
  std::string light_file;
  std::vector<SceneEntry> scenes;
  std::filesystem::path base_dir;  // directory the manifest was loaded from

  std::filesystem::path resolve(const std::string& rel) const { return base_dir / rel; }
};

inline void save_manifest(const Manifest& m, const std::string& path) {
  nlohmann::json j;
  j["light_file"] = m.light_file;
  j["scenes"] = nlohmann::json::array();
  for (const SceneEntry& s : m.scenes) {
    nlohmann::json js;
    js["scene_seed"] = s.scene_seed;
    if (!s.validity.empty()) js["validity"] = s.validity;
    js["frames"] = nlohmann::json::array();
    for (const FrameEntry& f : s.frames) {
      nlohmann::json jf;
      jf["light_id"] = f.light_id;
      jf["files"] = f.files;
      js["frames"].push_back(jf);
    }
    j["scenes"].push_back(js);
  }
  std::ofstream out(path);
  if (!out) throw DataError("save_manifest: cannot open '" + path + "' for writing");
  out << j.dump(2) << "\n";
}

inline Manifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(path + ": cannot open manifest");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": invalid JSON: " + e.what());
  }
  Manifest m;
  m.base_dir = std::filesystem::path(path).parent_path();
  try {
    m.light_file = j.at("light_file").get<std::string>();
    for (const auto& js : j.at("scenes")) {
      SceneEntry s;
      s.scene_seed = js.at("scene_seed").get<uint64_t>();
      if (js.contains("validity")) s.validity = js["validity"].get<std::string>();
      for (const auto& jf : js.at("frames")) {
        FrameEntry f;
        f.light_id = jf.at("light_id").get<int>();
        for (const auto& [key, val] : jf.at("files").items()) {
          bool known = false;
          for (const std::string& n : frame_layer_names()) known |= (n == key);
          if (!known) throw FormatError(path + ": unknown frame layer '" + key + "'");
          f.files[key] = val.get<std::string>();
        }
        for (const std::string& n : frame_layer_names())
          if (!f.files.count(n)) throw FormatError(path + ": frame missing layer '" + n + "'");
        s.frames.push_back(std::move(f));
      }
      m.scenes.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": manifest schema violation: " + e.what());
  }
  if (m.scenes.empty()) throw FormatError(path + ": manifest lists no scenes");
  return m;
}

inline LightSet load_manifest_lights(const Manifest& m) {
  return load_lights(m.resolve(m.light_file).string());
}

inline IntrinsicSet load_frame(const Manifest& m, const SceneEntry& scene, const FrameEntry& f,
                               const LightSet& lights) {
  IntrinsicSet s;
  s.image = load_pfm(m.resolve(f.files.at("image")).string());
  s.albedo = load_pfm(m.resolve(f.files.at("albedo")).string());
  s.normals = load_pfm(m.resolve(f.files.at("normals")).string());
  s.shading = load_pfm(m.resolve(f.files.at("shading")).string());
  s.visibility = load_pfm(m.resolve(f.files.at("visibility")).string());
  s.residual = load_pfm(m.resolve(f.files.at("residual")).string());
  (void)scene;
  bool found = false;
  for (size_t i = 0; i < lights.size(); ++i)
    if (lights.ids[i] == f.light_id) {
      s.light = lights.lights[i];
      found = true;
      break;
    }
  if (!found) throw DataError("load_frame: light id " + std::to_string(f.light_id) +
                              " not present in the light set");
  return s;
}

// Renders n_scenes x |light_set| OLAT frames with ground-truth intrinsics
// and writes the manifest. Deterministic for fixed seeds.
inline std::string generate_dataset(int n_scenes, uint64_t base_seed, const LightSet& lights,
                                    const std::string& out_dir, int width = 128,
                                    int height = 128) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  Manifest m;
  m.base_dir = out_dir;
  m.light_file = "lights.txt";
  save_lights(lights, (fs::path(out_dir) / m.light_file).string());

  for (int i = 0; i < n_scenes; ++i) {
    const uint64_t seed = base_seed + static_cast<uint64_t>(i);
    const SceneSpec scene = build_scene(seed, width, height);
    SceneEntry entry;
    entry.scene_seed = seed;
    char scene_dir[64];
    std::snprintf(scene_dir, sizeof(scene_dir), "scene_%05llu",
                  static_cast<unsigned long long>(seed));
    fs::create_directories(fs::path(out_dir) / scene_dir);

    for (size_t li = 0; li < lights.size(); ++li) {
      const IntrinsicSet frame = render_olat(scene, lights.lights[li]);
      FrameEntry fe;
      fe.light_id = lights.ids[li];
      const RasterImage* layers[6] = {&frame.image,      &frame.albedo,   &frame.normals,
                                      &frame.shading,    &frame.visibility, &frame.residual};
      for (int k = 0; k < 6; ++k) {
        char name[96];
        std::snprintf(name, sizeof(name), "%s/l%02d_%s.pfm", scene_dir, lights.ids[li],
                      frame_layer_names()[k].c_str());
        save_pfm(*layers[k], (fs::path(out_dir) / name).string());
        fe.files[frame_layer_names()[k]] = name;
      }
      entry.frames.push_back(std::move(fe));
    }
    m.scenes.push_back(std::move(entry));
  }

  const std::string manifest_path = (fs::path(out_dir) / "manifest.json").string();
  save_manifest(m, manifest_path);
  return manifest_path;
}

// Photometric-stereo reconstruction of a rendered dataset: solves albedo,
// normals and validity per scene, estimates per-frame visibility from the
// shadow threshold, recomputes shading and residuals, and writes a new
// manifest whose intrinsics come from PMS instead of the oracle.
inline std::string pms_reconstruct(const Manifest& in, const std::string& out_dir,
                                   const PmsThresholds& thr = {}) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const LightSet lights = load_manifest_lights(in);

  Manifest out;
  out.base_dir = out_dir;
  out.light_file = "lights.txt";
  save_lights(lights, (fs::path(out_dir) / out.light_file).string());

  for (const SceneEntry& scene : in.scenes) {
    if (scene.frames.size() != lights.size())
      throw DataError("pms_reconstruct: scene " + std::to_string(scene.scene_seed) +
                      " does not cover the light set");
    std::vector<RasterImage> stack;
    stack.reserve(scene.frames.size());
    std::vector<const FrameEntry*> by_light(lights.size(), nullptr);
    for (const FrameEntry& f : scene.frames) {
      for (size_t li = 0; li < lights.size(); ++li)
        if (lights.ids[li] == f.light_id) by_light[li] = &f;
    }
    for (size_t li = 0; li < lights.size(); ++li) {
      if (!by_light[li])
        throw DataError("pms_reconstruct: missing frame for light id " +
                        std::to_string(lights.ids[li]));
      stack.push_back(load_pfm(in.resolve(by_light[li]->files.at("image")).string()));
    }

    const PmsResult rec = solve_image(stack, lights, thr);

    SceneEntry entry;
    entry.scene_seed = scene.scene_seed;
    char scene_dir[64];
    std::snprintf(scene_dir, sizeof(scene_dir), "scene_%05llu",
                  static_cast<unsigned long long>(scene.scene_seed));
    fs::create_directories(fs::path(out_dir) / scene_dir);

    auto save_layer = [&](const RasterImage& img, const std::string& name) {
      const std::string rel = std::string(scene_dir) + "/" + name + ".pfm";
      save_pfm(img, (fs::path(out_dir) / rel).string());
      return rel;
    };
    const std::string albedo_rel = save_layer(rec.albedo, "pms_albedo");
    const std::string normals_rel = save_layer(rec.normals, "pms_normals");
    entry.validity = save_layer(rec.validity, "pms_validity");

    for (size_t li = 0; li < lights.size(); ++li) {
      const DirectionalLight& light = lights.lights[li];
      const RasterImage& image = stack[li];
      const RasterImage vis = estimate_visibility(image, thr.tau_lo);
      const RasterImage shade = shading(rec.normals, light);
      const RasterImage resid = compute_residual(image, rec.albedo, rec.normals, light, vis);

      char prefix[32];
      std::snprintf(prefix, sizeof(prefix), "l%02d", lights.ids[li]);
      FrameEntry fe;
      fe.light_id = lights.ids[li];
      fe.files["image"] = by_light[li]->files.at("image");
      // keep reconstructions self-contained: copy the source image path as-is
      // only when it is absolute; otherwise re-save under the new root
      if (fs::path(fe.files["image"]).is_relative()) {
        fe.files["image"] = save_layer(image, std::string(prefix) + "_image");
      }
      fe.files["albedo"] = albedo_rel;
      fe.files["normals"] = normals_rel;
      fe.files["shading"] = save_layer(shade, std::string(prefix) + "_shading");
      fe.files["visibility"] = save_layer(vis, std::string(prefix) + "_visibility");
      fe.files["residual"] = save_layer(resid, std::string(prefix) + "_residual");
      entry.frames.push_back(std::move(fe));
    }
    out.scenes.push_back(std::move(entry));
  }

  const std::string manifest_path = (fs::path(out_dir) / "manifest.json").string();
  save_manifest(out, manifest_path);
  return manifest_path;
}

}  // namespace relight

#endif  // RELIGHT_DATASET_HPP
