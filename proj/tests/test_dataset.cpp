// Copyright (c) 2026 the relight authors.
// The relight source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "relight/dataset.hpp"
#include "relight/train.hpp"

using namespace relight;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / "relight_dataset_tests" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<char> read_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::vector<char>((std::istreambuf_iterator<char>(f)),
                           std::istreambuf_iterator<char>());
}

}  // namespace

TEST(Dataset, ManifestCountsAndFileExistence) {
  const fs::path dir = fresh_dir("counts");
  const LightSet rig = standard_rig(8);
  const std::string mpath = generate_dataset(2, 100, rig, dir.string(), 32, 32);
  const Manifest m = load_manifest(mpath);
  ASSERT_EQ(m.scenes.size(), 2u);
  size_t frames = 0;
  for (const SceneEntry& s : m.scenes) {
    frames += s.frames.size();
    for (const FrameEntry& f : s.frames)
      for (const auto& [layer, rel] : f.files)
        EXPECT_TRUE(fs::exists(m.resolve(rel))) << layer << " " << rel;
  }
  EXPECT_EQ(frames, 2u * 8u);
}

TEST(Dataset, RegenerationIsByteIdentical) {
  const fs::path dir_a = fresh_dir("regen_a");
  const fs::path dir_b = fresh_dir("regen_b");
  const LightSet rig = standard_rig(4);
  const Manifest ma = load_manifest(generate_dataset(1, 55, rig, dir_a.string(), 32, 32));
  const Manifest mb = load_manifest(generate_dataset(1, 55, rig, dir_b.string(), 32, 32));
  for (size_t fi = 0; fi < ma.scenes[0].frames.size(); ++fi)
    for (const auto& [layer, rel] : ma.scenes[0].frames[fi].files)
      EXPECT_EQ(read_bytes(ma.resolve(rel)),
                read_bytes(mb.resolve(mb.scenes[0].frames[fi].files.at(layer))))
          << layer;
}

TEST(Dataset, ManifestSchemaIsValidatedOnRead) {
  const fs::path dir = fresh_dir("schema");
  const fs::path p = dir / "manifest.json";
  std::ofstream(p) << R"({"light_file": "lights.txt", "scenes": [
    {"scene_seed": 1, "frames": [{"light_id": 0, "files": {"image": "a.pfm"}}]}]})";
  EXPECT_THROW(load_manifest(p.string()), FormatError);  // missing layers

  std::ofstream(p) << R"({"scenes": []})";
  EXPECT_THROW(load_manifest(p.string()), FormatError);  // missing light_file

  std::ofstream(p) << "not json";
  EXPECT_THROW(load_manifest(p.string()), FormatError);
}

TEST(Dataset, LoadFrameResolvesLightsById) {
  const fs::path dir = fresh_dir("loadframe");
  const LightSet rig = standard_rig(4);
  const Manifest m = load_manifest(generate_dataset(1, 9, rig, dir.string(), 32, 32));
  const IntrinsicSet s = load_frame(m, m.scenes[0], m.scenes[0].frames[2], rig);
  EXPECT_EQ(s.image.width, 32);
  for (int k = 0; k < 3; ++k)
    EXPECT_DOUBLE_EQ(s.light.direction[k], rig.lights[2].direction[k]);
  EXPECT_EQ(eq7_residual(s), 0.0);
}

TEST(Dataset, LoadDatasetSharesSceneLayers) {
  const fs::path dir = fresh_dir("loaddataset");
  const LightSet rig = standard_rig(4);
  const Manifest m = load_manifest(generate_dataset(2, 40, rig, dir.string(), 32, 32));
  const LoadedDataset ds = load_dataset(m);
  ASSERT_EQ(ds.scenes.size(), 2u);
  ASSERT_EQ(ds.scenes[0].frames.size(), 4u);
  EXPECT_EQ(ds.scenes[0].frames[0].albedo.data, ds.scenes[0].frames[3].albedo.data);
}

TEST(Dataset, PmsReconstructionProducesConsistentManifest) {
  const fs::path dir = fresh_dir("pmsrec_src");
  const fs::path out = fresh_dir("pmsrec_out");
  LightSet rig = standard_rig(8);
  const Manifest src = load_manifest(generate_dataset(1, 77, rig, dir.string(), 32, 32));
  const Manifest rec = load_manifest(pms_reconstruct(src, out.string()));
  ASSERT_EQ(rec.scenes.size(), 1u);
  EXPECT_FALSE(rec.scenes[0].validity.empty());
  EXPECT_TRUE(fs::exists(rec.resolve(rec.scenes[0].validity)));
  ASSERT_EQ(rec.scenes[0].frames.size(), 8u);

  // reconstructed intrinsics approximately satisfy the formation identity on
  // lit, valid pixels
  const RasterImage validity = load_pfm(rec.resolve(rec.scenes[0].validity).string());
  const LightSet lights = load_manifest_lights(rec);
  const IntrinsicSet f = load_frame(rec, rec.scenes[0], rec.scenes[0].frames[5], lights);
  const RasterImage recon = compose(diffuse_render(f.albedo, f.shading), f.residual, f.visibility);
  for (size_t px = 0; px < recon.pixel_count(); ++px) {
    if (validity.data[px] != 1.0f || f.visibility.data[px] != 1.0f) continue;
    for (int c = 0; c < 3; ++c)
      EXPECT_NEAR(recon.data[px * 3 + c], f.image.data[px * 3 + c], 1e-5);
  }
}
