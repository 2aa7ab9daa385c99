// Copyright (c) 2026 the relight authors.
// The relight source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#ifndef RELIGHT_MODEL_HPP
#define RELIGHT_MODEL_HPP

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "relight/autodiff.hpp"
#include "relight/common.hpp"
#include "relight/formation.hpp"
#include "relight/tensor.hpp"

namespace relight {

// Two-stage physics-guided generator. Stage 1 predicts albedo and normals
// from the source image; explicit formation layers shade and render the
// diffuse image under the target light; stage 2, conditioned on everything,
// predicts the non-diffuse residual and a soft visibility map. The composed
// output follows the factored formation model exactly.

struct ModelConfig {
  int depth = 3;           // encoder levels including the bottleneck
  int base_channels = 16;
  int kernel = 3;
  float leaky_slope = 0.2f;
  bool known_source_illumination = true;
  bool grouped_trunk = false;  // two-group convolutions through the trunk
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"depth", c.depth},
       {"base_channels", c.base_channels},
       {"kernel", c.kernel},
       {"leaky_slope", c.leaky_slope},
       {"known_source_illumination", c.known_source_illumination},
       {"grouped_trunk", c.grouped_trunk}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.depth = j.value("depth", 3);
  c.base_channels = j.value("base_channels", 16);
  c.kernel = j.value("kernel", 3);
  c.leaky_slope = j.value("leaky_slope", 0.2f);
  c.known_source_illumination = j.value("known_source_illumination", true);
  c.grouped_trunk = j.value("grouped_trunk", false);
}

template <class T>
using ParamMap = std::map<std::string, Tensor<T>>;

struct ModelParams {
  ModelConfig config;
  ParamMap<float> weights;
};

namespace model_detail {

inline int stage1_in_channels(const ModelConfig& c) {
  return 3 + (c.known_source_illumination ? 3 : 0);
}
inline int stage2_in_channels(const ModelConfig& c) {
  // image, albedo, normals, diffuse, target light, optional source light
  return 12 + 3 + (c.known_source_illumination ? 3 : 0);
}
inline int trunk_groups(const ModelConfig& c) { return c.grouped_trunk ? 2 : 1; }

template <class T>
struct ParamBuilder {
  ParamMap<T>& params;
  std::mt19937_64 rng;
  double leaky_slope;

  void conv(const std::string& name, int cin, int cout, int k, int groups = 1,
            bool zero_init = false) {
    Tensor<T> w(cout, cin / groups, k, k);
    if (!zero_init) {
      const double fan_in = static_cast<double>(cin / groups) * k * k;
      const double gain = std::sqrt(2.0 / (1.0 + leaky_slope * leaky_slope));
      fill_normal(w, rng, gain / std::sqrt(fan_in));
    }
    params[name + ".w"] = std::move(w);
    params[name + ".b"] = Tensor<T>(1, cout, 1, 1, T(0));
  }
};

template <class T>
void build_stage(ParamBuilder<T>& b, const std::string& prefix, int in_ch,
                 const ModelConfig& cfg, bool zero_init_heads) {
  const int B = cfg.base_channels, k = cfg.kernel, gt = trunk_groups(cfg);
  for (int i = 0; i < cfg.depth; ++i) {
    const int ci = B << i;
    const int prev = i == 0 ? in_ch : (B << (i - 1));
    b.conv(prefix + "enc" + std::to_string(i) + "a", prev, ci, k, i == 0 ? 1 : gt);
    b.conv(prefix + "enc" + std::to_string(i) + "b", ci, ci, k, gt);
  }
  for (int i = cfg.depth - 2; i >= 0; --i) {
    const int ci = B << i;
    b.conv(prefix + "dec" + std::to_string(i) + "a", (B << (i + 1)) + ci, ci, k, gt);
    b.conv(prefix + "dec" + std::to_string(i) + "b", ci, ci, k, gt);
  }
  // grouped output branches: independent two-conv heads off the shared trunk
  const int half = std::max(2, B / 2);
  if (prefix == "s1.") {
    b.conv("s1.albedo0", B, half, k);
    b.conv("s1.albedo1", half, 3, k);
    b.conv("s1.normal0", B, half, k);
    b.conv("s1.normal1", half, 3, k);
  } else {
    b.conv("s2.res0", B, half, k);
    b.conv("s2.res1", half, 3, k, 1, zero_init_heads);
    b.conv("s2.vis0", B, half, k);
    b.conv("s2.vis1", half, 1, k, 1, zero_init_heads);
  }
}

}  // namespace model_detail

// Fresh parameters. Stage-2 output kernels start at zero so the untrained
// generator reduces to a visibility-scaled diffuse render.
inline ModelParams init_model(const ModelConfig& cfg, uint64_t seed) {
  ModelParams mp;
  mp.config = cfg;
  model_detail::ParamBuilder<float> b{mp.weights, std::mt19937_64(seed ^ 0x5851f42d4c957f2dULL),
                                      cfg.leaky_slope};
  model_detail::build_stage(b, "s1.", model_detail::stage1_in_channels(cfg), cfg, false);
  model_detail::build_stage(b, "s2.", model_detail::stage2_in_channels(cfg), cfg, true);
  return mp;
}

// ---------------------------------------------------------------------------
// Graph assembly
// ---------------------------------------------------------------------------

template <class T>
struct GraphParams {
  std::map<std::string, int> ids;

  int at(const std::string& name) const {
    auto it = ids.find(name);
    if (it == ids.end()) throw DataError("unknown parameter '" + name + "'");
    return it->second;
  }
};

template <class T>
GraphParams<T> bind_params(Graph<T>& g, const ParamMap<T>& params, bool needs_grad) {
  GraphParams<T> gp;
  for (const auto& [name, tensor] : params) gp.ids[name] = g.leaf(tensor, needs_grad);
  return gp;
}

namespace model_detail {

template <class T>
int conv_block(Graph<T>& g, const GraphParams<T>& p, const std::string& name, int x, int groups,
               T slope) {
  return g.leaky_relu(g.conv2d(x, p.at(name + ".w"), p.at(name + ".b"), groups), slope);
}

template <class T>
int unet_trunk(Graph<T>& g, const GraphParams<T>& p, const std::string& prefix, int input,
               const ModelConfig& cfg) {
  const T slope = static_cast<T>(cfg.leaky_slope);
  const int gt = trunk_groups(cfg);
  std::vector<int> skips;
  int x = input;
  for (int i = 0; i < cfg.depth; ++i) {
    if (i > 0) x = g.avgpool2(x);
    x = conv_block(g, p, prefix + "enc" + std::to_string(i) + "a", x, i == 0 ? 1 : gt, slope);
    x = conv_block(g, p, prefix + "enc" + std::to_string(i) + "b", x, gt, slope);
    skips.push_back(x);
  }
  for (int i = cfg.depth - 2; i >= 0; --i) {
    x = g.concat(g.upsample2(x), skips[i]);
    x = conv_block(g, p, prefix + "dec" + std::to_string(i) + "a", x, gt, slope);
    x = conv_block(g, p, prefix + "dec" + std::to_string(i) + "b", x, gt, slope);
  }
  return x;
}

template <class T>
std::vector<std::vector<T>> light_dir_channels(const std::vector<DirectionalLight>& lights) {
  std::vector<std::vector<T>> out;
  out.reserve(lights.size());
  for (const DirectionalLight& l : lights)
    out.push_back({static_cast<T>(l.direction.x), static_cast<T>(l.direction.y),
                   static_cast<T>(l.direction.z)});
  return out;
}

// [0,1] image -> [-1,1] network range
template <class T>
int to_net_range(Graph<T>& g, int x) {
  return g.add_scalar(g.scale(x, T(2)), T(-1));
}

}  // namespace model_detail

template <class T>
struct Stage1Nodes {
  int albedo = -1;   // sigmoid, in [0,1]
  int normals = -1;  // unit-norm 3-vectors
};

template <class T>
Stage1Nodes<T> stage1_forward(Graph<T>& g, const GraphParams<T>& p, const ModelConfig& cfg,
                              int image01, const std::vector<DirectionalLight>& l_src) {
  const T slope = static_cast<T>(cfg.leaky_slope);
  const int n = g.value(image01).n, h = g.value(image01).h, w = g.value(image01).w;
  int inp = model_detail::to_net_range(g, image01);
  if (cfg.known_source_illumination) {
    if (static_cast<int>(l_src.size()) != n)
      throw DataError("stage1_forward: model expects one source light per sample");
    inp = g.concat(inp,
                   g.broadcast_const_channels(model_detail::light_dir_channels<T>(l_src), h, w));
  }
  const int trunk = model_detail::unet_trunk(g, p, "s1.", inp, cfg);
  Stage1Nodes<T> out;
  const int a0 = model_detail::conv_block(g, p, "s1.albedo0", trunk, 1, slope);
  out.albedo = g.sigmoid(g.conv2d(a0, p.at("s1.albedo1.w"), p.at("s1.albedo1.b")));
  const int n0 = model_detail::conv_block(g, p, "s1.normal0", trunk, 1, slope);
  out.normals = g.channel_l2_normalize(g.conv2d(n0, p.at("s1.normal1.w"), p.at("s1.normal1.b")));
  return out;
}

template <class T>
struct Stage2Nodes {
  int residual = -1;    // linear head, sign-free
  int visibility = -1;  // sigmoid, (N,1,H,W)
};

template <class T>
Stage2Nodes<T> stage2_forward(Graph<T>& g, const GraphParams<T>& p, const ModelConfig& cfg,
                              int image01, int albedo, int normals, int diffuse,
                              const std::vector<DirectionalLight>& l_dst,
                              const std::vector<DirectionalLight>& l_src) {
  const T slope = static_cast<T>(cfg.leaky_slope);
  const int n = g.value(image01).n, h = g.value(image01).h, w = g.value(image01).w;
  int cond = model_detail::to_net_range(g, image01);
  cond = g.concat(cond, model_detail::to_net_range(g, albedo));
  cond = g.concat(cond, normals);
  cond = g.concat(cond, model_detail::to_net_range(g, diffuse));
  cond = g.concat(cond,
                  g.broadcast_const_channels(model_detail::light_dir_channels<T>(l_dst), h, w));
  if (cfg.known_source_illumination) {
    if (static_cast<int>(l_src.size()) != n)
      throw DataError("stage2_forward: model expects one source light per sample");
    cond = g.concat(cond,
                    g.broadcast_const_channels(model_detail::light_dir_channels<T>(l_src), h, w));
  }
  const int trunk = model_detail::unet_trunk(g, p, "s2.", cond, cfg);
  Stage2Nodes<T> out;
  const int r0 = model_detail::conv_block(g, p, "s2.res0", trunk, 1, slope);
  out.residual = g.conv2d(r0, p.at("s2.res1.w"), p.at("s2.res1.b"));
  const int v0 = model_detail::conv_block(g, p, "s2.vis0", trunk, 1, slope);
  out.visibility = g.sigmoid(g.conv2d(v0, p.at("s2.vis1.w"), p.at("s2.vis1.b")));
  return out;
}

template <class T>
struct GeneratorNodes {
  int albedo = -1, normals = -1, shading = -1, diffuse = -1;
  int residual = -1, visibility = -1, output = -1;
};

// Full relighting graph: stage 1 -> formation -> stage 2 -> composition.
template <class T>
GeneratorNodes<T> generator_forward(Graph<T>& g, const GraphParams<T>& p, const ModelConfig& cfg,
                                    int image01, const std::vector<DirectionalLight>& l_src,
                                    const std::vector<DirectionalLight>& l_dst) {
  GeneratorNodes<T> out;
  const Stage1Nodes<T> s1 = stage1_forward(g, p, cfg, image01, l_src);
  out.albedo = s1.albedo;
  out.normals = s1.normals;
  out.shading = g.shading_op(s1.normals, l_dst);
  out.diffuse = g.mul(s1.albedo, out.shading);
  const Stage2Nodes<T> s2 =
      stage2_forward(g, p, cfg, image01, s1.albedo, s1.normals, out.diffuse, l_dst, l_src);
  out.residual = s2.residual;
  out.visibility = s2.visibility;
  out.output = g.mul_broadcast_c(g.add(out.diffuse, s2.residual), s2.visibility);
  return out;
}

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

struct RelightResult {
  RasterImage output;  // clamped on request
  RasterImage albedo, normals, shading, diffuse, residual, visibility;
};

inline RelightResult relight_full(const ModelParams& mp, const RasterImage& image,
                                  const std::optional<DirectionalLight>& l_src,
                                  const DirectionalLight& l_dst, bool clamp_output = true) {
  if (image.channels != 3) throw DataError("relight: input image must have 3 channels");
  if (mp.config.known_source_illumination && !l_src)
    throw DataError("relight: model was trained with known source illumination; provide it");
  Graph<float> g;
  const GraphParams<float> p = bind_params(g, mp.weights, false);
  const int img = g.constant(tensor_from_raster<float>(image));
  std::vector<DirectionalLight> src;
  if (mp.config.known_source_illumination) src.push_back(*l_src);
  const GeneratorNodes<float> gen = generator_forward(g, p, mp.config, img, src, {l_dst});
  RelightResult r;
  r.output = raster_from_tensor(g.value(gen.output));
  if (clamp_output) r.output = clamp01(r.output);
  r.albedo = raster_from_tensor(g.value(gen.albedo));
  r.normals = raster_from_tensor(g.value(gen.normals));
  r.shading = raster_from_tensor(g.value(gen.shading));
  r.diffuse = raster_from_tensor(g.value(gen.diffuse));
  r.residual = raster_from_tensor(g.value(gen.residual));
  r.visibility = raster_from_tensor(g.value(gen.visibility));
  return r;
}

inline RasterImage relight_image(const ModelParams& mp, const RasterImage& image,
                                 const std::optional<DirectionalLight>& l_src,
                                 const DirectionalLight& l_dst, bool clamp_output = true) {
  return relight_full(mp, image, l_src, l_dst, clamp_output).output;
}

// ---------------------------------------------------------------------------
// Model file: magic "RLM1", config echo, named little-endian float32 blobs
// ---------------------------------------------------------------------------

namespace model_detail {

inline void write_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t read_u32(std::istream& is, const std::string& path) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw FormatError(path + ": truncated model file");
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

}  // namespace model_detail

inline void save_model(const ModelParams& mp, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("save_model: cannot open '" + path + "' for writing");
  f.write("RLM1", 4);
  model_detail::write_u32(f, 1);  // version
  const std::string cfg = nlohmann::json(mp.config).dump();
  model_detail::write_u32(f, static_cast<uint32_t>(cfg.size()));
  f.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  model_detail::write_u32(f, static_cast<uint32_t>(mp.weights.size()));
  for (const auto& [name, t] : mp.weights) {
    model_detail::write_u32(f, static_cast<uint32_t>(name.size()));
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    model_detail::write_u32(f, static_cast<uint32_t>(t.n));
    model_detail::write_u32(f, static_cast<uint32_t>(t.c));
    model_detail::write_u32(f, static_cast<uint32_t>(t.h));
    model_detail::write_u32(f, static_cast<uint32_t>(t.w));
    for (float v : t.v) {
      uint32_t u;
      std::memcpy(&u, &v, 4);
      model_detail::write_u32(f, u);
    }
  }
  if (!f) throw DataError("save_model: write failed for '" + path + "'");
}

inline ModelParams load_model(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError(path + ": cannot open model file");
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "RLM1", 4) != 0)
    throw FormatError(path + ": bad magic, not a model file");
  const uint32_t version = model_detail::read_u32(f, path);
  if (version != 1) throw FormatError(path + ": unsupported model version");
  const uint32_t cfg_len = model_detail::read_u32(f, path);
  std::string cfg(cfg_len, '\0');
  f.read(cfg.data(), cfg_len);
  if (!f) throw FormatError(path + ": truncated config block");
  ModelParams mp;
  try {
    mp.config = nlohmann::json::parse(cfg).get<ModelConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": invalid config block: " + e.what());
  }
  const uint32_t count = model_detail::read_u32(f, path);
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = model_detail::read_u32(f, path);
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    const int n = static_cast<int>(model_detail::read_u32(f, path));
    const int c = static_cast<int>(model_detail::read_u32(f, path));
    const int h = static_cast<int>(model_detail::read_u32(f, path));
    const int w = static_cast<int>(model_detail::read_u32(f, path));
    Tensor<float> t(n, c, h, w);
    for (float& v : t.v) {
      const uint32_t u = model_detail::read_u32(f, path);
      std::memcpy(&v, &u, 4);
    }
    mp.weights[name] = std::move(t);
  }
  return mp;
}

}  // namespace relight

#endif  // RELIGHT_MODEL_HPP
