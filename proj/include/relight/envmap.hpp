// Copyright (c) 2026 the relight authors.
// The relight source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#ifndef RELIGHT_ENVMAP_HPP
#define RELIGHT_ENVMAP_HPP

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "relight/common.hpp"
#include "relight/formation.hpp"
#include "relight/image.hpp"
#include "relight/light.hpp"
#include "relight/model.hpp"

namespace relight {

// Environment-map relighting: a lat-long map is reduced to a bank of
// directional lights and the model's predictions are mixed additively.

struct WeightedLight {
  DirectionalLight light;  // unit direction, unit intensity
  Vec3 weight;             // RGB radiance x pixel solid angle
};

namespace env_detail {

// exact box-filter resample (area-weighted average) to target_w x target_h
inline RasterImage area_downsample(const RasterImage& src, int tw, int th) {
  RasterImage dst(tw, th, src.channels);
  const double sx = static_cast<double>(src.width) / tw;
  const double sy = static_cast<double>(src.height) / th;
  for (int ty = 0; ty < th; ++ty) {
    const double y0 = ty * sy, y1 = (ty + 1) * sy;
    for (int tx = 0; tx < tw; ++tx) {
      const double x0 = tx * sx, x1 = (tx + 1) * sx;
      for (int c = 0; c < src.channels; ++c) {
        double acc = 0.0, area = 0.0;
        for (int yy = static_cast<int>(std::floor(y0)); yy < std::ceil(y1); ++yy) {
          const double hy =
              std::min(y1, static_cast<double>(yy + 1)) - std::max(y0, static_cast<double>(yy));
          if (hy <= 0.0) continue;
          for (int xx = static_cast<int>(std::floor(x0)); xx < std::ceil(x1); ++xx) {
            const double hx =
                std::min(x1, static_cast<double>(xx + 1)) - std::max(x0, static_cast<double>(xx));
            if (hx <= 0.0) continue;
            acc += hx * hy * src.at(std::min(xx, src.width - 1), std::min(yy, src.height - 1), c);
            area += hx * hy;
          }
        }
        dst.at(tx, ty, c) = static_cast<float>(area > 0.0 ? acc / area : 0.0);
      }
    }
  }
  return dst;
}

}  // namespace env_detail

// Spherical direction of lat-long pixel (u, v) on a w x h grid: v = 0 is the
// zenith (+y); phi sweeps longitude with phi = 0 facing the camera (-z world,
// i.e. direction +z toward the camera at the map center).
inline Vec3 equirect_direction(int u, int v, int w, int h) {
  const double phi = 2.0 * M_PI * (u + 0.5) / w - M_PI;
  const double theta = M_PI * (v + 0.5) / h;
  return {std::sin(theta) * std::sin(phi), std::cos(theta), -std::sin(theta) * std::cos(phi)};
}

// Reduces an equirectangular radiance map to one directional light per pixel
// of the downsampled grid. Weights carry the pixel's RGB radiance times its
// exact solid angle (the band integral of sin(theta), so a constant map sums
// to 4*pi). Zero-radiance pixels are dropped; back-hemisphere lights are
// kept for the model to judge.
inline std::vector<WeightedLight> env_to_lights(const RasterImage& env, int target_w = 64,
                                                int target_h = 32) {
  if (env.channels != 3) throw DataError("env_to_lights: environment map must have 3 channels");
  if (env.width < env.height)
    throw DataError("env_to_lights: expected an equirectangular (wide) map");
  const RasterImage small =
      (env.width == target_w && env.height == target_h)
          ? env
          : env_detail::area_downsample(env, target_w, target_h);

  std::vector<WeightedLight> lights;
  const double dphi = 2.0 * M_PI / target_w;
  for (int v = 0; v < target_h; ++v) {
    const double theta0 = M_PI * v / target_h;
    const double theta1 = M_PI * (v + 1) / target_h;
    const double solid_angle = dphi * (std::cos(theta0) - std::cos(theta1));
    for (int u = 0; u < target_w; ++u) {
      const Vec3 rgb{small.at(u, v, 0), small.at(u, v, 1), small.at(u, v, 2)};
      if (rgb.x == 0.0 && rgb.y == 0.0 && rgb.z == 0.0) continue;
      WeightedLight wl;
      wl.light.direction = equirect_direction(u, v, target_w, target_h);
      wl.light.intensity = {1.0, 1.0, 1.0};
      wl.weight = rgb * solid_angle;
      lights.push_back(wl);
    }
  }
  return lights;
}

namespace env_detail {

inline double weight_luminance(const WeightedLight& wl) {
  return (wl.weight.x + wl.weight.y + wl.weight.z) / 3.0;
}

// canonical processing order: results do not depend on input permutation
inline std::vector<WeightedLight> ordered(std::vector<WeightedLight> lights, int topk) {
  std::sort(lights.begin(), lights.end(), [](const WeightedLight& a, const WeightedLight& b) {
    const double la = weight_luminance(a), lb = weight_luminance(b);
    if (la != lb) return la > lb;
    if (a.light.direction.x != b.light.direction.x)
      return a.light.direction.x < b.light.direction.x;
    if (a.light.direction.y != b.light.direction.y)
      return a.light.direction.y < b.light.direction.y;
    return a.light.direction.z < b.light.direction.z;
  });
  if (topk > 0 && topk < static_cast<int>(lights.size())) lights.resize(topk);
  return lights;
}

}  // namespace env_detail

// Additive mixing of per-light predictions: sum_k weight_k * G(I, l_src, l_k)
// with unit-intensity lights into the network. Linear in the environment
// radiance before the final clamp.
inline RasterImage relight_env(const ModelParams& mp, const RasterImage& image,
                               const std::optional<DirectionalLight>& l_src,
                               const std::vector<WeightedLight>& lights, int topk = 0,
                               bool clamp_output = true) {
  if (lights.empty()) throw DataError("relight_env: empty light list");
  const std::vector<WeightedLight> order = env_detail::ordered(lights, topk);
  RasterImage acc(image.width, image.height, 3);
  for (const WeightedLight& wl : order) {
    const RasterImage pred = relight_image(mp, image, l_src, wl.light, /*clamp=*/false);
    for (size_t i = 0; i < acc.pixel_count(); ++i)
      for (int c = 0; c < 3; ++c)
        acc.data[i * 3 + c] += static_cast<float>(wl.weight[c]) * pred.data[i * 3 + c];
  }
  return clamp_output ? clamp01(acc) : acc;
}

// Direct diffuse render under the whole weighted light bank; the analytic
// additivity reference for the mixed prediction path.
inline RasterImage relight_env_diffuse(const RasterImage& albedo, const RasterImage& normals,
                                       const std::vector<WeightedLight>& lights) {
  if (lights.empty()) throw DataError("relight_env_diffuse: empty light list");
  RasterImage total_shading(albedo.width, albedo.height, 3);
  for (const WeightedLight& wl : env_detail::ordered(lights, 0)) {
    DirectionalLight l = wl.light;
    l.intensity = wl.weight;
    const RasterImage s = shading(normals, l);
    for (size_t i = 0; i < s.data.size(); ++i) total_shading.data[i] += s.data[i];
  }
  return diffuse_render(albedo, total_shading);
}

// Diagonal color transform toward reference per-channel means, measured on a
// center patch.
inline RasterImage color_match_linear(const RasterImage& img, const Vec3& target_means,
                                      int patch_w = 51, int patch_h = 76) {
  if (img.channels != 3) throw DataError("color_match_linear: expects 3 channels");
  if (patch_w > img.width || patch_h > img.height)
    throw DataError("color_match_linear: patch larger than the image");
  const int x0 = (img.width - patch_w) / 2;
  const int y0 = (img.height - patch_h) / 2;
  Vec3 mean{0, 0, 0};
  for (int y = y0; y < y0 + patch_h; ++y)
    for (int x = x0; x < x0 + patch_w; ++x)
      for (int c = 0; c < 3; ++c) mean[c] += img.at(x, y, c);
  mean = mean / (static_cast<double>(patch_w) * patch_h);
  for (int c = 0; c < 3; ++c)
    if (mean[c] <= 1e-12)
      throw DataError("color_match_linear: zero mean in channel " + std::to_string(c));
  const Vec3 gain{target_means.x / mean.x, target_means.y / mean.y, target_means.z / mean.z};
  RasterImage out = img;
  for (size_t i = 0; i < out.pixel_count(); ++i)
    for (int c = 0; c < 3; ++c) out.data[i * 3 + c] *= static_cast<float>(gain[c]);
  return out;
}

}  // namespace relight

#endif  // RELIGHT_ENVMAP_HPP
