// Copyright (c) 2026 the relight authors.
// The relight source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#ifndef RELIGHT_PMS_HPP
#define RELIGHT_PMS_HPP

#include <cmath>
#include <vector>

#include "relight/common.hpp"
#include "relight/formation.hpp"
#include "relight/image.hpp"
#include "relight/light.hpp"
#include "relight/vec.hpp"

namespace relight {

// Lambertian photometric stereo over an OLAT stack: per-pixel least squares
// for the scaled normal g_c per channel, with shadow/highlight rejection by
// a luminance window. The supervision source for the learner.

struct PmsThresholds {
  double tau_lo = 0.02;   // rejects shadowed observations
  double tau_hi = 0.98;   // rejects saturated/specular observations
  double max_condition = 1e8;
};

struct PixelSolve {
  Vec3 albedo{0, 0, 0};
  Vec3 normal{0, 0, 0};
  bool valid = false;
};

inline PixelSolve solve_pixel(const std::vector<Vec3>& observations, const LightSet& lights,
                              const PmsThresholds& thr = {}) {
  if (lights.size() < 3) throw DataError("solve_pixel: needs at least 3 lights");
  if (observations.size() != lights.size())
    throw DataError("solve_pixel: observation count does not match light count");

  std::vector<size_t> selected;
  for (size_t i = 0; i < observations.size(); ++i) {
    const Vec3& o = observations[i];
    const double lum = (o.x + o.y + o.z) / 3.0;
    if (lum >= thr.tau_lo && lum <= thr.tau_hi) selected.push_back(i);
  }
  PixelSolve out;
  if (selected.size() < 3) return out;

  Vec3 g[3];
  for (int c = 0; c < 3; ++c) {
    Mat3 m{};
    Vec3 rhs{0, 0, 0};
    for (size_t i : selected) {
      const DirectionalLight& lt = lights.lights[i];
      const Vec3 row = lt.direction * lt.intensity[c];
      for (int r = 0; r < 3; ++r)
        for (int cc = 0; cc < 3; ++cc) m(r, cc) += row[r] * row[cc];
      rhs += row * observations[i][c];
    }
    const auto ev = sym_eigenvalues(m);
    if (ev[0] <= 0.0 || ev[2] / ev[0] > thr.max_condition) return out;
    g[c] = solve3x3(m, rhs);
  }

  const Vec3 gsum = g[0] + g[1] + g[2];
  const double n = length(gsum);
  if (n == 0.0) return out;
  out.normal = gsum / n;
  for (int c = 0; c < 3; ++c) out.albedo[c] = std::max(0.0, dot(g[c], out.normal));
  out.valid = true;
  return out;
}

struct PmsResult {
  RasterImage albedo;    // 3 channels; 0 on invalid pixels
  RasterImage normals;   // 3 channels; (0,0,0) on invalid pixels
  RasterImage validity;  // 1 channel in {0,1}
};

inline PmsResult solve_image(const std::vector<RasterImage>& frames, const LightSet& lights,
                             const PmsThresholds& thr = {}) {
  if (frames.size() != lights.size())
    throw DataError("solve_image: frame count " + std::to_string(frames.size()) +
                    " does not match light count " + std::to_string(lights.size()));
  if (frames.empty()) throw DataError("solve_image: empty stack");
  for (const RasterImage& f : frames) {
    require_same_shape(f, frames[0], "solve_image");
    if (f.channels != 3) throw DataError("solve_image: frames must have 3 channels");
  }

  const int w = frames[0].width, h = frames[0].height;
  PmsResult res{RasterImage(w, h, 3), RasterImage(w, h, 3), RasterImage(w, h, 1)};

  parallel_for(0, h, [&](int y) {
    std::vector<Vec3> obs(frames.size());
    for (int x = 0; x < w; ++x) {
      for (size_t i = 0; i < frames.size(); ++i)
        obs[i] = {frames[i].at(x, y, 0), frames[i].at(x, y, 1), frames[i].at(x, y, 2)};
      const PixelSolve px = solve_pixel(obs, lights, thr);
      if (!px.valid) continue;
      for (int c = 0; c < 3; ++c) {
        res.albedo.at(x, y, c) = static_cast<float>(px.albedo[c]);
        res.normals.at(x, y, c) = static_cast<float>(px.normal[c]);
      }
      res.validity.at(x, y, 0) = 1.0f;
    }
  });
  return res;
}

// R = I - A*S on lit pixels; zero where the light is occluded (the residual
// is unobservable there under the factored formation model).
inline RasterImage compute_residual(const RasterImage& image, const RasterImage& albedo,
                                    const RasterImage& normals, const DirectionalLight& light,
                                    const RasterImage& visibility) {
  require_same_shape(image, albedo, "compute_residual");
  const RasterImage s = shading(normals, light);
  require_same_shape(image, s, "compute_residual");
  if (visibility.width != image.width || visibility.height != image.height)
    throw DataError("compute_residual: visibility size mismatch");
  RasterImage r(image.width, image.height, 3);
  const size_t px = image.pixel_count();
  for (size_t i = 0; i < px; ++i) {
    if (visibility.data[i] < 0.5f) continue;
    for (int c = 0; c < 3; ++c)
      r.data[i * 3 + c] = image.data[i * 3 + c] - albedo.data[i * 3 + c] * s.data[i * 3 + c];
  }
  return r;
}

// Shadow mask estimated from the frame itself: a pixel is taken as lit when
// its mean luminance clears the shadow-rejection threshold.
inline RasterImage estimate_visibility(const RasterImage& image, double tau_lo = 0.02) {
  if (image.channels != 3) throw DataError("estimate_visibility: expects 3 channels");
  RasterImage v(image.width, image.height, 1);
  const size_t px = image.pixel_count();
  for (size_t i = 0; i < px; ++i) {
    const double lum =
        (image.data[i * 3] + image.data[i * 3 + 1] + image.data[i * 3 + 2]) / 3.0;
    v.data[i] = lum >= tau_lo ? 1.0f : 0.0f;
  }
  return v;
}

}  // namespace relight

#endif  // RELIGHT_PMS_HPP
