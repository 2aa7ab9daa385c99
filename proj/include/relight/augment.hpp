// Copyright (c) 2026 the relight authors.
// The relight source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#ifndef RELIGHT_AUGMENT_HPP
#define RELIGHT_AUGMENT_HPP

#include <random>

#include "relight/common.hpp"
#include "relight/image.hpp"
#include "relight/synth.hpp"

namespace relight {

// Light-consistent training augmentations. Each one preserves the formation
// identity I = (A*S + R)*V.

// Mirrors every raster and adapts normals and the light direction.
inline IntrinsicSet flip_sample(const IntrinsicSet& s, FlipAxis axis) {
  IntrinsicSet out;
  out.image = flip(s.image, axis);
  out.albedo = flip(s.albedo, axis);
  out.shading = flip(s.shading, axis);
  out.visibility = flip(s.visibility, axis);
  out.residual = flip(s.residual, axis);
  out.normals = flip(s.normals, axis);
  const int comp = axis == FlipAxis::Horizontal ? 0 : 1;
  for (size_t i = 0; i < out.normals.pixel_count(); ++i)
    out.normals.data[i * 3 + comp] = -out.normals.data[i * 3 + comp];
  out.light = mirror_light(s.light, axis);
  return out;
}

// x' = s x for image, shading, residual, and light intensity; albedo,
// normals, and visibility are exposure-invariant.
inline IntrinsicSet scale_sample(const IntrinsicSet& s, double factor) {
  if (factor <= 0.0) throw DataError("scale_sample: non-positive scale factor");
  IntrinsicSet out = s;
  const float f = static_cast<float>(factor);
  for (float& v : out.image.data) v *= f;
  for (float& v : out.shading.data) v *= f;
  for (float& v : out.residual.data) v *= f;
  out.light.intensity = out.light.intensity * factor;
  return out;
}

constexpr double kScaleLo = 0.6;
constexpr double kScaleHi = 1.1;

inline IntrinsicSet scale_sample(const IntrinsicSet& s, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(kScaleLo, kScaleHi);
  return scale_sample(s, dist(rng));
}

// Gaussian perturbation of the calibrated direction, re-normalized.
inline DirectionalLight jitter_light(const DirectionalLight& light, std::mt19937_64& rng,
                                     double sigma = 0.01) {
  std::normal_distribution<double> noise(0.0, sigma);
  DirectionalLight out = light;
  out.direction = normalized(Vec3{light.direction.x + noise(rng), light.direction.y + noise(rng),
                                  light.direction.z + noise(rng)});
  return out;
}

// The same window applied to every raster; a directional light needs no
// adjustment under translation.
inline IntrinsicSet crop_sample(const IntrinsicSet& s, int x0, int y0, int w, int h) {
  IntrinsicSet out;
  out.image = crop(s.image, x0, y0, w, h);
  out.albedo = crop(s.albedo, x0, y0, w, h);
  out.normals = crop(s.normals, x0, y0, w, h);
  out.shading = crop(s.shading, x0, y0, w, h);
  out.visibility = crop(s.visibility, x0, y0, w, h);
  out.residual = crop(s.residual, x0, y0, w, h);
  out.light = s.light;
  return out;
}

inline IntrinsicSet random_crop(const IntrinsicSet& s, int w, int h, std::mt19937_64& rng) {
  if (w > s.image.width || h > s.image.height)
    throw DataError("random_crop: window larger than the frame");
  std::uniform_int_distribution<int> dx(0, s.image.width - w), dy(0, s.image.height - h);
  const int x0 = dx(rng);
  const int y0 = dy(rng);
  return crop_sample(s, x0, y0, w, h);
}

}  // namespace relight

#endif  // RELIGHT_AUGMENT_HPP
