// Copyright (c) 2026 the relight authors.
// The relight source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#ifndef RELIGHT_FORMATION_HPP
#define RELIGHT_FORMATION_HPP

#include "relight/common.hpp"
#include "relight/image.hpp"
#include "relight/light.hpp"

namespace relight {

// Image formation under one directional light:
//
//   L_o = (a * s + r) * v
//
// with s the half-cosine shading term. These kernels are shared between the
// synthetic oracle, the photometric-stereo residual extraction, and the
// learner's structured layers, so all three agree to the last bit.

// s_c = intensity_c * max(0, <n, l>); zero normals shade to zero.
template <class T>
inline void shade_pixel(const T* n, const T* light_dir, const T* light_intensity, T* s_out) {
  const T ndl = n[0] * light_dir[0] + n[1] * light_dir[1] + n[2] * light_dir[2];
  if (ndl > T(0)) {
    s_out[0] = light_intensity[0] * ndl;
    s_out[1] = light_intensity[1] * ndl;
    s_out[2] = light_intensity[2] * ndl;
  } else {
    s_out[0] = s_out[1] = s_out[2] = T(0);
  }
}

// Accumulates dL/dn given dL/ds. Subgradient at the clamp boundary is 0.
template <class T>
inline void shade_pixel_backward(const T* n, const T* light_dir, const T* light_intensity,
                                 const T* ds, T* dn_accum) {
  const T ndl = n[0] * light_dir[0] + n[1] * light_dir[1] + n[2] * light_dir[2];
  if (ndl > T(0)) {
    const T g = ds[0] * light_intensity[0] + ds[1] * light_intensity[1] + ds[2] * light_intensity[2];
    dn_accum[0] += g * light_dir[0];
    dn_accum[1] += g * light_dir[1];
    dn_accum[2] += g * light_dir[2];
  }
}

inline void light_as_floats(const DirectionalLight& light, float dir[3], float intensity[3]) {
  for (int i = 0; i < 3; ++i) {
    dir[i] = static_cast<float>(light.direction[i]);
    intensity[i] = static_cast<float>(light.intensity[i]);
  }
}

// Per-pixel half-cosine shading of a normal map.
inline RasterImage shading(const RasterImage& normals, const DirectionalLight& light) {
  if (normals.channels != 3) throw DataError("shading: normal map must have 3 channels");
  float ld[3], li[3];
  light_as_floats(light, ld, li);
  RasterImage s(normals.width, normals.height, 3);
  const size_t px = normals.pixel_count();
  for (size_t i = 0; i < px; ++i) shade_pixel(&normals.data[i * 3], ld, li, &s.data[i * 3]);
  return s;
}

// D = A ⊙ S
inline RasterImage diffuse_render(const RasterImage& albedo, const RasterImage& shading) {
  require_same_shape(albedo, shading, "diffuse_render");
  RasterImage d(albedo.width, albedo.height, albedo.channels);
  for (size_t i = 0; i < albedo.data.size(); ++i) d.data[i] = albedo.data[i] * shading.data[i];
  return d;
}

// L_o = (D + R) ⊙ V with a single-channel visibility mask broadcast over
// color channels. The residual may be negative; the output is not clamped.
inline RasterImage compose(const RasterImage& diffuse, const RasterImage& residual,
                           const RasterImage& visibility) {
  require_same_shape(diffuse, residual, "compose");
  if (visibility.width != diffuse.width || visibility.height != diffuse.height ||
      visibility.channels != 1)
    throw DataError("compose: visibility must be a single-channel mask of matching size");
  RasterImage out(diffuse.width, diffuse.height, diffuse.channels);
  const size_t px = diffuse.pixel_count();
  const int ch = diffuse.channels;
  for (size_t i = 0; i < px; ++i) {
    const float v = visibility.data[i];
    for (int c = 0; c < ch; ++c)
      out.data[i * ch + c] = (diffuse.data[i * ch + c] + residual.data[i * ch + c]) * v;
  }
  return out;
}

// Diffuse-only relighting; the reference baseline. Misses cast shadows and
// residual effects by construction.
inline RasterImage relight_diffuse(const RasterImage& albedo, const RasterImage& normals,
                                   const DirectionalLight& light_dst) {
  return diffuse_render(albedo, shading(normals, light_dst));
}

// Stage-wise intrinsic states for one frame, populated as the pipeline runs.
struct FormationBatch {
  RasterImage albedo, normals, shading, diffuse, residual, visibility, output;
  DirectionalLight light;
};

}  // namespace relight

#endif  // RELIGHT_FORMATION_HPP
