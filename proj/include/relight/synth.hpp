// Copyright (c) 2026 the relight authors.
// The relight source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#ifndef RELIGHT_SYNTH_HPP
#define RELIGHT_SYNTH_HPP

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "relight/common.hpp"
#include "relight/formation.hpp"
#include "relight/image.hpp"
#include "relight/light.hpp"
#include "relight/vec.hpp"

namespace relight {

// ---------------------------------------------------------------------------
// Parametric scenes: spheres/ellipsoids over a backdrop plane, rendered under
// one directional light at a time with ray-traced hard shadows. This is the
// brute-force ground truth the rest of the pipeline is trained and verified
// against.
// ---------------------------------------------------------------------------

enum class TextureKind { Constant, Gradient, Checker };

struct ProceduralTexture {
  TextureKind kind = TextureKind::Constant;
  Vec3 color_a{0.5, 0.5, 0.5};
  Vec3 color_b{0.5, 0.5, 0.5};
  Vec3 gradient_dir{1.0, 0.0, 0.0};
  double gradient_lo = -2.0, gradient_hi = 2.0;
  double checker_scale = 1.0;
  Vec3 checker_offset{0.0, 0.0, 0.0};
  bool checker_swap = false;

  Vec3 eval(const Vec3& p) const {
    switch (kind) {
      case TextureKind::Constant:
        return color_a;
      case TextureKind::Gradient: {
        const double t =
            std::clamp((dot(p, gradient_dir) - gradient_lo) / (gradient_hi - gradient_lo), 0.0, 1.0);
        return color_a * (1.0 - t) + color_b * t;
      }
      case TextureKind::Checker: {
        const long long cells =
            static_cast<long long>(std::floor((p.x - checker_offset.x) * checker_scale)) +
            static_cast<long long>(std::floor((p.y - checker_offset.y) * checker_scale)) +
            static_cast<long long>(std::floor((p.z - checker_offset.z) * checker_scale));
        const bool odd = (cells & 1) != 0;
        return (odd != checker_swap) ? color_b : color_a;
      }
    }
    return color_a;
  }
};

struct Material {
  ProceduralTexture albedo;
  double specular_strength = 0.0;  // k_s >= 0
  double phong_exponent = 1.0;     // alpha >= 1
};

struct Primitive {
  Vec3 center{0, 0, 0};
  Vec3 radii{1, 1, 1};
  Mat3 rotation = Mat3::identity();  // world-from-local; may be improper after mirroring
  Material material;
};

// Backdrop plane z = const with normal +z, facing the camera.
struct GroundPlane {
  bool present = false;
  double z = 0.0;
  Material material;
};

struct OrthoCamera {
  int width = 128;
  int height = 128;
  double pixel_scale = 4.0 / 128;  // world units per pixel
  double z_origin = 100.0;
};

struct SceneSpec {
  std::vector<Primitive> primitives;
  GroundPlane plane;
  OrthoCamera camera;
  uint64_t seed = 0;
};

// Ground-truth intrinsics for one frame. The composition identity
// I = (A*S + R) * V holds bit-exactly: I is defined by composing the stored
// float layers with the shared formation kernels.
struct IntrinsicSet {
  RasterImage image, albedo, normals, shading, visibility, residual;
  DirectionalLight light;
};

namespace synth_detail {

struct Hit {
  double t = 0.0;
  Vec3 point;
  Vec3 normal;
  const Material* material = nullptr;
};

inline bool intersect_primitive(const Primitive& pr, const Vec3& o, const Vec3& d, double t_min,
                                double& t_out, Vec3* n_out) {
  // to unit-sphere space: q = S^-1 R^T (p - c)
  const Mat3 rt = pr.rotation.transposed();
  Vec3 ol = rt * (o - pr.center);
  Vec3 dl = rt * d;
  ol = {ol.x / pr.radii.x, ol.y / pr.radii.y, ol.z / pr.radii.z};
  dl = {dl.x / pr.radii.x, dl.y / pr.radii.y, dl.z / pr.radii.z};
  const double a = dot(dl, dl);
  const double b = 2.0 * dot(ol, dl);
  const double c = dot(ol, ol) - 1.0;
  const double disc = b * b - 4.0 * a * c;
  if (disc < 0.0) return false;
  const double sq = std::sqrt(disc);
  double t = (-b - sq) / (2.0 * a);
  if (t < t_min) t = (-b + sq) / (2.0 * a);
  if (t < t_min) return false;
  t_out = t;
  if (n_out) {
    const Vec3 q = ol + dl * t;
    const Vec3 grad = pr.rotation * Vec3{q.x / pr.radii.x, q.y / pr.radii.y, q.z / pr.radii.z};
    *n_out = normalized(grad);
  }
  return true;
}

inline std::optional<Hit> trace(const SceneSpec& scene, const Vec3& o, const Vec3& d,
                                double t_min) {
  std::optional<Hit> best;
  for (const Primitive& pr : scene.primitives) {
    double t;
    Vec3 n;
    if (intersect_primitive(pr, o, d, t_min, t, &n) && (!best || t < best->t)) {
      best = Hit{t, o + d * t, n, &pr.material};
    }
  }
  if (scene.plane.present && d.z != 0.0) {
    const double t = (scene.plane.z - o.z) / d.z;
    if (t >= t_min && (!best || t < best->t)) {
      best = Hit{t, o + d * t, Vec3{0, 0, 1}, &scene.plane.material};
    }
  }
  return best;
}

inline bool occluded(const SceneSpec& scene, const Vec3& p, const Vec3& dir) {
  // fixed offset avoids self-intersection at desk resolution
  const Vec3 o = p + dir * 1e-4;
  for (const Primitive& pr : scene.primitives) {
    double t;
    if (intersect_primitive(pr, o, dir, 0.0, t, nullptr)) return true;
  }
  if (scene.plane.present && dir.z != 0.0) {
    const double t = (scene.plane.z - o.z) / dir.z;
    if (t >= 0.0) return true;
  }
  return false;
}

}  // namespace synth_detail

// World position of a pixel center on the camera plane. Image y grows
// downward; camera y grows upward.
inline Vec3 pixel_origin(const OrthoCamera& cam, int px, int py) {
  return {(px + 0.5 - cam.width / 2.0) * cam.pixel_scale,
          -(py + 0.5 - cam.height / 2.0) * cam.pixel_scale, cam.z_origin};
}

// One-light-at-a-time ground truth render with per-pixel intrinsics.
inline IntrinsicSet render_olat(const SceneSpec& scene, const DirectionalLight& light) {
  const int w = scene.camera.width, h = scene.camera.height;
  IntrinsicSet out;
  out.light = light;
  out.albedo = RasterImage(w, h, 3);
  out.normals = RasterImage(w, h, 3);
  out.visibility = RasterImage(w, h, 1);
  out.residual = RasterImage(w, h, 3);

  const Vec3 l = light.direction;
  const Vec3 view{0, 0, 1};
  const Vec3 down{0, 0, -1};

  parallel_for(0, h, [&](int py) {
    for (int px = 0; px < w; ++px) {
      const Vec3 o = pixel_origin(scene.camera, px, py);
      const auto hit = synth_detail::trace(scene, o, down, 0.0);
      if (!hit) continue;  // background stays zero

      const Vec3 a = hit->material->albedo.eval(hit->point);
      for (int c = 0; c < 3; ++c) {
        out.albedo.at(px, py, c) = static_cast<float>(std::clamp(a[c], 0.0, 1.0));
        out.normals.at(px, py, c) = static_cast<float>(hit->normal[c]);
      }
      out.visibility.at(px, py, 0) = synth_detail::occluded(scene, hit->point, l) ? 0.0f : 1.0f;

      if (hit->material->specular_strength > 0.0) {
        const Vec3 r = reflect(l, hit->normal);
        const double rv = dot(r, view);
        if (rv > 0.0) {
          const double spec =
              hit->material->specular_strength * std::pow(rv, hit->material->phong_exponent);
          for (int c = 0; c < 3; ++c)
            out.residual.at(px, py, c) = static_cast<float>(light.intensity[c] * spec);
        }
      }
    }
  });

  // the stored layers compose to the image through the shared float kernels
  out.shading = shading(out.normals, light);
  out.image = compose(diffuse_render(out.albedo, out.shading), out.residual, out.visibility);
  return out;
}

// max |I - (A*S + R)*V| over all pixels; 0 for oracle output by construction
inline double eq7_residual(const IntrinsicSet& s) {
  const RasterImage recon = compose(diffuse_render(s.albedo, s.shading), s.residual, s.visibility);
  double m = 0.0;
  for (size_t i = 0; i < recon.data.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(recon.data[i]) - s.image.data[i]));
  return m;
}

// 32 white unit lights on an upper-hemisphere spiral (golden-angle ladder),
// ordered from grazing to frontal.
inline LightSet standard_rig(int count = 32) {
  LightSet set;
  const double golden = M_PI * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < count; ++i) {
    // z in (0.15, 0.95]: stays clear of both the horizon and the exact pole
    const double z = 0.15 + (0.8 * (i + 0.5)) / count;
    const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * i;
    set.ids.push_back(i);
    set.lights.push_back({{rho * std::cos(phi), rho * std::sin(phi), z}, {1.0, 1.0, 1.0}});
  }
  return set;
}

// Deterministic pseudo-random scene: 2-5 primitives over a checkered or
// graded backdrop, with the first sphere placed to throw a cast shadow onto
// the plane under the oblique rig lights.
inline SceneSpec build_scene(uint64_t seed, int width = 128, int height = 128) {
  std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + 0x2545f4914f6cdd1dULL);
  auto uni = [&](double lo, double hi) {
    return lo + (hi - lo) * std::generate_canonical<double, 53>(rng);
  };
  auto pick_color = [&](double lo, double hi) { return Vec3{uni(lo, hi), uni(lo, hi), uni(lo, hi)}; };

  auto pick_texture = [&](bool rich) {
    ProceduralTexture tex;
    const double r = uni(0.0, 1.0);
    if (!rich || r < 0.3) {
      tex.kind = TextureKind::Constant;
      tex.color_a = pick_color(0.25, 0.9);
    } else if (r < 0.65) {
      tex.kind = TextureKind::Gradient;
      tex.color_a = pick_color(0.15, 0.9);
      tex.color_b = pick_color(0.15, 0.9);
      const double ang = uni(0.0, 2.0 * M_PI);
      tex.gradient_dir = {std::cos(ang), std::sin(ang), 0.0};
      tex.gradient_lo = -2.0;
      tex.gradient_hi = 2.0;
    } else {
      tex.kind = TextureKind::Checker;
      tex.color_a = pick_color(0.2, 0.9);
      tex.color_b = pick_color(0.2, 0.9);
      tex.checker_scale = uni(0.6, 1.8);
      tex.checker_offset = {uni(0.01, 0.37), uni(0.01, 0.37), uni(0.01, 0.37)};
    }
    return tex;
  };

  SceneSpec scene;
  scene.seed = seed;
  scene.camera.width = width;
  scene.camera.height = height;
  scene.camera.pixel_scale = 4.0 / width;

  scene.plane.present = true;
  scene.plane.z = 0.0;
  scene.plane.material.albedo = pick_texture(true);
  scene.plane.material.specular_strength = 0.0;

  const int count = 2 + static_cast<int>(uni(0.0, 1.0) * 4.0) % 4;  // 2..5
  for (int i = 0; i < count; ++i) {
    Primitive pr;
    if (i == 0) {
      // principal occluder: centered and high enough to cast visible shadows
      pr.center = {uni(-0.5, 0.5), uni(-0.5, 0.5), uni(1.4, 2.2)};
      pr.radii = Vec3{1, 1, 1} * uni(0.5, 0.8);
    } else {
      pr.center = {uni(-1.5, 1.5), uni(-1.5, 1.5), uni(0.5, 2.4)};
      pr.radii = Vec3{1, 1, 1} * uni(0.3, 0.7);
    }
    if (uni(0.0, 1.0) < 0.4) {
      pr.radii = {pr.radii.x * uni(0.6, 1.4), pr.radii.y * uni(0.6, 1.4),
                  pr.radii.z * uni(0.6, 1.4)};
      pr.rotation = rotation_xyz(uni(0.0, M_PI), uni(0.0, M_PI), uni(0.0, M_PI));
    }
    pr.material.albedo = pick_texture(true);
    pr.material.specular_strength = uni(0.15, 0.6);
    pr.material.phong_exponent = uni(6.0, 60.0);
    scene.primitives.push_back(pr);
  }
  return scene;
}

// Mirrors a scene about the camera axis so that rendering the mirrored scene
// under the mirrored light equals flipping the rendered frame.
inline SceneSpec mirror_scene(const SceneSpec& scene, FlipAxis axis) {
  const int ax = axis == FlipAxis::Horizontal ? 0 : 1;
  Mat3 m = Mat3::identity();
  m(ax, ax) = -1.0;

  auto mirror_texture = [&](ProceduralTexture tex) {
    switch (tex.kind) {
      case TextureKind::Constant:
        break;
      case TextureKind::Gradient:
        tex.gradient_dir[ax] = -tex.gradient_dir[ax];
        break;
      case TextureKind::Checker:
        // floor(-u) = -floor(u) - 1 a.e., so the cell parity flips
        tex.checker_offset[ax] = -tex.checker_offset[ax];
        tex.checker_swap = !tex.checker_swap;
        break;
    }
    return tex;
  };

  SceneSpec out = scene;
  for (Primitive& pr : out.primitives) {
    pr.center[ax] = -pr.center[ax];
    pr.rotation = m * pr.rotation;
    pr.material.albedo = mirror_texture(pr.material.albedo);
  }
  out.plane.material.albedo = mirror_texture(out.plane.material.albedo);
  return out;
}

inline DirectionalLight mirror_light(const DirectionalLight& light, FlipAxis axis) {
  DirectionalLight out = light;
  if (axis == FlipAxis::Horizontal)
    out.direction.x = -out.direction.x;
  else
    out.direction.y = -out.direction.y;
  return out;
}

}  // namespace relight

#endif  // RELIGHT_SYNTH_HPP
