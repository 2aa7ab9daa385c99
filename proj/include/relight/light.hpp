// Copyright (c) 2026 the relight authors.
// The relight source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#ifndef RELIGHT_LIGHT_HPP
#define RELIGHT_LIGHT_HPP

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "relight/common.hpp"
#include "relight/image.hpp"
#include "relight/vec.hpp"

namespace relight {

// A single infinitely distant source. The direction is a unit vector in
// camera coordinates (right-handed, camera looks along -z, +x right, +y up)
// pointing from the surface toward the light; intensity is a nonnegative
// per-channel radiance scale.
struct DirectionalLight {
  Vec3 direction{0.0, 0.0, 1.0};
  Vec3 intensity{1.0, 1.0, 1.0};
};

struct LightSet {
  std::vector<int> ids;
  std::vector<DirectionalLight> lights;

  size_t size() const { return lights.size(); }
};

// Text format, one light per line: id dx dy dz ir ig ib
inline LightSet load_lights(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw FormatError(path + ": cannot open light set");
  LightSet set;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    std::string trimmed = line;
    trimmed.erase(0, trimmed.find_first_not_of(" \t\r"));
    if (trimmed.empty() || trimmed[0] == '#') continue;
    std::istringstream ss(trimmed);
    int id;
    double dx, dy, dz, ir, ig, ib;
    if (!(ss >> id >> dx >> dy >> dz >> ir >> ig >> ib))
      throw FormatError(path + ":" + std::to_string(lineno) + ": expected 'id dx dy dz ir ig ib'");
    Vec3 dir{dx, dy, dz};
    const double n = length(dir);
    if (n == 0.0)
      throw FormatError(path + ":" + std::to_string(lineno) + ": zero-length direction");
    if (ir < 0.0 || ig < 0.0 || ib < 0.0)
      throw FormatError(path + ":" + std::to_string(lineno) + ": negative intensity");
    set.ids.push_back(id);
    set.lights.push_back({dir / n, {ir, ig, ib}});
  }
  if (set.lights.empty()) throw FormatError(path + ": empty light set");
  for (size_t i = 0; i < set.ids.size(); ++i)
    for (size_t j = i + 1; j < set.ids.size(); ++j)
      if (set.ids[i] == set.ids[j])
        throw FormatError(path + ": duplicate light id " + std::to_string(set.ids[i]));
  return set;
}

inline std::string format_light_line(int id, const DirectionalLight& l) {
  std::ostringstream ss;
  ss << id << " " << std::setprecision(9) << l.direction.x << " " << l.direction.y << " "
     << l.direction.z << " " << l.intensity.x << " " << l.intensity.y << " " << l.intensity.z;
  return ss.str();
}

inline void save_lights(const LightSet& set, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw DataError("save_lights: cannot open '" + path + "' for writing");
  for (size_t i = 0; i < set.size(); ++i) f << format_light_line(set.ids[i], set.lights[i]) << "\n";
  if (!f) throw DataError("save_lights: write failed for '" + path + "'");
}

// Recovers a directional light from the specular highlight on a mirrored
// sphere, assuming an orthographic camera. The highlight is located as the
// intensity-weighted centroid of the top 0.1% brightest pixels inside the
// disc; the sphere normal there reflects the view direction onto the light.
inline DirectionalLight calibrate_from_sphere(const RasterImage& img, double center_x,
                                              double center_y, double radius,
                                              double reflectance = 1.0) {
  if (img.channels != 1 && img.channels != 3)
    throw DataError("calibrate_from_sphere: unsupported channel count");
  if (radius <= 0.0) throw DataError("calibrate_from_sphere: non-positive radius");
  if (center_x - radius < -0.5 || center_y - radius < -0.5 ||
      center_x + radius > img.width - 0.5 || center_y + radius > img.height - 0.5)
    throw DataError("calibrate_from_sphere: sphere disc extends outside the image");

  struct Px {
    double lum;
    int x, y;
  };
  std::vector<Px> inside;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const double dx = x - center_x, dy = y - center_y;
      if (dx * dx + dy * dy > radius * radius) continue;
      double lum = 0.0;
      for (int c = 0; c < img.channels; ++c) lum += img.at(x, y, c);
      lum /= img.channels;
      inside.push_back({lum, x, y});
    }
  if (inside.empty()) throw DataError("calibrate_from_sphere: empty disc");

  const size_t k = std::max<size_t>(1, static_cast<size_t>(std::llround(inside.size() * 0.001)));
  std::nth_element(inside.begin(), inside.begin() + (k - 1), inside.end(),
                   [](const Px& a, const Px& b) { return a.lum > b.lum; });
  double min_lum = inside[0].lum, max_lum = inside[0].lum;
  for (const Px& p : inside) {
    min_lum = std::min(min_lum, p.lum);
    max_lum = std::max(max_lum, p.lum);
  }
  if (max_lum <= min_lum)
    throw DataError("calibrate_from_sphere: disc is uniform, no unique top percentile");

  double wsum = 0.0, cx = 0.0, cy = 0.0;
  Vec3 mean_radiance{0, 0, 0};
  for (size_t i = 0; i < k; ++i) {
    const Px& p = inside[i];
    wsum += p.lum;
    cx += p.lum * p.x;
    cy += p.lum * p.y;
    for (int c = 0; c < 3; ++c)
      mean_radiance[c] += img.at(p.x, p.y, img.channels == 1 ? 0 : c);
  }
  if (wsum <= 0.0)
    throw DataError("calibrate_from_sphere: highlight has zero total intensity");
  cx /= wsum;
  cy /= wsum;
  mean_radiance = mean_radiance / double(k);

  // disc geometry -> sphere normal; image y grows downward, camera y upward
  const double nx = (cx - center_x) / radius;
  const double ny = -(cy - center_y) / radius;
  const double nxy2 = nx * nx + ny * ny;
  if (nxy2 > 1.0)
    throw DataError("calibrate_from_sphere: highlight centroid outside the disc");
  const Vec3 n{nx, ny, std::sqrt(1.0 - nxy2)};
  const Vec3 view{0.0, 0.0, 1.0};
  const Vec3 dir = normalized(reflect(view, n));
  return {dir, mean_radiance / reflectance};
}

}  // namespace relight

#endif  // RELIGHT_LIGHT_HPP
