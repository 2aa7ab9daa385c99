// Copyright (c) 2026 the relight authors.
// The relight source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#ifndef RELIGHT_IMAGE_HPP
#define RELIGHT_IMAGE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "relight/common.hpp"

namespace relight {

// Row-major, top-down, interleaved-channel raster of linear radiance.
// Values are nominally in [0,1]; under/over-shoot is allowed until an
// explicit clamp. Immutable by convention once a pipeline stage returns it.
struct RasterImage {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<float> data;

  RasterImage() = default;
  RasterImage(int w, int h, int c, float fill = 0.0f)
      : width(w), height(h), channels(c),
        data(static_cast<size_t>(w) * h * c, fill) {}

  float& at(int x, int y, int c) {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  float at(int x, int y, int c) const {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }

  size_t pixel_count() const { return static_cast<size_t>(width) * height; }
  bool same_shape(const RasterImage& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
};

inline void require_same_shape(const RasterImage& a, const RasterImage& b,
                               const char* where) {
  if (!a.same_shape(b))
    throw DataError(std::string(where) + ": shape mismatch (" +
                    std::to_string(a.width) + "x" + std::to_string(a.height) + "x" +
                    std::to_string(a.channels) + " vs " + std::to_string(b.width) + "x" +
                    std::to_string(b.height) + "x" + std::to_string(b.channels) + ")");
}

inline RasterImage clamp01(const RasterImage& img) {
  RasterImage out = img;
  for (float& v : out.data) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

enum class FlipAxis {
  Horizontal,  // mirror left/right (x reversed)
  Vertical,    // mirror top/bottom (y reversed)
};

inline RasterImage crop(const RasterImage& img, int x0, int y0, int w, int h) {
  if (x0 < 0 || y0 < 0 || w <= 0 || h <= 0 || x0 + w > img.width || y0 + h > img.height)
    throw DataError("crop: window " + std::to_string(w) + "x" + std::to_string(h) + "+" +
                    std::to_string(x0) + "+" + std::to_string(y0) + " outside " +
                    std::to_string(img.width) + "x" + std::to_string(img.height));
  RasterImage out(w, h, img.channels);
  const size_t row_bytes = static_cast<size_t>(w) * img.channels;
  for (int y = 0; y < h; ++y) {
    const float* src = &img.data[(static_cast<size_t>(y0 + y) * img.width + x0) * img.channels];
    std::copy(src, src + row_bytes, &out.data[static_cast<size_t>(y) * row_bytes]);
  }
  return out;
}

inline RasterImage flip(const RasterImage& img, FlipAxis axis) {
  RasterImage out(img.width, img.height, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const int sx = axis == FlipAxis::Horizontal ? img.width - 1 - x : x;
      const int sy = axis == FlipAxis::Vertical ? img.height - 1 - y : y;
      for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = img.at(sx, sy, c);
    }
  return out;
}

// IEC 61966-2-1 transfer function. Input is clamped to [0,1] internally.
inline float linear_to_srgb(float x) {
  x = std::clamp(x, 0.0f, 1.0f);
  return x <= 0.0031308f ? 12.92f * x
                         : 1.055f * std::pow(x, 1.0f / 2.4f) - 0.055f;
}

inline float srgb_to_linear(float x) {
  x = std::clamp(x, 0.0f, 1.0f);
  return x <= 0.04045f ? x / 12.92f
                       : std::pow((x + 0.055f) / 1.055f, 2.4f);
}

}  // namespace relight

#endif  // RELIGHT_IMAGE_HPP
