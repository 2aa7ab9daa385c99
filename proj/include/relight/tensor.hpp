// Copyright (c) 2026 the relight authors.
// The relight source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#ifndef RELIGHT_TENSOR_HPP
#define RELIGHT_TENSOR_HPP

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "relight/common.hpp"
#include "relight/image.hpp"

namespace relight {

// Dense NCHW tensor. The gradient slot lives in the autodiff graph, not here.
template <class T>
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<T> v;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_, T fill = T(0))
      : n(n_), c(c_), h(h_), w(w_),
        v(static_cast<size_t>(n_) * c_ * h_ * w_, fill) {}

  size_t size() const { return v.size(); }
  bool same_shape(const Tensor& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
  std::string shape_str() const {
    return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" +
           std::to_string(w);
  }

  size_t idx(int in, int ic, int iy, int ix) const {
    return ((static_cast<size_t>(in) * c + ic) * h + iy) * w + ix;
  }
  T& at(int in, int ic, int iy, int ix) { return v[idx(in, ic, iy, ix)]; }
  T at(int in, int ic, int iy, int ix) const { return v[idx(in, ic, iy, ix)]; }

  T* plane(int in, int ic) { return v.data() + (static_cast<size_t>(in) * c + ic) * h * w; }
  const T* plane(int in, int ic) const {
    return v.data() + (static_cast<size_t>(in) * c + ic) * h * w;
  }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out(n, c, h, w);
    for (size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<U>(v[i]);
    return out;
  }
};

// interleaved HxWxC raster -> planar 1xCxHxW tensor
template <class T>
Tensor<T> tensor_from_raster(const RasterImage& img) {
  Tensor<T> t(1, img.channels, img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        t.at(0, c, y, x) = static_cast<T>(img.at(x, y, c));
  return t;
}

template <class T>
RasterImage raster_from_tensor(const Tensor<T>& t, int sample = 0) {
  RasterImage img(t.w, t.h, t.c);
  for (int y = 0; y < t.h; ++y)
    for (int x = 0; x < t.w; ++x)
      for (int c = 0; c < t.c; ++c)
        img.at(x, y, c) = static_cast<float>(t.at(sample, c, y, x));
  return img;
}

template <class T>
void fill_normal(Tensor<T>& t, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (T& x : t.v) x = static_cast<T>(dist(rng));
}

}  // namespace relight

#endif  // RELIGHT_TENSOR_HPP
