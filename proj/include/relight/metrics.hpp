// Copyright (c) 2026 the relight authors.
// The relight source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#ifndef RELIGHT_METRICS_HPP
#define RELIGHT_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "relight/common.hpp"
#include "relight/image.hpp"

namespace relight {

enum class Metric { L1, L2, DSSIM, MSDSSIM };

inline const char* metric_name(Metric m) {
  switch (m) {
    case Metric::L1: return "l1";
    case Metric::L2: return "l2";
    case Metric::DSSIM: return "dssim";
    case Metric::MSDSSIM: return "msdssim";
  }
  return "?";
}

inline Metric metric_from_string(const std::string& s) {
  if (s == "l1") return Metric::L1;
  if (s == "l2") return Metric::L2;
  if (s == "dssim") return Metric::DSSIM;
  if (s == "msdssim") return Metric::MSDSSIM;
  throw DataError("unknown metric '" + s + "' (expected l1|l2|dssim|msdssim)");
}

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double data_range = 1.0;
};

namespace metrics_detail {

template <class T>
inline T clamp01v(T v) {
  return v < T(0) ? T(0) : (v > T(1) ? T(1) : v);
}

template <class T>
std::vector<T> gaussian_kernel(int n, double sigma) {
  std::vector<T> k(n);
  const double c = (n - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = i - c;
    const double v = std::exp(-d * d / (2.0 * sigma * sigma));
    k[i] = static_cast<T>(v);
    sum += v;
  }
  for (int i = 0; i < n; ++i) k[i] = static_cast<T>(k[i] / sum);
  return k;
}

// valid correlation along rows: out is (w-n+1) x h
template <class T>
void conv_rows_valid(const T* in, int w, int h, const std::vector<T>& k, T* out) {
  const int n = static_cast<int>(k.size());
  const int vw = w - n + 1;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < vw; ++x) {
      T acc = T(0);
      const T* row = in + static_cast<size_t>(y) * w + x;
      for (int i = 0; i < n; ++i) acc += k[i] * row[i];
      out[static_cast<size_t>(y) * vw + x] = acc;
    }
}

// valid correlation along columns: out is w x (h-n+1)
template <class T>
void conv_cols_valid(const T* in, int w, int h, const std::vector<T>& k, T* out) {
  const int n = static_cast<int>(k.size());
  const int vh = h - n + 1;
  for (int y = 0; y < vh; ++y)
    for (int x = 0; x < w; ++x) {
      T acc = T(0);
      for (int i = 0; i < n; ++i) acc += k[i] * in[static_cast<size_t>(y + i) * w + x];
      out[static_cast<size_t>(y) * w + x] = acc;
    }
}

// adjoint of the valid correlation: zero-padded full convolution, rows
template <class T>
void conv_rows_full(const T* in, int vw, int vh, const std::vector<T>& k, T* out) {
  const int n = static_cast<int>(k.size());
  const int w = vw + n - 1;
  std::fill(out, out + static_cast<size_t>(w) * vh, T(0));
  for (int y = 0; y < vh; ++y)
    for (int x = 0; x < vw; ++x) {
      const T v = in[static_cast<size_t>(y) * vw + x];
      if (v == T(0)) continue;
      T* row = out + static_cast<size_t>(y) * w + x;
      for (int i = 0; i < n; ++i) row[i] += k[i] * v;
    }
}

template <class T>
void conv_cols_full(const T* in, int w, int vh, const std::vector<T>& k, T* out) {
  const int n = static_cast<int>(k.size());
  const int h = vh + n - 1;
  std::fill(out, out + static_cast<size_t>(w) * h, T(0));
  for (int y = 0; y < vh; ++y)
    for (int x = 0; x < w; ++x) {
      const T v = in[static_cast<size_t>(y) * w + x];
      if (v == T(0)) continue;
      for (int i = 0; i < n; ++i) out[static_cast<size_t>(y + i) * w + x] += k[i] * v;
    }
}

// Gaussian-windowed local statistics of two planes, on the valid grid.
// Second moments are kept raw; variances are formed later in double, where
// float products are exact.
template <class T>
struct SsimFields {
  int vw = 0, vh = 0;
  std::vector<T> mu_x, mu_y, xx, yy, xy;
};

template <class T>
void window_filter(const T* plane, int w, int h, const std::vector<T>& k, std::vector<T>& tmp,
                   T* out) {
  const int vw = w - static_cast<int>(k.size()) + 1;
  tmp.resize(static_cast<size_t>(vw) * h);
  conv_rows_valid(plane, w, h, k, tmp.data());
  conv_cols_valid(tmp.data(), vw, h, k, out);
}

template <class T>
SsimFields<T> compute_fields(const T* xa, const T* xb, int w, int h, const std::vector<T>& k) {
  const int n = static_cast<int>(k.size());
  SsimFields<T> f;
  f.vw = w - n + 1;
  f.vh = h - n + 1;
  const size_t vn = static_cast<size_t>(f.vw) * f.vh;
  const size_t full = static_cast<size_t>(w) * h;
  f.mu_x.resize(vn);
  f.mu_y.resize(vn);
  f.xx.resize(vn);
  f.yy.resize(vn);
  f.xy.resize(vn);
  std::vector<T> tmp, prod(full);
  window_filter(xa, w, h, k, tmp, f.mu_x.data());
  window_filter(xb, w, h, k, tmp, f.mu_y.data());
  for (size_t i = 0; i < full; ++i) prod[i] = xa[i] * xa[i];
  window_filter(prod.data(), w, h, k, tmp, f.xx.data());
  for (size_t i = 0; i < full; ++i) prod[i] = xb[i] * xb[i];
  window_filter(prod.data(), w, h, k, tmp, f.yy.data());
  for (size_t i = 0; i < full; ++i) prod[i] = xa[i] * xb[i];
  window_filter(prod.data(), w, h, k, tmp, f.xy.data());
  return f;
}

// Scatters the three per-window coefficient fields back to the pixel grid:
//   grad(q) = sum_p w(q-p) [alpha(p) + beta(p) y_q + gamma(p) x_q]
// which is the exact adjoint of the windowed statistics.
template <class T>
void scatter_window_grad(const std::vector<T>& alpha, const std::vector<T>& beta,
                         const std::vector<T>& gamma, const T* xa, const T* xb, int w, int h,
                         const std::vector<T>& k, T* grad_out) {
  const int n = static_cast<int>(k.size());
  const int vw = w - n + 1, vh = h - n + 1;
  const size_t full = static_cast<size_t>(w) * h;
  std::vector<T> tmp(static_cast<size_t>(w) * vh), field(full);

  auto full_conv = [&](const std::vector<T>& f, std::vector<T>& out) {
    conv_rows_full(f.data(), vw, vh, k, tmp.data());
    out.resize(full);
    conv_cols_full(tmp.data(), w, vh, k, out.data());
  };

  std::vector<T> ca, cb, cg;
  full_conv(alpha, ca);
  full_conv(beta, cb);
  full_conv(gamma, cg);
  for (size_t i = 0; i < full; ++i) grad_out[i] += ca[i] + xb[i] * cb[i] + xa[i] * cg[i];
}

struct SsimTerms {
  double c1, c2;
  explicit SsimTerms(const SsimParams& p)
      : c1(p.k1 * p.data_range * p.k1 * p.data_range),
        c2(p.k2 * p.data_range * p.k2 * p.data_range) {}
};

// Per-window factors, in double: float products are exact there, which makes
// S == 1 hold bitwise for identical inputs independent of FMA contraction.
template <class T>
struct WindowFactors {
  double a1, a2, b1, b2, s;
  WindowFactors(const SsimFields<T>& f, size_t i, const SsimTerms& t) {
    const double mx = f.mu_x[i], my = f.mu_y[i];
    const double sxx = static_cast<double>(f.xx[i]) - mx * mx;
    const double syy = static_cast<double>(f.yy[i]) - my * my;
    const double sxy = static_cast<double>(f.xy[i]) - mx * my;
    a1 = 2.0 * mx * my + t.c1;
    a2 = 2.0 * sxy + t.c2;
    b1 = mx * mx + my * my + t.c1;
    b2 = sxx + syy + t.c2;
    s = (a1 * a2) / (b1 * b2);
  }
};

// mean of the full SSIM map over the valid grid, plus optional per-window map
template <class T>
double ssim_plane_mean(const SsimFields<T>& f, const SsimParams& p, T* map_out = nullptr) {
  const SsimTerms t(p);
  double acc = 0.0;
  const size_t vn = f.mu_x.size();
  for (size_t i = 0; i < vn; ++i) {
    const WindowFactors<T> wf(f, i, t);
    if (map_out) map_out[i] = static_cast<T>(wf.s);
    acc += wf.s;
  }
  return acc / static_cast<double>(vn);
}

// d(mean SSIM)/dx for one plane, accumulated into grad_out (unscaled by
// channel count; caller divides). xa, xb must be the clamped planes.
template <class T>
void ssim_plane_grad(const SsimFields<T>& f, const T* xa, const T* xb, int w, int h,
                     const std::vector<T>& k, const SsimParams& p, T* grad_out) {
  const SsimTerms t(p);
  const size_t vn = f.mu_x.size();
  const double inv_n = 1.0 / static_cast<double>(vn);
  std::vector<T> alpha(vn), beta(vn), gamma(vn);
  for (size_t i = 0; i < vn; ++i) {
    const WindowFactors<T> wf(f, i, t);
    const double mx = f.mu_x[i], my = f.mu_y[i];
    const double d = wf.b1 * wf.b2;
    const double t2 = 2.0 * wf.a1 / d;   // coefficient of (y_q - mu_y)
    const double t3 = -2.0 * wf.s / wf.b2;  // coefficient of (x_q - mu_x)
    const double t1 = 2.0 * my * wf.a2 / d - 2.0 * wf.s * mx / wf.b1;
    alpha[i] = static_cast<T>((t1 - t2 * my - t3 * mx) * inv_n);
    beta[i] = static_cast<T>(t2 * inv_n);
    gamma[i] = static_cast<T>(t3 * inv_n);
  }
  scatter_window_grad(alpha, beta, gamma, xa, xb, w, h, k, grad_out);
}

// contrast-structure factor cs = (2 sxy + C2) / (sxx + syy + C2)
template <class T>
double cs_plane_mean(const SsimFields<T>& f, const SsimParams& p) {
  const SsimTerms t(p);
  double acc = 0.0;
  for (size_t i = 0; i < f.xy.size(); ++i) {
    const WindowFactors<T> wf(f, i, t);
    acc += wf.a2 / wf.b2;
  }
  return acc / static_cast<double>(f.xy.size());
}

template <class T>
void cs_plane_grad(const SsimFields<T>& f, const T* xa, const T* xb, int w, int h,
                   const std::vector<T>& k, const SsimParams& p, double scale, T* grad_out) {
  const SsimTerms t(p);
  const size_t vn = f.xy.size();
  const double inv_n = scale / static_cast<double>(vn);
  std::vector<T> alpha(vn), beta(vn), gamma(vn);
  for (size_t i = 0; i < vn; ++i) {
    const WindowFactors<T> wf(f, i, t);
    const double cs = wf.a2 / wf.b2;
    const double t2 = 2.0 / wf.b2;
    const double t3 = -2.0 * cs / wf.b2;
    alpha[i] = static_cast<T>((-t2 * f.mu_y[i] - t3 * f.mu_x[i]) * inv_n);
    beta[i] = static_cast<T>(t2 * inv_n);
    gamma[i] = static_cast<T>(t3 * inv_n);
  }
  scatter_window_grad(alpha, beta, gamma, xa, xb, w, h, k, grad_out);
}

// luminance factor l = (2 mu_x mu_y + C1) / (mu_x^2 + mu_y^2 + C1)
template <class T>
double lum_plane_mean(const SsimFields<T>& f, const SsimParams& p) {
  const SsimTerms t(p);
  double acc = 0.0;
  for (size_t i = 0; i < f.mu_x.size(); ++i) {
    const WindowFactors<T> wf(f, i, t);
    acc += wf.a1 / wf.b1;
  }
  return acc / static_cast<double>(f.mu_x.size());
}

template <class T>
void lum_plane_grad(const SsimFields<T>& f, const T* xa, const T* xb, int w, int h,
                    const std::vector<T>& k, const SsimParams& p, double scale, T* grad_out) {
  const SsimTerms t(p);
  const size_t vn = f.mu_x.size();
  const double inv_n = scale / static_cast<double>(vn);
  std::vector<T> alpha(vn), beta(vn, T(0)), gamma(vn, T(0));
  for (size_t i = 0; i < vn; ++i) {
    const WindowFactors<T> wf(f, i, t);
    const double mx = f.mu_x[i], my = f.mu_y[i];
    const double l = wf.a1 / wf.b1;
    alpha[i] = static_cast<T>((2.0 * (my - l * mx) / wf.b1) * inv_n);
  }
  scatter_window_grad(alpha, beta, gamma, xa, xb, w, h, k, grad_out);
}

template <class T>
void avgpool2_plane(const std::vector<T>& in, int w, int h, std::vector<T>& out, int& ow,
                    int& oh) {
  ow = w / 2;
  oh = h / 2;
  out.resize(static_cast<size_t>(ow) * oh);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x)
      out[static_cast<size_t>(y) * ow + x] =
          (in[static_cast<size_t>(2 * y) * w + 2 * x] + in[static_cast<size_t>(2 * y) * w + 2 * x + 1] +
           in[static_cast<size_t>(2 * y + 1) * w + 2 * x] +
           in[static_cast<size_t>(2 * y + 1) * w + 2 * x + 1]) /
          T(4);
}

// adjoint of avgpool2; trailing odd row/column receives zero gradient
template <class T>
void avgpool2_plane_adjoint(const std::vector<T>& gout, int ow, int oh, int w, int h,
                            std::vector<T>& gin) {
  gin.assign(static_cast<size_t>(w) * h, T(0));
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      const T g = gout[static_cast<size_t>(y) * ow + x] / T(4);
      gin[static_cast<size_t>(2 * y) * w + 2 * x] += g;
      gin[static_cast<size_t>(2 * y) * w + 2 * x + 1] += g;
      gin[static_cast<size_t>(2 * y + 1) * w + 2 * x] += g;
      gin[static_cast<size_t>(2 * y + 1) * w + 2 * x + 1] += g;
    }
}

// Canonical exponents; the published constants sum to 1.0001, so they are
// renormalized to sum to exactly 1.
inline const double* ms_ssim_weights() {
  static const double w[5] = {0.0448 / 1.0001, 0.2856 / 1.0001, 0.3001 / 1.0001,
                              0.2363 / 1.0001, 0.1333 / 1.0001};
  return w;
}

template <class T>
std::vector<T> deinterleave(const T* data, int w, int h, int ch, int c, bool clamp) {
  std::vector<T> plane(static_cast<size_t>(w) * h);
  for (size_t i = 0; i < plane.size(); ++i) {
    const T v = data[i * ch + c];
    plane[i] = clamp ? clamp01v(v) : v;
  }
  return plane;
}

inline int ms_scale_count(int w, int h, int window, int max_scales) {
  int scales = 0;
  int mw = w, mh = h;
  while (scales < max_scales && mw >= window && mh >= window) {
    ++scales;
    mw /= 2;
    mh /= 2;
  }
  return scales;
}

}  // namespace metrics_detail

// ---------------------------------------------------------------------------
// Pointer-level API, usable at float (pipeline) and double (gradient audits).
// Inputs are clamped to [0,1] internally; gradients are taken with respect to
// the first argument and are zero where it lies outside [0,1].
// ---------------------------------------------------------------------------

template <class T>
double l1_value(const T* a, const T* b, size_t n) {
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i)
    acc += std::abs(static_cast<double>(metrics_detail::clamp01v(a[i])) -
                    static_cast<double>(metrics_detail::clamp01v(b[i])));
  return acc / static_cast<double>(n);
}

template <class T>
void l1_grad(const T* a, const T* b, size_t n, T* grad) {
  const T inv = static_cast<T>(1.0 / static_cast<double>(n));
  for (size_t i = 0; i < n; ++i) {
    if (a[i] < T(0) || a[i] > T(1)) {
      grad[i] = T(0);
      continue;
    }
    const T d = metrics_detail::clamp01v(a[i]) - metrics_detail::clamp01v(b[i]);
    grad[i] = d > T(0) ? inv : (d < T(0) ? -inv : T(0));  // subgradient 0 at ties
  }
}

template <class T>
double l2_value(const T* a, const T* b, size_t n) {
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(metrics_detail::clamp01v(a[i])) -
                     static_cast<double>(metrics_detail::clamp01v(b[i]));
    acc += d * d;
  }
  return acc / static_cast<double>(n);
}

template <class T>
void l2_grad(const T* a, const T* b, size_t n, T* grad) {
  const T inv = static_cast<T>(2.0 / static_cast<double>(n));
  for (size_t i = 0; i < n; ++i) {
    if (a[i] < T(0) || a[i] > T(1)) {
      grad[i] = T(0);
      continue;
    }
    grad[i] = inv * (metrics_detail::clamp01v(a[i]) - metrics_detail::clamp01v(b[i]));
  }
}

template <class T>
double dssim_value(const T* a, const T* b, int w, int h, int ch, const SsimParams& p = {}) {
  if (w < p.window || h < p.window)
    throw DataError("dssim: image smaller than the " + std::to_string(p.window) + "x" +
                    std::to_string(p.window) + " window");
  const auto k = metrics_detail::gaussian_kernel<T>(p.window, p.sigma);
  double mean_ssim = 0.0;
  for (int c = 0; c < ch; ++c) {
    const auto xa = metrics_detail::deinterleave(a, w, h, ch, c, true);
    const auto xb = metrics_detail::deinterleave(b, w, h, ch, c, true);
    const auto f = metrics_detail::compute_fields(xa.data(), xb.data(), w, h, k);
    mean_ssim += metrics_detail::ssim_plane_mean(f, p);
  }
  return (1.0 - mean_ssim / ch) / 2.0;
}

template <class T>
void dssim_grad(const T* a, const T* b, int w, int h, int ch, T* grad, const SsimParams& p = {}) {
  if (w < p.window || h < p.window) throw DataError("dssim: image smaller than the window");
  const auto k = metrics_detail::gaussian_kernel<T>(p.window, p.sigma);
  const size_t full = static_cast<size_t>(w) * h;
  std::fill(grad, grad + full * ch, T(0));
  std::vector<T> plane_grad(full);
  for (int c = 0; c < ch; ++c) {
    const auto xa = metrics_detail::deinterleave(a, w, h, ch, c, true);
    const auto xb = metrics_detail::deinterleave(b, w, h, ch, c, true);
    const auto f = metrics_detail::compute_fields(xa.data(), xb.data(), w, h, k);
    std::fill(plane_grad.begin(), plane_grad.end(), T(0));
    metrics_detail::ssim_plane_grad(f, xa.data(), xb.data(), w, h, k, p, plane_grad.data());
    // dssim = (1 - mean_c mean_p S) / 2
    const T scale = static_cast<T>(-0.5 / ch);
    for (size_t i = 0; i < full; ++i) {
      const T v = a[i * ch + c];
      grad[i * ch + c] = (v < T(0) || v > T(1)) ? T(0) : scale * plane_grad[i];
    }
  }
}

struct MsDssimResult {
  double value = 0.0;
  int scales = 0;
  bool reduced = false;  // true when the image was too small for 5 scales
};

template <class T>
MsDssimResult ms_dssim_full(const T* a, const T* b, int w, int h, int ch,
                            const SsimParams& p = {}) {
  const int scales = metrics_detail::ms_scale_count(w, h, p.window, 5);
  if (scales < 1)
    throw DataError("ms_dssim: image smaller than the window at every scale");
  const double* wts_raw = metrics_detail::ms_ssim_weights();
  std::vector<double> wts(wts_raw, wts_raw + scales);
  double wsum = 0.0;
  for (double v : wts) wsum += v;
  for (double& v : wts) v /= wsum;

  const auto k = metrics_detail::gaussian_kernel<T>(p.window, p.sigma);
  double ms = 1.0;
  for (int c = 0; c < ch; ++c) {
    auto xa = metrics_detail::deinterleave(a, w, h, ch, c, true);
    auto xb = metrics_detail::deinterleave(b, w, h, ch, c, true);
    int cw = w, chh = h;
    double prod = 1.0;
    for (int s = 0; s < scales; ++s) {
      const auto f = metrics_detail::compute_fields(xa.data(), xb.data(), cw, chh, k);
      double cs = metrics_detail::cs_plane_mean(f, p);
      cs = std::max(0.0, cs);  // keep fractional powers real
      prod *= std::pow(cs, wts[s]);
      if (s == scales - 1) {
        const double lum = metrics_detail::lum_plane_mean(f, p);
        prod *= std::pow(std::max(0.0, lum), wts[s]);
      } else {
        int ow, oh;
        std::vector<T> da, db;
        metrics_detail::avgpool2_plane(xa, cw, chh, da, ow, oh);
        metrics_detail::avgpool2_plane(xb, cw, chh, db, ow, oh);
        xa.swap(da);
        xb.swap(db);
        cw = ow;
        chh = oh;
      }
    }
    ms += (prod - 1.0) / ch;  // running mean over channels, exact at identity
  }
  MsDssimResult r;
  r.scales = scales;
  r.reduced = scales < 5;
  r.value = (1.0 - ms) / 2.0;
  return r;
}

template <class T>
double ms_dssim_value(const T* a, const T* b, int w, int h, int ch, const SsimParams& p = {}) {
  return ms_dssim_full(a, b, w, h, ch, p).value;
}

template <class T>
void ms_dssim_grad(const T* a, const T* b, int w, int h, int ch, T* grad,
                   const SsimParams& p = {}) {
  const int scales = metrics_detail::ms_scale_count(w, h, p.window, 5);
  if (scales < 1) throw DataError("ms_dssim: image smaller than the window at every scale");
  const double* wts_raw = metrics_detail::ms_ssim_weights();
  std::vector<double> wts(wts_raw, wts_raw + scales);
  double wsum = 0.0;
  for (double v : wts) wsum += v;
  for (double& v : wts) v /= wsum;

  const auto k = metrics_detail::gaussian_kernel<T>(p.window, p.sigma);
  const size_t full = static_cast<size_t>(w) * h;
  std::fill(grad, grad + full * ch, T(0));

  for (int c = 0; c < ch; ++c) {
    // forward pyramid, keeping every level
    std::vector<std::vector<T>> pa, pb;
    std::vector<int> ws, hs;
    pa.push_back(metrics_detail::deinterleave(a, w, h, ch, c, true));
    pb.push_back(metrics_detail::deinterleave(b, w, h, ch, c, true));
    ws.push_back(w);
    hs.push_back(h);
    for (int s = 1; s < scales; ++s) {
      int ow, oh;
      std::vector<T> da, db;
      metrics_detail::avgpool2_plane(pa.back(), ws.back(), hs.back(), da, ow, oh);
      metrics_detail::avgpool2_plane(pb.back(), ws.back(), hs.back(), db, ow, oh);
      pa.push_back(std::move(da));
      pb.push_back(std::move(db));
      ws.push_back(ow);
      hs.push_back(oh);
    }

    std::vector<metrics_detail::SsimFields<T>> fields(scales);
    std::vector<double> cs_means(scales);
    double lum_mean = 0.0;
    double prod = 1.0;
    for (int s = 0; s < scales; ++s) {
      fields[s] = metrics_detail::compute_fields(pa[s].data(), pb[s].data(), ws[s], hs[s], k);
      cs_means[s] = std::max(0.0, metrics_detail::cs_plane_mean(fields[s], p));
      prod *= std::pow(cs_means[s], wts[s]);
    }
    lum_mean = std::max(0.0, metrics_detail::lum_plane_mean(fields[scales - 1], p));
    prod *= std::pow(lum_mean, wts[scales - 1]);

    // dP/dx = P (w_s/term) dterm/dx, back-chained through the pyramid
    for (int s = 0; s < scales; ++s) {
      std::vector<T> level_grad(static_cast<size_t>(ws[s]) * hs[s], T(0));
      bool any = false;
      if (cs_means[s] > 1e-12) {
        metrics_detail::cs_plane_grad(fields[s], pa[s].data(), pb[s].data(), ws[s], hs[s], k, p,
                                      prod * wts[s] / cs_means[s], level_grad.data());
        any = true;
      }
      if (s == scales - 1 && lum_mean > 1e-12) {
        metrics_detail::lum_plane_grad(fields[s], pa[s].data(), pb[s].data(), ws[s], hs[s], k, p,
                                       prod * wts[s] / lum_mean, level_grad.data());
        any = true;
      }
      if (!any) continue;
      for (int up = s; up > 0; --up) {
        std::vector<T> gin;
        metrics_detail::avgpool2_plane_adjoint(level_grad, ws[up], hs[up], ws[up - 1], hs[up - 1],
                                               gin);
        level_grad.swap(gin);
      }
      const T scale = static_cast<T>(-0.5 / ch);  // through (1 - mean P)/2
      for (size_t i = 0; i < full; ++i) {
        const T v = a[i * ch + c];
        if (v < T(0) || v > T(1)) continue;
        grad[i * ch + c] += scale * level_grad[i];
      }
    }
  }
}

// ---------------------------------------------------------------------------
// RasterImage API
// ---------------------------------------------------------------------------

inline double l1(const RasterImage& a, const RasterImage& b) {
  require_same_shape(a, b, "l1");
  return l1_value(a.data.data(), b.data.data(), a.data.size());
}

inline double l2(const RasterImage& a, const RasterImage& b) {
  require_same_shape(a, b, "l2");
  return l2_value(a.data.data(), b.data.data(), a.data.size());
}

// Channel-averaged SSIM map over valid window positions; the result is
// (w-window+1) x (h-window+1), single channel.
inline RasterImage ssim_map(const RasterImage& a, const RasterImage& b,
                            const SsimParams& p = {}) {
  require_same_shape(a, b, "ssim_map");
  if (a.width < p.window || a.height < p.window)
    throw DataError("ssim_map: image smaller than the window");
  const auto k = metrics_detail::gaussian_kernel<float>(p.window, p.sigma);
  RasterImage map(a.width - p.window + 1, a.height - p.window + 1, 1, 0.0f);
  std::vector<float> chan_map(map.pixel_count());
  for (int c = 0; c < a.channels; ++c) {
    const auto xa = metrics_detail::deinterleave(a.data.data(), a.width, a.height, a.channels, c, true);
    const auto xb = metrics_detail::deinterleave(b.data.data(), a.width, a.height, a.channels, c, true);
    const auto f = metrics_detail::compute_fields(xa.data(), xb.data(), a.width, a.height, k);
    metrics_detail::ssim_plane_mean(f, p, chan_map.data());
    for (size_t i = 0; i < chan_map.size(); ++i) map.data[i] += chan_map[i] / a.channels;
  }
  return map;
}

inline double dssim(const RasterImage& a, const RasterImage& b, const SsimParams& p = {}) {
  require_same_shape(a, b, "dssim");
  return dssim_value(a.data.data(), b.data.data(), a.width, a.height, a.channels, p);
}

inline MsDssimResult ms_dssim_result(const RasterImage& a, const RasterImage& b,
                                     const SsimParams& p = {}) {
  require_same_shape(a, b, "ms_dssim");
  return ms_dssim_full(a.data.data(), b.data.data(), a.width, a.height, a.channels, p);
}

inline double ms_dssim(const RasterImage& a, const RasterImage& b, const SsimParams& p = {}) {
  return ms_dssim_result(a, b, p).value;
}

inline double metric_value(Metric m, const RasterImage& a, const RasterImage& b) {
  switch (m) {
    case Metric::L1: return l1(a, b);
    case Metric::L2: return l2(a, b);
    case Metric::DSSIM: return dssim(a, b);
    case Metric::MSDSSIM: return ms_dssim(a, b);
  }
  throw DataError("metric_value: unsupported metric");
}

// d metric / d a
inline RasterImage metric_grad(Metric m, const RasterImage& a, const RasterImage& b) {
  require_same_shape(a, b, "metric_grad");
  RasterImage g(a.width, a.height, a.channels);
  switch (m) {
    case Metric::L1:
      l1_grad(a.data.data(), b.data.data(), a.data.size(), g.data.data());
      break;
    case Metric::L2:
      l2_grad(a.data.data(), b.data.data(), a.data.size(), g.data.data());
      break;
    case Metric::DSSIM:
      dssim_grad(a.data.data(), b.data.data(), a.width, a.height, a.channels, g.data.data());
      break;
    case Metric::MSDSSIM:
      ms_dssim_grad(a.data.data(), b.data.data(), a.width, a.height, a.channels, g.data.data());
      break;
  }
  return g;
}

}  // namespace relight

#endif  // RELIGHT_METRICS_HPP
