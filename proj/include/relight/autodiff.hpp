// Copyright (c) 2026 the relight authors.
// The relight source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#ifndef RELIGHT_AUTODIFF_HPP
#define RELIGHT_AUTODIFF_HPP

#include <cmath>
#include <functional>
#include <vector>


#include "relight/common.hpp"
#include "relight/formation.hpp"
#include "relight/light.hpp"
#include "relight/metrics.hpp"
#include "relight/tensor.hpp"

namespace relight {

// Reverse-mode autodiff over NCHW tensors. Nodes are appended in topological
// order; each op registers a lambda that accumulates vector-Jacobian products
// into its parents. Instantiated at float for training and at double for the
// finite-difference audits.
template <class T>
class Graph {
 public:

  struct Node {
    Tensor<T> val;
    Tensor<T> grad;  // allocated on demand during backward
    std::function<void(Graph&, int)> back;
    bool needs_grad = false;
  };

  // When enabled, masked ops (clamps, rectifiers, metric clamping) append
  // their activation patterns here; the gradient audit uses them to discard
  // finite-difference samples that cross a kink.
  bool capture_masks = false;
  std::vector<std::vector<uint8_t>> masks;

  int leaf(Tensor<T> v, bool needs_grad) {
    nodes_.push_back(Node{std::move(v), {}, nullptr, needs_grad});
    return static_cast<int>(nodes_.size()) - 1;
  }

  int constant(Tensor<T> v) { return leaf(std::move(v), false); }

  const Tensor<T>& value(int id) const { return nodes_[id].val; }
  const Tensor<T>& grad(int id) const { return nodes_[id].grad; }
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }
  size_t node_count() const { return nodes_.size(); }

  // ---- elementwise ----

  int add(int a, int b) {
    check_same(a, b, "add");
    Tensor<T> out = nodes_[a].val;
    const Tensor<T>& vb = nodes_[b].val;
    for (size_t i = 0; i < out.size(); ++i) out.v[i] += vb.v[i];
    return emit(std::move(out), {a, b}, [a, b](Graph& g, int self) {
      const Tensor<T>& go = g.nodes_[self].grad;
      if (g.nodes_[a].needs_grad) {
        Tensor<T>& ga = g.ensure_grad(a);
        for (size_t i = 0; i < go.size(); ++i) ga.v[i] += go.v[i];
      }
      if (g.nodes_[b].needs_grad) {
        Tensor<T>& gb = g.ensure_grad(b);
        for (size_t i = 0; i < go.size(); ++i) gb.v[i] += go.v[i];
      }
    });
  }

  int mul(int a, int b) {
    check_same(a, b, "mul");
    Tensor<T> out = nodes_[a].val;
    const Tensor<T>& vb = nodes_[b].val;
    for (size_t i = 0; i < out.size(); ++i) out.v[i] *= vb.v[i];
    return emit(std::move(out), {a, b}, [a, b](Graph& g, int self) {
      const Tensor<T>& go = g.nodes_[self].grad;
      const Tensor<T>& va = g.nodes_[a].val;
      const Tensor<T>& vb2 = g.nodes_[b].val;
      if (g.nodes_[a].needs_grad) {
        Tensor<T>& ga = g.ensure_grad(a);
        for (size_t i = 0; i < go.size(); ++i) ga.v[i] += go.v[i] * vb2.v[i];
      }
      if (g.nodes_[b].needs_grad) {
        Tensor<T>& gb = g.ensure_grad(b);
        for (size_t i = 0; i < go.size(); ++i) gb.v[i] += go.v[i] * va.v[i];
      }
    });
  }

  int scale(int a, T s) {
    Tensor<T> out = nodes_[a].val;
    for (T& x : out.v) x *= s;
    return emit(std::move(out), {a}, [a, s](Graph& g, int self) {
      if (!g.nodes_[a].needs_grad) return;
      const Tensor<T>& go = g.nodes_[self].grad;
      Tensor<T>& ga = g.ensure_grad(a);
      for (size_t i = 0; i < go.size(); ++i) ga.v[i] += s * go.v[i];
    });
  }

  int add_scalar(int a, T s) {
    Tensor<T> out = nodes_[a].val;
    for (T& x : out.v) x += s;
    return emit(std::move(out), {a}, [a](Graph& g, int self) {
      if (!g.nodes_[a].needs_grad) return;
      const Tensor<T>& go = g.nodes_[self].grad;
      Tensor<T>& ga = g.ensure_grad(a);
      for (size_t i = 0; i < go.size(); ++i) ga.v[i] += go.v[i];
    });
  }

  // (N,C,H,W) * (N,1,H,W), mask broadcast over channels
  int mul_broadcast_c(int a, int m) {
    const Tensor<T>& va = nodes_[a].val;
    const Tensor<T>& vm = nodes_[m].val;
    if (vm.c != 1 || vm.n != va.n || vm.h != va.h || vm.w != va.w)
      throw DataError("mul_broadcast_c: mask must be (N,1,H,W) matching " + va.shape_str());
    Tensor<T> out = va;
    const size_t hw = static_cast<size_t>(va.h) * va.w;
    for (int in = 0; in < va.n; ++in)
      for (int ic = 0; ic < va.c; ++ic) {
        T* o = out.plane(in, ic);
        const T* mk = vm.plane(in, 0);
        for (size_t i = 0; i < hw; ++i) o[i] *= mk[i];
      }
    return emit(std::move(out), {a, m}, [a, m, hw](Graph& g, int self) {
      const Tensor<T>& go = g.nodes_[self].grad;
      const Tensor<T>& va2 = g.nodes_[a].val;
      const Tensor<T>& vm2 = g.nodes_[m].val;
      if (g.nodes_[a].needs_grad) {
        Tensor<T>& ga = g.ensure_grad(a);
        for (int in = 0; in < va2.n; ++in)
          for (int ic = 0; ic < va2.c; ++ic) {
            T* gap = ga.plane(in, ic);
            const T* gop = go.plane(in, ic);
            const T* mk = vm2.plane(in, 0);
            for (size_t i = 0; i < hw; ++i) gap[i] += gop[i] * mk[i];
          }
      }
      if (g.nodes_[m].needs_grad) {
        Tensor<T>& gm = g.ensure_grad(m);
        for (int in = 0; in < va2.n; ++in) {
          T* gmp = gm.plane(in, 0);
          for (int ic = 0; ic < va2.c; ++ic) {
            const T* gop = go.plane(in, ic);
            const T* ap = va2.plane(in, ic);
            for (size_t i = 0; i < hw; ++i) gmp[i] += gop[i] * ap[i];
          }
        }
      }
    });
  }

  // ---- activations ----

  int leaky_relu(int a, T slope) {
    const Tensor<T>& va = nodes_[a].val;
    Tensor<T> out = va;
    std::vector<uint8_t> mask;
    if (capture_masks) mask.resize(out.size());
    for (size_t i = 0; i < out.size(); ++i) {
      const bool pos = out.v[i] > T(0);
      if (!pos) out.v[i] *= slope;
      if (capture_masks) mask[i] = pos;
    }
    if (capture_masks) masks.push_back(std::move(mask));
    return emit(std::move(out), {a}, [a, slope](Graph& g, int self) {
      if (!g.nodes_[a].needs_grad) return;
      const Tensor<T>& go = g.nodes_[self].grad;
      const Tensor<T>& va2 = g.nodes_[a].val;
      Tensor<T>& ga = g.ensure_grad(a);
      for (size_t i = 0; i < go.size(); ++i)
        ga.v[i] += go.v[i] * (va2.v[i] > T(0) ? T(1) : slope);
    });
  }

  int sigmoid(int a) {
    Tensor<T> out = nodes_[a].val;
    for (T& x : out.v) x = T(1) / (T(1) + std::exp(-x));
    return emit(std::move(out), {a}, [a](Graph& g, int self) {
      if (!g.nodes_[a].needs_grad) return;
      const Tensor<T>& go = g.nodes_[self].grad;
      const Tensor<T>& y = g.nodes_[self].val;
      Tensor<T>& ga = g.ensure_grad(a);
      for (size_t i = 0; i < go.size(); ++i) ga.v[i] += go.v[i] * y.v[i] * (T(1) - y.v[i]);
    });
  }

  int clamp01(int a) {
    const Tensor<T>& va = nodes_[a].val;
    Tensor<T> out = va;
    std::vector<uint8_t> mask;
    if (capture_masks) mask.resize(out.size());
    for (size_t i = 0; i < out.size(); ++i) {
      const bool inside = out.v[i] >= T(0) && out.v[i] <= T(1);
      out.v[i] = std::min(T(1), std::max(T(0), out.v[i]));
      if (capture_masks) mask[i] = inside;
    }
    if (capture_masks) masks.push_back(std::move(mask));
    return emit(std::move(out), {a}, [a](Graph& g, int self) {
      if (!g.nodes_[a].needs_grad) return;
      const Tensor<T>& go = g.nodes_[self].grad;
      const Tensor<T>& va2 = g.nodes_[a].val;
      Tensor<T>& ga = g.ensure_grad(a);
      for (size_t i = 0; i < go.size(); ++i)
        if (va2.v[i] >= T(0) && va2.v[i] <= T(1)) ga.v[i] += go.v[i];
    });
  }

  // ---- shape ops ----

  int concat(int a, int b) {
    const Tensor<T>& va = nodes_[a].val;
    const Tensor<T>& vb = nodes_[b].val;
    if (va.n != vb.n || va.h != vb.h || va.w != vb.w)
      throw DataError("concat: " + va.shape_str() + " vs " + vb.shape_str());
    Tensor<T> out(va.n, va.c + vb.c, va.h, va.w);
    const size_t hw = static_cast<size_t>(va.h) * va.w;
    for (int in = 0; in < va.n; ++in) {
      for (int ic = 0; ic < va.c; ++ic)
        std::copy(va.plane(in, ic), va.plane(in, ic) + hw, out.plane(in, ic));
      for (int ic = 0; ic < vb.c; ++ic)
        std::copy(vb.plane(in, ic), vb.plane(in, ic) + hw, out.plane(in, va.c + ic));
    }
    const int ca = va.c;
    return emit(std::move(out), {a, b}, [a, b, ca, hw](Graph& g, int self) {
      const Tensor<T>& go = g.nodes_[self].grad;
      if (g.nodes_[a].needs_grad) {
        Tensor<T>& ga = g.ensure_grad(a);
        for (int in = 0; in < ga.n; ++in)
          for (int ic = 0; ic < ga.c; ++ic) {
            const T* src = go.plane(in, ic);
            T* dst = ga.plane(in, ic);
            for (size_t i = 0; i < hw; ++i) dst[i] += src[i];
          }
      }
      if (g.nodes_[b].needs_grad) {
        Tensor<T>& gb = g.ensure_grad(b);
        for (int in = 0; in < gb.n; ++in)
          for (int ic = 0; ic < gb.c; ++ic) {
            const T* src = go.plane(in, ca + ic);
            T* dst = gb.plane(in, ic);
            for (size_t i = 0; i < hw; ++i) dst[i] += src[i];
          }
      }
    });
  }

  int avgpool2(int a) {
    const Tensor<T>& va = nodes_[a].val;
    const int oh = va.h / 2, ow = va.w / 2;
    if (oh < 1 || ow < 1) throw DataError("avgpool2: input too small " + va.shape_str());
    Tensor<T> out(va.n, va.c, oh, ow);
    for (int in = 0; in < va.n; ++in)
      for (int ic = 0; ic < va.c; ++ic) {
        const T* src = va.plane(in, ic);
        T* dst = out.plane(in, ic);
        for (int y = 0; y < oh; ++y)
          for (int x = 0; x < ow; ++x)
            dst[y * ow + x] = (src[(2 * y) * va.w + 2 * x] + src[(2 * y) * va.w + 2 * x + 1] +
                               src[(2 * y + 1) * va.w + 2 * x] +
                               src[(2 * y + 1) * va.w + 2 * x + 1]) /
                              T(4);
      }
    return emit(std::move(out), {a}, [a, oh, ow](Graph& g, int self) {
      if (!g.nodes_[a].needs_grad) return;
      const Tensor<T>& go = g.nodes_[self].grad;
      Tensor<T>& ga = g.ensure_grad(a);
      for (int in = 0; in < ga.n; ++in)
        for (int ic = 0; ic < ga.c; ++ic) {
          const T* src = go.plane(in, ic);
          T* dst = ga.plane(in, ic);
          for (int y = 0; y < oh; ++y)
            for (int x = 0; x < ow; ++x) {
              const T gq = src[y * ow + x] / T(4);
              dst[(2 * y) * ga.w + 2 * x] += gq;
              dst[(2 * y) * ga.w + 2 * x + 1] += gq;
              dst[(2 * y + 1) * ga.w + 2 * x] += gq;
              dst[(2 * y + 1) * ga.w + 2 * x + 1] += gq;
            }
        }
    });
  }

  int upsample2(int a) {  // nearest neighbor
    const Tensor<T>& va = nodes_[a].val;
    Tensor<T> out(va.n, va.c, va.h * 2, va.w * 2);
    for (int in = 0; in < va.n; ++in)
      for (int ic = 0; ic < va.c; ++ic) {
        const T* src = va.plane(in, ic);
        T* dst = out.plane(in, ic);
        for (int y = 0; y < out.h; ++y)
          for (int x = 0; x < out.w; ++x)
            dst[y * out.w + x] = src[(y / 2) * va.w + x / 2];
      }
    return emit(std::move(out), {a}, [a](Graph& g, int self) {
      if (!g.nodes_[a].needs_grad) return;
      const Tensor<T>& go = g.nodes_[self].grad;
      Tensor<T>& ga = g.ensure_grad(a);
      for (int in = 0; in < ga.n; ++in)
        for (int ic = 0; ic < ga.c; ++ic) {
          const T* src = go.plane(in, ic);
          T* dst = ga.plane(in, ic);
          for (int y = 0; y < go.h; ++y)
            for (int x = 0; x < go.w; ++x)
              dst[(y / 2) * ga.w + x / 2] += src[y * go.w + x];
        }
    });
  }

  // constant per-channel values broadcast over the spatial grid (how light
  // directions enter the network)
  int broadcast_const_channels(const std::vector<std::vector<T>>& per_sample_channels, int h,
                               int w) {
    const int n = static_cast<int>(per_sample_channels.size());
    const int c = static_cast<int>(per_sample_channels.front().size());
    Tensor<T> out(n, c, h, w);
    for (int in = 0; in < n; ++in)
      for (int ic = 0; ic < c; ++ic) {
        T* dst = out.plane(in, ic);
        std::fill(dst, dst + static_cast<size_t>(h) * w, per_sample_channels[in][ic]);
      }
    return constant(std::move(out));
  }

  // spatial broadcast of a (N,C,1,1) node; backward reduces over the grid
  int broadcast_hw(int a, int h, int w) {
    const Tensor<T>& va = nodes_[a].val;
    if (va.h != 1 || va.w != 1) throw DataError("broadcast_hw: expected (N,C,1,1)");
    Tensor<T> out(va.n, va.c, h, w);
    for (int in = 0; in < va.n; ++in)
      for (int ic = 0; ic < va.c; ++ic) {
        T* dst = out.plane(in, ic);
        std::fill(dst, dst + static_cast<size_t>(h) * w, va.at(in, ic, 0, 0));
      }
    return emit(std::move(out), {a}, [a](Graph& g, int self) {
      if (!g.nodes_[a].needs_grad) return;
      const Tensor<T>& go = g.nodes_[self].grad;
      Tensor<T>& ga = g.ensure_grad(a);
      const size_t hw = static_cast<size_t>(go.h) * go.w;
      for (int in = 0; in < go.n; ++in)
        for (int ic = 0; ic < go.c; ++ic) {
          const T* src = go.plane(in, ic);
          T acc = T(0);
          for (size_t i = 0; i < hw; ++i) acc += src[i];
          ga.at(in, ic, 0, 0) += acc;
        }
    });
  }

  // per-pixel L2 normalization across channels: y = x / sqrt(|x|^2 + eps)
  int channel_l2_normalize(int a, T eps = T(1e-12)) {
    const Tensor<T>& va = nodes_[a].val;
    Tensor<T> out(va.n, va.c, va.h, va.w);
    const size_t hw = static_cast<size_t>(va.h) * va.w;
    for (int in = 0; in < va.n; ++in)
      for (size_t i = 0; i < hw; ++i) {
        T s = T(0);
        for (int ic = 0; ic < va.c; ++ic) {
          const T x = va.plane(in, ic)[i];
          s += x * x;
        }
        const T r = T(1) / std::sqrt(s + eps);
        for (int ic = 0; ic < va.c; ++ic) out.plane(in, ic)[i] = va.plane(in, ic)[i] * r;
      }
    return emit(std::move(out), {a}, [a, eps, hw](Graph& g, int self) {
      if (!g.nodes_[a].needs_grad) return;
      const Tensor<T>& go = g.nodes_[self].grad;
      const Tensor<T>& va2 = g.nodes_[a].val;
      Tensor<T>& ga = g.ensure_grad(a);
      for (int in = 0; in < va2.n; ++in)
        for (size_t i = 0; i < hw; ++i) {
          T s = T(0), xg = T(0);
          for (int ic = 0; ic < va2.c; ++ic) {
            const T x = va2.plane(in, ic)[i];
            s += x * x;
            xg += x * go.plane(in, ic)[i];
          }
          const T r = T(1) / std::sqrt(s + eps);
          const T r3 = r * r * r;
          for (int ic = 0; ic < va2.c; ++ic) {
            const T x = va2.plane(in, ic)[i];
            ga.plane(in, ic)[i] += r * go.plane(in, ic)[i] - r3 * x * xg;
          }
        }
    });
  }

  // ---- convolution ----

  // 'same' 3x3 (or kh x kw) convolution, stride 1, zero padding, optional
  // channel groups. weight: (Cout, Cin/groups, kh, kw); bias: (1, Cout, 1, 1).
  int conv2d(int x, int weight, int bias, int groups = 1) {
    const Tensor<T>& vx = nodes_[x].val;
    const Tensor<T>& vw = nodes_[weight].val;
    const Tensor<T>& vb = nodes_[bias].val;
    const int cout = vw.n, cin_g = vw.c, kh = vw.h, kw = vw.w;
    if (kh % 2 == 0 || kw % 2 == 0)
      throw DataError("conv2d: kernel dimensions must be odd for 'same' padding");
    if (vx.c != cin_g * groups)
      throw DataError("conv2d: input channels " + std::to_string(vx.c) + " != " +
                      std::to_string(cin_g) + "*" + std::to_string(groups));
    if (cout % groups != 0) throw DataError("conv2d: out channels not divisible by groups");
    if (vb.c != cout || vb.n != 1 || vb.h != 1 || vb.w != 1)
      throw DataError("conv2d: bias must be (1,Cout,1,1)");

    Tensor<T> out(vx.n, cout, vx.h, vx.w);
    conv_forward(vx, vw, vb, groups, out);
    return emit(std::move(out), {x, weight, bias},
                [x, weight, bias, groups](Graph& g, int self) {
                  g.conv_backward(x, weight, bias, groups, self);
                });
  }

  // half-cosine shading of a predicted normal map under per-sample lights;
  // shares the formation kernels with the oracle renderer
  int shading_op(int normals, const std::vector<DirectionalLight>& lights) {
    const Tensor<T>& vn = nodes_[normals].val;
    if (vn.c != 3) throw DataError("shading_op: normals must have 3 channels");
    if (static_cast<int>(lights.size()) != vn.n)
      throw DataError("shading_op: one light per batch sample required");
    Tensor<T> out(vn.n, 3, vn.h, vn.w);
    const size_t hw = static_cast<size_t>(vn.h) * vn.w;
    std::vector<uint8_t> mask;
    if (capture_masks) mask.resize(static_cast<size_t>(vn.n) * hw);
    for (int in = 0; in < vn.n; ++in) {
      T ld[3], li[3];
      for (int k = 0; k < 3; ++k) {
        ld[k] = static_cast<T>(lights[in].direction[k]);
        li[k] = static_cast<T>(lights[in].intensity[k]);
      }
      const T* n0 = vn.plane(in, 0);
      const T* n1 = vn.plane(in, 1);
      const T* n2 = vn.plane(in, 2);
      T* s0 = out.plane(in, 0);
      T* s1 = out.plane(in, 1);
      T* s2 = out.plane(in, 2);
      for (size_t i = 0; i < hw; ++i) {
        const T nvec[3] = {n0[i], n1[i], n2[i]};
        T svec[3];
        shade_pixel(nvec, ld, li, svec);
        s0[i] = svec[0];
        s1[i] = svec[1];
        s2[i] = svec[2];
        if (capture_masks)
          mask[in * hw + i] = (nvec[0] * ld[0] + nvec[1] * ld[1] + nvec[2] * ld[2]) > T(0);
      }
    }
    if (capture_masks) masks.push_back(std::move(mask));
    return emit(std::move(out), {normals}, [normals, lights, hw](Graph& g, int self) {
      if (!g.nodes_[normals].needs_grad) return;
      const Tensor<T>& go = g.nodes_[self].grad;
      const Tensor<T>& vn2 = g.nodes_[normals].val;
      Tensor<T>& gn = g.ensure_grad(normals);
      for (int in = 0; in < vn2.n; ++in) {
        T ld[3], li[3];
        for (int k = 0; k < 3; ++k) {
          ld[k] = static_cast<T>(lights[in].direction[k]);
          li[k] = static_cast<T>(lights[in].intensity[k]);
        }
        for (size_t i = 0; i < hw; ++i) {
          const T nvec[3] = {vn2.plane(in, 0)[i], vn2.plane(in, 1)[i], vn2.plane(in, 2)[i]};
          const T ds[3] = {go.plane(in, 0)[i], go.plane(in, 1)[i], go.plane(in, 2)[i]};
          T dn[3] = {T(0), T(0), T(0)};
          shade_pixel_backward(nvec, ld, li, ds, dn);
          gn.plane(in, 0)[i] += dn[0];
          gn.plane(in, 1)[i] += dn[1];
          gn.plane(in, 2)[i] += dn[2];
        }
      }
    });
  }

  // ---- losses (scalar nodes, shape 1x1x1x1) ----

  // Spec'd image metric, averaged over batch samples. The metric clamps its
  // inputs to [0,1] internally; the backward applies the matching mask.
  int metric_loss(Metric m, int pred, const Tensor<T>& target) {
    if (!nodes_[pred].val.same_shape(target))
      throw DataError("metric_loss: prediction " + nodes_[pred].val.shape_str() + " vs target " +
                      target.shape_str());
    const int tgt = constant(target);  // appending may reallocate: bind references after
    const Tensor<T>& vp = nodes_[pred].val;
    double acc = 0.0;
    std::vector<T> pa, pb;
    for (int in = 0; in < vp.n; ++in) {
      to_interleaved(vp, in, pa);
      to_interleaved(nodes_[tgt].val, in, pb);
      acc += metric_value_ptr(m, pa.data(), pb.data(), vp.w, vp.h, vp.c);
    }
    if (capture_masks) {
      std::vector<uint8_t> mask(vp.size());
      for (size_t i = 0; i < vp.size(); ++i) mask[i] = vp.v[i] >= T(0) && vp.v[i] <= T(1);
      masks.push_back(std::move(mask));
    }
    Tensor<T> out(1, 1, 1, 1, static_cast<T>(acc / vp.n));
    return emit(std::move(out), {pred, tgt}, [m, pred, tgt](Graph& g, int self) {
      if (!g.nodes_[pred].needs_grad) return;
      const Tensor<T>& vp2 = g.nodes_[pred].val;
      const Tensor<T>& vt = g.nodes_[tgt].val;
      const T seed = g.nodes_[self].grad.v[0];
      Tensor<T>& gp = g.ensure_grad(pred);
      std::vector<T> pa, pb, pg(static_cast<size_t>(vp2.c) * vp2.h * vp2.w);
      const T inv_n = T(1) / T(vp2.n);
      for (int in = 0; in < vp2.n; ++in) {
        to_interleaved(vp2, in, pa);
        to_interleaved(vt, in, pb);
        metric_grad_ptr(m, pa.data(), pb.data(), vp2.w, vp2.h, vp2.c, pg.data());
        add_interleaved(gp, in, pg, seed * inv_n);
      }
    });
  }

  // unclamped mean-squared error (vector targets such as normals)
  int mse_loss(int pred, const Tensor<T>& target) {
    if (!nodes_[pred].val.same_shape(target)) throw DataError("mse_loss: shape mismatch");
    const int tgt = constant(target);
    const Tensor<T>& vp = nodes_[pred].val;
    double acc = 0.0;
    for (size_t i = 0; i < vp.size(); ++i) {
      const double d = static_cast<double>(vp.v[i]) - static_cast<double>(nodes_[tgt].val.v[i]);
      acc += d * d;
    }
    Tensor<T> out(1, 1, 1, 1, static_cast<T>(acc / vp.size()));
    return emit(std::move(out), {pred, tgt}, [pred, tgt](Graph& g, int self) {
      if (!g.nodes_[pred].needs_grad) return;
      const Tensor<T>& vp2 = g.nodes_[pred].val;
      const Tensor<T>& vt = g.nodes_[tgt].val;
      const T seed = g.nodes_[self].grad.v[0];
      Tensor<T>& gp = g.ensure_grad(pred);
      const T k = seed * T(2) / T(vp2.size());
      for (size_t i = 0; i < vp2.size(); ++i) gp.v[i] += k * (vp2.v[i] - vt.v[i]);
    });
  }

  // unclamped mean absolute error
  int mae_loss(int pred, const Tensor<T>& target) {
    if (!nodes_[pred].val.same_shape(target)) throw DataError("mae_loss: shape mismatch");
    const int tgt = constant(target);
    const Tensor<T>& vp = nodes_[pred].val;
    double acc = 0.0;
    std::vector<uint8_t> mask;
    if (capture_masks) mask.resize(vp.size());
    for (size_t i = 0; i < vp.size(); ++i) {
      const double d = static_cast<double>(vp.v[i]) - static_cast<double>(nodes_[tgt].val.v[i]);
      acc += std::abs(d);
      if (capture_masks) mask[i] = d > 0 ? 2 : (d < 0 ? 1 : 0);
    }
    if (capture_masks) masks.push_back(std::move(mask));
    Tensor<T> out(1, 1, 1, 1, static_cast<T>(acc / vp.size()));
    return emit(std::move(out), {pred, tgt}, [pred, tgt](Graph& g, int self) {
      if (!g.nodes_[pred].needs_grad) return;
      const Tensor<T>& vp2 = g.nodes_[pred].val;
      const Tensor<T>& vt = g.nodes_[tgt].val;
      const T seed = g.nodes_[self].grad.v[0];
      Tensor<T>& gp = g.ensure_grad(pred);
      const T k = seed / T(vp2.size());
      for (size_t i = 0; i < vp2.size(); ++i) {
        const T d = vp2.v[i] - vt.v[i];
        gp.v[i] += d > T(0) ? k : (d < T(0) ? -k : T(0));
      }
    });
  }

  // scalar projection sum_i x_i k_i against a fixed tensor; the gradient
  // audit uses it to reduce any op output to a checkable scalar
  int inner_const(int x, const Tensor<T>& k) {
    if (!nodes_[x].val.same_shape(k)) throw DataError("inner_const: shape mismatch");
    const int kn = constant(k);  // appending may reallocate: bind references after
    const Tensor<T>& vx = nodes_[x].val;
    T acc = T(0);
    for (size_t i = 0; i < vx.size(); ++i) acc += vx.v[i] * nodes_[kn].val.v[i];
    Tensor<T> out(1, 1, 1, 1, acc);
    return emit(std::move(out), {x, kn}, [x, kn](Graph& g, int self) {
      if (!g.nodes_[x].needs_grad) return;
      const T seed = g.nodes_[self].grad.v[0];
      const Tensor<T>& kv = g.nodes_[kn].val;
      Tensor<T>& gx = g.ensure_grad(x);
      for (size_t i = 0; i < gx.size(); ++i) gx.v[i] += seed * kv.v[i];
    });
  }

  // total = sum_i weights[i] * scalars[i]
  int weighted_sum(const std::vector<std::pair<int, T>>& terms) {
    if (terms.empty()) throw DataError("weighted_sum: no terms");
    T acc = T(0);
    for (const auto& [id, w] : terms) {
      const Tensor<T>& v = nodes_[id].val;
      if (v.size() != 1) throw DataError("weighted_sum: non-scalar term");
      acc += w * v.v[0];
    }
    Tensor<T> out(1, 1, 1, 1, acc);
    std::vector<int> parents;
    for (const auto& [id, w] : terms) parents.push_back(id);
    return emit(std::move(out), parents, [terms](Graph& g, int self) {
      const T seed = g.nodes_[self].grad.v[0];
      for (const auto& [id, w] : terms) {
        if (!g.nodes_[id].needs_grad) continue;
        g.ensure_grad(id).v[0] += seed * w;
      }
    });
  }

  // ---- execution ----

  void backward(int root) {
    if (nodes_[root].val.size() != 1)
      throw DataError("backward: root must be a scalar node");
    ensure_grad(root).v[0] = T(1);
    for (int i = root; i >= 0; --i) {
      Node& nd = nodes_[i];
      if (nd.back && nd.grad.size() > 0) nd.back(*this, i);
    }
  }

  Tensor<T>& ensure_grad(int id) {
    Node& nd = nodes_[id];
    if (nd.grad.size() == 0) {
      const Tensor<T>& v = nd.val;
      nd.grad = Tensor<T>(v.n, v.c, v.h, v.w, T(0));
    }
    return nd.grad;
  }

 private:
  std::vector<Node> nodes_;

  int emit(Tensor<T> val, const std::vector<int>& parents,
           std::function<void(Graph&, int)> back) {
    bool ng = false;
    for (int p : parents) ng |= nodes_[p].needs_grad;
    nodes_.push_back(Node{std::move(val), {}, ng ? std::move(back) : nullptr, ng});
    return static_cast<int>(nodes_.size()) - 1;
  }

  void check_same(int a, int b, const char* where) {
    if (!nodes_[a].val.same_shape(nodes_[b].val))
      throw DataError(std::string(where) + ": " + nodes_[a].val.shape_str() + " vs " +
                      nodes_[b].val.shape_str());
  }

  static double metric_value_ptr(Metric m, const T* a, const T* b, int w, int h, int c) {
    switch (m) {
      case Metric::L1: return l1_value(a, b, static_cast<size_t>(w) * h * c);
      case Metric::L2: return l2_value(a, b, static_cast<size_t>(w) * h * c);
      case Metric::DSSIM: return dssim_value(a, b, w, h, c);
      case Metric::MSDSSIM: return ms_dssim_value(a, b, w, h, c);
    }
    throw DataError("metric_value: unsupported metric");
  }

  static void metric_grad_ptr(Metric m, const T* a, const T* b, int w, int h, int c, T* g) {
    switch (m) {
      case Metric::L1: l1_grad(a, b, static_cast<size_t>(w) * h * c, g); return;
      case Metric::L2: l2_grad(a, b, static_cast<size_t>(w) * h * c, g); return;
      case Metric::DSSIM: dssim_grad(a, b, w, h, c, g); return;
      case Metric::MSDSSIM: ms_dssim_grad(a, b, w, h, c, g); return;
    }
    throw DataError("metric_grad: unsupported metric");
  }

  static void to_interleaved(const Tensor<T>& t, int sample, std::vector<T>& out) {
    out.resize(static_cast<size_t>(t.c) * t.h * t.w);
    const size_t hw = static_cast<size_t>(t.h) * t.w;
    for (int ic = 0; ic < t.c; ++ic) {
      const T* p = t.plane(sample, ic);
      for (size_t i = 0; i < hw; ++i) out[i * t.c + ic] = p[i];
    }
  }

  static void add_interleaved(Tensor<T>& grad, int sample, const std::vector<T>& g, T scale) {
    const size_t hw = static_cast<size_t>(grad.h) * grad.w;
    for (int ic = 0; ic < grad.c; ++ic) {
      T* p = grad.plane(sample, ic);
      for (size_t i = 0; i < hw; ++i) p[i] += scale * g[i * grad.c + ic];
    }
  }

  // Direct convolution kernels. On this problem's sizes they are
  // compute-bound and beat an im2col+GEMM pipeline, whose column buffers
  // blow past the cache.

  // accumulate w * src(shifted by ox) into dst over the valid x range
  static void axpy_shifted(T* dst, const T* src, T w, int width, int ox) {
    const int x_lo = std::max(0, -ox), x_hi = std::min(width, width - ox);
    const T* s = src + ox;
    for (int x = x_lo; x < x_hi; ++x) dst[x] += w * s[x];
  }

  // sum_{valid y,x} a[y][x] * b[y+oy][x+ox] as one long vectorized dot over
  // the plane, with the few row-boundary crossings subtracted afterwards
  static T dot_plane_shifted(const T* a, const T* b, int H, int W, int oy, int ox) {
    const int y_lo = std::max(0, -oy), y_hi = std::min(H, H - oy);
    if (y_lo >= y_hi) return T(0);
    const size_t n = static_cast<size_t>(y_hi - y_lo) * W;
    const T* pa = a + static_cast<size_t>(y_lo) * W;
    const T* pb = b + (static_cast<size_t>(y_lo + oy) * W) + ox;
    const size_t i_lo = ox < 0 ? static_cast<size_t>(-ox) : 0;
    const size_t i_hi = n - (ox > 0 ? static_cast<size_t>(ox) : 0);
    T acc = T(0);
#if defined(_OPENMP)
#pragma omp simd reduction(+ : acc)
#endif
    for (size_t i = i_lo; i < i_hi; ++i) acc += pa[i] * pb[i];
    const size_t rows = static_cast<size_t>(y_hi - y_lo);
    if (ox > 0) {
      for (size_t r = 0; r + 1 < rows; ++r)
        for (int t = 0; t < ox; ++t) {
          const size_t i = r * W + W - ox + t;
          acc -= pa[i] * pb[i];
        }
    } else if (ox < 0) {
      for (size_t r = 1; r < rows; ++r)
        for (int t = 0; t < -ox; ++t) {
          const size_t i = r * W + t;
          acc -= pa[i] * pb[i];
        }
    }
    return acc;
  }

  // dst += conv(src, w) with zero padding, one channel pair; fused row
  // kernel for the ubiquitous 3x3 case
  static void accumulate_conv_plane(T* dst, const T* src, const T* w, int H, int W, int kh,
                                    int kw) {
    const int ph = kh / 2, pw = kw / 2;
    if (kh == 3 && kw == 3 && W >= 2) {
      for (int y = 0; y < H; ++y) {
        T* orow = dst + static_cast<size_t>(y) * W;
        for (int dy = 0; dy < 3; ++dy) {
          const int sy = y + dy - 1;
          if (sy < 0 || sy >= H) continue;
          const T* irow = src + static_cast<size_t>(sy) * W;
          const T w0 = w[dy * 3], w1 = w[dy * 3 + 1], w2 = w[dy * 3 + 2];
          for (int x = 1; x < W - 1; ++x)
            orow[x] += w0 * irow[x - 1] + w1 * irow[x] + w2 * irow[x + 1];
          orow[0] += w1 * irow[0] + w2 * irow[1];
          orow[W - 1] += w0 * irow[W - 2] + w1 * irow[W - 1];
        }
      }
      return;
    }
    for (int y = 0; y < H; ++y) {
      T* orow = dst + static_cast<size_t>(y) * W;
      for (int dy = 0; dy < kh; ++dy) {
        const int sy = y + dy - ph;
        if (sy < 0 || sy >= H) continue;
        const T* irow = src + static_cast<size_t>(sy) * W;
        for (int dx = 0; dx < kw; ++dx) axpy_shifted(orow, irow, w[dy * kw + dx], W, dx - pw);
      }
    }
  }

  void conv_forward(const Tensor<T>& vx, const Tensor<T>& vw, const Tensor<T>& vb, int groups,
                    Tensor<T>& out) {
    const int cin_g = vw.c, kh = vw.h, kw = vw.w;
    const int cout_g = vw.n / groups;
    const int H = vx.h, W = vx.w;
    const size_t P = static_cast<size_t>(H) * W;
    parallel_for(0, vx.n * vw.n, [&](int task) {
      const int in = task / vw.n;
      const int co = task % vw.n;
      const int g = co / cout_g;
      T* op = out.plane(in, co);
      std::fill(op, op + P, vb.v[co]);
      for (int ci = 0; ci < cin_g; ++ci) {
        const T* ip = vx.plane(in, g * cin_g + ci);
        const T* w9 = &vw.v[((static_cast<size_t>(co) * cin_g) + ci) * kh * kw];
        accumulate_conv_plane(op, ip, w9, H, W, kh, kw);
      }
    });
  }

  void conv_backward(int x, int weight, int bias, int groups, int self) {
    const Tensor<T>& go = nodes_[self].grad;
    const Tensor<T>& vx = nodes_[x].val;
    const Tensor<T>& vw = nodes_[weight].val;
    const int cin_g = vw.c, kh = vw.h, kw = vw.w;
    const int cout_g = vw.n / groups;
    const int ph = kh / 2, pw = kw / 2;
    const int H = vx.h, W = vx.w;
    const size_t P = static_cast<size_t>(H) * W;
    const bool need_x = nodes_[x].needs_grad;
    const bool need_w = nodes_[weight].needs_grad;
    const bool need_b = nodes_[bias].needs_grad;

    if (need_b) {
      Tensor<T>& gb = ensure_grad(bias);
      for (int in = 0; in < vx.n; ++in)
        for (int co = 0; co < vw.n; ++co) {
          const T* src = go.plane(in, co);
          T acc = T(0);
          for (size_t i = 0; i < P; ++i) acc += src[i];
          gb.v[co] += acc;
        }
    }
    if (need_w) {
      Tensor<T>& gw = ensure_grad(weight);
      parallel_for(0, vw.n, [&](int co) {
        const int g = co / cout_g;
        for (int ci = 0; ci < cin_g; ++ci) {
          T* w9 = &gw.v[((static_cast<size_t>(co) * cin_g) + ci) * kh * kw];
          for (int in = 0; in < vx.n; ++in) {
            const T* dop = go.plane(in, co);
            const T* ip = vx.plane(in, g * cin_g + ci);
            for (int dy = 0; dy < kh; ++dy)
              for (int dx = 0; dx < kw; ++dx)
                w9[dy * kw + dx] += dot_plane_shifted(dop, ip, H, W, dy - ph, dx - pw);
          }
        }
      });
    }
    if (need_x) {
      // the adjoint of 'same' zero-padded convolution is convolution with
      // the spatially flipped kernel, with in/out channel roles swapped
      Tensor<T>& gx = ensure_grad(x);
      parallel_for(0, vx.n * vx.c, [&](int task) {
        const int in = task / vx.c;
        const int ci_full = task % vx.c;
        const int g = ci_full / cin_g;
        const int ci = ci_full % cin_g;
        T* gp = gx.plane(in, ci_full);
        std::vector<T> wf(static_cast<size_t>(kh) * kw);
        for (int co = g * cout_g; co < (g + 1) * cout_g; ++co) {
          const T* w9 = &vw.v[((static_cast<size_t>(co) * cin_g) + ci) * kh * kw];
          for (int dy = 0; dy < kh; ++dy)
            for (int dx = 0; dx < kw; ++dx)
              wf[dy * kw + dx] = w9[(kh - 1 - dy) * kw + (kw - 1 - dx)];
          accumulate_conv_plane(gp, go.plane(in, co), wf.data(), H, W, kh, kw);
        }
      });
    }
  }
};

}  // namespace relight

#endif  // RELIGHT_AUTODIFF_HPP
