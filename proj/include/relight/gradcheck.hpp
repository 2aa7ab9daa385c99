// Copyright (c) 2026 the relight authors.
// The relight source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#ifndef RELIGHT_GRADCHECK_HPP
#define RELIGHT_GRADCHECK_HPP

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "relight/autodiff.hpp"
#include "relight/model.hpp"

namespace relight {

// 64-bit central-difference audit of every autodiff op and of the full
// two-stage generator graph. Samples whose finite-difference evaluations
// cross a clamp/rectifier boundary (detected through activation masks) are
// excluded; they sit on measure-zero kinks where the subgradient convention
// and the difference quotient legitimately disagree.

struct GradCheckResult {
  std::string name;
  int checked = 0;
  int skipped = 0;  // boundary-crossing samples
  double max_rel_err = 0.0;

  bool passed(double tol) const { return checked > 0 && max_rel_err < tol; }
};

struct GradCheckReport {
  std::vector<GradCheckResult> results;

  double max_rel_err() const {
    double m = 0.0;
    for (const auto& r : results) m = std::max(m, r.max_rel_err);
    return m;
  }
  bool all_passed(double tol) const {
    for (const auto& r : results)
      if (!r.passed(tol)) return false;
    return !results.empty();
  }
};

namespace gradcheck_detail {

// Builds a scalar double graph from a set of input tensors.
using BuildFn = std::function<int(Graph<double>&, const std::vector<int>&)>;

inline GradCheckResult check_scalar_function(const std::string& name,
                                             std::vector<Tensor<double>> inputs, BuildFn build,
                                             int samples_per_input, double h,
                                             std::mt19937_64& rng) {
  GradCheckResult res;
  res.name = name;

  // analytic gradients
  Graph<double> g;
  std::vector<int> ids;
  for (const auto& t : inputs) ids.push_back(g.leaf(t, true));
  const int root = build(g, ids);
  g.backward(root);
  std::vector<Tensor<double>> analytic;
  for (int id : ids) {
    if (g.grad(id).size() > 0) {
      analytic.push_back(g.grad(id));
    } else {
      const Tensor<double>& v = g.value(id);
      analytic.push_back(Tensor<double>(v.n, v.c, v.h, v.w, 0.0));
    }
  }

  auto eval = [&](const std::vector<Tensor<double>>& in, std::vector<std::vector<uint8_t>>* m) {
    Graph<double> ge;
    ge.capture_masks = m != nullptr;
    std::vector<int> eids;
    for (const auto& t : in) eids.push_back(ge.leaf(t, false));
    const int r = build(ge, eids);
    if (m) *m = std::move(ge.masks);
    return ge.value(r).v[0];
  };

  for (size_t ti = 0; ti < inputs.size(); ++ti) {
    const size_t n = inputs[ti].size();
    for (int s = 0; s < samples_per_input; ++s) {
      const size_t ei = std::uniform_int_distribution<size_t>(0, n - 1)(rng);
      std::vector<Tensor<double>> in = inputs;
      std::vector<std::vector<uint8_t>> mp, mm;
      in[ti].v[ei] = inputs[ti].v[ei] + h;
      const double fp = eval(in, &mp);
      in[ti].v[ei] = inputs[ti].v[ei] - h;
      const double fm = eval(in, &mm);
      if (mp != mm) {
        ++res.skipped;
        continue;
      }
      const double fd = (fp - fm) / (2.0 * h);
      const double an = analytic[ti].v[ei];
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-5});
      res.max_rel_err = std::max(res.max_rel_err, std::abs(fd - an) / denom);
      ++res.checked;
    }
  }
  return res;
}

inline Tensor<double> random_tensor(int n, int c, int h, int w, std::mt19937_64& rng,
                                    double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(n, c, h, w);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& v : t.v) v = dist(rng);
  return t;
}

}  // namespace gradcheck_detail

// Per-op finite-difference checks on random 2x3x8x8-scale inputs.
inline GradCheckReport check_all_ops(uint64_t seed = 7, int samples = 24, double h = 3e-6) {
  using gradcheck_detail::check_scalar_function;
  using gradcheck_detail::random_tensor;
  std::mt19937_64 rng(seed);
  GradCheckReport report;

  auto proj = [&](Graph<double>& g, int node) {
    const Tensor<double>& v = g.value(node);
    std::mt19937_64 prng(0xabcdef12345678ULL);
    return g.inner_const(node, random_tensor(v.n, v.c, v.h, v.w, prng));
  };

  auto add_check = [&](const std::string& name, std::vector<Tensor<double>> inputs,
                       gradcheck_detail::BuildFn build) {
    report.results.push_back(
        check_scalar_function(name, std::move(inputs), build, samples, h, rng));
  };

  add_check("add", {random_tensor(2, 3, 8, 8, rng), random_tensor(2, 3, 8, 8, rng)},
            [&](Graph<double>& g, const std::vector<int>& in) {
              return proj(g, g.add(in[0], in[1]));
            });
  add_check("mul", {random_tensor(2, 3, 8, 8, rng), random_tensor(2, 3, 8, 8, rng)},
            [&](Graph<double>& g, const std::vector<int>& in) {
              return proj(g, g.mul(in[0], in[1]));
            });
  add_check("scale_add_scalar", {random_tensor(2, 3, 8, 8, rng)},
            [&](Graph<double>& g, const std::vector<int>& in) {
              return proj(g, g.add_scalar(g.scale(in[0], 1.7), -0.3));
            });
  add_check("mul_broadcast_c", {random_tensor(2, 3, 8, 8, rng), random_tensor(2, 1, 8, 8, rng)},
            [&](Graph<double>& g, const std::vector<int>& in) {
              return proj(g, g.mul_broadcast_c(in[0], in[1]));
            });
  add_check("leaky_relu", {random_tensor(2, 3, 8, 8, rng)},
            [&](Graph<double>& g, const std::vector<int>& in) {
              return proj(g, g.leaky_relu(in[0], 0.2));
            });
  add_check("sigmoid", {random_tensor(2, 3, 8, 8, rng)},
            [&](Graph<double>& g, const std::vector<int>& in) {
              return proj(g, g.sigmoid(in[0]));
            });
  add_check("clamp01", {random_tensor(2, 3, 8, 8, rng, -0.5, 1.5)},
            [&](Graph<double>& g, const std::vector<int>& in) {
              return proj(g, g.clamp01(in[0]));
            });
  add_check("concat", {random_tensor(2, 3, 8, 8, rng), random_tensor(2, 2, 8, 8, rng)},
            [&](Graph<double>& g, const std::vector<int>& in) {
              return proj(g, g.concat(in[0], in[1]));
            });
  add_check("avgpool2", {random_tensor(2, 3, 8, 8, rng)},
            [&](Graph<double>& g, const std::vector<int>& in) {
              return proj(g, g.avgpool2(in[0]));
            });
  add_check("upsample2", {random_tensor(2, 3, 8, 8, rng)},
            [&](Graph<double>& g, const std::vector<int>& in) {
              return proj(g, g.upsample2(in[0]));
            });
  add_check("broadcast_hw", {random_tensor(2, 4, 1, 1, rng)},
            [&](Graph<double>& g, const std::vector<int>& in) {
              return proj(g, g.broadcast_hw(in[0], 8, 8));
            });
  add_check("channel_l2_normalize", {random_tensor(2, 3, 8, 8, rng)},
            [&](Graph<double>& g, const std::vector<int>& in) {
              return proj(g, g.channel_l2_normalize(in[0]));
            });
  add_check("conv2d",
            {random_tensor(2, 4, 8, 8, rng), random_tensor(6, 4, 3, 3, rng),
             random_tensor(1, 6, 1, 1, rng)},
            [&](Graph<double>& g, const std::vector<int>& in) {
              return proj(g, g.conv2d(in[0], in[1], in[2]));
            });
  add_check("conv2d_grouped",
            {random_tensor(2, 4, 8, 8, rng), random_tensor(6, 2, 3, 3, rng),
             random_tensor(1, 6, 1, 1, rng)},
            [&](Graph<double>& g, const std::vector<int>& in) {
              return proj(g, g.conv2d(in[0], in[1], in[2], 2));
            });
  {
    std::vector<DirectionalLight> lights = {
        {normalized({0.3, 0.2, 0.9}), {1.0, 0.9, 0.8}},
        {normalized({-0.5, 0.1, 0.8}), {0.7, 1.0, 1.1}}};
    add_check("shading", {random_tensor(2, 3, 8, 8, rng)},
              [&, lights](Graph<double>& g, const std::vector<int>& in) {
                return proj(g, g.shading_op(g.channel_l2_normalize(in[0]), lights));
              });
  }
  {
    std::mt19937_64 trng(123);
    const Tensor<double> target = random_tensor(1, 3, 16, 16, trng, 0.0, 1.0);
    for (Metric m : {Metric::L1, Metric::L2, Metric::DSSIM, Metric::MSDSSIM}) {
      add_check(std::string("metric_") + metric_name(m),
                {random_tensor(1, 3, 16, 16, rng, 0.05, 0.95)},
                [&, m, target](Graph<double>& g, const std::vector<int>& in) {
                  return g.metric_loss(m, in[0], target);
                });
    }
    add_check("mse_loss", {random_tensor(1, 3, 16, 16, rng)},
              [&, target](Graph<double>& g, const std::vector<int>& in) {
                return g.mse_loss(in[0], target);
              });
    add_check("mae_loss", {random_tensor(1, 3, 16, 16, rng)},
              [&, target](Graph<double>& g, const std::vector<int>& in) {
                return g.mae_loss(in[0], target);
              });
  }
  return report;
}

// Full stage1 -> formation -> stage2 -> DSSIM pipeline in double precision.
inline GradCheckResult check_full_graph(uint64_t seed = 11, int param_samples = 2,
                                        int image_size = 32, double h = 1e-5) {
  std::mt19937_64 rng(seed);
  ModelConfig cfg;
  cfg.known_source_illumination = true;
  const ModelParams mp = init_model(cfg, seed);

  // parameters become audit inputs, the image is appended last
  std::vector<Tensor<double>> inputs;
  std::vector<std::string> names;
  for (const auto& [name, t] : mp.weights) {
    inputs.push_back(t.cast<double>());
    names.push_back(name);
  }
  inputs.push_back(gradcheck_detail::random_tensor(1, 3, image_size, image_size, rng, 0.05, 0.95));

  std::mt19937_64 trng(42);
  const Tensor<double> target =
      gradcheck_detail::random_tensor(1, 3, image_size, image_size, trng, 0.0, 1.0);
  const std::vector<DirectionalLight> l_src = {{normalized({0.4, -0.2, 0.89}), {1, 1, 1}}};
  const std::vector<DirectionalLight> l_dst = {{normalized({-0.3, 0.4, 0.86}), {1, 1, 1}}};

  auto build = [&](Graph<double>& g, const std::vector<int>& ids) {
    GraphParams<double> gp;
    for (size_t i = 0; i < names.size(); ++i) gp.ids[names[i]] = ids[i];
    const int img = ids.back();
    const GeneratorNodes<double> gen = generator_forward(g, gp, cfg, img, l_src, l_dst);
    return g.metric_loss(Metric::DSSIM, gen.output, target);
  };

  return gradcheck_detail::check_scalar_function("full_graph_dssim", std::move(inputs), build,
                                                 param_samples, h, rng);
}

}  // namespace relight

#endif  // RELIGHT_GRADCHECK_HPP
