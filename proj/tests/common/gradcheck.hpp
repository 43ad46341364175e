// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "takd/tensor.hpp"

namespace takd::oracle {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // "param[i]"
  std::size_t checked = 0;
};

/// Compares tape gradients of `loss(params)` with central differences at step h.
/// At most `per_param` coordinates of each parameter are probed (all when 0).
inline GradCheckResult gradcheck(const std::function<Tensor<double>()>& loss, std::vector<Tensor<double>> params,
                                 double h = 1e-4, std::size_t per_param = 0, std::uint64_t seed = 7) {
  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  {
    GradTape<double> tape;
    TapeScope<double> scope(tape);
    auto l = loss();
    tape.backward(l);
  }
  std::vector<std::vector<double>> analytic;
  for (auto& p : params) analytic.emplace_back(p.grad().begin(), p.grad().end());

  GradCheckResult r;
  std::mt19937_64 rng(seed);
  NoGradScope<double> off;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi];
    std::vector<std::size_t> coords(p.numel());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (per_param != 0 && coords.size() > per_param) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(per_param);
    }
    for (auto i : coords) {
      const double orig = p[i];
      p[i] = orig + h;
      const double up = loss().item();
      p[i] = orig - h;
      const double down = loss().item();
      p[i] = orig;
      const double numeric = (up - down) / (2 * h);
      const double a = analytic[pi][i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
      ++r.checked;
      if (rel > r.max_rel_error) {
        r.max_rel_error = rel;
        r.worst = "param" + std::to_string(pi) + "[" + std::to_string(i) + "] analytic " + std::to_string(a) +
                  " numeric " + std::to_string(numeric);
      }
    }
  }
  return r;
}

}  // namespace takd::oracle
