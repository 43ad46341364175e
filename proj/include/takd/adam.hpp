// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "takd/tensor.hpp"

namespace takd {

/// Per-parameter moments and hyperparameters of Adam.
template <typename T>
struct AdamState {
  T lr = T(0.01);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T epsilon = T(1e-8);
  std::size_t step = 0;
  std::vector<std::vector<T>> first;
  std::vector<std::vector<T>> second;
};

/// One bias-corrected Adam update of `params` using `grads`.
template <typename T>
void adam_step(std::span<Tensor<T>> params, std::span<const std::span<const T>> grads,
               AdamState<T>& state) {
  if (params.size() != grads.size()) throw ShapeError("adam_step: parameter/gradient count mismatch");
  if (state.first.empty()) {
    state.first.resize(params.size());
    state.second.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.first[i].assign(params[i].numel(), T{0});
      state.second[i].assign(params[i].numel(), T{0});
    }
  }
  if (state.first.size() != params.size()) throw ShapeError("adam_step: state built for other parameters");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (grads[i].size() != params[i].numel() || state.first[i].size() != params[i].numel())
      throw ShapeError("adam_step: gradient shape mismatch for parameter " + std::to_string(i));

  ++state.step;
  const T c1 = T{1} - std::pow(state.beta1, static_cast<T>(state.step));
  const T c2 = T{1} - std::pow(state.beta2, static_cast<T>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].data();
    auto g = grads[i];
    auto& m = state.first[i];
    auto& v = state.second[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = state.beta1 * m[j] + (T{1} - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (T{1} - state.beta2) * g[j] * g[j];
      const T m_hat = m[j] / c1;
      const T v_hat = v[j] / c2;
      p[j] -= state.lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

/// Adam over a fixed parameter list, reading each parameter's accumulated gradient.
template <typename T>
class Adam {
 public:
  Adam(std::vector<Tensor<T>> params, T lr) : params_(std::move(params)) { state_.lr = lr; }

  void step() {
    std::vector<std::span<const T>> grads;
    grads.reserve(params_.size());
    for (auto& p : params_) grads.push_back(p.grad());
    adam_step<T>(params_, grads, state_);
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  const AdamState<T>& state() const { return state_; }
  std::vector<Tensor<T>>& params() { return params_; }

 private:
  std::vector<Tensor<T>> params_;
  AdamState<T> state_;
};

}  // namespace takd
