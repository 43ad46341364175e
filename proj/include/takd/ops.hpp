// SPDX-License-Identifier: Apache-2.0
//
// Differentiable operations on Tensor<T>. Each op computes its forward value
// eagerly and, when recording, pushes a closure that accumulates operand
// gradients from the output gradient.
#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "takd/tensor.hpp"

namespace takd {

using Triple = std::array<std::size_t, 3>;

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
}

/// Geometry of a convolution over three spatial axes (t, h, w).
struct ConvGeometry {
  std::size_t batch = 0, c_in = 0, c_out = 0;
  Triple in{}, kernel{}, stride{}, pad{}, out{};

  std::size_t patch() const { return c_in * kernel[0] * kernel[1] * kernel[2]; }
  std::size_t in_volume() const { return in[0] * in[1] * in[2]; }
  std::size_t out_volume() const { return out[0] * out[1] * out[2]; }
};

inline std::size_t conv_out_dim(std::size_t n, std::size_t k, std::size_t s, std::size_t p,
                                const char* op) {
  if (s == 0) throw ShapeError(std::string(op) + ": stride must be positive");
  const long span = static_cast<long>(n) + 2 * static_cast<long>(p) - static_cast<long>(k);
  if (span < 0)
    throw ShapeError(std::string(op) + ": kernel " + std::to_string(k) + " larger than padded input " +
                     std::to_string(n + 2 * p));
  return static_cast<std::size_t>(span) / s + 1;
}

// Eigen's vectorized sum depends on buffer alignment; keep bias grads bit-reproducible.
template <typename T>
T ordered_sum(const T* p, Eigen::Index n, Eigen::Index stride) {
  double acc = 0;
  for (Eigen::Index i = 0; i < n; ++i) acc += static_cast<double>(p[i * stride]);
  return static_cast<T>(acc);
}

template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* cols) {
  const std::size_t n_out = g.out_volume();
  std::size_t row = 0;
  for (std::size_t ci = 0; ci < g.c_in; ++ci) {
    const T* xc = x + ci * g.in_volume();
    for (std::size_t a = 0; a < g.kernel[0]; ++a)
      for (std::size_t b = 0; b < g.kernel[1]; ++b)
        for (std::size_t c = 0; c < g.kernel[2]; ++c, ++row) {
          T* dst = cols + row * n_out;
          for (std::size_t ot = 0; ot < g.out[0]; ++ot) {
            const long it = static_cast<long>(ot * g.stride[0] + a) - static_cast<long>(g.pad[0]);
            for (std::size_t oh = 0; oh < g.out[1]; ++oh) {
              const long ih = static_cast<long>(oh * g.stride[1] + b) - static_cast<long>(g.pad[1]);
              T* d = dst + (ot * g.out[1] + oh) * g.out[2];
              if (it < 0 || it >= static_cast<long>(g.in[0]) || ih < 0 ||
                  ih >= static_cast<long>(g.in[1])) {
                std::fill(d, d + g.out[2], T{0});
                continue;
              }
              const T* src = xc + (static_cast<std::size_t>(it) * g.in[1] + static_cast<std::size_t>(ih)) * g.in[2];
              for (std::size_t ow = 0; ow < g.out[2]; ++ow) {
                const long iw = static_cast<long>(ow * g.stride[2] + c) - static_cast<long>(g.pad[2]);
                d[ow] = (iw < 0 || iw >= static_cast<long>(g.in[2])) ? T{0} : src[iw];
              }
            }
          }
        }
  }
}

template <typename T>
void col2im_add(const ConvGeometry& g, const T* cols, T* dx) {
  const std::size_t n_out = g.out_volume();
  std::size_t row = 0;
  for (std::size_t ci = 0; ci < g.c_in; ++ci) {
    T* xc = dx + ci * g.in_volume();
    for (std::size_t a = 0; a < g.kernel[0]; ++a)
      for (std::size_t b = 0; b < g.kernel[1]; ++b)
        for (std::size_t c = 0; c < g.kernel[2]; ++c, ++row) {
          const T* src = cols + row * n_out;
          for (std::size_t ot = 0; ot < g.out[0]; ++ot) {
            const long it = static_cast<long>(ot * g.stride[0] + a) - static_cast<long>(g.pad[0]);
            if (it < 0 || it >= static_cast<long>(g.in[0])) continue;
            for (std::size_t oh = 0; oh < g.out[1]; ++oh) {
              const long ih = static_cast<long>(oh * g.stride[1] + b) - static_cast<long>(g.pad[1]);
              if (ih < 0 || ih >= static_cast<long>(g.in[1])) continue;
              const T* s = src + (ot * g.out[1] + oh) * g.out[2];
              T* d = xc + (static_cast<std::size_t>(it) * g.in[1] + static_cast<std::size_t>(ih)) * g.in[2];
              for (std::size_t ow = 0; ow < g.out[2]; ++ow) {
                const long iw = static_cast<long>(ow * g.stride[2] + c) - static_cast<long>(g.pad[2]);
                if (iw >= 0 && iw < static_cast<long>(g.in[2])) d[iw] += s[ow];
              }
            }
          }
        }
  }
}

template <typename T>
void conv_forward(const ConvGeometry& g, const T* x, const T* w, const T* bias, T* y) {
  const auto K = static_cast<Eigen::Index>(g.patch());
  const auto N = static_cast<Eigen::Index>(g.out_volume());
  const auto C = static_cast<Eigen::Index>(g.c_out);
  std::vector<T> cols(g.patch() * g.out_volume());
  ConstMatMap<T> W(w, C, K);
  for (std::size_t n = 0; n < g.batch; ++n) {
    im2col(g, x + n * g.c_in * g.in_volume(), cols.data());
    MatMap<T> Y(y + n * g.c_out * g.out_volume(), C, N);
    Y.noalias() = W * ConstMatMap<T>(cols.data(), K, N);
    if (bias != nullptr)
      for (Eigen::Index c = 0; c < C; ++c) Y.row(c).array() += bias[c];
  }
}

template <typename T>
void conv_backward(const ConvGeometry& g, const T* x, const T* w, const T* dy, T* dx, T* dw,
                   T* dbias) {
  const auto K = static_cast<Eigen::Index>(g.patch());
  const auto N = static_cast<Eigen::Index>(g.out_volume());
  const auto C = static_cast<Eigen::Index>(g.c_out);
  std::vector<T> cols(g.patch() * g.out_volume());
  ConstMatMap<T> W(w, C, K);
  for (std::size_t n = 0; n < g.batch; ++n) {
    ConstMatMap<T> DY(dy + n * g.c_out * g.out_volume(), C, N);
    if (dbias != nullptr)
      for (Eigen::Index c = 0; c < C; ++c) dbias[c] += ordered_sum(DY.row(c).data(), N, 1);
    if (dw != nullptr) {
      im2col(g, x + n * g.c_in * g.in_volume(), cols.data());
      MatMap<T>(dw, C, K).noalias() += DY * ConstMatMap<T>(cols.data(), K, N).transpose();
    }
    if (dx != nullptr) {
      MatMap<T>(cols.data(), K, N).noalias() = W.transpose() * DY;
      col2im_add(g, cols.data(), dx + n * g.c_in * g.in_volume());
    }
  }
}

template <typename T>
Tensor<T> conv_generic(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias,
                       const ConvGeometry& g, Shape out_shape) {
  Tensor<T> y(std::move(out_shape));
  conv_forward(g, x.ptr(), w.ptr(), bias ? bias->ptr() : nullptr, y.ptr());
  Tensor<T> b = bias ? *bias : Tensor<T>();
  if (auto* tape = bias ? recording<T>(x, w, b) : recording<T>(x, w)) {
    mark_output(y);
    tape->record([g, xi = x.impl(), wi = w.impl(), bi = b.impl(), has_bias = bias != nullptr,
                  yi = y.impl()] {
      if (yi->grad.empty()) return;
      T* dx = xi->requires_grad ? xi->grad_buffer().data() : nullptr;
      T* dw = wi->requires_grad ? wi->grad_buffer().data() : nullptr;
      T* db = has_bias && bi->requires_grad ? bi->grad_buffer().data() : nullptr;
      conv_backward(g, xi->data.data(), wi->data.data(), yi->grad.data(), dx, dw, db);
    });
  }
  return y;
}

/// Unary elementwise op; `df(x, y)` is the local derivative.
template <typename T, typename F, typename DF>
Tensor<T> unary(const Tensor<T>& x, F f, DF df) {
  Tensor<T> y(x.shape());
  auto xs = x.data();
  auto ys = y.data();
  for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = f(xs[i]);
  if (auto* tape = recording<T>(x)) {
    mark_output(y);
    tape->record([xi = x.impl(), yi = y.impl(), df] {
      if (yi->grad.empty() || !xi->requires_grad) return;
      auto g = xi->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += yi->grad[i] * df(xi->data[i], yi->data[i]);
    });
  }
  return y;
}

}  // namespace detail

/// 3D cross-correlation. x: (b, c_in, t, h, w), w: (c_out, c_in, k1, k2, k3), bias: (c_out).
template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, Triple stride,
                 Triple pad) {
  if (x.rank() != 5 || w.rank() != 5)
    throw ShapeError("conv3d expects 5-D input and kernel, got " + to_string(x.shape()) + " and " +
                     to_string(w.shape()));
  if (x.dim(1) != w.dim(1))
    throw ShapeError("conv3d: input channels " + std::to_string(x.dim(1)) + " vs kernel " +
                     std::to_string(w.dim(1)));
  if (!bias.empty() && (bias.rank() != 1 || bias.dim(0) != w.dim(0)))
    throw ShapeError("conv3d: bias shape " + to_string(bias.shape()));
  detail::ConvGeometry g;
  g.batch = x.dim(0);
  g.c_in = x.dim(1);
  g.c_out = w.dim(0);
  g.in = {x.dim(2), x.dim(3), x.dim(4)};
  g.kernel = {w.dim(2), w.dim(3), w.dim(4)};
  g.stride = stride;
  g.pad = pad;
  for (int i = 0; i < 3; ++i) g.out[i] = detail::conv_out_dim(g.in[i], g.kernel[i], stride[i], pad[i], "conv3d");
  return detail::conv_generic(x, w, bias.empty() ? nullptr : &bias, g,
                              Shape{g.batch, g.c_out, g.out[0], g.out[1], g.out[2]});
}

/// 1D cross-correlation. x: (b, c_in, t), w: (c_out, c_in, k), bias: (c_out).
template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, std::size_t stride,
                 std::size_t pad) {
  if (x.rank() != 3 || w.rank() != 3)
    throw ShapeError("conv1d expects 3-D input and kernel, got " + to_string(x.shape()) + " and " +
                     to_string(w.shape()));
  if (x.dim(1) != w.dim(1))
    throw ShapeError("conv1d: input channels " + std::to_string(x.dim(1)) + " vs kernel " +
                     std::to_string(w.dim(1)));
  if (!bias.empty() && (bias.rank() != 1 || bias.dim(0) != w.dim(0)))
    throw ShapeError("conv1d: bias shape " + to_string(bias.shape()));
  detail::ConvGeometry g;
  g.batch = x.dim(0);
  g.c_in = x.dim(1);
  g.c_out = w.dim(0);
  g.in = {x.dim(2), 1, 1};
  g.kernel = {w.dim(2), 1, 1};
  g.stride = {stride, 1, 1};
  g.pad = {pad, 0, 0};
  g.out = {detail::conv_out_dim(g.in[0], g.kernel[0], stride, pad, "conv1d"), 1, 1};
  return detail::conv_generic(x, w, bias.empty() ? nullptr : &bias, g,
                              Shape{g.batch, g.c_out, g.out[0]});
}

/// y = x · Wᵀ + b with x: (n, in), W: (out, in), b: (out).
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(1))
    throw ShapeError("linear: incompatible " + to_string(x.shape()) + " and " + to_string(w.shape()));
  if (!bias.empty() && (bias.rank() != 1 || bias.dim(0) != w.dim(0)))
    throw ShapeError("linear: bias shape " + to_string(bias.shape()));
  const auto n = static_cast<Eigen::Index>(x.dim(0));
  const auto in = static_cast<Eigen::Index>(x.dim(1));
  const auto out = static_cast<Eigen::Index>(w.dim(0));
  Tensor<T> y(Shape{x.dim(0), w.dim(0)});
  detail::MatMap<T> Y(y.ptr(), n, out);
  Y.noalias() = detail::ConstMatMap<T>(x.ptr(), n, in) * detail::ConstMatMap<T>(w.ptr(), out, in).transpose();
  if (!bias.empty())
    for (Eigen::Index r = 0; r < n; ++r)
      Y.row(r) += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias.ptr(), out);
  if (auto* tape = bias.empty() ? detail::recording<T>(x, w) : detail::recording<T>(x, w, bias)) {
    detail::mark_output(y);
    tape->record([xi = x.impl(), wi = w.impl(), bi = bias.impl(), yi = y.impl(), n, in, out] {
      if (yi->grad.empty()) return;
      detail::ConstMatMap<T> DY(yi->grad.data(), n, out);
      if (xi->requires_grad)
        detail::MatMap<T>(xi->grad_buffer().data(), n, in).noalias() +=
            DY * detail::ConstMatMap<T>(wi->data.data(), out, in);
      if (wi->requires_grad)
        detail::MatMap<T>(wi->grad_buffer().data(), out, in).noalias() +=
            DY.transpose() * detail::ConstMatMap<T>(xi->data.data(), n, in);
      if (!bi->data.empty() && bi->requires_grad) {
        auto g = bi->grad_buffer();
        for (Eigen::Index c = 0; c < out; ++c) g[c] += detail::ordered_sum(DY.col(c).data(), DY.rows(), out);
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return detail::unary(
      x, [](T v) { return v > T{0} ? v : T{0}; }, [](T v, T) { return v > T{0} ? T{1} : T{0}; });
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
  return detail::unary(x, [](T v) { return v * v; }, [](T v, T) { return T{2} * v; });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
  return detail::unary(x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return detail::unary(
      x,
      [](T v) {
        return v >= T{0} ? T{1} / (T{1} + std::exp(-v)) : std::exp(v) / (T{1} + std::exp(v));
      },
      [](T, T y) { return y * (T{1} - y); });
}

/// log(1 + e^x), computed without overflow.
template <typename T>
Tensor<T> softplus(const Tensor<T>& x) {
  return detail::unary(
      x, [](T v) { return v > T{0} ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); },
      [](T v, T) {
        return v >= T{0} ? T{1} / (T{1} + std::exp(-v)) : std::exp(v) / (T{1} + std::exp(v));
      });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  return detail::unary(x, [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T c) {
  return detail::unary(x, [c](T v) { return v + c; }, [](T, T) { return T{1}; });
}

/// a·x + b·y elementwise.
template <typename T>
Tensor<T> axpby(T a, const Tensor<T>& x, T b, const Tensor<T>& y) {
  detail::require_same_shape(x, y, "axpby");
  Tensor<T> z(x.shape());
  for (std::size_t i = 0; i < z.numel(); ++i) z[i] = a * x[i] + b * y[i];
  if (auto* tape = detail::recording<T>(x, y)) {
    detail::mark_output(z);
    tape->record([a, b, xi = x.impl(), yi = y.impl(), zi = z.impl()] {
      if (zi->grad.empty()) return;
      if (xi->requires_grad) {
        auto g = xi->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += a * zi->grad[i];
      }
      if (yi->requires_grad) {
        auto g = yi->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += b * zi->grad[i];
      }
    });
  }
  return z;
}

template <typename T>
Tensor<T> add(const Tensor<T>& x, const Tensor<T>& y) {
  return axpby(T{1}, x, T{1}, y);
}

template <typename T>
Tensor<T> sub(const Tensor<T>& x, const Tensor<T>& y) {
  return axpby(T{1}, x, T{-1}, y);
}

template <typename T>
Tensor<T> mul(const Tensor<T>& x, const Tensor<T>& y) {
  detail::require_same_shape(x, y, "mul");
  Tensor<T> z(x.shape());
  for (std::size_t i = 0; i < z.numel(); ++i) z[i] = x[i] * y[i];
  if (auto* tape = detail::recording<T>(x, y)) {
    detail::mark_output(z);
    tape->record([xi = x.impl(), yi = y.impl(), zi = z.impl()] {
      if (zi->grad.empty()) return;
      if (xi->requires_grad) {
        auto g = xi->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += yi->data[i] * zi->grad[i];
      }
      if (yi->requires_grad) {
        auto g = yi->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += xi->data[i] * zi->grad[i];
      }
    });
  }
  return z;
}

/// Sum of all elements as a scalar tensor.
template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc{0};
  for (T v : x.data()) acc += v;
  auto y = Tensor<T>::scalar(acc);
  if (auto* tape = detail::recording<T>(x)) {
    detail::mark_output(y);
    tape->record([xi = x.impl(), yi = y.impl()] {
      if (yi->grad.empty() || !xi->requires_grad) return;
      for (auto& g : xi->grad_buffer()) g += yi->grad[0];
    });
  }
  return y;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T{1} / static_cast<T>(x.numel()));
}

/// Mean of squared differences over all elements.
template <typename T>
Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "mse");
  const T inv_n = T{1} / static_cast<T>(a.numel());
  T acc{0};
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const T d = a[i] - b[i];
    acc += d * d;
  }
  auto y = Tensor<T>::scalar(acc * inv_n);
  if (auto* tape = detail::recording<T>(a, b)) {
    detail::mark_output(y);
    tape->record([ai = a.impl(), bi = b.impl(), yi = y.impl(), inv_n] {
      if (yi->grad.empty()) return;
      const T s = T{2} * inv_n * yi->grad[0];
      if (ai->requires_grad) {
        auto g = ai->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * (ai->data[i] - bi->data[i]);
      }
      if (bi->requires_grad) {
        auto g = bi->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] -= s * (ai->data[i] - bi->data[i]);
      }
    });
  }
  return y;
}

/// sqrt(sum of squares). The gradient at the origin is taken as zero.
template <typename T>
Tensor<T> frobenius_norm(const Tensor<T>& x) {
  T acc{0};
  for (T v : x.data()) acc += v * v;
  auto y = Tensor<T>::scalar(std::sqrt(acc));
  if (auto* tape = detail::recording<T>(x)) {
    detail::mark_output(y);
    tape->record([xi = x.impl(), yi = y.impl()] {
      if (yi->grad.empty() || !xi->requires_grad || yi->data[0] == T{0}) return;
      const T s = yi->grad[0] / yi->data[0];
      auto g = xi->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * xi->data[i];
    });
  }
  return y;
}

/// x / s for a scalar tensor s.
template <typename T>
Tensor<T> div(const Tensor<T>& x, const Tensor<T>& s) {
  if (s.numel() != 1) throw ShapeError("div: divisor must be scalar, got " + to_string(s.shape()));
  const T d = s[0];
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] = x[i] / d;
  if (auto* tape = detail::recording<T>(x, s)) {
    detail::mark_output(y);
    tape->record([xi = x.impl(), si = s.impl(), yi = y.impl()] {
      if (yi->grad.empty()) return;
      const T d = si->data[0];
      if (xi->requires_grad) {
        auto g = xi->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += yi->grad[i] / d;
      }
      if (si->requires_grad) {
        T acc{0};
        for (std::size_t i = 0; i < yi->grad.size(); ++i) acc += yi->grad[i] * xi->data[i];
        si->grad_buffer()[0] -= acc / (d * d);
      }
    });
  }
  return y;
}

/// Same data under a new shape with equal element count.
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel_of(shape) != x.numel())
    throw ShapeError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  Tensor<T> y(std::move(shape), std::vector<T>(x.data().begin(), x.data().end()));
  if (auto* tape = detail::recording<T>(x)) {
    detail::mark_output(y);
    tape->record([xi = x.impl(), yi = y.impl()] {
      if (yi->grad.empty() || !xi->requires_grad) return;
      auto g = xi->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += yi->grad[i];
    });
  }
  return y;
}

/// Flattens everything after the leading `keep` axes.
template <typename T>
Tensor<T> flatten(const Tensor<T>& x, std::size_t keep = 1) {
  Shape s(x.shape().begin(), x.shape().begin() + static_cast<long>(keep));
  std::size_t rest = 1;
  for (std::size_t i = keep; i < x.rank(); ++i) rest *= x.dim(i);
  s.push_back(rest);
  return reshape(x, std::move(s));
}

/// Axis permutation: out.shape[i] = x.shape[axes[i]].
template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& axes) {
  const std::size_t r = x.rank();
  if (axes.size() != r) throw ShapeError("permute: axis count mismatch");
  std::vector<bool> seen(r, false);
  for (auto a : axes) {
    if (a >= r || seen[a]) throw ShapeError("permute: invalid axis list");
    seen[a] = true;
  }
  std::vector<std::size_t> in_stride(r, 1);
  for (std::size_t i = r; i-- > 1;) in_stride[i - 1] = in_stride[i] * x.dim(i);
  Shape out_shape(r);
  std::vector<std::size_t> src_stride(r);
  for (std::size_t i = 0; i < r; ++i) {
    out_shape[i] = x.dim(axes[i]);
    src_stride[i] = in_stride[axes[i]];
  }
  // index[i] = source offset of output element i
  std::vector<std::size_t> index(x.numel());
  std::vector<std::size_t> coord(r, 0);
  std::size_t off = 0;
  for (std::size_t i = 0; i < index.size(); ++i) {
    index[i] = off;
    for (std::size_t d = r; d-- > 0;) {
      if (++coord[d] < out_shape[d]) {
        off += src_stride[d];
        break;
      }
      off -= (out_shape[d] - 1) * src_stride[d];
      coord[d] = 0;
    }
  }
  Tensor<T> y(out_shape);
  for (std::size_t i = 0; i < index.size(); ++i) y[i] = x[index[i]];
  if (auto* tape = detail::recording<T>(x)) {
    detail::mark_output(y);
    tape->record([xi = x.impl(), yi = y.impl(), index = std::move(index)] {
      if (yi->grad.empty() || !xi->requires_grad) return;
      auto g = xi->grad_buffer();
      for (std::size_t i = 0; i < index.size(); ++i) g[index[i]] += yi->grad[i];
    });
  }
  return y;
}

/// Sum over one axis; the axis is removed from the shape.
template <typename T>
Tensor<T> sum_axis(const Tensor<T>& x, std::size_t axis) {
  if (axis >= x.rank()) throw ShapeError("sum_axis: axis out of range");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const std::size_t m = x.dim(axis);
  Shape s = x.shape();
  s.erase(s.begin() + static_cast<long>(axis));
  Tensor<T> y(s);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t k = 0; k < m; ++k)
      for (std::size_t i = 0; i < inner; ++i) y[o * inner + i] += x[(o * m + k) * inner + i];
  if (auto* tape = detail::recording<T>(x)) {
    detail::mark_output(y);
    tape->record([xi = x.impl(), yi = y.impl(), outer, inner, m] {
      if (yi->grad.empty() || !xi->requires_grad) return;
      auto g = xi->grad_buffer();
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t k = 0; k < m; ++k)
          for (std::size_t i = 0; i < inner; ++i) g[(o * m + k) * inner + i] += yi->grad[o * inner + i];
    });
  }
  return y;
}

/// Rows of a 2-D tensor scaled to unit L2 norm; all-zero rows stay zero.
template <typename T>
Tensor<T> normalize_rows(const Tensor<T>& x) {
  if (x.rank() != 2) throw ShapeError("normalize_rows expects a 2-D tensor");
  const std::size_t n = x.dim(0), m = x.dim(1);
  Tensor<T> y(x.shape());
  std::vector<T> norms(n);
  for (std::size_t r = 0; r < n; ++r) {
    T acc{0};
    for (std::size_t c = 0; c < m; ++c) acc += x[r * m + c] * x[r * m + c];
    norms[r] = std::sqrt(acc);
    for (std::size_t c = 0; c < m; ++c) y[r * m + c] = norms[r] > T{0} ? x[r * m + c] / norms[r] : T{0};
  }
  if (auto* tape = detail::recording<T>(x)) {
    detail::mark_output(y);
    tape->record([xi = x.impl(), yi = y.impl(), norms = std::move(norms), n, m] {
      if (yi->grad.empty() || !xi->requires_grad) return;
      auto g = xi->grad_buffer();
      for (std::size_t r = 0; r < n; ++r) {
        if (norms[r] == T{0}) continue;
        T dot{0};
        for (std::size_t c = 0; c < m; ++c) dot += yi->data[r * m + c] * yi->grad[r * m + c];
        for (std::size_t c = 0; c < m; ++c)
          g[r * m + c] += (yi->grad[r * m + c] - yi->data[r * m + c] * dot) / norms[r];
      }
    });
  }
  return y;
}

/// Gram matrix F·Fᵀ of a 2-D tensor (m, n); the result is exactly symmetric.
template <typename T>
Tensor<T> gram(const Tensor<T>& f) {
  if (f.rank() != 2) throw ShapeError("gram expects a 2-D tensor, got " + to_string(f.shape()));
  const auto m = static_cast<Eigen::Index>(f.dim(0));
  const auto n = static_cast<Eigen::Index>(f.dim(1));
  Tensor<T> g(Shape{f.dim(0), f.dim(0)});
  detail::MatMap<T> G(g.ptr(), m, m);
  detail::ConstMatMap<T> F(f.ptr(), m, n);
  G.template selfadjointView<Eigen::Lower>().rankUpdate(F);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = i + 1; j < m; ++j) G(i, j) = G(j, i);
  if (auto* tape = detail::recording<T>(f)) {
    detail::mark_output(g);
    tape->record([fi = f.impl(), gi = g.impl(), m, n] {
      if (gi->grad.empty() || !fi->requires_grad) return;
      detail::ConstMatMap<T> DG(gi->grad.data(), m, m);
      detail::RowMat<T> sym = DG + DG.transpose();
      detail::MatMap<T>(fi->grad_buffer().data(), m, n).noalias() +=
          sym * detail::ConstMatMap<T>(fi->data.data(), m, n);
    });
  }
  return g;
}

namespace detail {

/// Corner-aligned linear sampling positions from `in` onto `out` points.
struct LinearTaps {
  std::vector<std::size_t> lo, hi;
  std::vector<double> frac;
};

inline LinearTaps linear_taps(std::size_t in, std::size_t out) {
  LinearTaps t;
  t.lo.resize(out);
  t.hi.resize(out);
  t.frac.resize(out);
  for (std::size_t j = 0; j < out; ++j) {
    const double pos = (out == 1 || in == 1) ? 0.0
                                             : static_cast<double>(j) * static_cast<double>(in - 1) /
                                                   static_cast<double>(out - 1);
    auto lo = static_cast<std::size_t>(std::floor(pos));
    if (lo > in - 1) lo = in - 1;
    t.lo[j] = lo;
    t.hi[j] = std::min(lo + 1, in - 1);
    t.frac[j] = pos - static_cast<double>(lo);
  }
  return t;
}

}  // namespace detail

/// Linear interpolation along one axis with corner-aligned sampling.
template <typename T>
Tensor<T> resize_axis(const Tensor<T>& x, std::size_t axis, std::size_t size) {
  if (axis >= x.rank()) throw ShapeError("resize_axis: axis out of range");
  if (size == 0) throw ShapeError("resize_axis: target size must be positive");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const std::size_t m = x.dim(axis);
  auto taps = detail::linear_taps(m, size);
  Shape s = x.shape();
  s[axis] = size;
  Tensor<T> y(s);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t j = 0; j < size; ++j) {
      const T f = static_cast<T>(taps.frac[j]);
      const T* lo = x.ptr() + (o * m + taps.lo[j]) * inner;
      const T* hi = x.ptr() + (o * m + taps.hi[j]) * inner;
      T* d = y.ptr() + (o * size + j) * inner;
      for (std::size_t i = 0; i < inner; ++i) d[i] = f == T{0} ? lo[i] : (T{1} - f) * lo[i] + f * hi[i];
    }
  if (auto* tape = detail::recording<T>(x)) {
    detail::mark_output(y);
    tape->record([xi = x.impl(), yi = y.impl(), taps = std::move(taps), outer, inner, m, size] {
      if (yi->grad.empty() || !xi->requires_grad) return;
      auto g = xi->grad_buffer();
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t j = 0; j < size; ++j) {
          const T f = static_cast<T>(taps.frac[j]);
          const T* dy = yi->grad.data() + (o * size + j) * inner;
          T* lo = g.data() + (o * m + taps.lo[j]) * inner;
          T* hi = g.data() + (o * m + taps.hi[j]) * inner;
          for (std::size_t i = 0; i < inner; ++i) {
            lo[i] += (T{1} - f) * dy[i];
            hi[i] += f * dy[i];
          }
        }
    });
  }
  return y;
}

/// Bilinear resize of a square (m, m) map to (k, k), corner-aligned.
template <typename T>
Tensor<T> bilinear_resize_map(const Tensor<T>& map, std::size_t k) {
  if (map.rank() != 2 || map.dim(0) != map.dim(1))
    throw ShapeError("bilinear_resize_map expects a square 2-D map, got " + to_string(map.shape()));
  if (k == 0) throw ShapeError("bilinear_resize_map: target size must be positive");
  if (map.dim(0) == k) return map;
  return resize_axis(resize_axis(map, 0, k), 1, k);
}

}  // namespace takd
