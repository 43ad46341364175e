// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensors with a linear reverse-mode tape.
//
// A Tensor is a shared handle: copies alias the same storage, `clone()` makes
// a deep copy. Operations record a backward closure on the tape that is
// active on the current thread (see TapeScope) whenever at least one operand
// requires a gradient. Because the tape is appended in execution order,
// replaying it in reverse is a valid topological order.
#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "takd/error.hpp"

namespace takd {

using Shape = std::vector<std::size_t>;

inline std::size_t numel_of(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string to_string(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ')';
  return os.str();
}

template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until something accumulates into it
  bool requires_grad = false;

  std::span<T> grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), T{0});
    return grad;
  }
};

template <typename T>
class GradTape;

namespace detail {

template <typename T>
GradTape<T>*& active_tape() {
  thread_local GradTape<T>* tape = nullptr;
  return tape;
}

}  // namespace detail

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() : impl_(std::make_shared<TensorImpl<T>>()) {}

  explicit Tensor(Shape shape, T fill = T{0}) : impl_(std::make_shared<TensorImpl<T>>()) {
    for (auto d : shape)
      if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + to_string(shape));
    impl_->data.assign(numel_of(shape), fill);
    impl_->shape = std::move(shape);
  }

  Tensor(Shape shape, std::vector<T> values) : impl_(std::make_shared<TensorImpl<T>>()) {
    for (auto d : shape)
      if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + to_string(shape));
    if (numel_of(shape) != values.size())
      throw ShapeError("shape " + to_string(shape) + " does not match " +
                       std::to_string(values.size()) + " values");
    impl_->shape = std::move(shape);
    impl_->data = std::move(values);
  }

  static Tensor scalar(T v) { return Tensor(Shape{}, std::vector<T>{v}); }

  const Shape& shape() const { return impl_->shape; }
  std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->data.size(); }
  bool empty() const { return impl_->data.empty(); }

  std::span<T> data() { return impl_->data; }
  std::span<const T> data() const { return impl_->data; }
  T* ptr() { return impl_->data.data(); }
  const T* ptr() const { return impl_->data.data(); }
  T& operator[](std::size_t i) { return impl_->data[i]; }
  const T& operator[](std::size_t i) const { return impl_->data[i]; }

  T item() const {
    if (numel() != 1) throw ShapeError("item() on tensor with shape " + to_string(shape()));
    return impl_->data[0];
  }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on = true) {
    impl_->requires_grad = on;
    return *this;
  }

  /// Accumulated gradient; zeros if nothing has flowed into this tensor.
  std::span<const T> grad() const {
    if (impl_->grad.empty()) impl_->grad.assign(numel(), T{0});
    return impl_->grad;
  }
  void zero_grad() { impl_->grad.clear(); }

  Tensor clone() const {
    Tensor t;
    t.impl_->shape = impl_->shape;
    t.impl_->data = impl_->data;
    return t;
  }

  /// Same values, cut from the graph.
  Tensor detach() const { return clone(); }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.impl()->shape = shape();
    out.impl()->data.assign(impl_->data.begin(), impl_->data.end());
    return out;
  }

  bool same_storage(const Tensor& o) const { return impl_ == o.impl_; }

  const std::shared_ptr<TensorImpl<T>>& impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl<T>> impl_;
};

/// Linear record of backward closures.
template <typename T>
class GradTape {
 public:
  GradTape() = default;
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  void record(std::function<void()> backward) {
    if (consumed_) throw TapeError("recording onto a consumed tape; call reset() first");
    nodes_.push_back(std::move(backward));
  }

  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  /// Seeds d(loss)/d(loss) = 1 and replays the tape in reverse.
  void backward(const Tensor<T>& loss) {
    if (consumed_) throw TapeError("backward called twice on the same tape without reset()");
    if (loss.numel() != 1)
      throw TapeError("backward requires a scalar loss, got shape " + to_string(loss.shape()));
    consumed_ = true;
    if (!loss.requires_grad()) return;
    loss.impl()->grad_buffer()[0] += T{1};
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  }

  void reset() {
    nodes_.clear();
    consumed_ = false;
  }

 private:
  std::vector<std::function<void()>> nodes_;
  bool consumed_ = false;
};

/// Makes `tape` the recording target for the current thread while alive.
template <typename T>
class TapeScope {
 public:
  explicit TapeScope(GradTape<T>& tape) : prev_(detail::active_tape<T>()) {
    detail::active_tape<T>() = &tape;
  }
  ~TapeScope() { detail::active_tape<T>() = prev_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  GradTape<T>* prev_;
};

/// Suspends recording on the current thread while alive.
template <typename T>
class NoGradScope {
 public:
  NoGradScope() : prev_(detail::active_tape<T>()) { detail::active_tape<T>() = nullptr; }
  ~NoGradScope() { detail::active_tape<T>() = prev_; }
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  GradTape<T>* prev_;
};

namespace detail {

/// Tape to record on when any operand needs a gradient, else nullptr.
template <typename T, typename... Ts>
GradTape<T>* recording(const Ts&... operands) {
  GradTape<T>* tape = active_tape<T>();
  if (tape == nullptr) return nullptr;
  const bool any = (operands.requires_grad() || ...);
  return any ? tape : nullptr;
}

template <typename T>
void mark_output(Tensor<T>& out) {
  out.impl()->requires_grad = true;
}

}  // namespace detail

template <typename T>
bool all_finite(const Tensor<T>& t) {
  for (T v : t.data())
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace takd
