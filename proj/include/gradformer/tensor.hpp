#pragma once

// Dense N-d tensors with a define-by-run reverse-mode tape.
//
// Tensor<T> is a cheap shared handle. T is float for training and inference;
// double is instantiated for finite-difference gradient checking.

#include <algorithm>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "gradformer/errors.hpp"

namespace gradformer {

template <typename T>
concept Real = std::same_as<T, float> || std::same_as<T, double>;

using Shape = std::vector<std::int64_t>;

std::int64_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);
// Maps a possibly negative axis into [0, rank); throws DimensionError.
int normalize_axis(int axis, int rank);

template <Real T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until the first accumulation
  bool requires_grad = false;

  T* grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad.data();
  }
};

template <Real T>
class Tensor {
 public:
  using value_type = T;
  using Impl = TensorImpl<T>;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}
  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

  static Tensor zeros(const Shape& shape) { return full(shape, T(0)); }
  static Tensor ones(const Shape& shape) { return full(shape, T(1)); }
  static Tensor full(const Shape& shape, T value);
  static Tensor scalar(T value) { return Tensor({1}, {value}); }

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  std::int64_t dim(int axis) const { return impl_->shape[normalize_axis(axis, rank())]; }
  std::int64_t numel() const { return static_cast<std::int64_t>(impl_->data.size()); }

  std::span<const T> data() const { return impl_->data; }
  // For initialization and optimizer updates only; tensors referenced by a
  // recorded tape must not be mutated before backward runs.
  std::span<T> mutable_data() { return impl_->data; }
  T item() const;
  T operator[](std::size_t i) const { return impl_->data[i]; }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on) {
    impl_->requires_grad = on;
    return *this;
  }
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const T> grad() const { return impl_->grad; }
  std::span<T> mutable_grad() { return {impl_->grad_buffer(), impl_->data.size()}; }
  void zero_grad() {
    if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
  }
  // Drops the gradient so has_grad() is false until the next accumulation.
  void clear_grad() { impl_->grad.clear(); }
  // Gradient as a standalone tensor (zeros when none accumulated yet).
  Tensor grad_tensor() const;

  // Deep copy of the values; the copy is a fresh leaf without gradient.
  Tensor detach() const { return Tensor(impl_->shape, impl_->data); }
  bool same_storage(const Tensor& other) const noexcept { return impl_ == other.impl_; }

  const std::shared_ptr<Impl>& impl() const noexcept { return impl_; }

 private:
  std::shared_ptr<Impl> impl_;
};

template <Real T>
struct TapeNode {
  std::vector<std::shared_ptr<TensorImpl<T>>> inputs;
  std::shared_ptr<TensorImpl<T>> output;
  // Reads output->grad and accumulates into every input that requires grad.
  std::function<void(const TapeNode&)> backward;
};

// Ordered record of executed primitives. One tape per scalar type per thread.
template <Real T>
class Tape {
 public:
  static Tape& active();

  void record(TapeNode<T> node) { nodes_.push_back(std::move(node)); }
  std::size_t size() const noexcept { return nodes_.size(); }
  const std::vector<TapeNode<T>>& nodes() const noexcept { return nodes_; }
  void clear() { nodes_.clear(); }

  // Replays backward rules in reverse recorded order, then frees the tape.
  void replay_backward();

 private:
  std::vector<TapeNode<T>> nodes_;
};

bool grad_enabled() noexcept;

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Seeds d(loss)/d(loss) = 1 and runs the active tape backward.
template <Real T>
void backward(const Tensor<T>& loss);

}  // namespace gradformer
