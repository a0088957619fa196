#pragma once

// Differentiable primitives. Every op records a backward rule on the active
// tape when grad mode is on and at least one input requires grad.

#include <cstdint>
#include <vector>

#include "gradformer/tensor.hpp"

namespace gradformer {

// Elementwise binary ops. `b` may broadcast against `a`: either it has a
// single element, or it has a's rank with every extent equal to a's or 1.
template <Real T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <Real T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <Real T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <Real T> Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);

template <Real T> Tensor<T> neg(const Tensor<T>& x);
template <Real T> Tensor<T> add_scalar(const Tensor<T>& x, T s);
template <Real T> Tensor<T> mul_scalar(const Tensor<T>& x, T s);

template <Real T> Tensor<T> tanh(const Tensor<T>& x);
template <Real T> Tensor<T> exp(const Tensor<T>& x);
template <Real T> Tensor<T> log(const Tensor<T>& x);
// Throws NumericDomainError on negative input.
template <Real T> Tensor<T> sqrt(const Tensor<T>& x);
// 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
template <Real T> Tensor<T> gelu(const Tensor<T>& x);
// x^p for nonnegative x.
template <Real T> Tensor<T> pow_scalar(const Tensor<T>& x, T p);

// Batched product over equal leading extents: [..., m, k] @ [..., k, n].
template <Real T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

// Max-subtracted softmax along `axis`.
template <Real T> Tensor<T> softmax(const Tensor<T>& x, int axis);
template <Real T> Tensor<T> log_softmax(const Tensor<T>& x, int axis);

template <Real T> Tensor<T> sum(const Tensor<T>& x, std::vector<int> axes, bool keepdims = false);
template <Real T> Tensor<T> mean(const Tensor<T>& x, std::vector<int> axes, bool keepdims = false);
// Sum of every element, shape [1].
template <Real T> Tensor<T> sum_all(const Tensor<T>& x);

template <Real T> Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis);
template <Real T> std::vector<Tensor<T>> split(const Tensor<T>& x, int axis, int pieces);
template <Real T> Tensor<T> slice(const Tensor<T>& x, int axis, std::int64_t begin, std::int64_t end);
// One extent may be -1 and is inferred.
template <Real T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);
template <Real T> Tensor<T> permute(const Tensor<T>& x, const std::vector<int>& perm);

struct Conv2dGeometry {
  int stride = 1;
  int padding = 0;
  int groups = 1;
};

std::int64_t conv_out_extent(std::int64_t in, int kernel, int stride, int padding);
std::int64_t conv_transpose_out_extent(std::int64_t in, int kernel, int stride, int padding);

// Cross-correlation. x [B,Cin,H,W], weight [Cout,Cin/groups,kh,kw], bias [Cout]
// or undefined.
template <Real T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, Conv2dGeometry geometry);

// Adjoint of conv2d with respect to its input. weight [Cin,Cout,kh,kw].
template <Real T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, int stride,
                           int padding);

// Nearest-neighbour upsampling of the last two axes by an integer factor.
template <Real T> Tensor<T> upsample_nearest(const Tensor<T>& x, int factor);

template <Real T> Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <Real T> Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <Real T> Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }
template <Real T> Tensor<T> operator/(const Tensor<T>& a, const Tensor<T>& b) { return div(a, b); }
template <Real T> Tensor<T> operator-(const Tensor<T>& x) { return neg(x); }

}  // namespace gradformer
