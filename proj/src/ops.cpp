#include "gradformer/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "gradformer/parallel.hpp"

namespace gradformer {

namespace {

template <Real T>
using ImplPtr = std::shared_ptr<TensorImpl<T>>;

template <Real T>
using BackwardFn = std::function<void(const TapeNode<T>&)>;

template <Real T>
Tensor<T> make_output(Shape shape, std::vector<T> data, std::vector<ImplPtr<T>> inputs, BackwardFn<T> backward) {
  auto out = std::make_shared<TensorImpl<T>>();
  out->shape = std::move(shape);
  out->data = std::move(data);
  const bool needs_grad =
      grad_enabled() && std::any_of(inputs.begin(), inputs.end(), [](const auto& in) { return in->requires_grad; });
  if (needs_grad) {
    out->requires_grad = true;
    Tape<T>::active().record(TapeNode<T>{std::move(inputs), out, std::move(backward)});
  }
  return Tensor<T>(std::move(out));
}

template <Real T>
void require_defined(const Tensor<T>& t, const char* what) {
  if (!t.defined()) throw ContractError(std::string(what) + ": undefined tensor");
}

// ---------------------------------------------------------------------------
// GEMM through Eigen maps over row-major buffers.

template <Real T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// C[m,n] (+)= op(A) op(B), where op(A) is [m,k] and op(B) is [k,n].
template <Real T>
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k, const T* a, const T* b, T* c,
          bool accumulate) {
  Eigen::Map<RowMat<T>> cm(c, m, n);
  auto run = [&](const auto& lhs, const auto& rhs) {
    if (accumulate) {
      cm.noalias() += lhs * rhs;
    } else {
      cm.noalias() = lhs * rhs;
    }
  };
  const Eigen::Map<const RowMat<T>> am(a, trans_a ? k : m, trans_a ? m : k);
  const Eigen::Map<const RowMat<T>> bm(b, trans_b ? n : k, trans_b ? k : n);
  if (!trans_a && !trans_b) run(am, bm);
  if (!trans_a && trans_b) run(am, bm.transpose());
  if (trans_a && !trans_b) run(am.transpose(), bm);
  if (trans_a && trans_b) run(am.transpose(), bm.transpose());
}

// ---------------------------------------------------------------------------
// Broadcasting of the second operand.

struct BroadcastMap {
  enum class Kind { kSame, kScalar, kTrailing, kGeneral } kind = Kind::kSame;
  std::int64_t inner = 1;
  Shape a_shape;
  std::vector<std::int64_t> b_strides;

  std::int64_t index(std::int64_t i) const {
    switch (kind) {
      case Kind::kSame:
        return i;
      case Kind::kScalar:
        return 0;
      case Kind::kTrailing:
        return i / inner;
      case Kind::kGeneral:
        break;
    }
    std::int64_t off = 0;
    for (int d = static_cast<int>(a_shape.size()) - 1; d >= 0; --d) {
      const auto ext = a_shape[d];
      off += (i % ext) * b_strides[d];
      i /= ext;
    }
    return off;
  }
};

BroadcastMap make_broadcast(const Shape& a, const Shape& b) {
  BroadcastMap map;
  map.a_shape = a;
  if (a == b) return map;
  if (numel_of(b) == 1) {
    map.kind = BroadcastMap::Kind::kScalar;
    return map;
  }
  if (a.size() != b.size()) {
    throw DimensionError("cannot broadcast " + shape_str(b) + " against " + shape_str(a));
  }
  for (std::size_t d = 0; d < a.size(); ++d) {
    if (b[d] != a[d] && b[d] != 1) {
      throw DimensionError("cannot broadcast " + shape_str(b) + " against " + shape_str(a));
    }
  }
  // Trailing singletons: b equals a on a prefix and is 1 afterwards.
  std::size_t prefix = 0;
  while (prefix < a.size() && b[prefix] == a[prefix]) ++prefix;
  bool trailing = true;
  std::int64_t inner = 1;
  for (std::size_t d = prefix; d < a.size(); ++d) {
    if (b[d] != 1) trailing = false;
    inner *= a[d];
  }
  if (trailing) {
    map.kind = BroadcastMap::Kind::kTrailing;
    map.inner = inner;
    return map;
  }
  map.kind = BroadcastMap::Kind::kGeneral;
  map.b_strides.assign(a.size(), 0);
  std::int64_t stride = 1;
  for (int d = static_cast<int>(a.size()) - 1; d >= 0; --d) {
    map.b_strides[d] = b[d] == 1 ? 0 : stride;
    stride *= b[d];
  }
  return map;
}

// Elementwise binary op with forward f(x, y) and partials dfdx(x, y, z),
// dfdy(x, y, z), each multiplied by the upstream gradient.
template <Real T, typename F, typename Dx, typename Dy>
Tensor<T> binary_op(const Tensor<T>& a, const Tensor<T>& b, F f, Dx dfdx, Dy dfdy) {
  require_defined(a, "binary op");
  require_defined(b, "binary op");
  const auto map = make_broadcast(a.shape(), b.shape());
  const auto n = a.numel();
  const T* x = a.data().data();
  const T* y = b.data().data();
  std::vector<T> out(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) out[i] = f(x[i], y[map.index(i)]);
  return make_output<T>(a.shape(), std::move(out), {a.impl(), b.impl()}, [map, dfdx, dfdy](const TapeNode<T>& node) {
    const auto& ia = *node.inputs[0];
    const auto& ib = *node.inputs[1];
    const T* g = node.output->grad.data();
    const T* z = node.output->data.data();
    const T* xv = ia.data.data();
    const T* yv = ib.data.data();
    const auto count = static_cast<std::int64_t>(node.output->data.size());
    if (ia.requires_grad) {
      T* ga = node.inputs[0]->grad_buffer();
      for (std::int64_t i = 0; i < count; ++i) ga[i] += g[i] * dfdx(xv[i], yv[map.index(i)], z[i]);
    }
    if (ib.requires_grad) {
      T* gb = node.inputs[1]->grad_buffer();
      for (std::int64_t i = 0; i < count; ++i) {
        const auto j = map.index(i);
        gb[j] += g[i] * dfdy(xv[i], yv[j], z[i]);
      }
    }
  });
}

// Elementwise unary op; dfdx(x, z) is the derivative given input and output.
template <Real T, typename F, typename D>
Tensor<T> unary_op(const Tensor<T>& x, F f, D dfdx) {
  require_defined(x, "unary op");
  const auto n = x.numel();
  const T* xv = x.data().data();
  std::vector<T> out(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) out[i] = f(xv[i]);
  return make_output<T>(x.shape(), std::move(out), {x.impl()}, [dfdx](const TapeNode<T>& node) {
    const T* g = node.output->grad.data();
    const T* z = node.output->data.data();
    const T* in = node.inputs[0]->data.data();
    T* gx = node.inputs[0]->grad_buffer();
    const auto count = node.output->data.size();
    for (std::size_t i = 0; i < count; ++i) gx[i] += g[i] * dfdx(in[i], z[i]);
  });
}

// outer x axis x inner decomposition of a shape around one axis.
struct AxisSplit {
  std::int64_t outer = 1;
  std::int64_t len = 1;
  std::int64_t inner = 1;
};

AxisSplit split_at(const Shape& shape, int axis) {
  AxisSplit s;
  for (int d = 0; d < axis; ++d) s.outer *= shape[d];
  s.len = shape[axis];
  for (std::size_t d = axis + 1; d < shape.size(); ++d) s.inner *= shape[d];
  return s;
}

// Pairwise summation: rounding error grows with log(n) rather than n.
template <Real T>
T pairwise_sum(const T* v, std::int64_t n) {
  if (n <= 128) {
    T acc = 0;
    for (std::int64_t i = 0; i < n; ++i) acc += v[i];
    return acc;
  }
  const auto half = n / 2;
  return pairwise_sum(v, half) + pairwise_sum(v + half, n - half);
}

template <Real T>
Tensor<T> sum_axis_range(const Tensor<T>& x, int first, int last) {
  // Sums over the contiguous axes [first, last], keeping them as extent 1.
  AxisSplit s;
  const auto& shape = x.shape();
  for (int d = 0; d < first; ++d) s.outer *= shape[d];
  for (int d = first; d <= last; ++d) s.len *= shape[d];
  for (std::size_t d = last + 1; d < shape.size(); ++d) s.inner *= shape[d];
  Shape out_shape = shape;
  for (int d = first; d <= last; ++d) out_shape[d] = 1;
  const T* xv = x.data().data();
  std::vector<T> out(static_cast<std::size_t>(s.outer * s.inner), T(0));
  if (s.inner == 1) {
    for (std::int64_t o = 0; o < s.outer; ++o) out[o] = pairwise_sum(xv + o * s.len, s.len);
  } else {
    for (std::int64_t o = 0; o < s.outer; ++o) {
      for (std::int64_t a = 0; a < s.len; ++a) {
        const T* row = xv + (o * s.len + a) * s.inner;
        T* dst = out.data() + o * s.inner;
        for (std::int64_t i = 0; i < s.inner; ++i) dst[i] += row[i];
      }
    }
  }
  return make_output<T>(std::move(out_shape), std::move(out), {x.impl()}, [s](const TapeNode<T>& node) {
    const T* g = node.output->grad.data();
    T* gx = node.inputs[0]->grad_buffer();
    for (std::int64_t o = 0; o < s.outer; ++o) {
      for (std::int64_t a = 0; a < s.len; ++a) {
        T* row = gx + (o * s.len + a) * s.inner;
        const T* src = g + o * s.inner;
        for (std::int64_t i = 0; i < s.inner; ++i) row[i] += src[i];
      }
    }
  });
}

// Row-major strides.
std::vector<std::int64_t> strides_of(const Shape& shape) {
  std::vector<std::int64_t> st(shape.size(), 1);
  for (int d = static_cast<int>(shape.size()) - 2; d >= 0; --d) st[d] = st[d + 1] * shape[d + 1];
  return st;
}

// Calls fn(out_index, in_offset) for every element of `out_shape` in row-major
// order, where in_offset advances by `in_strides` along each output axis.
template <typename F>
void walk_strided(const Shape& out_shape, const std::vector<std::int64_t>& in_strides, F fn) {
  const int rank = static_cast<int>(out_shape.size());
  const auto n = numel_of(out_shape);
  std::vector<std::int64_t> idx(rank, 0);
  std::int64_t off = 0;
  const auto last_ext = out_shape[rank - 1];
  const auto last_stride = in_strides[rank - 1];
  for (std::int64_t i = 0; i < n; i += last_ext) {
    for (std::int64_t j = 0; j < last_ext; ++j) fn(i + j, off + j * last_stride);
    for (int d = rank - 2; d >= 0; --d) {
      if (++idx[d] < out_shape[d]) {
        off += in_strides[d];
        break;
      }
      off -= in_strides[d] * (out_shape[d] - 1);
      idx[d] = 0;
    }
  }
}

// ---------------------------------------------------------------------------
// im2col / col2im for one image [C,H,W] and a [C*kh*kw, oh*ow] column buffer.

struct ConvShape {
  std::int64_t channels, height, width;
  int kh, kw, stride, padding;
  std::int64_t out_h, out_w;
};

template <Real T>
void im2col(const T* src, const ConvShape& cs, T* cols) {
  const auto plane = cs.out_h * cs.out_w;
  for (std::int64_t c = 0; c < cs.channels; ++c) {
    for (int i = 0; i < cs.kh; ++i) {
      for (int j = 0; j < cs.kw; ++j) {
        T* row = cols + ((c * cs.kh + i) * cs.kw + j) * plane;
        for (std::int64_t oh = 0; oh < cs.out_h; ++oh) {
          const auto ih = oh * cs.stride - cs.padding + i;
          T* dst = row + oh * cs.out_w;
          if (ih < 0 || ih >= cs.height) {
            std::fill(dst, dst + cs.out_w, T(0));
            continue;
          }
          const T* line = src + (c * cs.height + ih) * cs.width;
          for (std::int64_t ow = 0; ow < cs.out_w; ++ow) {
            const auto iw = ow * cs.stride - cs.padding + j;
            dst[ow] = (iw >= 0 && iw < cs.width) ? line[iw] : T(0);
          }
        }
      }
    }
  }
}

template <Real T>
void col2im_add(const T* cols, const ConvShape& cs, T* dst) {
  const auto plane = cs.out_h * cs.out_w;
  for (std::int64_t c = 0; c < cs.channels; ++c) {
    for (int i = 0; i < cs.kh; ++i) {
      for (int j = 0; j < cs.kw; ++j) {
        const T* row = cols + ((c * cs.kh + i) * cs.kw + j) * plane;
        for (std::int64_t oh = 0; oh < cs.out_h; ++oh) {
          const auto ih = oh * cs.stride - cs.padding + i;
          if (ih < 0 || ih >= cs.height) continue;
          T* line = dst + (c * cs.height + ih) * cs.width;
          const T* src = row + oh * cs.out_w;
          for (std::int64_t ow = 0; ow < cs.out_w; ++ow) {
            const auto iw = ow * cs.stride - cs.padding + j;
            if (iw >= 0 && iw < cs.width) line[iw] += src[ow];
          }
        }
      }
    }
  }
}

bool is_pointwise(const ConvShape& cs) {
  return cs.kh == 1 && cs.kw == 1 && cs.stride == 1 && cs.padding == 0;
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise

template <Real T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op(
      a, b, [](T x, T y) { return x + y; }, [](T, T, T) { return T(1); }, [](T, T, T) { return T(1); });
}

template <Real T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op(
      a, b, [](T x, T y) { return x - y; }, [](T, T, T) { return T(1); }, [](T, T, T) { return T(-1); });
}

template <Real T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op(
      a, b, [](T x, T y) { return x * y; }, [](T, T y, T) { return y; }, [](T x, T, T) { return x; });
}

template <Real T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op(
      a, b, [](T x, T y) { return x / y; }, [](T, T y, T) { return T(1) / y; },
      [](T, T y, T z) { return -z / y; });
}

template <Real T>
Tensor<T> neg(const Tensor<T>& x) {
  return unary_op(x, [](T v) { return -v; }, [](T, T) { return T(-1); });
}

template <Real T>
Tensor<T> add_scalar(const Tensor<T>& x, T s) {
  return unary_op(x, [s](T v) { return v + s; }, [](T, T) { return T(1); });
}

template <Real T>
Tensor<T> mul_scalar(const Tensor<T>& x, T s) {
  return unary_op(x, [s](T v) { return v * s; }, [s](T, T) { return s; });
}

template <Real T>
Tensor<T> tanh(const Tensor<T>& x) {
  return unary_op(x, [](T v) { return std::tanh(v); }, [](T, T z) { return T(1) - z * z; });
}

template <Real T>
Tensor<T> exp(const Tensor<T>& x) {
  return unary_op(x, [](T v) { return std::exp(v); }, [](T, T z) { return z; });
}

template <Real T>
Tensor<T> log(const Tensor<T>& x) {
  return unary_op(x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <Real T>
Tensor<T> sqrt(const Tensor<T>& x) {
  require_defined(x, "sqrt");
  for (auto v : x.data()) {
    if (v < T(0)) throw NumericDomainError("sqrt of negative value " + std::to_string(v));
  }
  return unary_op(x, [](T v) { return std::sqrt(v); }, [](T, T z) { return T(0.5) / z; });
}

template <Real T>
Tensor<T> gelu(const Tensor<T>& x) {
  constexpr T kScale = T(0.7978845608028654);  // sqrt(2/pi)
  constexpr T kCubic = T(0.044715);
  return unary_op(
      x,
      [](T v) { return T(0.5) * v * (T(1) + std::tanh(kScale * (v + kCubic * v * v * v))); },
      [](T v, T) {
        const T t = std::tanh(kScale * (v + kCubic * v * v * v));
        return T(0.5) * (T(1) + t) + T(0.5) * v * (T(1) - t * t) * kScale * (T(1) + T(3) * kCubic * v * v);
      });
}

template <Real T>
Tensor<T> pow_scalar(const Tensor<T>& x, T p) {
  return unary_op(
      x, [p](T v) { return std::pow(v, p); }, [p](T v, T) { return p * std::pow(v, p - T(1)); });
}

// ---------------------------------------------------------------------------
// matmul

template <Real T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  if (a.rank() < 2 || a.rank() != b.rank()) {
    throw DimensionError("matmul needs equal ranks >= 2, got " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const int r = a.rank();
  for (int d = 0; d < r - 2; ++d) {
    if (a.shape()[d] != b.shape()[d]) {
      throw DimensionError("matmul batch extents differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
  }
  const auto m = a.shape()[r - 2];
  const auto k = a.shape()[r - 1];
  const auto n = b.shape()[r - 1];
  if (b.shape()[r - 2] != k) {
    throw DimensionError("matmul inner extents differ: " + shape_str(a.shape()) + " @ " + shape_str(b.shape()));
  }
  std::int64_t batch = 1;
  for (int d = 0; d < r - 2; ++d) batch *= a.shape()[d];
  Shape out_shape = a.shape();
  out_shape[r - 1] = n;
  std::vector<T> out(static_cast<std::size_t>(batch * m * n));
  const T* av = a.data().data();
  const T* bv = b.data().data();
  parallel_for(batch, [&](std::int64_t i) {
    gemm<T>(false, false, m, n, k, av + i * m * k, bv + i * k * n, out.data() + i * m * n, false);
  });
  return make_output<T>(std::move(out_shape), std::move(out), {a.impl(), b.impl()},
                        [batch, m, n, k](const TapeNode<T>& node) {
                          const T* g = node.output->grad.data();
                          const T* av = node.inputs[0]->data.data();
                          const T* bv = node.inputs[1]->data.data();
                          if (node.inputs[0]->requires_grad) {
                            T* ga = node.inputs[0]->grad_buffer();
                            parallel_for(batch, [&](std::int64_t i) {
                              gemm<T>(false, true, m, k, n, g + i * m * n, bv + i * k * n, ga + i * m * k, true);
                            });
                          }
                          if (node.inputs[1]->requires_grad) {
                            T* gb = node.inputs[1]->grad_buffer();
                            parallel_for(batch, [&](std::int64_t i) {
                              gemm<T>(true, false, k, n, m, av + i * m * k, g + i * m * n, gb + i * k * n, true);
                            });
                          }
                        });
}

// ---------------------------------------------------------------------------
// softmax family

template <Real T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
  require_defined(x, "softmax");
  const int ax = normalize_axis(axis, x.rank());
  const auto s = split_at(x.shape(), ax);
  const T* xv = x.data().data();
  std::vector<T> out(x.data().size());
  for (std::int64_t o = 0; o < s.outer; ++o) {
    for (std::int64_t i = 0; i < s.inner; ++i) {
      const auto base = o * s.len * s.inner + i;
      T mx = xv[base];
      for (std::int64_t a = 1; a < s.len; ++a) mx = std::max(mx, xv[base + a * s.inner]);
      T total = 0;
      for (std::int64_t a = 0; a < s.len; ++a) {
        const T e = std::exp(xv[base + a * s.inner] - mx);
        out[base + a * s.inner] = e;
        total += e;
      }
      for (std::int64_t a = 0; a < s.len; ++a) out[base + a * s.inner] /= total;
    }
  }
  return make_output<T>(x.shape(), std::move(out), {x.impl()}, [s](const TapeNode<T>& node) {
    const T* g = node.output->grad.data();
    const T* y = node.output->data.data();
    T* gx = node.inputs[0]->grad_buffer();
    for (std::int64_t o = 0; o < s.outer; ++o) {
      for (std::int64_t i = 0; i < s.inner; ++i) {
        const auto base = o * s.len * s.inner + i;
        T dot = 0;
        for (std::int64_t a = 0; a < s.len; ++a) dot += g[base + a * s.inner] * y[base + a * s.inner];
        for (std::int64_t a = 0; a < s.len; ++a) {
          const auto p = base + a * s.inner;
          gx[p] += y[p] * (g[p] - dot);
        }
      }
    }
  });
}

template <Real T>
Tensor<T> log_softmax(const Tensor<T>& x, int axis) {
  require_defined(x, "log_softmax");
  const int ax = normalize_axis(axis, x.rank());
  const auto s = split_at(x.shape(), ax);
  const T* xv = x.data().data();
  std::vector<T> out(x.data().size());
  for (std::int64_t o = 0; o < s.outer; ++o) {
    for (std::int64_t i = 0; i < s.inner; ++i) {
      const auto base = o * s.len * s.inner + i;
      T mx = xv[base];
      for (std::int64_t a = 1; a < s.len; ++a) mx = std::max(mx, xv[base + a * s.inner]);
      T total = 0;
      for (std::int64_t a = 0; a < s.len; ++a) total += std::exp(xv[base + a * s.inner] - mx);
      const T lse = mx + std::log(total);
      for (std::int64_t a = 0; a < s.len; ++a) out[base + a * s.inner] = xv[base + a * s.inner] - lse;
    }
  }
  return make_output<T>(x.shape(), std::move(out), {x.impl()}, [s](const TapeNode<T>& node) {
    const T* g = node.output->grad.data();
    const T* y = node.output->data.data();
    T* gx = node.inputs[0]->grad_buffer();
    for (std::int64_t o = 0; o < s.outer; ++o) {
      for (std::int64_t i = 0; i < s.inner; ++i) {
        const auto base = o * s.len * s.inner + i;
        T gsum = 0;
        for (std::int64_t a = 0; a < s.len; ++a) gsum += g[base + a * s.inner];
        for (std::int64_t a = 0; a < s.len; ++a) {
          const auto p = base + a * s.inner;
          gx[p] += g[p] - std::exp(y[p]) * gsum;
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions

template <Real T>
Tensor<T> sum(const Tensor<T>& x, std::vector<int> axes, bool keepdims) {
  require_defined(x, "sum");
  for (auto& a : axes) a = normalize_axis(a, x.rank());
  std::sort(axes.begin(), axes.end());
  axes.erase(std::unique(axes.begin(), axes.end()), axes.end());
  if (axes.empty()) return reshape(x, x.shape());
  Tensor<T> out = x;
  // Collapse runs of adjacent axes into one reduction, last run first.
  std::size_t end = axes.size();
  while (end > 0) {
    std::size_t begin = end - 1;
    while (begin > 0 && axes[begin - 1] + 1 == axes[begin]) --begin;
    out = sum_axis_range(out, axes[begin], axes[end - 1]);
    end = begin;
  }
  if (!keepdims) {
    Shape squeezed;
    for (int d = 0; d < x.rank(); ++d) {
      if (!std::binary_search(axes.begin(), axes.end(), d)) squeezed.push_back(x.shape()[d]);
    }
    if (squeezed.empty()) squeezed.push_back(1);
    out = reshape(out, squeezed);
  }
  return out;
}

template <Real T>
Tensor<T> mean(const Tensor<T>& x, std::vector<int> axes, bool keepdims) {
  require_defined(x, "mean");
  std::int64_t count = 1;
  std::vector<int> uniq;
  for (auto a : axes) uniq.push_back(normalize_axis(a, x.rank()));
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  for (auto a : uniq) count *= x.shape()[a];
  return mul_scalar(sum(x, std::move(uniq), keepdims), T(1) / static_cast<T>(count));
}

template <Real T>
Tensor<T> sum_all(const Tensor<T>& x) {
  require_defined(x, "sum_all");
  const T total = pairwise_sum(x.data().data(), static_cast<std::int64_t>(x.data().size()));
  return make_output<T>({1}, {total}, {x.impl()}, [](const TapeNode<T>& node) {
    const T g = node.output->grad[0];
    T* gx = node.inputs[0]->grad_buffer();
    const auto n = node.inputs[0]->data.size();
    for (std::size_t i = 0; i < n; ++i) gx[i] += g;
  });
}

// ---------------------------------------------------------------------------
// Structural

template <Real T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  for (const auto& p : parts) require_defined(p, "concat");
  const auto& first = parts.front().shape();
  const int ax = normalize_axis(axis, static_cast<int>(first.size()));
  Shape out_shape = first;
  out_shape[ax] = 0;
  for (const auto& p : parts) {
    if (p.rank() != static_cast<int>(first.size())) throw DimensionError("concat rank mismatch");
    for (int d = 0; d < p.rank(); ++d) {
      if (d != ax && p.shape()[d] != first[d]) {
        throw DimensionError("concat extent mismatch: " + shape_str(p.shape()) + " vs " + shape_str(first));
      }
    }
    out_shape[ax] += p.shape()[ax];
  }
  const auto s = split_at(out_shape, ax);
  std::vector<T> out(static_cast<std::size_t>(numel_of(out_shape)));
  std::vector<std::int64_t> widths;
  std::vector<ImplPtr<T>> inputs;
  std::int64_t offset = 0;
  for (const auto& p : parts) {
    const auto w = p.shape()[ax] * s.inner;
    const T* src = p.data().data();
    for (std::int64_t o = 0; o < s.outer; ++o) {
      std::copy(src + o * w, src + (o + 1) * w, out.data() + o * s.len * s.inner + offset);
    }
    widths.push_back(w);
    inputs.push_back(p.impl());
    offset += w;
  }
  return make_output<T>(std::move(out_shape), std::move(out), std::move(inputs),
                        [s, widths](const TapeNode<T>& node) {
                          const T* g = node.output->grad.data();
                          std::int64_t off = 0;
                          for (std::size_t k = 0; k < widths.size(); ++k) {
                            const auto w = widths[k];
                            if (node.inputs[k]->requires_grad) {
                              T* gp = node.inputs[k]->grad_buffer();
                              for (std::int64_t o = 0; o < s.outer; ++o) {
                                const T* src = g + o * s.len * s.inner + off;
                                T* dst = gp + o * w;
                                for (std::int64_t i = 0; i < w; ++i) dst[i] += src[i];
                              }
                            }
                            off += w;
                          }
                        });
}

template <Real T>
Tensor<T> slice(const Tensor<T>& x, int axis, std::int64_t begin, std::int64_t end) {
  require_defined(x, "slice");
  const int ax = normalize_axis(axis, x.rank());
  if (begin < 0 || end > x.shape()[ax] || begin >= end) {
    throw DimensionError("slice [" + std::to_string(begin) + "," + std::to_string(end) + ") invalid for extent " +
                         std::to_string(x.shape()[ax]));
  }
  const auto s = split_at(x.shape(), ax);
  Shape out_shape = x.shape();
  out_shape[ax] = end - begin;
  const auto w = (end - begin) * s.inner;
  const auto skip = begin * s.inner;
  const T* xv = x.data().data();
  std::vector<T> out(static_cast<std::size_t>(s.outer * w));
  for (std::int64_t o = 0; o < s.outer; ++o) {
    const T* src = xv + o * s.len * s.inner + skip;
    std::copy(src, src + w, out.data() + o * w);
  }
  return make_output<T>(std::move(out_shape), std::move(out), {x.impl()}, [s, w, skip](const TapeNode<T>& node) {
    const T* g = node.output->grad.data();
    T* gx = node.inputs[0]->grad_buffer();
    for (std::int64_t o = 0; o < s.outer; ++o) {
      T* dst = gx + o * s.len * s.inner + skip;
      const T* src = g + o * w;
      for (std::int64_t i = 0; i < w; ++i) dst[i] += src[i];
    }
  });
}

template <Real T>
std::vector<Tensor<T>> split(const Tensor<T>& x, int axis, int pieces) {
  require_defined(x, "split");
  const int ax = normalize_axis(axis, x.rank());
  const auto ext = x.shape()[ax];
  if (pieces <= 0 || ext % pieces != 0) {
    throw DimensionError("cannot split extent " + std::to_string(ext) + " into " + std::to_string(pieces) +
                         " equal pieces");
  }
  const auto step = ext / pieces;
  std::vector<Tensor<T>> out;
  out.reserve(pieces);
  for (int p = 0; p < pieces; ++p) out.push_back(slice(x, ax, p * step, (p + 1) * step));
  return out;
}

template <Real T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  require_defined(x, "reshape");
  int infer = -1;
  std::int64_t known = 1;
  for (std::size_t d = 0; d < shape.size(); ++d) {
    if (shape[d] == -1) {
      if (infer >= 0) throw DimensionError("reshape allows one inferred extent");
      infer = static_cast<int>(d);
    } else {
      known *= shape[d];
    }
  }
  if (infer >= 0 && known > 0 && x.numel() % known == 0) shape[infer] = x.numel() / known;
  if (numel_of(shape) != x.numel() || std::any_of(shape.begin(), shape.end(), [](auto d) { return d <= 0; })) {
    throw DimensionError("cannot reshape " + shape_str(x.shape()) + " into " + shape_str(shape));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  return make_output<T>(std::move(shape), std::move(out), {x.impl()}, [](const TapeNode<T>& node) {
    const T* g = node.output->grad.data();
    T* gx = node.inputs[0]->grad_buffer();
    const auto n = node.output->data.size();
    for (std::size_t i = 0; i < n; ++i) gx[i] += g[i];
  });
}

template <Real T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<int>& perm) {
  require_defined(x, "permute");
  const int r = x.rank();
  if (static_cast<int>(perm.size()) != r) throw DimensionError("permutation length differs from rank");
  std::vector<bool> seen(r, false);
  for (auto p : perm) {
    if (p < 0 || p >= r || seen[p]) throw DimensionError("invalid permutation");
    seen[p] = true;
  }
  const auto in_strides = strides_of(x.shape());
  Shape out_shape(r);
  std::vector<std::int64_t> walk(r);
  for (int d = 0; d < r; ++d) {
    out_shape[d] = x.shape()[perm[d]];
    walk[d] = in_strides[perm[d]];
  }
  const T* xv = x.data().data();
  std::vector<T> out(x.data().size());
  walk_strided(out_shape, walk, [&](std::int64_t i, std::int64_t off) { out[i] = xv[off]; });
  auto shape_copy = out_shape;
  return make_output<T>(std::move(out_shape), std::move(out), {x.impl()},
                        [shape_copy, walk](const TapeNode<T>& node) {
                          const T* g = node.output->grad.data();
                          T* gx = node.inputs[0]->grad_buffer();
                          walk_strided(shape_copy, walk, [&](std::int64_t i, std::int64_t off) { gx[off] += g[i]; });
                        });
}

// ---------------------------------------------------------------------------
// Convolutions

std::int64_t conv_out_extent(std::int64_t in, int kernel, int stride, int padding) {
  return (in + 2 * padding - kernel) / stride + 1;
}

std::int64_t conv_transpose_out_extent(std::int64_t in, int kernel, int stride, int padding) {
  return (in - 1) * stride - 2 * padding + kernel;
}

template <Real T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, Conv2dGeometry geo) {
  require_defined(x, "conv2d");
  require_defined(weight, "conv2d");
  if (x.rank() != 4 || weight.rank() != 4) {
    throw DimensionError("conv2d expects 4-d input and weight, got " + shape_str(x.shape()) + " and " +
                         shape_str(weight.shape()));
  }
  if (geo.stride < 1 || geo.padding < 0 || geo.groups < 1) throw DimensionError("conv2d: invalid geometry");
  const auto batch = x.shape()[0];
  const auto cin = x.shape()[1];
  const auto cout = weight.shape()[0];
  const auto cin_g = weight.shape()[1];
  const int kh = static_cast<int>(weight.shape()[2]);
  const int kw = static_cast<int>(weight.shape()[3]);
  if (cin % geo.groups || cout % geo.groups || cin / geo.groups != cin_g) {
    throw DimensionError("conv2d channel mismatch: input " + shape_str(x.shape()) + ", weight " +
                         shape_str(weight.shape()) + ", groups " + std::to_string(geo.groups));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.shape()[0] != cout)) {
    throw DimensionError("conv2d bias must be [" + std::to_string(cout) + "]");
  }
  const ConvShape cs{cin_g,
                     x.shape()[2],
                     x.shape()[3],
                     kh,
                     kw,
                     geo.stride,
                     geo.padding,
                     conv_out_extent(x.shape()[2], kh, geo.stride, geo.padding),
                     conv_out_extent(x.shape()[3], kw, geo.stride, geo.padding)};
  if (cs.out_h < 1 || cs.out_w < 1) throw DimensionError("conv2d input smaller than kernel reach");
  const auto groups = geo.groups;
  const auto cout_g = cout / groups;
  const auto kdim = cin_g * kh * kw;
  const auto plane = cs.out_h * cs.out_w;
  const auto in_plane = cs.height * cs.width;
  const bool pointwise = is_pointwise(cs);

  std::vector<T> out(static_cast<std::size_t>(batch * cout * plane));
  const T* xv = x.data().data();
  const T* wv = weight.data().data();
  const T* bv = bias.defined() ? bias.data().data() : nullptr;
  parallel_for(batch, [&](std::int64_t n) {
    std::vector<T> cols(pointwise ? 0 : static_cast<std::size_t>(kdim * plane));
    for (int g = 0; g < groups; ++g) {
      const T* img = xv + (n * cin + g * cin_g) * in_plane;
      const T* col = img;
      if (!pointwise) {
        im2col(img, cs, cols.data());
        col = cols.data();
      }
      T* dst = out.data() + (n * cout + g * cout_g) * plane;
      gemm<T>(false, false, cout_g, plane, kdim, wv + g * cout_g * kdim, col, dst, false);
    }
    if (bv) {
      for (std::int64_t c = 0; c < cout; ++c) {
        T* dst = out.data() + (n * cout + c) * plane;
        for (std::int64_t p = 0; p < plane; ++p) dst[p] += bv[c];
      }
    }
  });

  std::vector<ImplPtr<T>> inputs{x.impl(), weight.impl()};
  if (bias.defined()) inputs.push_back(bias.impl());
  Shape out_shape{batch, cout, cs.out_h, cs.out_w};
  return make_output<T>(
      std::move(out_shape), std::move(out), std::move(inputs),
      [=](const TapeNode<T>& node) {
        const T* g = node.output->grad.data();
        const auto& xin = *node.inputs[0];
        const auto& win = *node.inputs[1];
        if (node.inputs.size() > 2 && node.inputs[2]->requires_grad) {
          T* gb = node.inputs[2]->grad_buffer();
          for (std::int64_t n = 0; n < batch; ++n) {
            for (std::int64_t c = 0; c < cout; ++c) {
              const T* src = g + (n * cout + c) * plane;
              T acc = 0;
              for (std::int64_t p = 0; p < plane; ++p) acc += src[p];
              gb[c] += acc;
            }
          }
        }
        if (win.requires_grad) {
          T* gw = node.inputs[1]->grad_buffer();
          std::vector<T> cols(pointwise ? 0 : static_cast<std::size_t>(kdim * plane));
          for (std::int64_t n = 0; n < batch; ++n) {
            for (int gi = 0; gi < groups; ++gi) {
              const T* img = xin.data.data() + (n * cin + gi * cin_g) * in_plane;
              const T* col = img;
              if (!pointwise) {
                im2col(img, cs, cols.data());
                col = cols.data();
              }
              gemm<T>(false, true, cout_g, kdim, plane, g + (n * cout + gi * cout_g) * plane, col,
                      gw + gi * cout_g * kdim, true);
            }
          }
        }
        if (xin.requires_grad) {
          T* gx = node.inputs[0]->grad_buffer();
          parallel_for(batch, [&](std::int64_t n) {
            std::vector<T> cols(pointwise ? 0 : static_cast<std::size_t>(kdim * plane));
            for (int gi = 0; gi < groups; ++gi) {
              const T* gout = g + (n * cout + gi * cout_g) * plane;
              T* dst = gx + (n * cin + gi * cin_g) * in_plane;
              if (pointwise) {
                gemm<T>(true, false, kdim, plane, cout_g, win.data.data() + gi * cout_g * kdim, gout, dst, true);
              } else {
                gemm<T>(true, false, kdim, plane, cout_g, win.data.data() + gi * cout_g * kdim, gout, cols.data(),
                        false);
                col2im_add(cols.data(), cs, dst);
              }
            }
          });
        }
      });
}

template <Real T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, int stride,
                           int padding) {
  require_defined(x, "conv_transpose2d");
  require_defined(weight, "conv_transpose2d");
  if (x.rank() != 4 || weight.rank() != 4) throw DimensionError("conv_transpose2d expects 4-d input and weight");
  if (stride < 1 || padding < 0) throw DimensionError("conv_transpose2d: invalid geometry");
  const auto batch = x.shape()[0];
  const auto cin = x.shape()[1];
  if (weight.shape()[0] != cin) {
    throw DimensionError("conv_transpose2d channel mismatch: input " + shape_str(x.shape()) + ", weight " +
                         shape_str(weight.shape()));
  }
  const auto cout = weight.shape()[1];
  const int kh = static_cast<int>(weight.shape()[2]);
  const int kw = static_cast<int>(weight.shape()[3]);
  if (bias.defined() && (bias.rank() != 1 || bias.shape()[0] != cout)) {
    throw DimensionError("conv_transpose2d bias must be [" + std::to_string(cout) + "]");
  }
  const auto h = x.shape()[2];
  const auto w = x.shape()[3];
  const auto oh = conv_transpose_out_extent(h, kh, stride, padding);
  const auto ow = conv_transpose_out_extent(w, kw, stride, padding);
  if (oh < 1 || ow < 1) throw DimensionError("conv_transpose2d output would be empty");
  // The output image plays the role of a convolution input whose conv output is x.
  const ConvShape cs{cout, oh, ow, kh, kw, stride, padding, h, w};
  const auto kdim = cout * kh * kw;
  const auto in_plane = h * w;
  const auto out_plane = oh * ow;

  std::vector<T> out(static_cast<std::size_t>(batch * cout * out_plane), T(0));
  const T* xv = x.data().data();
  const T* wv = weight.data().data();
  const T* bv = bias.defined() ? bias.data().data() : nullptr;
  parallel_for(batch, [&](std::int64_t n) {
    std::vector<T> cols(static_cast<std::size_t>(kdim * in_plane));
    gemm<T>(true, false, kdim, in_plane, cin, wv, xv + n * cin * in_plane, cols.data(), false);
    T* dst = out.data() + n * cout * out_plane;
    col2im_add(cols.data(), cs, dst);
    if (bv) {
      for (std::int64_t c = 0; c < cout; ++c) {
        for (std::int64_t p = 0; p < out_plane; ++p) dst[c * out_plane + p] += bv[c];
      }
    }
  });

  std::vector<ImplPtr<T>> inputs{x.impl(), weight.impl()};
  if (bias.defined()) inputs.push_back(bias.impl());
  Shape out_shape{batch, cout, oh, ow};
  return make_output<T>(std::move(out_shape), std::move(out), std::move(inputs), [=](const TapeNode<T>& node) {
    const T* g = node.output->grad.data();
    const auto& xin = *node.inputs[0];
    const auto& win = *node.inputs[1];
    if (node.inputs.size() > 2 && node.inputs[2]->requires_grad) {
      T* gb = node.inputs[2]->grad_buffer();
      for (std::int64_t n = 0; n < batch; ++n) {
        for (std::int64_t c = 0; c < cout; ++c) {
          const T* src = g + (n * cout + c) * out_plane;
          T acc = 0;
          for (std::int64_t p = 0; p < out_plane; ++p) acc += src[p];
          gb[c] += acc;
        }
      }
    }
    if (!xin.requires_grad && !win.requires_grad) return;
    // im2col of the upstream gradient for every sample.
    std::vector<T> cols(static_cast<std::size_t>(batch * kdim * in_plane));
    parallel_for(batch, [&](std::int64_t n) {
      im2col(g + n * cout * out_plane, cs, cols.data() + n * kdim * in_plane);
    });
    if (win.requires_grad) {
      T* gw = node.inputs[1]->grad_buffer();
      for (std::int64_t n = 0; n < batch; ++n) {
        gemm<T>(false, true, cin, kdim, in_plane, xin.data.data() + n * cin * in_plane,
                cols.data() + n * kdim * in_plane, gw, true);
      }
    }
    if (xin.requires_grad) {
      T* gx = node.inputs[0]->grad_buffer();
      parallel_for(batch, [&](std::int64_t n) {
        gemm<T>(false, false, cin, in_plane, kdim, win.data.data(), cols.data() + n * kdim * in_plane,
                gx + n * cin * in_plane, true);
      });
    }
  });
}

template <Real T>
Tensor<T> upsample_nearest(const Tensor<T>& x, int factor) {
  require_defined(x, "upsample_nearest");
  if (x.rank() < 2 || factor < 1) throw DimensionError("upsample_nearest needs rank >= 2 and factor >= 1");
  const int r = x.rank();
  const auto h = x.shape()[r - 2];
  const auto w = x.shape()[r - 1];
  const auto planes = x.numel() / (h * w);
  const auto oh = h * factor;
  const auto ow = w * factor;
  Shape out_shape = x.shape();
  out_shape[r - 2] = oh;
  out_shape[r - 1] = ow;
  const T* xv = x.data().data();
  std::vector<T> out(static_cast<std::size_t>(planes * oh * ow));
  for (std::int64_t p = 0; p < planes; ++p) {
    for (std::int64_t i = 0; i < oh; ++i) {
      const T* src = xv + (p * h + i / factor) * w;
      T* dst = out.data() + (p * oh + i) * ow;
      for (std::int64_t j = 0; j < ow; ++j) dst[j] = src[j / factor];
    }
  }
  return make_output<T>(std::move(out_shape), std::move(out), {x.impl()}, [=](const TapeNode<T>& node) {
    const T* g = node.output->grad.data();
    T* gx = node.inputs[0]->grad_buffer();
    for (std::int64_t p = 0; p < planes; ++p) {
      for (std::int64_t i = 0; i < oh; ++i) {
        T* dst = gx + (p * h + i / factor) * w;
        const T* src = g + (p * oh + i) * ow;
        for (std::int64_t j = 0; j < ow; ++j) dst[j / factor] += src[j];
      }
    }
  });
}

#define GRADFORMER_INSTANTIATE_OPS(T)                                                                       \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                              \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                              \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                              \
  template Tensor<T> div(const Tensor<T>&, const Tensor<T>&);                                              \
  template Tensor<T> neg(const Tensor<T>&);                                                                \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                                      \
  template Tensor<T> mul_scalar(const Tensor<T>&, T);                                                      \
  template Tensor<T> tanh(const Tensor<T>&);                                                               \
  template Tensor<T> exp(const Tensor<T>&);                                                                \
  template Tensor<T> log(const Tensor<T>&);                                                                \
  template Tensor<T> sqrt(const Tensor<T>&);                                                               \
  template Tensor<T> gelu(const Tensor<T>&);                                                               \
  template Tensor<T> pow_scalar(const Tensor<T>&, T);                                                      \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                           \
  template Tensor<T> softmax(const Tensor<T>&, int);                                                       \
  template Tensor<T> log_softmax(const Tensor<T>&, int);                                                   \
  template Tensor<T> sum(const Tensor<T>&, std::vector<int>, bool);                                        \
  template Tensor<T> mean(const Tensor<T>&, std::vector<int>, bool);                                       \
  template Tensor<T> sum_all(const Tensor<T>&);                                                            \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, int);                                           \
  template std::vector<Tensor<T>> split(const Tensor<T>&, int, int);                                       \
  template Tensor<T> slice(const Tensor<T>&, int, std::int64_t, std::int64_t);                             \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                                     \
  template Tensor<T> permute(const Tensor<T>&, const std::vector<int>&);                                   \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Conv2dGeometry);         \
  template Tensor<T> conv_transpose2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int);     \
  template Tensor<T> upsample_nearest(const Tensor<T>&, int);

GRADFORMER_INSTANTIATE_OPS(float)
GRADFORMER_INSTANTIATE_OPS(double)

#undef GRADFORMER_INSTANTIATE_OPS

}  // namespace gradformer
