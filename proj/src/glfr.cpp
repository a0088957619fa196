#include "gradformer/glfr.hpp"

#include <cmath>

namespace gradformer {

std::int64_t head_dim(std::int64_t input_dim, int heads) {
  if (input_dim <= 0 || heads <= 0) throw ConfigError("head_dim: input dimension and heads must be positive");
  const auto d = input_dim / (4 * static_cast<std::int64_t>(heads));
  if (d == 0) {
    throw ConfigError("stage channels " + std::to_string(input_dim) + " too small for " + std::to_string(heads) +
                      " heads (need at least " + std::to_string(4 * heads) + ")");
  }
  return d;
}

template <Real T>
GlfrParams<T>::GlfrParams(std::int64_t channels, int heads_, double lambda_init_, AttentionKind kind_,
                          Xorshift64Star& rng)
    : lambda_init(lambda_init_), heads(heads_), kind(kind_), stage_channels(channels) {
  if (heads <= 0 || channels % (4 * heads) != 0) {
    throw ConfigError("GLFR needs stage channels divisible by " + std::to_string(4 * heads) + ", got " +
                      std::to_string(channels));
  }
  const auto cs = channels / 2;
  const auto quarter = channels / 4;
  const auto qk_out = kind == AttentionKind::kDifferential ? cs : quarter;
  // Q, K and V are plain linear maps; a key bias would also be invisible to
  // the softmax.
  wq = Conv2dLayer<T>(cs, qk_out, 1, rng, 1, 0, 1, false);
  wk = Conv2dLayer<T>(cs, qk_out, 1, rng, 1, 0, 1, false);
  wv = Conv2dLayer<T>(cs, quarter, 1, rng, 1, 0, 1, false);
  local_proj = Conv2dLayer<T>(cs, quarter, 1, rng);
  if (kind == AttentionKind::kDifferential) {
    const auto hd = head_dim();
    lambda_q1 = make_parameter<T>({hd}, InitPolicy::kNormal, rng, kLambdaInitStd);
    lambda_k1 = make_parameter<T>({hd}, InitPolicy::kNormal, rng, kLambdaInitStd);
    lambda_q2 = make_parameter<T>({hd}, InitPolicy::kNormal, rng, kLambdaInitStd);
    lambda_k2 = make_parameter<T>({hd}, InitPolicy::kNormal, rng, kLambdaInitStd);
  }
}

template <Real T>
void GlfrParams<T>::collect_parameters(const std::string& prefix, ParameterList<T>& out) const {
  wq.collect_parameters(prefix + ".wq", out);
  wk.collect_parameters(prefix + ".wk", out);
  wv.collect_parameters(prefix + ".wv", out);
  local_proj.collect_parameters(prefix + ".local_proj", out);
  if (kind == AttentionKind::kDifferential) {
    out.push_back({prefix + ".lambda_q1", lambda_q1});
    out.push_back({prefix + ".lambda_k1", lambda_k1});
    out.push_back({prefix + ".lambda_q2", lambda_q2});
    out.push_back({prefix + ".lambda_k2", lambda_k2});
  }
}

template <Real T>
Tensor<T> compute_lambda(const GlfrParams<T>& params) {
  if (params.kind != AttentionKind::kDifferential) throw ContractError("compute_lambda: simple attention has no lambda");
  const auto l1 = exp(sum_all(mul(params.lambda_q1, params.lambda_k1)));
  const auto l2 = exp(sum_all(mul(params.lambda_q2, params.lambda_k2)));
  return add_scalar(sub(l1, l2), static_cast<T>(params.lambda_init));
}

template <Real T>
QkvProjection<T> qkv_project(const Tensor<T>& x, const GlfrParams<T>& params) {
  expect_channels(x, params.in_channels(), "qkv_project");
  return {params.wq.forward(x), params.wk.forward(x), params.wv.forward(x)};
}

namespace {

// [B,C,H,W] -> [B,heads,C/heads,HW]
template <Real T>
Tensor<T> to_heads(const Tensor<T>& x, int heads) {
  const auto& s = x.shape();
  return reshape(x, {s[0], heads, s[1] / heads, s[2] * s[3]});
}

// softmax(Q^T K / sqrt(d)) over the key axis for one map: [B,h,HW,HW].
template <Real T>
Tensor<T> attention_map(const Tensor<T>& q, const Tensor<T>& k, int heads) {
  const auto qh = to_heads(q, heads);
  const auto kh = to_heads(k, heads);
  const auto d = qh.shape()[2];
  const auto scores = matmul(permute(qh, {0, 1, 3, 2}), kh);
  return softmax(mul_scalar(scores, static_cast<T>(1.0 / std::sqrt(static_cast<double>(d)))), -1);
}

// A @ V^T, reshaped back to [B,Cv,H,W].
template <Real T>
Tensor<T> apply_attention(const Tensor<T>& a, const Tensor<T>& v, int heads) {
  const auto& s = v.shape();
  const auto vh = to_heads(v, heads);                         // [B,h,dv,HW]
  const auto out = matmul(a, permute(vh, {0, 1, 3, 2}));      // [B,h,HW,dv]
  return reshape(permute(out, {0, 1, 3, 2}), {s[0], s[1], s[2], s[3]});
}

template <Real T>
void check_attention_inputs(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, int heads,
                            std::int64_t q_parts) {
  if (q.rank() != 4 || q.shape() != k.shape() || v.rank() != 4 || v.shape()[0] != q.shape()[0] ||
      v.shape()[2] != q.shape()[2] || v.shape()[3] != q.shape()[3]) {
    throw DimensionError("attention: incompatible Q " + shape_str(q.shape()) + ", K " + shape_str(k.shape()) +
                         ", V " + shape_str(v.shape()));
  }
  if (heads <= 0 || q.shape()[1] % (q_parts * heads) != 0 || v.shape()[1] % heads != 0) {
    throw ConfigError("attention: channels Q=" + std::to_string(q.shape()[1]) + ", V=" +
                      std::to_string(v.shape()[1]) + " not divisible across " + std::to_string(heads) + " heads");
  }
}

}  // namespace

template <Real T>
Tensor<T> differential_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, const Tensor<T>& lambda,
                                 int heads, AttentionMaps<T>* maps) {
  check_attention_inputs(q, k, v, heads, 2);
  const auto qs = split(q, 1, 2);
  const auto ks = split(k, 1, 2);
  const auto a1 = attention_map(qs[0], ks[0], heads);
  const auto a2 = attention_map(qs[1], ks[1], heads);
  const auto a = sub(a1, mul(a2, lambda));
  if (maps) *maps = {a1, a2, a};
  return apply_attention(a, v, heads);
}

template <Real T>
Tensor<T> simple_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, int heads,
                           AttentionMaps<T>* maps) {
  check_attention_inputs(q, k, v, heads, 1);
  const auto a = attention_map(q, k, heads);
  if (maps) *maps = {a, Tensor<T>(), a};
  return apply_attention(a, v, heads);
}

template <Real T>
Tensor<T> glfr_forward(const Tensor<T>& x, const GlfrParams<T>& params, AttentionMaps<T>* maps) {
  expect_channels(x, params.in_channels(), "glfr_forward");
  const auto qkv = qkv_project(x, params);
  const auto attn = params.kind == AttentionKind::kDifferential
                        ? differential_attention(qkv.q, qkv.k, qkv.v, compute_lambda(params), params.heads, maps)
                        : simple_attention(qkv.q, qkv.k, qkv.v, params.heads, maps);
  const auto local = params.local_proj.forward(x);
  return concat<T>({local, attn}, 1);
}

#define GRADFORMER_INSTANTIATE_GLFR(T)                                                                         \
  template struct GlfrParams<T>;                                                                               \
  template Tensor<T> compute_lambda(const GlfrParams<T>&);                                                     \
  template QkvProjection<T> qkv_project(const Tensor<T>&, const GlfrParams<T>&);                               \
  template Tensor<T> differential_attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,              \
                                            const Tensor<T>&, int, AttentionMaps<T>*);                         \
  template Tensor<T> simple_attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int,               \
                                      AttentionMaps<T>*);                                                      \
  template Tensor<T> glfr_forward(const Tensor<T>&, const GlfrParams<T>&, AttentionMaps<T>*);

GRADFORMER_INSTANTIATE_GLFR(float)
GRADFORMER_INSTANTIATE_GLFR(double)

}  // namespace gradformer
