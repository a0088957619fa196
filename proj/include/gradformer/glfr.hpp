#pragma once

// Global-Local Feature Refinement: multi-head differential attention (two
// softmax maps, the second scaled by a learned lambda and subtracted) whose
// output is concatenated with a projected local-feature branch.

#include "gradformer/nn.hpp"

namespace gradformer {

enum class AttentionKind { kDifferential, kSimple };

// floor(input_dim / (4 * heads)); throws ConfigError when that is zero.
std::int64_t head_dim(std::int64_t input_dim, int heads);

template <Real T>
struct GlfrParams {
  static constexpr double kDefaultLambdaInit = 0.8;
  static constexpr double kLambdaInitStd = 0.1;

  GlfrParams() = default;
  // `stage_channels` is C of the owning stage; the module sees C/2 channels.
  GlfrParams(std::int64_t stage_channels, int heads, double lambda_init, AttentionKind kind, Xorshift64Star& rng);

  std::int64_t in_channels() const { return stage_channels / 2; }
  std::int64_t head_dim() const { return gradformer::head_dim(stage_channels, heads); }
  void collect_parameters(const std::string& prefix, ParameterList<T>& out) const;

  Conv2dLayer<T> wq;          // C/2 -> C/2 (C/4 for the simple variant), no bias
  Conv2dLayer<T> wk;          // C/2 -> C/2 (C/4 for the simple variant), no bias
  Conv2dLayer<T> wv;          // C/2 -> C/4, no bias
  Conv2dLayer<T> local_proj;  // C/2 -> C/4
  Tensor<T> lambda_q1, lambda_k1, lambda_q2, lambda_k2;  // [h_dim]; differential only
  double lambda_init = kDefaultLambdaInit;
  int heads = 4;
  AttentionKind kind = AttentionKind::kDifferential;
  std::int64_t stage_channels = 0;
};

template <Real T>
struct AttentionMaps {
  Tensor<T> a1;  // [B,h,HW,HW]
  Tensor<T> a2;  // differential only
  Tensor<T> a;   // a1 - lambda * a2 (a1 for the simple variant)
};

template <Real T>
struct QkvProjection {
  Tensor<T> q, k, v;
};

// lambda = exp(lq1 . lk1) - exp(lq2 . lk2) + lambda_init, shape [1].
template <Real T>
Tensor<T> compute_lambda(const GlfrParams<T>& params);

template <Real T>
QkvProjection<T> qkv_project(const Tensor<T>& x, const GlfrParams<T>& params);

// Q, K [B,Cq,H,W] are split along channels into (Q1,Q2), (K1,K2); each half is
// viewed as [B,h,h_dim,HW]. Returns (A1 - lambda A2) @ V^T as [B,Cv,H,W].
template <Real T>
Tensor<T> differential_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, const Tensor<T>& lambda,
                                 int heads, AttentionMaps<T>* maps = nullptr);

// Single-map multi-head attention softmax(Q^T K / sqrt(d)) @ V^T.
template <Real T>
Tensor<T> simple_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, int heads,
                           AttentionMaps<T>* maps = nullptr);

// concat(local_proj(x), attention(x)) along channels: [B,C/2,H,W] -> same.
template <Real T>
Tensor<T> glfr_forward(const Tensor<T>& x, const GlfrParams<T>& params, AttentionMaps<T>* maps = nullptr);

}  // namespace gradformer
