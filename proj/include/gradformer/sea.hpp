#pragma once

// Selective Embedding Amplification: a per-channel gate in (0, 2) computed
// from each channel's spatial L2 energy.

#include "gradformer/nn.hpp"

namespace gradformer {

template <Real T>
struct SeaParams {
  static constexpr double kDefaultEps = 1e-5;
  static constexpr double kMaxEps = 1e-5;

  SeaParams() = default;
  // alpha = 1, gamma = 0, beta = 0: the module starts as an exact identity.
  explicit SeaParams(std::int64_t channels, double eps = kDefaultEps);

  std::int64_t channels() const { return alpha.shape()[0]; }
  void collect_parameters(const std::string& prefix, ParameterList<T>& out) const;

  Tensor<T> alpha;  // [Cs] channel importance
  Tensor<T> gamma;  // [Cs] cross-channel competition
  Tensor<T> beta;   // [Cs] gate bias
  double eps = kDefaultEps;
};

// E[b,c] = alpha[c] * sqrt(sum_hw x[b,c,h,w]^2 + eps)            -> [B,Cs]
template <Real T>
Tensor<T> sea_embedding(const Tensor<T>& x, const SeaParams<T>& params);

// N[b,c] = gamma[c] / sqrt(mean_c' E[b,c']^2 + eps)             -> [B,Cs]
template <Real T>
Tensor<T> sea_norm_factor(const Tensor<T>& embedding, const SeaParams<T>& params);

// G = 1 + tanh(E * N + beta)                                      -> [B,Cs]
template <Real T>
Tensor<T> sea_gate(const Tensor<T>& embedding, const Tensor<T>& norm_factor, const SeaParams<T>& params);

// x * G, with G broadcast over the spatial axes.
template <Real T>
Tensor<T> sea_forward(const Tensor<T>& x, const SeaParams<T>& params);

}  // namespace gradformer
