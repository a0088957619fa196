#include "gradformer/sea.hpp"

namespace gradformer {

template <Real T>
SeaParams<T>::SeaParams(std::int64_t channels, double eps_) : eps(eps_) {
  if (eps < 0.0 || eps > kMaxEps) throw ConfigError("SEA eps must lie in [0, 1e-5]");
  Xorshift64Star unused(0);
  alpha = make_parameter<T>({channels}, InitPolicy::kOnes, unused);
  gamma = make_parameter<T>({channels}, InitPolicy::kZeros, unused);
  beta = make_parameter<T>({channels}, InitPolicy::kZeros, unused);
}

template <Real T>
void SeaParams<T>::collect_parameters(const std::string& prefix, ParameterList<T>& out) const {
  out.push_back({prefix + ".alpha", alpha});
  out.push_back({prefix + ".gamma", gamma});
  out.push_back({prefix + ".beta", beta});
}

template <Real T>
Tensor<T> sea_embedding(const Tensor<T>& x, const SeaParams<T>& params) {
  expect_channels(x, params.channels(), "sea_embedding");
  const auto energy = sum(mul(x, x), {2, 3});  // [B,Cs]
  const auto norm = sqrt(add_scalar(energy, static_cast<T>(params.eps)));
  return mul(norm, reshape(params.alpha, {1, params.channels()}));
}

template <Real T>
Tensor<T> sea_norm_factor(const Tensor<T>& embedding, const SeaParams<T>& params) {
  if (embedding.rank() != 2 || embedding.shape()[1] != params.channels()) {
    throw DimensionError("sea_norm_factor: expected [B," + std::to_string(params.channels()) + "], got " +
                         shape_str(embedding.shape()));
  }
  const auto rms = sqrt(add_scalar(mean(mul(embedding, embedding), {1}, true), static_cast<T>(params.eps)));
  const auto gamma = add(Tensor<T>::zeros(embedding.shape()), reshape(params.gamma, {1, params.channels()}));
  return div(gamma, rms);  // [B,Cs] / [B,1]
}

template <Real T>
Tensor<T> sea_gate(const Tensor<T>& embedding, const Tensor<T>& norm_factor, const SeaParams<T>& params) {
  if (embedding.shape() != norm_factor.shape()) {
    throw DimensionError("sea_gate: E " + shape_str(embedding.shape()) + " vs N " + shape_str(norm_factor.shape()));
  }
  const auto arg = add(mul(embedding, norm_factor), reshape(params.beta, {1, params.channels()}));
  return add_scalar(tanh(arg), T(1));
}

template <Real T>
Tensor<T> sea_forward(const Tensor<T>& x, const SeaParams<T>& params) {
  const auto e = sea_embedding(x, params);
  const auto n = sea_norm_factor(e, params);
  const auto g = sea_gate(e, n, params);
  return mul(x, reshape(g, {x.shape()[0], x.shape()[1], 1, 1}));
}

#define GRADFORMER_INSTANTIATE_SEA(T)                                                          \
  template struct SeaParams<T>;                                                                \
  template Tensor<T> sea_embedding(const Tensor<T>&, const SeaParams<T>&);                     \
  template Tensor<T> sea_norm_factor(const Tensor<T>&, const SeaParams<T>&);                   \
  template Tensor<T> sea_gate(const Tensor<T>&, const Tensor<T>&, const SeaParams<T>&);        \
  template Tensor<T> sea_forward(const Tensor<T>&, const SeaParams<T>&);

GRADFORMER_INSTANTIATE_SEA(float)
GRADFORMER_INSTANTIATE_SEA(double)

}  // namespace gradformer
