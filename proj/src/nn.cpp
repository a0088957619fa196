#include "gradformer/nn.hpp"

#include <cmath>

namespace gradformer {

template <Real T>
Tensor<T> make_parameter(const Shape& shape, InitPolicy policy, Xorshift64Star& rng, double fan_in_or_std) {
  std::vector<T> values(static_cast<std::size_t>(numel_of(shape)));
  switch (policy) {
    case InitPolicy::kZeros:
      std::fill(values.begin(), values.end(), T(0));
      break;
    case InitPolicy::kOnes:
      std::fill(values.begin(), values.end(), T(1));
      break;
    case InitPolicy::kFanInNormal: {
      const double std = std::sqrt(2.0 / fan_in_or_std);
      for (auto& v : values) v = static_cast<T>(std * rng.normal());
      break;
    }
    case InitPolicy::kNormal:
      for (auto& v : values) v = static_cast<T>(fan_in_or_std * rng.normal());
      break;
  }
  return Tensor<T>(shape, std::move(values), true);
}

template <Real T>
void expect_channels(const Tensor<T>& x, std::int64_t channels, const char* who) {
  if (x.rank() != 4 || x.shape()[1] != channels) {
    throw DimensionError(std::string(who) + ": expected [B," + std::to_string(channels) + ",H,W], got " +
                         shape_str(x.shape()));
  }
}

template <Real T>
void push_param(ParameterList<T>& out, const std::string& prefix, const char* leaf, const Tensor<T>& t) {
  if (t.defined()) out.push_back({prefix + "." + leaf, t});
}

// --- Conv2dLayer -------------------------------------------------------------

template <Real T>
Conv2dLayer<T>::Conv2dLayer(std::int64_t in_channels, std::int64_t out_channels, int kernel, Xorshift64Star& rng,
                            int stride, int padding, int groups, bool with_bias)
    : geometry{stride, padding, groups} {
  if (groups < 1 || in_channels % groups || out_channels % groups) {
    throw ConfigError("conv channels " + std::to_string(in_channels) + "->" + std::to_string(out_channels) +
                      " not divisible by groups " + std::to_string(groups));
  }
  const auto fan_in = static_cast<double>(in_channels / groups * kernel * kernel);
  weight = make_parameter<T>({out_channels, in_channels / groups, kernel, kernel}, InitPolicy::kFanInNormal, rng,
                             fan_in);
  if (with_bias) bias = make_parameter<T>({out_channels}, InitPolicy::kZeros, rng);
}

template <Real T>
Tensor<T> Conv2dLayer<T>::forward(const Tensor<T>& x) const {
  return conv2d(x, weight, bias, geometry);
}

template <Real T>
void Conv2dLayer<T>::collect_parameters(const std::string& prefix, ParameterList<T>& out) const {
  push_param(out, prefix, "weight", weight);
  push_param(out, prefix, "bias", bias);
}

// --- ConvTranspose2dLayer ----------------------------------------------------

template <Real T>
ConvTranspose2dLayer<T>::ConvTranspose2dLayer(std::int64_t in_channels, std::int64_t out_channels, int kernel,
                                              int stride_, int padding_, Xorshift64Star& rng, bool with_bias)
    : stride(stride_), padding(padding_) {
  const auto fan_in = static_cast<double>(in_channels * kernel * kernel);
  weight = make_parameter<T>({in_channels, out_channels, kernel, kernel}, InitPolicy::kFanInNormal, rng, fan_in);
  if (with_bias) bias = make_parameter<T>({out_channels}, InitPolicy::kZeros, rng);
}

template <Real T>
Tensor<T> ConvTranspose2dLayer<T>::forward(const Tensor<T>& x) const {
  return conv_transpose2d(x, weight, bias, stride, padding);
}

template <Real T>
void ConvTranspose2dLayer<T>::collect_parameters(const std::string& prefix, ParameterList<T>& out) const {
  push_param(out, prefix, "weight", weight);
  push_param(out, prefix, "bias", bias);
}

// --- InstanceNormLayer -------------------------------------------------------

template <Real T>
InstanceNormLayer<T>::InstanceNormLayer(std::int64_t channels, double eps_) : eps(eps_) {
  Xorshift64Star unused(0);
  gain = make_parameter<T>({channels}, InitPolicy::kOnes, unused);
  shift = make_parameter<T>({channels}, InitPolicy::kZeros, unused);
}

template <Real T>
Tensor<T> InstanceNormLayer<T>::normalize(const Tensor<T>& x) const {
  expect_channels(x, gain.shape()[0], "instance_norm");
  const auto centered = sub(x, mean(x, {2, 3}, true));
  const auto variance = mean(mul(centered, centered), {2, 3}, true);
  return div(centered, sqrt(add_scalar(variance, static_cast<T>(eps))));
}

template <Real T>
Tensor<T> InstanceNormLayer<T>::forward(const Tensor<T>& x) const {
  const auto c = gain.shape()[0];
  return add(mul(normalize(x), reshape(gain, {1, c, 1, 1})), reshape(shift, {1, c, 1, 1}));
}

template <Real T>
void InstanceNormLayer<T>::collect_parameters(const std::string& prefix, ParameterList<T>& out) const {
  push_param(out, prefix, "gain", gain);
  push_param(out, prefix, "shift", shift);
}

// --- ConvMlpLayer ------------------------------------------------------------

template <Real T>
ConvMlpLayer<T>::ConvMlpLayer(std::int64_t channels, int ratio_, Xorshift64Star& rng)
    : expand(channels, channels * ratio_, 1, rng), project(channels * ratio_, channels, 1, rng), ratio(ratio_) {}

template <Real T>
Tensor<T> ConvMlpLayer<T>::forward(const Tensor<T>& x) const {
  expect_channels(x, expand.in_channels(), "conv_mlp");
  return project.forward(gelu(expand.forward(x)));
}

template <Real T>
void ConvMlpLayer<T>::collect_parameters(const std::string& prefix, ParameterList<T>& out) const {
  expand.collect_parameters(prefix + ".expand", out);
  project.collect_parameters(prefix + ".project", out);
}

// --- PatchEmbedLayer ---------------------------------------------------------

template <Real T>
PatchEmbedLayer<T>::PatchEmbedLayer(std::int64_t in_channels, std::int64_t out_channels, int kernel, int stride_,
                                    int padding, Xorshift64Star& rng)
    : conv(in_channels, out_channels, kernel, rng, stride_, padding, 1, false), norm(out_channels) {}

template <Real T>
Tensor<T> PatchEmbedLayer<T>::forward(const Tensor<T>& x) const {
  expect_channels(x, conv.in_channels(), "patch_embed");
  const int s = stride();
  if (x.shape()[2] % s || x.shape()[3] % s) {
    throw DimensionError("patch_embed: spatial dims " + shape_str(x.shape()) + " not divisible by stride " +
                         std::to_string(s));
  }
  return norm.forward(conv.forward(x));
}

template <Real T>
void PatchEmbedLayer<T>::collect_parameters(const std::string& prefix, ParameterList<T>& out) const {
  conv.collect_parameters(prefix + ".conv", out);
  norm.collect_parameters(prefix + ".norm", out);
}

#define GRADFORMER_INSTANTIATE_NN(T)                                                            \
  template Tensor<T> make_parameter<T>(const Shape&, InitPolicy, Xorshift64Star&, double);     \
  template void expect_channels<T>(const Tensor<T>&, std::int64_t, const char*);               \
  template class Conv2dLayer<T>;                                                                \
  template class ConvTranspose2dLayer<T>;                                                       \
  template class InstanceNormLayer<T>;                                                          \
  template class ConvMlpLayer<T>;                                                               \
  template class PatchEmbedLayer<T>;

GRADFORMER_INSTANTIATE_NN(float)
GRADFORMER_INSTANTIATE_NN(double)

}  // namespace gradformer
