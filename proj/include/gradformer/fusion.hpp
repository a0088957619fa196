#pragma once

// Differential amalgamation: fuse one stage's pre/post features with their
// difference through a 1x1 convolution and GELU.

#include "gradformer/nn.hpp"

namespace gradformer {

template <Real T>
struct DaModule {
  DaModule() = default;
  DaModule(std::int64_t channels, Xorshift64Star& rng) : proj(3 * channels, channels, 1, rng) {}

  std::int64_t channels() const { return proj.out_channels(); }
  void collect_parameters(const std::string& prefix, ParameterList<T>& out) const {
    proj.collect_parameters(prefix + ".proj", out);
  }

  Conv2dLayer<T> proj;  // 1x1, 3C -> C, with bias
};

// concat(pre, post, post - pre) along channels.
template <Real T>
Tensor<T> da_concat(const Tensor<T>& pre, const Tensor<T>& post);

// proj(da_concat(pre, post)), before the activation.
template <Real T>
Tensor<T> da_preactivation(const Tensor<T>& pre, const Tensor<T>& post, const DaModule<T>& module);

// gelu(da_preactivation(pre, post)).
template <Real T>
Tensor<T> da_forward(const Tensor<T>& pre, const Tensor<T>& post, const DaModule<T>& module);

}  // namespace gradformer
