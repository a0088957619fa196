#pragma once

// Multi-scale decoder: bring stages 2-4 to stage-1 resolution, concatenate,
// project to a common width, then two (upsample x2 + residual block) steps and
// a 3x3 head producing two-class logits at input resolution.

#include <array>

#include "gradformer/config.hpp"
#include "gradformer/mask.hpp"
#include "gradformer/nn.hpp"

namespace gradformer {

// x + conv2(gelu(conv1(x))), both 3x3 with padding 1.
template <Real T>
struct ResidualBlock {
  ResidualBlock() = default;
  ResidualBlock(std::int64_t channels, Xorshift64Star& rng)
      : conv1(channels, channels, 3, rng, 1, 1), conv2(channels, channels, 3, rng, 1, 1) {}

  Tensor<T> forward(const Tensor<T>& x) const { return add(x, conv2.forward(gelu(conv1.forward(x)))); }
  void collect_parameters(const std::string& prefix, ParameterList<T>& out) const {
    conv1.collect_parameters(prefix + ".conv1", out);
    conv2.collect_parameters(prefix + ".conv2", out);
  }

  Conv2dLayer<T> conv1;
  Conv2dLayer<T> conv2;
};

template <Real T>
struct DecoderModule {
  DecoderModule() = default;
  DecoderModule(const ModelConfig& cfg, Xorshift64Star& rng);

  void collect_parameters(const std::string& prefix, ParameterList<T>& out) const;

  Conv2dLayer<T> fuse_proj;  // 1x1, sum(C_i) -> D
  ConvTranspose2dLayer<T> up1;
  ResidualBlock<T> res1;
  ConvTranspose2dLayer<T> up2;
  ResidualBlock<T> res2;
  Conv2dLayer<T> head;  // 3x3, D -> 2
};

// Intermediate activations exposed for shape audits.
template <Real T>
struct DecoderTaps {
  Tensor<T> concat;  // [B, sum C_i, H/4, W/4]
  Tensor<T> fused;   // [B, D, H/4, W/4]
  Tensor<T> up1;     // [B, D, H/2, W/2] after res1
  Tensor<T> up2;     // [B, D, H, W] after res2
};

template <Real T>
Tensor<T> decode(const std::array<Tensor<T>, 4>& fused, const DecoderModule<T>& decoder,
                 DecoderTaps<T>* taps = nullptr);

// Per-pixel argmax over two channels; exact ties go to class 0.
template <Real T>
BinaryMask predict(const Tensor<T>& logits);

}  // namespace gradformer
