#pragma once

// Shared (Siamese) four-stage encoder. Each block is a pre-norm residual pair:
// AFRAR (GLFR on the first channel half, SEA on the second) then a conv MLP.

#include <array>
#include <vector>

#include "gradformer/config.hpp"
#include "gradformer/glfr.hpp"
#include "gradformer/sea.hpp"

namespace gradformer {

template <Real T>
struct AfrarModule {
  AfrarModule() = default;
  AfrarModule(std::int64_t channels, const ModelConfig& cfg, Xorshift64Star& rng);

  std::int64_t channels() const { return glfr.stage_channels; }
  void collect_parameters(const std::string& prefix, ParameterList<T>& out) const;

  GlfrParams<T> glfr;
  SeaParams<T> sea;
};

// split(x) -> (glfr half, sea half); output = concat(glfr(first), sea(second)).
template <Real T>
Tensor<T> afrar_forward(const Tensor<T>& x_norm, const AfrarModule<T>& module, AttentionMaps<T>* maps = nullptr);

template <Real T>
struct EncoderBlock {
  EncoderBlock() = default;
  EncoderBlock(std::int64_t channels, const ModelConfig& cfg, Xorshift64Star& rng);

  void collect_parameters(const std::string& prefix, ParameterList<T>& out) const;

  InstanceNormLayer<T> norm1;
  AfrarModule<T> afrar;
  InstanceNormLayer<T> norm2;
  ConvMlpLayer<T> mlp;
};

// y = x + afrar(norm1(x)); out = y + mlp(norm2(y)).
template <Real T>
Tensor<T> encoder_block_forward(const Tensor<T>& x, const EncoderBlock<T>& block);

template <Real T>
struct EncoderStage {
  Tensor<T> forward(const Tensor<T>& x) const;
  void collect_parameters(const std::string& prefix, ParameterList<T>& out) const;

  PatchEmbedLayer<T> embed;
  std::vector<EncoderBlock<T>> blocks;
};

template <Real T>
using StageFeatures = std::array<Tensor<T>, 4>;

template <Real T>
struct SiameseEncoder {
  static constexpr int kTotalStride = 32;

  SiameseEncoder() = default;
  SiameseEncoder(const ModelConfig& cfg, Xorshift64Star& rng);

  void collect_parameters(const std::string& prefix, ParameterList<T>& out) const;

  std::array<EncoderStage<T>, 4> stages;
};

// Features at strides 4, 8, 16, 32. Throws DimensionError unless H and W are
// divisible by 32.
template <Real T>
StageFeatures<T> encode(const Tensor<T>& image, const SiameseEncoder<T>& encoder);

}  // namespace gradformer
