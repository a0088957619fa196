#include "gradformer/encoder.hpp"

namespace gradformer {

template <Real T>
AfrarModule<T>::AfrarModule(std::int64_t channels, const ModelConfig& cfg, Xorshift64Star& rng)
    : glfr(channels, cfg.heads, cfg.lambda_init, cfg.attention, rng), sea(channels / 2, cfg.eps) {
  if (channels % 16 != 0) {
    throw ConfigError("AFRAR needs channels divisible by 16, got " + std::to_string(channels));
  }
}

template <Real T>
void AfrarModule<T>::collect_parameters(const std::string& prefix, ParameterList<T>& out) const {
  glfr.collect_parameters(prefix + ".glfr", out);
  sea.collect_parameters(prefix + ".sea", out);
}

template <Real T>
Tensor<T> afrar_forward(const Tensor<T>& x_norm, const AfrarModule<T>& module, AttentionMaps<T>* maps) {
  expect_channels(x_norm, module.channels(), "afrar_forward");
  const auto halves = split(x_norm, 1, 2);
  return concat<T>({glfr_forward(halves[0], module.glfr, maps), sea_forward(halves[1], module.sea)}, 1);
}

template <Real T>
EncoderBlock<T>::EncoderBlock(std::int64_t channels, const ModelConfig& cfg, Xorshift64Star& rng)
    : norm1(channels), afrar(channels, cfg, rng), norm2(channels), mlp(channels, cfg.mlp_ratio, rng) {}

template <Real T>
void EncoderBlock<T>::collect_parameters(const std::string& prefix, ParameterList<T>& out) const {
  norm1.collect_parameters(prefix + ".norm1", out);
  afrar.collect_parameters(prefix + ".afrar", out);
  norm2.collect_parameters(prefix + ".norm2", out);
  mlp.collect_parameters(prefix + ".mlp", out);
}

template <Real T>
Tensor<T> encoder_block_forward(const Tensor<T>& x, const EncoderBlock<T>& block) {
  const auto y = add(x, afrar_forward(block.norm1.forward(x), block.afrar));
  return add(y, block.mlp.forward(block.norm2.forward(y)));
}

template <Real T>
Tensor<T> EncoderStage<T>::forward(const Tensor<T>& x) const {
  auto h = embed.forward(x);
  for (const auto& block : blocks) h = encoder_block_forward(h, block);
  return h;
}

template <Real T>
void EncoderStage<T>::collect_parameters(const std::string& prefix, ParameterList<T>& out) const {
  embed.collect_parameters(prefix + ".embed", out);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    blocks[i].collect_parameters(prefix + ".block" + std::to_string(i), out);
  }
}

template <Real T>
SiameseEncoder<T>::SiameseEncoder(const ModelConfig& cfg, Xorshift64Star& rng) {
  std::int64_t in = 3;
  for (int s = 0; s < 4; ++s) {
    const auto c = cfg.stage_channels[s];
    auto& stage = stages[s];
    // The first embedding is a 7x7 stride-4 stem; later ones halve resolution.
    stage.embed = s == 0 ? PatchEmbedLayer<T>(in, c, 7, 4, 3, rng) : PatchEmbedLayer<T>(in, c, 3, 2, 1, rng);
    for (int b = 0; b < cfg.stage_depths[s]; ++b) stage.blocks.emplace_back(c, cfg, rng);
    in = c;
  }
}

template <Real T>
void SiameseEncoder<T>::collect_parameters(const std::string& prefix, ParameterList<T>& out) const {
  for (int s = 0; s < 4; ++s) stages[s].collect_parameters(prefix + ".stage" + std::to_string(s + 1), out);
}

template <Real T>
StageFeatures<T> encode(const Tensor<T>& image, const SiameseEncoder<T>& encoder) {
  if (image.rank() != 4 || image.shape()[1] != 3) {
    throw DimensionError("encode: expected [B,3,H,W], got " + shape_str(image.shape()));
  }
  const auto k = SiameseEncoder<T>::kTotalStride;
  if (image.shape()[2] % k || image.shape()[3] % k) {
    throw DimensionError("encode: H and W must be divisible by 32, got " + shape_str(image.shape()));
  }
  StageFeatures<T> out;
  auto h = image;
  for (int s = 0; s < 4; ++s) {
    h = encoder.stages[s].forward(h);
    out[s] = h;
  }
  return out;
}

#define GRADFORMER_INSTANTIATE_ENCODER(T)                                                       \
  template struct AfrarModule<T>;                                                               \
  template struct EncoderBlock<T>;                                                              \
  template struct EncoderStage<T>;                                                              \
  template struct SiameseEncoder<T>;                                                            \
  template Tensor<T> afrar_forward(const Tensor<T>&, const AfrarModule<T>&, AttentionMaps<T>*); \
  template Tensor<T> encoder_block_forward(const Tensor<T>&, const EncoderBlock<T>&);           \
  template StageFeatures<T> encode(const Tensor<T>&, const SiameseEncoder<T>&);

GRADFORMER_INSTANTIATE_ENCODER(float)
GRADFORMER_INSTANTIATE_ENCODER(double)

}  // namespace gradformer
