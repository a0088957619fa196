#include "gradformer/decoder.hpp"

namespace gradformer {

template <Real T>
DecoderModule<T>::DecoderModule(const ModelConfig& cfg, Xorshift64Star& rng) {
  std::int64_t total = 0;
  for (auto c : cfg.stage_channels) total += c;
  const auto d = cfg.decoder_width;
  fuse_proj = Conv2dLayer<T>(total, d, 1, rng);
  up1 = ConvTranspose2dLayer<T>(d, d, cfg.upsample_kernel, 2, cfg.upsample_padding, rng);
  res1 = ResidualBlock<T>(d, rng);
  up2 = ConvTranspose2dLayer<T>(d, d, cfg.upsample_kernel, 2, cfg.upsample_padding, rng);
  res2 = ResidualBlock<T>(d, rng);
  head = Conv2dLayer<T>(d, cfg.num_classes, 3, rng, 1, 1);
}

template <Real T>
void DecoderModule<T>::collect_parameters(const std::string& prefix, ParameterList<T>& out) const {
  fuse_proj.collect_parameters(prefix + ".fuse_proj", out);
  up1.collect_parameters(prefix + ".up1", out);
  res1.collect_parameters(prefix + ".res1", out);
  up2.collect_parameters(prefix + ".up2", out);
  res2.collect_parameters(prefix + ".res2", out);
  head.collect_parameters(prefix + ".head", out);
}

template <Real T>
Tensor<T> decode(const std::array<Tensor<T>, 4>& fused, const DecoderModule<T>& decoder, DecoderTaps<T>* taps) {
  const auto& base = fused[0].shape();
  if (fused[0].rank() != 4) throw DimensionError("decode: stage 1 features must be [B,C,H,W]");
  std::vector<Tensor<T>> parts{fused[0]};
  for (int s = 1; s < 4; ++s) {
    const auto& sh = fused[s].shape();
    const std::int64_t factor = std::int64_t{1} << s;
    if (fused[s].rank() != 4 || sh[0] != base[0] || sh[2] * factor != base[2] || sh[3] * factor != base[3]) {
      throw DimensionError("decode: stage " + std::to_string(s + 1) + " features " + shape_str(sh) +
                           " inconsistent with stage 1 " + shape_str(base));
    }
    parts.push_back(upsample_nearest(fused[s], static_cast<int>(factor)));
  }
  const auto cat = concat(parts, 1);
  const auto f = decoder.fuse_proj.forward(cat);
  const auto u1 = decoder.res1.forward(decoder.up1.forward(f));
  const auto u2 = decoder.res2.forward(decoder.up2.forward(u1));
  if (taps) *taps = {cat, f, u1, u2};
  return decoder.head.forward(u2);
}

template <Real T>
BinaryMask predict(const Tensor<T>& logits) {
  if (logits.rank() != 4 || logits.shape()[1] != 2) {
    throw DimensionError("predict: expected [B,2,H,W] logits, got " + shape_str(logits.shape()));
  }
  const auto& s = logits.shape();
  BinaryMask mask(s[0], s[2], s[3]);
  const auto plane = s[2] * s[3];
  const auto data = logits.data();
  for (std::int64_t b = 0; b < s[0]; ++b) {
    const T* no_change = data.data() + b * 2 * plane;
    const T* change = no_change + plane;
    for (std::int64_t i = 0; i < plane; ++i) mask.values[b * plane + i] = change[i] > no_change[i] ? 1 : 0;
  }
  return mask;
}

#define GRADFORMER_INSTANTIATE_DECODER(T)                                                             \
  template struct DecoderModule<T>;                                                                   \
  template Tensor<T> decode(const std::array<Tensor<T>, 4>&, const DecoderModule<T>&, DecoderTaps<T>*); \
  template BinaryMask predict(const Tensor<T>&);

GRADFORMER_INSTANTIATE_DECODER(float)
GRADFORMER_INSTANTIATE_DECODER(double)

}  // namespace gradformer
