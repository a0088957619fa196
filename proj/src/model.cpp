#include "gradformer/model.hpp"

namespace gradformer {

template <Real T>
GradFormer<T> GradFormer<T>::build(const ModelConfig& cfg) {
  cfg.validate();
  GradFormer m;
  m.config_ = cfg;
  Xorshift64Star rng(cfg.seed);
  m.encoder = SiameseEncoder<T>(cfg, rng);
  for (int s = 0; s < 4; ++s) m.fusers[s] = DaModule<T>(cfg.stage_channels[s], rng);
  m.decoder = DecoderModule<T>(cfg, rng);
  return m;
}

template <Real T>
Tensor<T> GradFormer<T>::forward(const Tensor<T>& pre, const Tensor<T>& post, ForwardTaps<T>* taps) const {
  if (pre.shape() != post.shape()) {
    throw DimensionError("forward: pre " + shape_str(pre.shape()) + " and post " + shape_str(post.shape()) +
                         " differ");
  }
  // Both streams go through the shared encoder as one batch; every encoder op
  // is per-sample, so this equals encoding them separately.
  const auto batch = pre.shape()[0];
  const auto both = encode(concat<T>({pre, post}, 0), encoder);
  StageFeatures<T> pre_f, post_f, fused;
  for (int s = 0; s < 4; ++s) {
    pre_f[s] = slice(both[s], 0, 0, batch);
    post_f[s] = slice(both[s], 0, batch, 2 * batch);
    fused[s] = da_forward(pre_f[s], post_f[s], fusers[s]);
  }
  DecoderTaps<T>* dtaps = taps ? &taps->decoder : nullptr;
  auto logits = decode(fused, decoder, dtaps);
  if (taps) {
    taps->pre_features = pre_f;
    taps->post_features = post_f;
    taps->fused = fused;
  }
  return logits;
}

template <Real T>
ParameterList<T> GradFormer<T>::parameters() const {
  ParameterList<T> out;
  encoder.collect_parameters("enc", out);
  for (int s = 0; s < 4; ++s) fusers[s].collect_parameters("fuse.stage" + std::to_string(s + 1), out);
  decoder.collect_parameters("dec", out);
  return out;
}

template <Real T>
std::int64_t GradFormer<T>::count_parameters() const {
  std::int64_t total = 0;
  for (const auto& p : parameters()) total += p.tensor.numel();
  return total;
}

template <Real T>
std::vector<ParameterGroup> GradFormer<T>::parameter_groups() const {
  std::vector<ParameterGroup> groups;
  auto add_group = [&](const std::string& name, const ParameterList<T>& list) {
    ParameterGroup g{name, 0, 0};
    for (const auto& p : list) {
      g.scalars += p.tensor.numel();
      ++g.tensors;
    }
    groups.push_back(g);
  };
  for (int s = 0; s < 4; ++s) {
    ParameterList<T> list;
    encoder.stages[s].collect_parameters("", list);
    add_group("encoder.stage" + std::to_string(s + 1), list);
  }
  ParameterList<T> fusion;
  for (const auto& f : fusers) f.collect_parameters("", fusion);
  add_group("fusion", fusion);
  ParameterList<T> dec;
  decoder.collect_parameters("", dec);
  add_group("decoder", dec);
  return groups;
}

template class GradFormer<float>;
template class GradFormer<double>;

}  // namespace gradformer
