#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "gradformer/decoder.hpp"
#include "gradformer/encoder.hpp"
#include "gradformer/fusion.hpp"

namespace gradformer {

template <Real T>
struct ForwardTaps {
  StageFeatures<T> pre_features;
  StageFeatures<T> post_features;
  StageFeatures<T> fused;
  DecoderTaps<T> decoder;
};

struct ParameterGroup {
  std::string name;
  std::int64_t scalars = 0;
  std::int64_t tensors = 0;
};

template <Real T>
class GradFormer {
 public:
  // Throws ConfigError listing every violated invariant.
  static GradFormer build(const ModelConfig& cfg);

  // Both images [B,3,H,W] with H, W divisible by 32 -> logits [B,2,H,W].
  Tensor<T> forward(const Tensor<T>& pre, const Tensor<T>& post, ForwardTaps<T>* taps = nullptr) const;

  // Every trainable tensor in a fixed order under its hierarchical name.
  ParameterList<T> parameters() const;
  std::int64_t count_parameters() const;
  // Groups: encoder.stage1..4, fusion, decoder.
  std::vector<ParameterGroup> parameter_groups() const;

  const ModelConfig& config() const { return config_; }

  SiameseEncoder<T> encoder;
  std::array<DaModule<T>, 4> fusers;
  DecoderModule<T> decoder;

 private:
  ModelConfig config_;
};

}  // namespace gradformer
