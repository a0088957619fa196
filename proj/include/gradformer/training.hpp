#pragma once

#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "gradformer/config.hpp"
#include "gradformer/data.hpp"
#include "gradformer/metrics.hpp"
#include "gradformer/model.hpp"

namespace gradformer {

// Pixel-mean of -log p(target) under a softmax over the two channels.
// logits [B,2,H,W], target [B,H,W] holding 0/1; other values raise
// ContractError.
template <Real T>
Tensor<T> cross_entropy_loss(const Tensor<T>& logits, const Tensor<T>& target);

// Pixel-mean of -alpha_t (1 - p_t)^gamma log p_t, with alpha_t = alpha for
// change pixels and 1 - alpha for no-change pixels.
template <Real T>
Tensor<T> focal_loss(const Tensor<T>& logits, const Tensor<T>& target, double gamma = 2.0, double alpha = 0.25);

// 1 - sum(p y) / sum(p + y - p y) over change-class probabilities p.
template <Real T>
Tensor<T> miou_loss(const Tensor<T>& logits, const Tensor<T>& target);

template <Real T>
Tensor<T> compute_loss(LossKind kind, const Tensor<T>& logits, const Tensor<T>& target);

// Decoupled weight decay then a bias-corrected Adam step:
//   theta <- theta - lr wd theta
//   theta <- theta - lr m_hat / (sqrt(v_hat) + eps)
template <Real T>
class AdamW {
 public:
  AdamW(double weight_decay, double beta1, double beta2, double eps)
      : weight_decay_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}
  explicit AdamW(const TrainConfig& cfg) : AdamW(cfg.weight_decay, cfg.beta1, cfg.beta2, cfg.adam_eps) {}

  // Throws ContractError if a parameter has no gradient. Moment buffers are
  // bound to parameter position on the first call.
  void step(ParameterList<T>& params, double lr);
  std::int64_t steps() const { return step_; }
  const std::vector<std::vector<T>>& first_moments() const { return m_; }
  const std::vector<std::vector<T>>& second_moments() const { return v_; }

 private:
  double weight_decay_, beta1_, beta2_, eps_;
  std::int64_t step_ = 0;
  std::vector<std::vector<T>> m_, v_;
};

// lr0 * decay_factor^(number of decay epochs <= epoch).
double lr_at(int epoch, const TrainConfig& cfg);

struct EpochLog {
  int epoch = 0;  // 1-based
  double lr = 0.0;
  double loss = 0.0;
  MetricsReport val;
};

// "epoch=<n> lr=<g> loss=<g> val_f1=<g> val_iou=<g> val_oa=<g>"
std::string format_epoch_log(const EpochLog& log);

struct TrainResult {
  std::vector<EpochLog> epochs;
  int best_epoch = 0;  // 1-based; 0 when no epoch ran
  double best_val_f1 = 0.0;
};

struct TrainHooks {
  // Called after each epoch with the log entry (e.g. to stream it to a file).
  std::function<void(const EpochLog&)> on_epoch;
};

// Seeded epoch loop: shuffle, optional paired flips, forward, loss, backward,
// AdamW. Validates after each epoch and leaves the model holding the
// parameters of the best validation F1 (earliest on ties).
template <Real T>
TrainResult train(GradFormer<T>& model, const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg,
                  const TrainHooks& hooks = {});

// Micro-averaged metrics of argmax predictions over a dataset.
template <Real T>
MetricsReport evaluate(const GradFormer<T>& model, const Dataset& data, int batch = 2);

template <Real T>
BinaryMask infer_mask(const GradFormer<T>& model, const Tensor<T>& pre, const Tensor<T>& post);

}  // namespace gradformer
