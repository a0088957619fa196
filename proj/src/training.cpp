#include "gradformer/training.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

namespace gradformer {

namespace {

template <Real T>
void check_loss_inputs(const Tensor<T>& logits, const Tensor<T>& target, const char* who) {
  const auto& s = logits.shape();
  if (logits.rank() != 4 || s[1] != 2 || target.rank() != 3 || target.shape()[0] != s[0] ||
      target.shape()[1] != s[2] || target.shape()[2] != s[3]) {
    throw DimensionError(std::string(who) + ": logits " + shape_str(s) + " and target " +
                         shape_str(target.shape()) + " are not [B,2,H,W] and [B,H,W]");
  }
  for (const T v : target.data()) {
    if (v != T(0) && v != T(1)) throw ContractError(std::string(who) + ": target values must be 0 or 1");
  }
}

// [B,H,W] 0/1 target -> [B,2,H,W] one-hot constant.
template <Real T>
Tensor<T> one_hot(const Tensor<T>& target) {
  const auto& s = target.shape();
  const auto plane = s[1] * s[2];
  std::vector<T> out(static_cast<std::size_t>(s[0] * 2 * plane), T(0));
  const auto t = target.data();
  for (std::int64_t b = 0; b < s[0]; ++b) {
    for (std::int64_t i = 0; i < plane; ++i) out[(b * 2 + (t[b * plane + i] != T(0))) * plane + i] = T(1);
  }
  return Tensor<T>({s[0], 2, s[1], s[2]}, std::move(out));
}

}  // namespace

template <Real T>
Tensor<T> cross_entropy_loss(const Tensor<T>& logits, const Tensor<T>& target) {
  check_loss_inputs(logits, target, "cross_entropy_loss");
  const auto n = static_cast<double>(target.numel());
  const auto picked = sum_all(mul(log_softmax(logits, 1), one_hot(target)));
  return mul_scalar(picked, static_cast<T>(-1.0 / n));
}

template <Real T>
Tensor<T> focal_loss(const Tensor<T>& logits, const Tensor<T>& target, double gamma, double alpha) {
  check_loss_inputs(logits, target, "focal_loss");
  const auto n = static_cast<double>(target.numel());
  const auto log_pt = sum(mul(log_softmax(logits, 1), one_hot(target)), {1});  // [B,H,W]
  const auto q = add_scalar(neg(exp(log_pt)), T(1));
  const auto modulator = gamma == 2.0 ? mul(q, q) : pow_scalar(q, static_cast<T>(gamma));
  std::vector<T> weights(target.data().begin(), target.data().end());
  for (auto& w : weights) w = static_cast<T>(w != T(0) ? alpha : 1.0 - alpha);
  const Tensor<T> alpha_t(target.shape(), std::move(weights));
  return mul_scalar(sum_all(mul(mul(alpha_t, modulator), log_pt)), static_cast<T>(-1.0 / n));
}

template <Real T>
Tensor<T> miou_loss(const Tensor<T>& logits, const Tensor<T>& target) {
  check_loss_inputs(logits, target, "miou_loss");
  const auto& s = target.shape();
  const auto p = slice(softmax(logits, 1), 1, 1, 2);
  const auto y = reshape(target, {s[0], 1, s[1], s[2]});
  const auto py = mul(p, y);
  const auto inter = sum_all(py);
  const auto uni = sum_all(sub(add(p, y), py));
  return add_scalar(neg(div(inter, uni)), T(1));
}

template <Real T>
Tensor<T> compute_loss(LossKind kind, const Tensor<T>& logits, const Tensor<T>& target) {
  switch (kind) {
    case LossKind::kFocal:
      return focal_loss(logits, target);
    case LossKind::kMiou:
      return miou_loss(logits, target);
    case LossKind::kCrossEntropy:
      break;
  }
  return cross_entropy_loss(logits, target);
}

template <Real T>
void AdamW<T>::step(ParameterList<T>& params, double lr) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.tensor.numel(), T(0));
      v_.emplace_back(p.tensor.numel(), T(0));
    }
  }
  if (m_.size() != params.size()) throw ContractError("AdamW: parameter list changed between steps");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].tensor.has_grad()) throw ContractError("AdamW: parameter '" + params[i].name + "' has no gradient");
    if (static_cast<std::size_t>(params[i].tensor.numel()) != m_[i].size()) {
      throw ContractError("AdamW: parameter '" + params[i].name + "' changed shape");
    }
  }
  ++step_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  const double decay = lr * weight_decay_;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto theta = params[i].tensor.mutable_data();
    const auto g = params[i].tensor.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < theta.size(); ++j) {
      double t = theta[j];
      t -= decay * t;
      const double gj = g[j];
      const double mj = beta1_ * m[j] + (1.0 - beta1_) * gj;
      const double vj = beta2_ * v[j] + (1.0 - beta2_) * gj * gj;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      t -= lr * (mj / c1) / (std::sqrt(vj / c2) + eps_);
      theta[j] = static_cast<T>(t);
    }
  }
}

double lr_at(int epoch, const TrainConfig& cfg) {
  double lr = cfg.lr;
  for (const int e : cfg.decay_epochs) {
    if (e <= epoch) lr *= cfg.decay_factor;
  }
  return lr;
}

std::string format_epoch_log(const EpochLog& log) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "epoch=%d lr=%g loss=%g val_f1=%g val_iou=%g val_oa=%g", log.epoch, log.lr, log.loss,
                log.val.f1, log.val.iou, log.val.oa);
  return buf;
}

template <Real T>
MetricsReport evaluate(const GradFormer<T>& model, const Dataset& data, int batch) {
  NoGradGuard no_grad;
  ConfusionCounts total;
  const auto step = static_cast<std::size_t>(std::max(batch, 1));
  for (std::size_t start = 0; start < data.size(); start += step) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(start + step, data.size()); ++i) idx.push_back(i);
    const auto b = make_batch<T>(data, idx);
    total += confusion(predict(model.forward(b.pre, b.post)), b.mask);
  }
  return MetricsReport::from_counts(total);
}

template <Real T>
BinaryMask infer_mask(const GradFormer<T>& model, const Tensor<T>& pre, const Tensor<T>& post) {
  NoGradGuard no_grad;
  return predict(model.forward(pre, post));
}

template <Real T>
TrainResult train(GradFormer<T>& model, const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg,
                  const TrainHooks& hooks) {
  cfg.validate();
  if (train_set.empty()) throw ContractError("train: training set is empty");
  Xorshift64Star rng(cfg.seed);
  AdamW<T> opt(cfg);
  auto params = model.parameters();
  std::vector<std::vector<T>> best;
  TrainResult result;
  std::vector<std::size_t> order(train_set.size());
  const auto batch = static_cast<std::size_t>(cfg.batch);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at(epoch, cfg);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::vector<std::size_t> idx(order.begin() + start, order.begin() + std::min(start + batch, order.size()));
      std::vector<FlipChoice> flips(idx.size());
      if (cfg.augment_flips) {
        for (auto& f : flips) {
          f.horizontal = rng.below(2) == 1;
          f.vertical = rng.below(2) == 1;
        }
      }
      const auto b = make_batch<T>(train_set, idx, flips);
      for (auto& p : params) p.tensor.clear_grad();
      const auto loss = compute_loss(cfg.loss, model.forward(b.pre, b.post), b.target);
      loss_sum += static_cast<double>(loss.item()) * static_cast<double>(idx.size());
      backward(loss);
      opt.step(params, lr);
    }

    EpochLog log{epoch + 1, lr, loss_sum / static_cast<double>(order.size()), {}};
    log.val = val_set.empty() ? MetricsReport{} : evaluate(model, val_set, cfg.batch);
    if (result.best_epoch == 0 || log.val.f1 > result.best_val_f1) {
      result.best_epoch = log.epoch;
      result.best_val_f1 = log.val.f1;
      best.clear();
      for (const auto& p : params) best.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
    }
    result.epochs.push_back(log);
    if (hooks.on_epoch) hooks.on_epoch(log);
  }

  if (!best.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) std::copy(best[i].begin(), best[i].end(), params[i].tensor.mutable_data().begin());
  }
  for (auto& p : params) p.tensor.clear_grad();
  return result;
}

#define GRADFORMER_INSTANTIATE_TRAINING(T)                                                                    \
  template Tensor<T> cross_entropy_loss(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> focal_loss(const Tensor<T>&, const Tensor<T>&, double, double);                          \
  template Tensor<T> miou_loss(const Tensor<T>&, const Tensor<T>&);                                           \
  template Tensor<T> compute_loss(LossKind, const Tensor<T>&, const Tensor<T>&);                              \
  template class AdamW<T>;                                                                                    \
  template MetricsReport evaluate(const GradFormer<T>&, const Dataset&, int);                                 \
  template BinaryMask infer_mask(const GradFormer<T>&, const Tensor<T>&, const Tensor<T>&);                   \
  template TrainResult train(GradFormer<T>&, const Dataset&, const Dataset&, const TrainConfig&, const TrainHooks&);

GRADFORMER_INSTANTIATE_TRAINING(float)
GRADFORMER_INSTANTIATE_TRAINING(double)

}  // namespace gradformer
