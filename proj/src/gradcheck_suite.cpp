#include "gradformer/gradcheck_suite.hpp"

#include <chrono>
#include <map>

#include "gradformer/model.hpp"
#include "gradformer/training.hpp"

namespace gradformer {

namespace {

using Inputs = std::vector<std::pair<std::string, Tensor<double>>>;

Tensor<double> random_tensor(const Shape& shape, Xorshift64Star& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(static_cast<std::size_t>(numel_of(shape)));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor<double>(shape, std::move(v));
}

// Moves parameters away from their structured init (ones/zeros) so every
// branch contributes a nonzero gradient.
void jitter(ParameterList<double>& params, Xorshift64Star& rng, double amount) {
  for (auto& p : params) {
    for (auto& v : p.tensor.mutable_data()) v += rng.uniform(-amount, amount);
  }
}

Inputs with_params(Inputs inputs, const ParameterList<double>& params) {
  for (const auto& p : params) inputs.emplace_back(p.name, p.tensor);
  return inputs;
}

Tensor<double> binary_target(const Shape& shape, Xorshift64Star& rng) {
  std::vector<double> v(static_cast<std::size_t>(numel_of(shape)));
  for (auto& x : v) x = static_cast<double>(rng.below(2));
  return Tensor<double>(shape, std::move(v));
}

GradcheckOptions options_for(const SuiteOptions& o, std::size_t samples = 0) {
  GradcheckOptions g;
  g.tol = o.tol;
  g.step = o.step;
  g.seed = o.seed;
  g.max_elements_per_tensor = samples;
  return g;
}

GradcheckReport check_module(const std::string& name, const ModelConfig& cfg, const SuiteOptions& o) {
  Xorshift64Star rng(o.seed);
  const auto g = options_for(o);

  if (name == "sea") {
    SeaParams<double> sea(6, cfg.eps);
    ParameterList<double> params;
    sea.collect_parameters("sea", params);
    jitter(params, rng, 0.5);
    const auto x = random_tensor({2, 6, 3, 3}, rng);
    return gradcheck([&] { return sea_forward(x, sea); }, with_params({{"x", x}}, params), g);
  }
  if (name == "glfr" || name == "glfr_simple") {
    const auto kind = name == "glfr" ? AttentionKind::kDifferential : AttentionKind::kSimple;
    const std::int64_t c = 4 * cfg.heads * 2;
    GlfrParams<double> glfr(c, cfg.heads, cfg.lambda_init, kind, rng);
    ParameterList<double> params;
    glfr.collect_parameters("glfr", params);
    const auto x = random_tensor({2, c / 2, 3, 3}, rng);
    return gradcheck([&] { return glfr_forward(x, glfr); }, with_params({{"x", x}}, params), g);
  }
  if (name == "afrar" || name == "encoder_block") {
    const std::int64_t c = std::max<std::int64_t>(16, 4 * cfg.heads);
    const auto x = random_tensor({1, c, 3, 3}, rng);
    ParameterList<double> params;
    if (name == "afrar") {
      AfrarModule<double> afrar(c, cfg, rng);
      afrar.collect_parameters("afrar", params);
      jitter(params, rng, 0.1);
      return gradcheck([&] { return afrar_forward(x, afrar); }, with_params({{"x", x}}, params), g);
    }
    EncoderBlock<double> block(c, cfg, rng);
    block.collect_parameters("block", params);
    jitter(params, rng, 0.1);
    return gradcheck([&] { return encoder_block_forward(x, block); }, with_params({{"x", x}}, params), g);
  }
  if (name == "da") {
    DaModule<double> da(4, rng);
    ParameterList<double> params;
    da.collect_parameters("da", params);
    const auto pre = random_tensor({2, 4, 3, 3}, rng);
    const auto post = random_tensor({2, 4, 3, 3}, rng);
    return gradcheck([&] { return da_forward(pre, post, da); }, with_params({{"pre", pre}, {"post", post}}, params),
                     g);
  }
  if (name == "decoder") {
    ModelConfig dcfg = cfg;
    dcfg.stage_channels = {4, 6, 8, 10};
    dcfg.decoder_width = 4;
    DecoderModule<double> dec(dcfg, rng);
    ParameterList<double> params;
    dec.collect_parameters("dec", params);
    std::array<Tensor<double>, 4> feats;
    Inputs inputs;
    for (int s = 0; s < 4; ++s) {
      const std::int64_t side = std::int64_t{8} >> s;
      feats[s] = random_tensor({1, dcfg.stage_channels[s], side, side}, rng);
      inputs.emplace_back("stage" + std::to_string(s + 1), feats[s]);
    }
    return gradcheck([&] { return decode(feats, dec); }, with_params(inputs, params), options_for(o, 6));
  }
  if (name == "cross_entropy" || name == "focal" || name == "miou") {
    const auto logits = random_tensor({2, 2, 3, 3}, rng, -2.0, 2.0);
    const auto target = binary_target({2, 3, 3}, rng);
    const auto kind = name == "focal" ? LossKind::kFocal : name == "miou" ? LossKind::kMiou : LossKind::kCrossEntropy;
    return gradcheck([&] { return compute_loss(kind, logits, target); }, {{"logits", logits}}, g);
  }
  if (name == "model") {
    auto model = GradFormer<double>::build(cfg);
    auto params = model.parameters();
    jitter(params, rng, 0.05);
    const auto pre = random_tensor({1, 3, 64, 64}, rng, 0.0, 1.0);
    const auto post = random_tensor({1, 3, 64, 64}, rng, 0.0, 1.0);
    const auto target = binary_target({1, 64, 64}, rng);
    return gradcheck([&] { return cross_entropy_loss(model.forward(pre, post), target); },
                     with_params({{"pre", pre}, {"post", post}}, params), options_for(o, o.full_model_samples));
  }
  throw ConfigError("unknown gradcheck module '" + name + "'");
}

}  // namespace

std::vector<std::string> gradcheck_module_names() {
  return {"sea", "glfr", "glfr_simple", "afrar", "encoder_block", "da", "decoder", "cross_entropy", "focal", "miou",
          "model"};
}

SuiteResult run_gradcheck_module(const std::string& name, const ModelConfig& model_cfg, const SuiteOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  SuiteResult r{name, check_module(name, model_cfg, options), 0.0};
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

std::vector<SuiteResult> run_gradcheck_suite(const ModelConfig& model_cfg, const SuiteOptions& options) {
  std::vector<SuiteResult> out;
  for (const auto& name : gradcheck_module_names()) out.push_back(run_gradcheck_module(name, model_cfg, options));
  return out;
}

}  // namespace gradformer
