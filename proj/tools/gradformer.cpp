#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "gradformer/gradcheck_suite.hpp"
#include "gradformer/io.hpp"
#include "gradformer/training.hpp"

namespace fs = std::filesystem;
using namespace gradformer;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

// Raised for flag values that parse but make no sense; maps to exit status 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

constexpr double kReferenceParams = 10.90e6;

struct SynthArgs {
  std::string out;
  int num = 10;
  int size = 64;
  std::uint64_t seed = 0;
  bool distractor_only = false;
};

struct TrainArgs {
  std::string data, config = "default", out;
  std::optional<int> epochs;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> loss, attention;
};

struct EvalArgs {
  std::string ckpt, data, split = "test", report;
};

struct InferArgs {
  std::string ckpt, pre, post, out, logits;
};

struct GradcheckArgs {
  std::string config = "tiny";
  double tol = 1e-5;
  std::vector<std::string> modules;
};

struct ParamsArgs {
  std::string config = "default";
};

int run_synth(const SynthArgs& a) {
  if (a.size <= 0 || a.size % 32 != 0) throw UsageError("size must be divisible by 32");
  if (a.num <= 0) throw UsageError("--num must be positive");
  synth_generate({a.num, a.size, a.seed, a.distractor_only}, a.out);
  const auto s = split_sizes(a.num);
  std::cout << "wrote " << a.num << " samples to " << a.out << " (train=" << s.train << " val=" << s.val
            << " test=" << s.test << ")\n";
  return kExitOk;
}

int run_train(const TrainArgs& a) {
  auto cfg = resolve_config(a.config);
  if (a.epochs) cfg.train.epochs = *a.epochs;
  if (a.seed) cfg.model.seed = cfg.train.seed = *a.seed;
  if (a.loss) cfg.train.loss = parse_loss_kind(*a.loss);
  if (a.attention) cfg.model.attention = parse_attention_kind(*a.attention);
  cfg.model.validate();
  cfg.train.validate();

  const auto train_set = load_split(a.data, "train");
  const auto val_set = load_split(a.data, "val");
  if (train_set.empty()) throw std::runtime_error("training split of '" + a.data + "' is empty");
  if (train_set.samples.front().height() % 32 || train_set.samples.front().width() % 32) {
    throw DimensionError("image size must be divisible by 32");
  }

  auto model = GradFormer<float>::build(cfg.model);
  std::ofstream log(a.out + ".log", std::ios::trunc);
  if (!log) throw std::runtime_error("cannot write '" + a.out + ".log'");
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochLog& e) {
    const auto line = format_epoch_log(e);
    log << line << '\n' << std::flush;
    std::cout << line << std::endl;
  };
  const auto result = train(model, train_set, val_set, cfg.train, hooks);
  save_checkpoint(a.out, model, cfg);
  std::cout << "best_epoch=" << result.best_epoch << " best_val_f1=" << result.best_val_f1 << "\n";
  return kExitOk;
}

int run_eval(const EvalArgs& a) {
  const auto loaded = load_checkpoint<float>(a.ckpt);
  const auto data = load_split(a.data, a.split);
  const auto report = evaluate(loaded.model, data, loaded.config.train.batch);
  const auto text = format_report(report);
  write_file(a.report, text);
  std::cout << text;
  return kExitOk;
}

int run_infer(const InferArgs& a) {
  const auto loaded = load_checkpoint<float>(a.ckpt);
  const auto pre = read_image(a.pre);
  const auto post = read_image(a.post);
  if (pre.shape() != post.shape()) {
    throw DimensionError("pre " + shape_str(pre.shape()) + " and post " + shape_str(post.shape()) + " differ in size");
  }
  if (pre.shape()[1] % 32 || pre.shape()[2] % 32) throw DimensionError("image size must be divisible by 32");
  const Shape batched{1, 3, pre.shape()[1], pre.shape()[2]};
  NoGradGuard no_grad;
  const auto logits = loaded.model.forward(reshape(pre, batched), reshape(post, batched));
  write_mask(a.out, predict(logits));
  if (!a.logits.empty()) write_tensor(a.logits, logits);
  return kExitOk;
}

int run_gradcheck(const GradcheckArgs& a) {
  const auto cfg = resolve_config(a.config).model;
  cfg.validate();
  SuiteOptions options;
  options.tol = a.tol;
  const auto names = a.modules.empty() ? gradcheck_module_names() : a.modules;
  bool all = true;
  for (const auto& name : names) {
    const auto r = run_gradcheck_module(name, cfg, options);
    all = all && r.report.passed;
    std::printf("module=%s max_rel_err=%.3e checked=%zu seconds=%.2f %s\n", name.c_str(), r.report.max_rel_error,
                r.report.entries.size(), r.seconds, r.report.passed ? "PASS" : "FAIL");
    std::fflush(stdout);
  }
  std::printf("gradcheck %s (tol=%g)\n", all ? "PASS" : "FAIL", a.tol);
  return all ? kExitOk : kExitFailure;
}

int run_params(const ParamsArgs& a) {
  const auto cfg = resolve_config(a.config).model;
  const auto model = GradFormer<float>::build(cfg);
  const auto total = model.count_parameters();
  std::int64_t tensors = 0;
  for (const auto& g : model.parameter_groups()) {
    std::printf("group=%s params=%lld tensors=%lld\n", g.name.c_str(), static_cast<long long>(g.scalars),
                static_cast<long long>(g.tensors));
    tensors += g.tensors;
  }
  std::printf("tensors=%lld\n", static_cast<long long>(tensors));
  std::printf("total=%lld\n", static_cast<long long>(total));
  std::printf("reference=%.0f deviation_pct=%+.2f\n", kReferenceParams,
              100.0 * (static_cast<double>(total) - kReferenceParams) / kReferenceParams);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GRAD-Former change detection: synthetic data, training, evaluation and checks"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a seeded synthetic bitemporal dataset");
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--num", synth.num, "Number of samples")->capture_default_str();
  s->add_option("--size", synth.size, "Image side (divisible by 32)")->capture_default_str();
  s->add_option("--seed", synth.seed, "Generator seed")->capture_default_str();
  s->add_flag("--distractor-only", synth.distractor_only, "Only illumination pseudo-changes; empty masks");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a model on a dataset directory");
  t->add_option("--data", tr.data, "Dataset directory")->required();
  t->add_option("--config", tr.config, "Config file, or 'default' / 'tiny'")->capture_default_str();
  t->add_option("--epochs", tr.epochs, "Number of epochs (overrides the config)");
  t->add_option("--out", tr.out, "Checkpoint path; the epoch log goes to <out>.log")->required();
  t->add_option("--seed", tr.seed, "Seed for initialization and the training stream");
  t->add_option("--loss", tr.loss, "ce | focal | miou")->check(CLI::IsMember({"ce", "cross_entropy", "focal", "miou"}));
  t->add_option("--attention", tr.attention, "diff | simple")->check(CLI::IsMember({"diff", "differential", "simple"}));

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Micro-averaged F1 / IoU / OA over a split");
  e->add_option("--ckpt", ev.ckpt, "Checkpoint")->required();
  e->add_option("--data", ev.data, "Dataset directory")->required();
  e->add_option("--split", ev.split, "Split name")->capture_default_str();
  e->add_option("--report", ev.report, "Report output (key=value lines)")->required();

  InferArgs in;
  auto* i = app.add_subcommand("infer", "Predict a change mask for one image pair");
  i->add_option("--ckpt", in.ckpt, "Checkpoint")->required();
  i->add_option("--pre", in.pre, "Pre-change P6 image")->required();
  i->add_option("--post", in.post, "Post-change P6 image")->required();
  i->add_option("--out", in.out, "Output P5 mask (change = 255)")->required();
  i->add_option("--logits", in.logits, "Optional raw logits tensor file");

  GradcheckArgs gc;
  auto* g = app.add_subcommand("gradcheck", "64-bit finite-difference gradient suite");
  g->add_option("--config", gc.config, "Config file, or 'default' / 'tiny'")->capture_default_str();
  g->add_option("--tol", gc.tol, "Maximum relative error")->capture_default_str();
  g->add_option("--module", gc.modules, "Restrict to these modules")->check(CLI::IsMember(gradcheck_module_names()));

  ParamsArgs pa;
  auto* p = app.add_subcommand("params", "Parameter counts per group");
  p->add_option("--config", pa.config, "Config file, or 'default' / 'tiny'")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return kExitUsage;
  }

  try {
    if (*s) return run_synth(synth);
    if (*t) return run_train(tr);
    if (*e) return run_eval(ev);
    if (*i) return run_infer(in);
    if (*g) return run_gradcheck(gc);
    if (*p) return run_params(pa);
  } catch (const UsageError& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}
