#pragma once

// The 64-bit finite-difference suite run by `gradformer gradcheck` and the
// test suite: every module on small random inputs plus the full model.

#include <string>
#include <vector>

#include "gradformer/config.hpp"
#include "gradformer/gradcheck.hpp"

namespace gradformer {

struct SuiteResult {
  std::string module;
  GradcheckReport report;
  double seconds = 0.0;
};

struct SuiteOptions {
  double tol = 1e-5;
  double step = 1e-4;
  // Elements sampled per parameter tensor in the full-model check.
  std::size_t full_model_samples = 3;
  std::uint64_t seed = 11;
};

// Names accepted by run_gradcheck_module, in suite order.
std::vector<std::string> gradcheck_module_names();

// `model_cfg` sets heads, lambda_init, eps and mlp_ratio for the module checks
// and is the configuration of the full-model check.
SuiteResult run_gradcheck_module(const std::string& name, const ModelConfig& model_cfg,
                                 const SuiteOptions& options = {});
std::vector<SuiteResult> run_gradcheck_suite(const ModelConfig& model_cfg, const SuiteOptions& options = {});

}  // namespace gradformer
