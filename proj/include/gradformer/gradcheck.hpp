#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "gradformer/tensor.hpp"

namespace gradformer {

struct GradcheckOptions {
  double step = 1e-4;
  double tol = 1e-5;
  double abs_floor = 1e-8;
  // 0 checks every element; otherwise a seeded sample of at most this many
  // elements per input tensor.
  std::size_t max_elements_per_tensor = 0;
  std::uint64_t seed = 7;
  // Combine central differences at `step` and `2 * step` as (4 D(h) - D(2h)) / 3,
  // cancelling the O(h^2) truncation term without a step finer than `step`.
  // The plain central difference at `step` is still recorded for every entry.
  bool richardson = true;
};

struct GradcheckEntry {
  std::string tensor;
  std::size_t index = 0;
  double analytic = 0;
  double numeric = 0;
  double rel_error = 0;
  double plain_numeric = 0;  // central difference at `step` alone
  double plain_rel_error = 0;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  double max_rel_error = 0;
  double max_plain_rel_error = 0;
  bool passed = false;

  const GradcheckEntry* worst() const;
};

// rel = |a - n| / max(|a|, |n|, abs_floor)
double relative_error(double analytic, double numeric, double abs_floor);

// Compares reverse-mode gradients of f against central differences over every
// named input. Non-scalar outputs are contracted with fixed pseudo-random
// weights so every output element contributes.
GradcheckReport gradcheck(const std::function<Tensor<double>()>& f,
                          const std::vector<std::pair<std::string, Tensor<double>>>& inputs,
                          const GradcheckOptions& options = {});

// Single-input convenience form.
GradcheckReport gradcheck(const std::function<Tensor<double>(const Tensor<double>&)>& f, Tensor<double> x,
                          const GradcheckOptions& options = {});

}  // namespace gradformer
