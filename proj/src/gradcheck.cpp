#include "gradformer/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "gradformer/ops.hpp"
#include "gradformer/random.hpp"

namespace gradformer {

const GradcheckEntry* GradcheckReport::worst() const {
  if (entries.empty()) return nullptr;
  return &*std::max_element(entries.begin(), entries.end(),
                            [](const auto& a, const auto& b) { return a.rel_error < b.rel_error; });
}

double relative_error(double analytic, double numeric, double abs_floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), abs_floor});
  return std::abs(analytic - numeric) / denom;
}

namespace {

class Scalarizer {
 public:
  explicit Scalarizer(std::uint64_t seed) : seed_(seed) {}

  Tensor<double> operator()(const Tensor<double>& out) {
    if (out.numel() == 1) return reshape(out, {1});
    if (!weights_.defined() || weights_.shape() != out.shape()) {
      Xorshift64Star rng(seed_ ^ 0xA5A5A5A5ULL);
      std::vector<double> w(static_cast<std::size_t>(out.numel()));
      for (auto& v : w) v = rng.uniform(-1.0, 1.0);
      weights_ = Tensor<double>(out.shape(), std::move(w));
    }
    return sum_all(mul(out, weights_));
  }

 private:
  std::uint64_t seed_;
  Tensor<double> weights_;
};

std::vector<std::size_t> pick_indices(std::size_t n, std::size_t limit, Xorshift64Star& rng) {
  std::vector<std::size_t> idx;
  if (limit == 0 || limit >= n) {
    idx.resize(n);
    std::iota(idx.begin(), idx.end(), 0);
    return idx;
  }
  std::set<std::size_t> chosen;
  while (chosen.size() < limit) chosen.insert(static_cast<std::size_t>(rng.below(n)));
  return {chosen.begin(), chosen.end()};
}

}  // namespace

GradcheckReport gradcheck(const std::function<Tensor<double>()>& f,
                          const std::vector<std::pair<std::string, Tensor<double>>>& inputs,
                          const GradcheckOptions& options) {
  Scalarizer scalarize(options.seed);
  std::vector<bool> had_requires_grad;
  for (const auto& [name, t] : inputs) {
    had_requires_grad.push_back(t.requires_grad());
    auto handle = t;
    handle.set_requires_grad(true);
    handle.zero_grad();
  }

  Tape<double>::active().clear();
  backward(scalarize(f()));

  std::vector<std::vector<double>> analytic;
  for (const auto& [name, t] : inputs) {
    const auto g = t.grad_tensor();
    analytic.emplace_back(g.data().begin(), g.data().end());
  }

  auto evaluate = [&] {
    NoGradGuard guard;
    return scalarize(f()).item();
  };

  GradcheckReport report;
  Xorshift64Star rng(options.seed);
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto tensor = inputs[k].second;
    auto values = tensor.mutable_data();
    for (auto i : pick_indices(values.size(), options.max_elements_per_tensor, rng)) {
      const double saved = values[i];
      auto central = [&](double h) {
        values[i] = saved + h;
        const double plus = evaluate();
        values[i] = saved - h;
        const double minus = evaluate();
        values[i] = saved;
        return (plus - minus) / (2.0 * h);
      };
      const double plain = central(options.step);
      const double numeric = options.richardson ? (4.0 * plain - central(2.0 * options.step)) / 3.0 : plain;
      const double a = analytic[k][i];
      GradcheckEntry e{inputs[k].first, i, a, numeric, relative_error(a, numeric, options.abs_floor), plain,
                       relative_error(a, plain, options.abs_floor)};
      report.max_plain_rel_error = std::max(report.max_plain_rel_error, e.plain_rel_error);
      report.max_rel_error = std::max(report.max_rel_error, e.rel_error);
      report.entries.push_back(std::move(e));
    }
  }
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto handle = inputs[k].second;
    handle.set_requires_grad(had_requires_grad[k]);
  }
  report.passed = report.max_rel_error < options.tol;
  return report;
}

GradcheckReport gradcheck(const std::function<Tensor<double>(const Tensor<double>&)>& f, Tensor<double> x,
                          const GradcheckOptions& options) {
  return gradcheck([&] { return f(x); }, {{"x", x}}, options);
}

}  // namespace gradformer
