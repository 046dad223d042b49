#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gpg/tensor.hpp"

namespace gpg {

struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t entries_checked = 0;
};

/// Builds a scalar loss on a fresh graph from the current parameter values.
using LossBuilder = std::function<Var(Graph&)>;

/// Compares reverse-mode gradients against central differences for every
/// entry of every parameter. Relative error per entry is
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
inline GradientCheckResult gradient_check(const LossBuilder& loss, std::span<Parameter* const> params,
                                          double eps = 1e-5) {
  if (!(eps >= 1e-6 && eps <= 1e-3)) throw std::invalid_argument("gradient_check: eps must lie in [1e-6, 1e-3]");
  for (auto* p : params) p->zero_grad();
  {
    Graph g;
    Var root = loss(g);
    if (!std::isfinite(root.item())) throw std::runtime_error("gradient_check: non-finite loss");
    g.backward(root);
  }
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (auto* p : params) analytic.push_back(p->grad);

  auto evaluate = [&]() {
    Graph g;
    double v = loss(g).item();
    if (!std::isfinite(v)) throw std::runtime_error("gradient_check: non-finite loss");
    return v;
  };

  GradientCheckResult result;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& values = params[k]->value.values;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double up = evaluate();
      values[i] = saved - eps;
      const double down = evaluate();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      ++result.entries_checked;
      if (rel > result.max_relative_error) {
        result.max_relative_error = rel;
        result.worst_parameter = params[k]->name;
        result.worst_index = i;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace gpg
