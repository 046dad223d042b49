#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "gpg/tensor.hpp"

namespace gpg {

struct AdagradOptions {
  double learning_rate = 0.15;
  double accumulator_init = 0.1;
  double epsilon = 1e-8;
  double clip_norm = 2.0;  // <= 0 disables clipping
};

struct AdagradState {
  AdagradOptions options;
  std::vector<std::vector<double>> accumulators;

  AdagradState() = default;
  explicit AdagradState(AdagradOptions opts) : options(opts) {}
};

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
inline double clip_grad_norm(std::span<Parameter* const> params, double max_norm) {
  double sq = 0.0;
  for (auto* p : params)
    for (double g : p->grad) sq += g * g;
  double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    double f = max_norm / norm;
    for (auto* p : params)
      for (double& g : p->grad) g *= f;
  }
  return norm;
}

/// acc += g^2; p -= lr * g / (sqrt(acc) + eps). Uses each Parameter::grad as g.
inline void adagrad_step(std::span<Parameter* const> params, AdagradState& state) {
  if (state.accumulators.empty()) {
    for (auto* p : params) state.accumulators.emplace_back(p->value.size(), state.options.accumulator_init);
  }
  if (state.accumulators.size() != params.size())
    throw DimensionError("adagrad_step: parameter count changed between steps");
  const double lr = state.options.learning_rate;
  const double eps = state.options.epsilon;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& acc = state.accumulators[k];
    auto& value = params[k]->value.values;
    const auto& grad = params[k]->grad;
    if (acc.size() != value.size() || grad.size() != value.size())
      throw DimensionError("adagrad_step: shape mismatch for " + params[k]->name);
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i];
      acc[i] += g * g;
      value[i] -= lr * g / (std::sqrt(acc[i]) + eps);
    }
  }
}

}  // namespace gpg
