#pragma once

#include <algorithm>
#include <span>
#include <stdexcept>
#include <vector>

#include "gpg/model.hpp"

namespace gpg {

/// Number of coreference tags shared by positions i and j.
inline std::size_t transition_affinity(std::size_t i, std::size_t j, std::span<const TagSet> tags) {
  if (i >= tags.size() || j >= tags.size()) throw std::out_of_range("transition_affinity: position out of range");
  const auto& a = tags[i];
  const auto& b = tags[j];
  std::size_t count = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib)
      ++ia;
    else if (*ib < *ia)
      ++ib;
    else {
      ++count;
      ++ia;
      ++ib;
    }
  }
  return count;
}

/// Dense symmetric [n, n] matrix of t(i, j).
inline Tensor affinity_matrix(std::span<const TagSet> tags) {
  const auto n = tags.size();
  Tensor t = Tensor::zeros({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      double v = static_cast<double>(transition_affinity(i, j, tags));
      t.at(i, j) = v;
      t.at(j, i) = v;
    }
  return t;
}

inline bool all_tags_empty(std::span<const TagSet> tags) {
  return std::all_of(tags.begin(), tags.end(), [](const TagSet& t) { return t.empty(); });
}

/// b_i = sum_j a_j^{t-1} t(j, i), as a graph vector.
inline Var affinity_bias(const Var& affinity, const Var& previous_attention) {
  const auto n = previous_attention.size();
  return reshape(matmul(affinity, previous_attention), Shape{n});
}

/// Attention with the transition bias: softmax(e^t + W_a b). Without a
/// previous attention (first step) the bias is zero.
inline Var biased_attention_scores(Graph& g, ModelParameters& m, const AttentionMemory& mem, const Var& s_t,
                                   const Var& affinity, const Var* previous_attention) {
  Var e = attention_logits(g, m, mem, s_t);
  if (previous_attention && previous_attention->valid())
    e = add(e, scalar_mul(g.param(m.affinity_wa), affinity_bias(affinity, *previous_attention)));
  return softmax(e);
}

/// Per-step aggregate of transition affinity.
inline Var expected_transition_affinity(const Var& affinity, const Var& previous_attention, const Var& attention,
                                        AffinityAggregation aggregation = AffinityAggregation::Expected) {
  Var bias = affinity_bias(affinity, previous_attention);
  if (aggregation == AffinityAggregation::Unweighted) return scale(sum(bias), 1.0 / static_cast<double>(bias.size()));
  return dot(attention, bias);
}

inline double expected_transition_affinity(std::span<const double> previous_attention,
                                           std::span<const double> attention, std::span<const TagSet> tags,
                                           AffinityAggregation aggregation = AffinityAggregation::Expected) {
  const auto n = tags.size();
  if (previous_attention.size() != n || attention.size() != n)
    throw DimensionError("expected_transition_affinity: length mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double b = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (previous_attention[j] != 0.0) b += previous_attention[j] * static_cast<double>(transition_affinity(j, i, tags));
    total += aggregation == AffinityAggregation::Expected ? attention[i] * b : b;
  }
  return aggregation == AffinityAggregation::Expected ? total : total / static_cast<double>(n);
}

/// -lambda * mean over steps of the per-step affinity.
inline double affinity_loss(std::span<const double> expectations, double lambda) {
  if (expectations.empty()) return 0.0;
  double s = 0.0;
  for (double e : expectations) s += e;
  return -lambda * s / static_cast<double>(expectations.size());
}

}  // namespace gpg
