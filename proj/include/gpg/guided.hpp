#pragma once

#include <algorithm>
#include <span>
#include <stdexcept>
#include <vector>

#include "gpg/model.hpp"

namespace gpg {

/// The do-not-copy-me distribution of one article. It depends only on the
/// cue vectors and encoder states, so it is built once per document.
struct DncmDistribution {
  Var scores;   // g_i = u . tanh(W_dncm r_i + b_dncm)
  Var weights;  // I = softmax(g)
  Var context;  // h*_dncm = sum_i I_i h_i
};

inline Var dncm_scores(Graph& g, ModelParameters& m, const Tensor& cues) {
  if (!m.has_guided()) throw ConfigError("do-not-copy-me distribution needs cue vectors (cues = none)");
  if (cues.size() == 0 || cues.cols() != m.cue_dim())
    throw DimensionError("dncm: cue width " + std::to_string(cues.size() ? cues.cols() : 0) +
                         " does not match W_dncm rows " + std::to_string(m.cue_dim()));
  const auto n = cues.rows();
  Var r = g.constant(cues);
  Var hidden = tanh(add_row(matmul(r, g.param(m.dncm_w)), g.param(m.dncm_b)));
  return reshape(matmul(hidden, reshape(g.param(m.dncm_u), Shape{m.hidden, 1})), Shape{n});
}

inline Var dncm_context(const Var& weights, const Var& states) { return context_vector(weights, states); }

inline DncmDistribution dncm_distribution(Graph& g, ModelParameters& m, const Tensor& cues, const Var& states) {
  DncmDistribution d;
  d.scores = dncm_scores(g, m, cues);
  d.weights = softmax(d.scores);
  d.context = dncm_context(d.weights, states);
  return d;
}

/// sigma(w_h.h*_t + w_dncm.h*_dncm + w_s.s_t + w_y.y_t + b_gen)
inline Var guided_generation_probability(Graph& g, ModelParameters& m, const Var& context, const Var& dncm_ctx,
                                         const Var& s_t, const Var& y_t) {
  return sigmoid(generation_logit(g, m, context, s_t, y_t, &dncm_ctx));
}

/// Same mixture as final_distribution with the cue-aware generation probability.
inline Var guided_final_distribution(Graph& g, const Var& p_gen_guided, const Var& p_vocab, const Var& attention,
                                     const std::vector<std::size_t>& extended_ids, std::size_t extended_size) {
  return final_distribution(g, p_gen_guided, p_vocab, attention, extended_ids, extended_size);
}

/// L_t = sum_i min(a_i^t, I_i)
inline Var insignificance_loss(const Var& attention, const Var& dncm) {
  if (attention.size() != dncm.size()) throw DimensionError("insignificance_loss: length mismatch");
  return sum(minimum(attention, dncm));
}

inline double insignificance_loss(std::span<const double> attention, std::span<const double> dncm) {
  if (attention.size() != dncm.size()) throw DimensionError("insignificance_loss: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < attention.size(); ++i) s += std::min(attention[i], dncm[i]);
  return s;
}

/// mean_t (nll_t + mu L_t)
inline double total_loss(std::span<const double> nll, std::span<const double> insignificance, double mu) {
  if (nll.size() != insignificance.size()) throw DimensionError("total_loss: per-step terms are not aligned");
  if (nll.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t t = 0; t < nll.size(); ++t) s += nll[t] + mu * insignificance[t];
  return s / static_cast<double>(nll.size());
}

}  // namespace gpg
