#pragma once

#include <optional>
#include <vector>

#include "gpg/affinity.hpp"
#include "gpg/guided.hpp"
#include "gpg/model.hpp"

namespace gpg {

/// Everything computed once per article on a graph.
struct EncodedDocument {
  EncoderStates encoder;
  AttentionMemory memory;
  std::optional<DncmDistribution> dncm;
  Var affinity;  // [n, n] constant; only bound in affinity modes
};

inline EncodedDocument encode_document(Graph& g, ModelParameters& m, const ModelConfig& cfg,
                                       const PreparedDocument& doc) {
  EncodedDocument e;
  e.encoder = encode(g, m, doc);
  e.memory = attention_memory(g, m, e.encoder);
  if (uses_guided(cfg.mode)) e.dncm = dncm_distribution(g, m, doc.cues, e.encoder.states);
  if (uses_affinity(cfg.mode)) e.affinity = g.constant(affinity_matrix(doc.tags));
  return e;
}

struct DecoderState {
  LstmState lstm;
  Var context;             // previous h*_t, fed back with the next input
  Var previous_attention;  // a^{t-1}; invalid before the first step
};

inline DecoderState initial_decoder_state(Graph& g, const ModelParameters& m, const EncodedDocument& e) {
  return {e.encoder.final, g.constant(Tensor::zeros({m.hidden})), Var{}};
}

struct DecoderStep {
  Var s_t;
  Var y_t;
  Var attention;
  Var context;
  Var p_gen;
  Var p_vocab;
  Var p_final;
  DecoderState next;
};

/// One decoding step. Mode selects the plain vs the cue-aware generation
/// probability and plain vs transition-biased attention; the baseline path
/// never binds the extension parameters.
inline DecoderStep decode_step(Graph& g, ModelParameters& m, const ModelConfig& cfg, const PreparedDocument& doc,
                               const EncodedDocument& e, const DecoderState& prev, std::size_t input_token) {
  DecoderStep st;
  st.y_t = gather_row(g.param(m.embedding), doc.input_id(input_token));
  LstmState s = lstm_cell(g.param(m.dec_w), g.param(m.dec_b), concat({st.y_t, prev.context}), prev.lstm, m.hidden);
  st.s_t = s.h;
  if (uses_affinity(cfg.mode))
    st.attention = biased_attention_scores(g, m, e.memory, st.s_t, e.affinity,
                                           prev.previous_attention.valid() ? &prev.previous_attention : nullptr);
  else
    st.attention = attention_scores(g, m, e.memory, st.s_t);
  st.context = context_vector(st.attention, e.memory.states);
  st.p_vocab = vocab_distribution(g, m, st.s_t, st.context);
  if (uses_guided(cfg.mode))
    st.p_gen = guided_generation_probability(g, m, st.context, e.dncm->context, st.s_t, st.y_t);
  else
    st.p_gen = generation_probability(g, m, st.context, st.s_t, st.y_t);
  st.p_final = final_distribution(g, st.p_gen, st.p_vocab, st.attention, doc.extended_ids, doc.extended_size());
  st.next = {s, st.context, st.attention};
  return st;
}

struct SequenceLoss {
  Var total;
  double nll = 0.0;             // mean over steps
  double insignificance = 0.0;  // mean L_t over steps (0 when unused)
  double affinity = 0.0;        // -lambda * mean expectation (0 when inactive)
  std::vector<double> nll_steps;
  std::vector<double> insignificance_steps;
  std::vector<double> affinity_steps;
  std::size_t steps = 0;
};

/// Teacher-forced objective for one document:
/// mean NLL + mu * mean L_t + (-lambda * mean affinity expectation).
inline SequenceLoss sequence_loss(Graph& g, ModelParameters& m, const ModelConfig& cfg, const PreparedDocument& doc,
                                  bool affinity_loss_active) {
  EncodedDocument e = encode_document(g, m, cfg, doc);
  DecoderState state = initial_decoder_state(g, m, e);
  const bool guided = uses_guided(cfg.mode) && cfg.mu > 0.0;
  const bool affinity = uses_affinity(cfg.mode) && affinity_loss_active && cfg.lambda > 0.0;

  std::vector<Var> nll_terms, l_terms, aff_terms;
  SequenceLoss out;
  std::size_t input = doc.start_id;
  for (std::size_t t = 0; t < doc.targets.size(); ++t) {
    DecoderStep st = decode_step(g, m, cfg, doc, e, state, input);
    nll_terms.push_back(nll_loss(st.p_final, doc.targets[t]));
    out.nll_steps.push_back(nll_terms.back().item());
    if (guided) {
      l_terms.push_back(insignificance_loss(st.attention, e.dncm->weights));
      out.insignificance_steps.push_back(l_terms.back().item());
    }
    if (affinity && state.previous_attention.valid()) {
      aff_terms.push_back(
          expected_transition_affinity(e.affinity, state.previous_attention, st.attention, cfg.aggregation));
      out.affinity_steps.push_back(aff_terms.back().item());
    }
    state = st.next;
    input = doc.targets[t];
  }
  out.steps = nll_terms.size();
  const double inv_steps = 1.0 / static_cast<double>(out.steps);
  Var total = scale(sum(concat(std::span<const Var>(nll_terms))), inv_steps);
  out.nll = total.item();
  if (!l_terms.empty()) {
    Var l = scale(sum(concat(std::span<const Var>(l_terms))), inv_steps);
    out.insignificance = l.item();
    total = add(total, scale(l, cfg.mu));
  }
  if (!aff_terms.empty()) {
    Var a = scale(sum(concat(std::span<const Var>(aff_terms))), -cfg.lambda / static_cast<double>(aff_terms.size()));
    out.affinity = a.item();
    total = add(total, a);
  }
  out.total = total;
  return out;
}

}  // namespace gpg
