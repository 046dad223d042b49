#pragma once

#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "gpg/annotate.hpp"
#include "gpg/checkpoint.hpp"
#include "gpg/config.hpp"
#include "gpg/tensor.hpp"

namespace gpg {

/// All trainable weights. Guided-copy and affinity weights live here too so
/// one checkpoint covers every mode; bidirectional and cue-dependent
/// parameters exist only when configured.
struct ModelParameters {
  std::size_t vocab = 0;
  std::size_t embedding_dim = 0;
  std::size_t hidden = 0;
  CueSet cues;
  bool cue_input = true;
  bool bidirectional = false;

  Parameter embedding;  // [V, E]
  Parameter enc_w, enc_b;  // [E + cue_in + H, 4H], [4H]; gates i, f, o, g
  Parameter enc_bw_w, enc_bw_b;
  Parameter reduce_h_w, reduce_h_b, reduce_c_w, reduce_c_b;  // [2H, H], [H]
  Parameter dec_w, dec_b;  // [E + H + H, 4H]: input is y_t and the previous context
  Parameter att_wh, att_ws, att_b, att_v;  // [H, H], [H, H], [H], [H, 1]
  Parameter gen_wh, gen_ws, gen_wy, gen_b;  // [H], [H], [E], [1]
  Parameter out_w, out_b;  // [2H, V], [V]
  Parameter dncm_u, dncm_w, dncm_b, gen_wdncm;  // [H], [cue, H], [H], [H]
  Parameter affinity_wa;  // [1]

  std::size_t cue_dim() const { return cues.dimension(); }
  std::size_t encoder_input_dim() const { return embedding_dim + (cue_input ? cue_dim() : 0); }
  bool has_guided() const { return cues.any(); }

  std::vector<Parameter*> all() {
    std::vector<Parameter*> out = {&embedding, &enc_w, &enc_b};
    if (bidirectional)
      for (auto* p : {&enc_bw_w, &enc_bw_b, &reduce_h_w, &reduce_h_b, &reduce_c_w, &reduce_c_b}) out.push_back(p);
    for (auto* p : {&dec_w, &dec_b, &att_wh, &att_ws, &att_b, &att_v, &gen_wh, &gen_ws, &gen_wy, &gen_b, &out_w,
                    &out_b})
      out.push_back(p);
    if (has_guided())
      for (auto* p : {&dncm_u, &dncm_w, &dncm_b, &gen_wdncm}) out.push_back(p);
    out.push_back(&affinity_wa);
    return out;
  }
  std::vector<const Parameter*> all() const {
    auto ps = const_cast<ModelParameters*>(this)->all();
    return {ps.begin(), ps.end()};
  }

  /// Parameters that only the guided and affinity extensions read.
  std::vector<Parameter*> extension_parameters() {
    std::vector<Parameter*> out;
    if (has_guided())
      for (auto* p : {&dncm_u, &dncm_w, &dncm_b, &gen_wdncm}) out.push_back(p);
    out.push_back(&affinity_wa);
    return out;
  }

  void zero_grad() {
    for (auto* p : all()) p->zero_grad();
  }

  Parameter* find(const std::string& name) {
    for (auto* p : all())
      if (p->name == name) return p;
    return nullptr;
  }

  /// Copies tensors by name; names in `skip` and unknown names are ignored.
  /// Returns the number of parameters loaded.
  std::size_t load(std::span<const NamedTensor> tensors, const std::unordered_set<std::string>& skip = {}) {
    std::size_t loaded = 0;
    for (const auto& t : tensors) {
      if (skip.count(t.name)) continue;
      auto* p = find(t.name);
      if (!p) continue;
      if (p->value.shape != t.tensor.shape)
        throw CheckpointError("checkpoint tensor '" + t.name + "' has shape " + shape_string(t.tensor.shape) +
                              ", model expects " + shape_string(p->value.shape));
      p->value = t.tensor;
      ++loaded;
    }
    return loaded;
  }
};

/// Uniform init in [-range, range] from a fixed seed, forget-gate bias +1.
inline ModelParameters init_parameters(std::size_t vocab_size, const ModelConfig& cfg) {
  ModelParameters m;
  m.vocab = vocab_size;
  m.embedding_dim = cfg.embedding;
  m.hidden = cfg.hidden;
  m.cues = cfg.cues;
  m.cue_input = cfg.cue_input && cfg.cues.any();
  m.bidirectional = cfg.bidirectional;
  const auto V = vocab_size, E = cfg.embedding, H = cfg.hidden, C = m.cue_dim();

  auto make = [](std::string name, Shape s) { return Parameter(std::move(name), Tensor::zeros(std::move(s))); };
  m.embedding = make("embedding", {V, E});
  m.enc_w = make("encoder.w", {m.encoder_input_dim() + H, 4 * H});
  m.enc_b = make("encoder.b", {4 * H});
  if (m.bidirectional) {
    m.enc_bw_w = make("encoder_bw.w", {m.encoder_input_dim() + H, 4 * H});
    m.enc_bw_b = make("encoder_bw.b", {4 * H});
    m.reduce_h_w = make("reduce.h.w", {2 * H, H});
    m.reduce_h_b = make("reduce.h.b", {H});
    m.reduce_c_w = make("reduce.c.w", {2 * H, H});
    m.reduce_c_b = make("reduce.c.b", {H});
  }
  m.dec_w = make("decoder.w", {E + H + H, 4 * H});
  m.dec_b = make("decoder.b", {4 * H});
  m.att_wh = make("attention.w_h", {H, H});
  m.att_ws = make("attention.w_s", {H, H});
  m.att_b = make("attention.b", {H});
  m.att_v = make("attention.v", {H, 1});
  m.gen_wh = make("pgen.w_h", {H});
  m.gen_ws = make("pgen.w_s", {H});
  m.gen_wy = make("pgen.w_y", {E});
  m.gen_b = make("pgen.b", {1});
  m.out_w = make("vocab.w", {2 * H, V});
  m.out_b = make("vocab.b", {V});
  if (m.has_guided()) {
    m.dncm_u = make("dncm.u", {H});
    m.dncm_w = make("dncm.w", {C, H});
    m.dncm_b = make("dncm.b", {H});
    m.gen_wdncm = make("pgen.w_dncm", {H});
  }
  m.affinity_wa = make("affinity.w_a", {1});

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> uni(-cfg.init_range, cfg.init_range);
  for (auto* p : m.all())
    for (auto& v : p->value.values) v = uni(rng);
  for (auto* b : {&m.enc_b, &m.enc_bw_b, &m.dec_b}) {
    if (b->value.size() == 0) continue;
    for (std::size_t i = H; i < 2 * H; ++i) b->value[i] = 1.0;
  }
  m.affinity_wa.value[0] = cfg.wa_init;
  return m;
}

// ---------------------------------------------------------------------------
// Prepared input

/// An article with model-side bookkeeping: vocabulary ids, extended ids,
/// cue matrix, coreference tags and teacher-forcing targets.
struct PreparedDocument {
  std::string id;
  std::vector<std::string> tokens;
  std::vector<std::size_t> sentence_starts;
  VocabMapping mapping;
  std::vector<std::size_t> extended_ids;
  std::size_t vocab_size = 0;
  Tensor cues;  // [n, cue_dim]; empty when no cues
  std::vector<TagSet> tags;
  std::vector<std::string> summary;
  std::vector<std::size_t> targets;  // extended ids ending with <stop>
  std::size_t start_id = 0, stop_id = 0, unk_id = 0;

  std::size_t size() const { return tokens.size(); }
  std::size_t oov_count() const { return mapping.oov_words.size(); }
  std::size_t extended_size() const { return vocab_size + oov_count(); }

  /// Decoder input id for an extended-vocabulary token (OOVs feed back as <unk>).
  std::size_t input_id(std::size_t extended) const { return extended < vocab_size ? extended : unk_id; }

  std::size_t sentence_of(std::size_t position) const {
    auto it = std::upper_bound(sentence_starts.begin(), sentence_starts.end(), position);
    return static_cast<std::size_t>(it - sentence_starts.begin()) - 1;
  }
};

inline PreparedDocument prepare_document(const AnnotatedDocument& doc, const Vocabulary& vocab,
                                         const ModelConfig& cfg) {
  doc.validate();
  PreparedDocument p;
  p.id = doc.id;
  const std::size_t n = std::min(doc.size(), std::max<std::size_t>(cfg.max_encode, 1));
  p.tokens.assign(doc.tokens.begin(), doc.tokens.begin() + static_cast<std::ptrdiff_t>(n));
  for (auto s : doc.sentence_starts)
    if (s < n) p.sentence_starts.push_back(s);
  p.mapping = map_vocab(p.tokens, vocab);
  p.vocab_size = vocab.size();
  for (std::size_t i = 0; i < n; ++i) p.extended_ids.push_back(p.mapping.extended_id(i, vocab.size()));
  if (cfg.cues.any()) {
    auto vecs = build_cue_vectors(std::span(doc.pos).first(n), std::span(doc.ner).first(n), cfg.cues);
    std::vector<double> flat;
    for (const auto& v : vecs) flat.insert(flat.end(), v.begin(), v.end());
    p.cues = Tensor(Shape{n, cfg.cues.dimension()}, std::move(flat));
  }
  p.tags.assign(doc.coref_tags.begin(), doc.coref_tags.begin() + static_cast<std::ptrdiff_t>(n));
  p.summary = doc.summary;
  p.start_id = vocab.start();
  p.stop_id = vocab.stop();
  p.unk_id = vocab.unk();

  std::unordered_map<std::string, std::size_t> oov;
  for (std::size_t k = 0; k < p.mapping.oov_words.size(); ++k) oov.emplace(p.mapping.oov_words[k], k);
  const std::size_t limit = cfg.max_decode > 0 ? cfg.max_decode - 1 : 0;
  for (std::size_t i = 0; i < doc.summary.size() && i < limit; ++i) {
    const auto& w = doc.summary[i];
    if (auto id = vocab.find(w))
      p.targets.push_back(*id);
    else if (auto it = oov.find(w); it != oov.end())
      p.targets.push_back(vocab.size() + it->second);
    else
      p.targets.push_back(vocab.unk());
  }
  p.targets.push_back(vocab.stop());
  return p;
}

// ---------------------------------------------------------------------------
// Recurrent cell and encoder

struct LstmState {
  Var h;
  Var c;
};

/// Single-layer cell: z = [x; h]W + b, gates (i, f, o, g).
inline LstmState lstm_cell(const Var& w, const Var& b, const Var& x, const LstmState& prev, std::size_t hidden) {
  Var z = add(matmul(concat({x, prev.h}), w), b);
  Var i = sigmoid(slice(z, 0, hidden));
  Var f = sigmoid(slice(z, hidden, hidden));
  Var o = sigmoid(slice(z, 2 * hidden, hidden));
  Var g = tanh(slice(z, 3 * hidden, hidden));
  Var c = add(mul(f, prev.c), mul(i, g));
  Var h = mul(o, tanh(c));
  return {h, c};
}

struct EncoderStates {
  Var states;  // [n, H]
  std::vector<Var> rows;
  LstmState final;
  std::size_t length = 0;
};

inline LstmState zero_state(Graph& g, std::size_t hidden) {
  return {g.constant(Tensor::zeros({hidden})), g.constant(Tensor::zeros({hidden}))};
}

inline Var encoder_input(Graph& g, ModelParameters& m, const PreparedDocument& doc, std::size_t i) {
  if (doc.mapping.ids[i] >= m.vocab) throw ValidationError("token id out of vocabulary range");
  Var emb = gather_row(g.param(m.embedding), doc.mapping.ids[i]);
  if (!m.cue_input) return emb;
  if (doc.cues.size() == 0 || doc.cues.cols() != m.cue_dim())
    throw DimensionError("document cue width does not match the model");
  const auto c = m.cue_dim();
  std::vector<double> row(doc.cues.values.begin() + static_cast<std::ptrdiff_t>(i * c),
                          doc.cues.values.begin() + static_cast<std::ptrdiff_t>((i + 1) * c));
  return concat({emb, g.constant(Shape{c}, std::move(row))});
}

inline EncoderStates encode(Graph& g, ModelParameters& m, const PreparedDocument& doc) {
  const auto n = doc.size();
  if (n == 0) throw ValidationError("encode: empty article");
  const auto H = m.hidden;
  std::vector<Var> inputs;
  inputs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) inputs.push_back(encoder_input(g, m, doc, i));

  Var w = g.param(m.enc_w), b = g.param(m.enc_b);
  std::vector<Var> fwd;
  LstmState s = zero_state(g, H);
  for (std::size_t i = 0; i < n; ++i) {
    s = lstm_cell(w, b, inputs[i], s, H);
    fwd.push_back(s.h);
  }
  EncoderStates out;
  out.length = n;
  if (!m.bidirectional) {
    out.rows = fwd;
    out.final = s;
  } else {
    Var wb = g.param(m.enc_bw_w), bb = g.param(m.enc_bw_b);
    std::vector<Var> bwd(n);
    LstmState r = zero_state(g, H);
    for (std::size_t i = n; i-- > 0;) {
      r = lstm_cell(wb, bb, inputs[i], r, H);
      bwd[i] = r.h;
    }
    Var rh_w = g.param(m.reduce_h_w), rh_b = g.param(m.reduce_h_b);
    Var rc_w = g.param(m.reduce_c_w), rc_b = g.param(m.reduce_c_b);
    auto reduce = [&](const Var& a, const Var& bvec, const Var& rw, const Var& rb) {
      return reshape(add(matmul(concat({a, bvec}), rw), rb), Shape{H});
    };
    for (std::size_t i = 0; i < n; ++i) out.rows.push_back(reduce(fwd[i], bwd[i], rh_w, rh_b));
    out.final.h = reduce(s.h, r.h, rh_w, rh_b);
    out.final.c = reduce(s.c, r.c, rc_w, rc_b);
  }
  out.states = reshape(concat(std::span<const Var>(out.rows)), Shape{n, H});
  return out;
}

// ---------------------------------------------------------------------------
// Attention, generation probability and output distributions

/// Per-document attention memory: encoder states and their W_h projection.
struct AttentionMemory {
  Var states;     // [n, H]
  Var projected;  // [n, H]
  std::size_t length = 0;
};

inline AttentionMemory attention_memory(Graph& g, ModelParameters& m, const EncoderStates& enc) {
  return {enc.states, matmul(enc.states, g.param(m.att_wh)), enc.length};
}

/// e_i = v . tanh(W_h h_i + W_s s_t + b_att)
inline Var attention_logits(Graph& g, ModelParameters& m, const AttentionMemory& mem, const Var& s_t) {
  Var query = add(matmul(s_t, g.param(m.att_ws)), g.param(m.att_b));
  Var feat = tanh(add_row(mem.projected, query));
  return reshape(matmul(feat, g.param(m.att_v)), Shape{mem.length});
}

/// a^t = softmax(e^t)
inline Var attention_scores(Graph& g, ModelParameters& m, const AttentionMemory& mem, const Var& s_t) {
  return softmax(attention_logits(g, m, mem, s_t));
}

/// sum_i weights_i * states_i
inline Var context_vector(const Var& weights, const Var& states) {
  const auto n = weights.size();
  return reshape(matmul(reshape(weights, Shape{1, n}), states), Shape{states.shape().back()});
}

/// sigma(w_h.h*_t [+ w_dncm.h*_dncm] + w_s.s_t + w_y.y_t + b_gen). The
/// optional term is the cue-aware variant.
inline Var generation_logit(Graph& g, ModelParameters& m, const Var& context, const Var& s_t, const Var& y_t,
                            const Var* dncm_context = nullptr) {
  Var z = dot(g.param(m.gen_wh), context);
  if (dncm_context) z = add(z, dot(g.param(m.gen_wdncm), *dncm_context));
  z = add(z, dot(g.param(m.gen_ws), s_t));
  z = add(z, dot(g.param(m.gen_wy), y_t));
  return add(z, g.param(m.gen_b));
}

inline Var generation_probability(Graph& g, ModelParameters& m, const Var& context, const Var& s_t, const Var& y_t) {
  return sigmoid(generation_logit(g, m, context, s_t, y_t));
}

/// softmax([s_t; h*_t] W_out + b_out)
inline Var vocab_distribution(Graph& g, ModelParameters& m, const Var& s_t, const Var& context) {
  return softmax(reshape(add(matmul(concat({s_t, context}), g.param(m.out_w)), g.param(m.out_b)), Shape{m.vocab}));
}

/// p(w) = p_gen P_vocab(w) + (1 - p_gen) sum_{i: w_i = w} a_i over the
/// extended vocabulary.
inline Var final_distribution(Graph& g, const Var& p_gen, const Var& p_vocab, const Var& attention,
                              const std::vector<std::size_t>& extended_ids, std::size_t extended_size) {
  Var gen = scalar_mul(p_gen, p_vocab);
  if (extended_size > p_vocab.size())
    gen = concat({gen, g.constant(Tensor::zeros({extended_size - p_vocab.size()}))});
  Var copy_weight = add_scalar(scale(p_gen, -1.0), 1.0);
  Var copy = scatter_add(scalar_mul(copy_weight, attention), extended_ids, extended_size);
  return add(gen, copy);
}

/// -log(max(p(target), 1e-12))
inline Var nll_loss(const Var& p_final, std::size_t target) {
  if (target >= p_final.size()) throw DimensionError("nll_loss: target outside the extended vocabulary");
  return scale(log_clamped(pick(p_final, target)), -1.0);
}

}  // namespace gpg
