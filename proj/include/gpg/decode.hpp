#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gpg/pipeline.hpp"

namespace gpg {

struct TraceStep {
  std::vector<double> attention;
  double p_gen = 0.0;
  std::size_t copy_position = 0;  // argmax of the attention
  std::size_t token = 0;          // extended-vocabulary id
  std::string surface;
};

struct DecodingTrace {
  std::string doc_id;
  std::size_t length = 0;
  std::vector<std::size_t> sentence_starts;
  std::vector<TraceStep> steps;
  std::vector<std::size_t> tokens;  // emitted summary, <stop> excluded
  std::vector<double> dncm;          // do-not-copy distribution I; empty outside guided modes
  double log_prob = 0.0;

  std::size_t sentence_of(std::size_t position) const {
    auto it = std::upper_bound(sentence_starts.begin(), sentence_starts.end(), position);
    return static_cast<std::size_t>(it - sentence_starts.begin()) - 1;
  }
};

/// Index of the largest element; ties go to the lowest index.
inline std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

// ---------------------------------------------------------------------------
// Generic beam search

/// Output of expanding one hypothesis: a distribution over the next token,
/// the successor state and the record to append for whichever token is
/// chosen.
template <class State, class Record>
struct Expansion {
  std::vector<double> probs;
  State state;
  Record record;
};

template <class State, class Record>
struct Hypothesis {
  std::vector<std::size_t> tokens;  // includes the stop token when finished
  double log_prob = 0.0;
  State state;
  std::size_t last = 0;
  std::vector<Record> records;
  bool finished = false;

  double normalized() const { return tokens.empty() ? log_prob : log_prob / static_cast<double>(tokens.size()); }
};

/// Beam search ranking all expansions of the live beam jointly: the top
/// `width` candidates (ties to the earlier hypothesis, then lower token id)
/// survive, those ending in `stop` are set aside as finished. Runs until no
/// live hypotheses remain or `max_steps` tokens were emitted; the winner has
/// the best log-probability per token, ties to the lexicographically smaller
/// token sequence. Width 1 reduces to greedy argmax.
template <class State, class Record, class Expand>
Hypothesis<State, Record> beam_search(State initial, std::size_t first_token, std::size_t stop, std::size_t width,
                                      std::size_t max_steps, Expand expand) {
  if (width == 0) throw std::invalid_argument("beam width must be at least 1");
  if (max_steps == 0) throw std::invalid_argument("max steps must be at least 1");
  using Hyp = Hypothesis<State, Record>;
  std::vector<Hyp> live(1);
  live[0].state = std::move(initial);
  live[0].last = first_token;
  std::vector<Hyp> finished;

  for (std::size_t step = 0; step < max_steps && !live.empty(); ++step) {
    struct Candidate {
      double score;
      std::size_t hyp;
      std::size_t token;
    };
    std::vector<Candidate> cands;
    std::vector<Expansion<State, Record>> expansions;
    expansions.reserve(live.size());
    for (std::size_t h = 0; h < live.size(); ++h) {
      expansions.push_back(expand(live[h]));
      const auto& probs = expansions.back().probs;
      // Only the top `width` tokens of each hypothesis can survive.
      std::vector<std::size_t> order(probs.size());
      for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
      const auto keep = std::min(width, order.size());
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                        [&](std::size_t a, std::size_t b) { return probs[a] > probs[b] || (probs[a] == probs[b] && a < b); });
      for (std::size_t k = 0; k < keep; ++k) {
        const auto tok = order[k];
        cands.push_back({live[h].log_prob + std::log(std::max(probs[tok], 1e-12)), h, tok});
      }
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.hyp != b.hyp) return a.hyp < b.hyp;
      return a.token < b.token;
    });
    std::vector<Hyp> next;
    for (std::size_t k = 0; k < cands.size() && k < width; ++k) {
      const auto& c = cands[k];
      Hyp h;
      h.tokens = live[c.hyp].tokens;
      h.tokens.push_back(c.token);
      h.log_prob = c.score;
      h.state = expansions[c.hyp].state;
      h.last = c.token;
      h.records = live[c.hyp].records;
      h.records.push_back(expansions[c.hyp].record);
      if (c.token == stop) {
        h.finished = true;
        finished.push_back(std::move(h));
      } else {
        next.push_back(std::move(h));
      }
    }
    live = std::move(next);
  }
  for (auto& h : live) finished.push_back(std::move(h));
  std::size_t best = 0;
  for (std::size_t k = 1; k < finished.size(); ++k) {
    // Scores equal up to summation rounding count as ties.
    const double a = finished[k].normalized(), b = finished[best].normalized();
    const bool tie = std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b));
    if ((!tie && a > b) || (tie && finished[k].tokens < finished[best].tokens)) best = k;
  }
  return std::move(finished[best]);
}

// ---------------------------------------------------------------------------
// Model decoding

namespace detail {

struct ModelDecodeState {
  DecoderState decoder;
};

inline TraceStep make_trace_step(const DecoderStep& st) {
  TraceStep r;
  auto a = st.attention.values();
  r.attention.assign(a.begin(), a.end());
  r.p_gen = st.p_gen.item();
  r.copy_position = argmax(r.attention);
  return r;
}

inline std::string surface_of(std::size_t token, const PreparedDocument& doc, const Vocabulary& vocab) {
  if (token < vocab.size()) return vocab.word(token);
  const auto k = token - vocab.size();
  if (k >= doc.mapping.oov_words.size()) throw std::out_of_range("dangling OOV index " + std::to_string(k));
  return doc.mapping.oov_words[k];
}

}  // namespace detail

/// Beam decoding with per-step trace records. `width` 1 is greedy decoding.
inline DecodingTrace decode_beam(ModelParameters& m, const ModelConfig& cfg, const PreparedDocument& doc,
                                 const Vocabulary& vocab, std::size_t width, std::size_t max_steps) {
  Graph g;
  EncodedDocument e = encode_document(g, m, cfg, doc);
  using State = detail::ModelDecodeState;
  auto expand = [&](const Hypothesis<State, TraceStep>& h) {
    DecoderStep st = decode_step(g, m, cfg, doc, e, h.state.decoder, h.last);
    Expansion<State, TraceStep> x;
    auto p = st.p_final.values();
    x.probs.assign(p.begin(), p.end());
    x.state.decoder = st.next;
    x.record = detail::make_trace_step(st);
    return x;
  };
  auto best = beam_search<State, TraceStep>(State{initial_decoder_state(g, m, e)}, doc.start_id, doc.stop_id, width,
                                            max_steps, expand);
  DecodingTrace trace;
  trace.doc_id = doc.id;
  trace.length = doc.size();
  trace.sentence_starts = doc.sentence_starts;
  if (e.dncm) trace.dncm.assign(e.dncm->weights.values().begin(), e.dncm->weights.values().end());
  trace.log_prob = best.log_prob;
  for (std::size_t k = 0; k < best.records.size(); ++k) {
    auto rec = std::move(best.records[k]);
    rec.token = best.tokens[k];
    rec.surface = best.tokens[k] == doc.stop_id ? vocab.word(doc.stop_id) : detail::surface_of(rec.token, doc, vocab);
    if (best.tokens[k] != doc.stop_id) trace.tokens.push_back(best.tokens[k]);
    trace.steps.push_back(std::move(rec));
  }
  return trace;
}

/// Argmax decoding until <stop> or `max_steps`; ties go to the lowest id.
inline DecodingTrace decode_greedy(ModelParameters& m, const ModelConfig& cfg, const PreparedDocument& doc,
                                   const Vocabulary& vocab, std::size_t max_steps) {
  if (max_steps == 0) throw std::invalid_argument("max steps must be at least 1");
  Graph g;
  EncodedDocument e = encode_document(g, m, cfg, doc);
  DecoderState state = initial_decoder_state(g, m, e);
  DecodingTrace trace;
  trace.doc_id = doc.id;
  trace.length = doc.size();
  trace.sentence_starts = doc.sentence_starts;
  if (e.dncm) trace.dncm.assign(e.dncm->weights.values().begin(), e.dncm->weights.values().end());
  std::size_t input = doc.start_id;
  for (std::size_t t = 0; t < max_steps; ++t) {
    DecoderStep st = decode_step(g, m, cfg, doc, e, state, input);
    auto rec = detail::make_trace_step(st);
    rec.token = argmax(st.p_final.values());
    trace.log_prob += std::log(std::max(st.p_final.values()[rec.token], 1e-12));
    rec.surface = detail::surface_of(rec.token, doc, vocab);
    const bool stop = rec.token == doc.stop_id;
    if (!stop) trace.tokens.push_back(rec.token);
    input = rec.token;
    state = st.next;
    trace.steps.push_back(std::move(rec));
    if (stop) break;
  }
  return trace;
}

/// Surface string of the emitted summary; OOV ids map to the article token
/// that introduced them.
inline std::string resolve_tokens(const DecodingTrace& trace, const PreparedDocument& doc, const Vocabulary& vocab) {
  std::string out;
  for (auto t : trace.tokens) {
    if (!out.empty()) out += ' ';
    out += detail::surface_of(t, doc, vocab);
  }
  return out;
}

inline std::vector<std::string> summary_tokens(const DecodingTrace& trace) {
  std::vector<std::string> out;
  for (const auto& s : trace.steps)
    if (s.surface != kStop) out.push_back(s.surface);
  return out;
}

// ---------------------------------------------------------------------------
// Trace dump
//
//   #trace <doc-id> n=<n> starts=<s0,s1,...>
//   #dncm <I_1 %.6f> ... <I_n %.6f>        (guided modes only)
//   <step> <token-id> <surface> <p_gen %.6f> <a_1 %.6f> ... <a_n %.6f>

inline void write_trace(std::ostream& out, const DecodingTrace& trace) {
  out << "#trace " << trace.doc_id << " n=" << trace.length << " starts=";
  for (std::size_t i = 0; i < trace.sentence_starts.size(); ++i) out << (i ? "," : "") << trace.sentence_starts[i];
  out << '\n';
  char buf[32];
  if (!trace.dncm.empty()) {
    out << "#dncm";
    for (double v : trace.dncm) {
      std::snprintf(buf, sizeof buf, " %.6f", v);
      out << buf;
    }
    out << '\n';
  }
  for (std::size_t t = 0; t < trace.steps.size(); ++t) {
    const auto& s = trace.steps[t];
    out << t << ' ' << s.token << ' ' << s.surface;
    std::snprintf(buf, sizeof buf, " %.6f", s.p_gen);
    out << buf;
    for (double a : s.attention) {
      std::snprintf(buf, sizeof buf, " %.6f", a);
      out << buf;
    }
    out << '\n';
  }
}

inline void write_traces(std::ostream& out, std::span<const DecodingTrace> traces) {
  for (const auto& t : traces) write_trace(out, t);
}

inline std::vector<DecodingTrace> read_traces(std::istream& in) {
  std::vector<DecodingTrace> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream is(line);
    if (line.rfind("#trace", 0) == 0) {
      std::string tag, id, n_field, starts_field;
      is >> tag >> id >> n_field >> starts_field;
      if (n_field.rfind("n=", 0) != 0 || starts_field.rfind("starts=", 0) != 0)
        throw ParseError(line_no, "malformed trace header");
      DecodingTrace t;
      t.doc_id = id;
      t.length = std::stoul(n_field.substr(2));
      std::stringstream ss(starts_field.substr(7));
      std::string item;
      while (std::getline(ss, item, ','))
        if (!item.empty()) t.sentence_starts.push_back(std::stoul(item));
      if (t.sentence_starts.empty()) t.sentence_starts.push_back(0);
      out.push_back(std::move(t));
      continue;
    }
    if (out.empty()) throw ParseError(line_no, "trace step before any #trace header");
    auto& t = out.back();
    if (line.rfind("#dncm", 0) == 0) {
      std::string tag;
      is >> tag;
      if (!t.steps.empty() || !t.dncm.empty()) throw ParseError(line_no, "#dncm must directly follow its #trace header");
      t.dncm.resize(t.length);
      for (auto& v : t.dncm)
        if (!(is >> v)) throw ParseError(line_no, "#dncm line has fewer than n weights");
      continue;
    }
    TraceStep s;
    std::size_t step = 0;
    if (!(is >> step >> s.token >> s.surface >> s.p_gen)) throw ParseError(line_no, "malformed trace step");
    if (step != t.steps.size()) throw ParseError(line_no, "trace steps out of order");
    s.attention.resize(t.length);
    for (auto& a : s.attention)
      if (!(is >> a)) throw ParseError(line_no, "trace step has fewer than n attention weights");
    s.copy_position = argmax(s.attention);
    if (s.surface != kStop) t.tokens.push_back(s.token);
    t.steps.push_back(std::move(s));
  }
  return out;
}

}  // namespace gpg
