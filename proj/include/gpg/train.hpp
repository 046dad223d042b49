#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "gpg/adagrad.hpp"
#include "gpg/decode.hpp"
#include "gpg/metrics.hpp"
#include "gpg/pipeline.hpp"

namespace gpg {

// ---------------------------------------------------------------------------
// Synthetic tasks
//
// Vocabulary layout: reserved tokens, ".", ",", ten entity names
// e0..e9, forbidden-class words f0..f39 and their paraphrases p0..p39, then
// ordinary words w0, w1, ... up to the configured size. Out-of-vocabulary names are "name<k>".

namespace synth_detail {

inline constexpr std::size_t kEntities = 10;
inline constexpr std::size_t kForbidden = 40;
inline constexpr std::size_t kFixed = 4 + 2 + kEntities + 2 * kForbidden;
inline constexpr std::size_t kOovPool = 1000;

inline std::size_t ordinary_count(const SyntheticTaskSpec& spec) {
  if (spec.vocab_size < kFixed + 8)
    throw ConfigError("synthetic tasks need a vocabulary of at least " + std::to_string(kFixed + 8));
  return spec.vocab_size - kFixed;
}

inline std::string ordinary(std::size_t k) { return "w" + std::to_string(k); }
inline std::string forbidden(std::size_t k) { return "f" + std::to_string(k); }
inline std::string paraphrase(std::size_t k) { return "p" + std::to_string(k); }
inline std::string entity(std::size_t k) { return "e" + std::to_string(k); }
inline std::string oov_name(std::size_t k) { return "name" + std::to_string(k); }

inline std::string ordinary_pos(std::size_t k) {
  static const char* tags[] = {"Noun", "Verb", "Noun", "Other"};
  return tags[k % 4];
}

inline std::mt19937_64 document_rng(const SyntheticTaskSpec& spec, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                    static_cast<std::uint32_t>(spec.task)};
  return std::mt19937_64(seq);
}

inline std::size_t uniform(std::mt19937_64& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

/// Sentence lengths (including the period) summing to `total`.
inline std::vector<std::size_t> sentence_lengths(std::mt19937_64& rng, std::size_t total, std::size_t lo, std::size_t hi) {
  std::vector<std::size_t> out;
  std::size_t left = total;
  while (left > 0) {
    std::size_t len = lo + uniform(rng, hi - lo + 1);
    if (left < len + lo) len = left;
    out.push_back(len);
    left -= len;
  }
  return out;
}

}  // namespace synth_detail

inline Vocabulary synthetic_vocabulary(const SyntheticTaskSpec& spec) {
  using namespace synth_detail;
  std::vector<std::string> words = {".", ","};
  for (std::size_t k = 0; k < kEntities; ++k) words.push_back(entity(k));
  for (std::size_t k = 0; k < kForbidden; ++k) words.push_back(forbidden(k));
  for (std::size_t k = 0; k < kForbidden; ++k) words.push_back(paraphrase(k));
  for (std::size_t k = 0; k < ordinary_count(spec); ++k) words.push_back(ordinary(k));
  return Vocabulary::with_reserved(words);
}

/// Document `index` of the stream defined by `spec`; the same (spec, index)
/// always yields the same document.
inline AnnotatedDocument generate_document(const SyntheticTaskSpec& spec, std::size_t index) {
  using namespace synth_detail;
  auto rng = document_rng(spec, index);
  const auto n_ordinary = ordinary_count(spec);
  const auto L = std::max<std::size_t>(spec.article_length, 6);
  AnnotatedDocument doc;
  doc.id = std::string(task_name(spec.task)) + "-" + std::to_string(index);
  std::bernoulli_distribution is_oov(std::clamp(spec.oov_rate, 0.0, 1.0));

  auto add_word = [&](std::size_t k) { append_token(doc, ordinary(k), ordinary_pos(k), "Other"); };
  auto add_period = [&] { append_token(doc, ".", "Other", "Other"); };

  switch (spec.task) {
    case SyntheticTask::CopySpan: {
      // The lead sentence is the summary; it always holds an OOV name when
      // the OOV rate is positive.
      auto lengths = sentence_lengths(rng, L, 5, 9);
      for (std::size_t s = 0; s < lengths.size(); ++s) {
        doc.sentence_starts.push_back(doc.size());
        bool has_oov = false;
        for (std::size_t i = 0; i + 1 < lengths[s]; ++i) {
          if (is_oov(rng)) {
            append_token(doc, oov_name(uniform(rng, kOovPool)), "Noun", "Person");
            has_oov = true;
          } else {
            add_word(uniform(rng, n_ordinary));
          }
        }
        if (s == 0 && !has_oov && spec.oov_rate > 0.0) {
          const auto pos = uniform(rng, lengths[0] - 1);
          doc.tokens[pos] = oov_name(uniform(rng, kOovPool));
          doc.pos_labels[pos] = "Noun";
          doc.ner_labels[pos] = "Person";
          doc.pos[pos] = PosTag::Noun;
          doc.ner[pos] = NerTag::Person;
        }
        add_period();
      }
      const auto end = doc.sentence_end(0);
      doc.summary.assign(doc.tokens.begin(), doc.tokens.begin() + static_cast<std::ptrdiff_t>(end));
      break;
    }
    case SyntheticTask::ForbiddenCopy: {
      // One sentence; half the tokens carry the forbidden cue class
      // (Adjective / Duration). The summary restates the article with each
      // forbidden word f<k> replaced by its paraphrase p<k>, which never
      // occurs in any article: the model has to read those positions but
      // must generate rather than copy.
      const std::size_t body = L - 1;
      std::vector<bool> banned(body, false);
      for (std::size_t i = 0; i < body / 2; ++i) banned[i] = true;
      std::shuffle(banned.begin(), banned.end(), rng);
      doc.sentence_starts.push_back(0);
      for (std::size_t i = 0; i < body; ++i) {
        if (banned[i]) {
          const auto k = uniform(rng, kForbidden);
          append_token(doc, forbidden(k), "Adjective", "Duration");
          doc.summary.push_back(paraphrase(k));
          continue;
        }
        if (is_oov(rng))
          append_token(doc, oov_name(uniform(rng, kOovPool)), "Noun", "Person");
        else {
          const auto k = uniform(rng, n_ordinary);
          append_token(doc, ordinary(k), k % 2 ? "Verb" : "Noun", "Other");
        }
        doc.summary.push_back(doc.tokens.back());
      }
      add_period();
      doc.summary.push_back(".");
      break;
    }
    case SyntheticTask::TwoEntity: {
      // Sentences alternate between two entities (A first). Every sentence
      // shares one two-token phrase, so attention can jump between
      // sentences after it. The summary repeats A's sentences.
      const std::size_t ea = uniform(rng, kEntities);
      std::size_t eb = uniform(rng, kEntities - 1);
      if (eb >= ea) ++eb;
      const std::size_t shared1 = uniform(rng, n_ordinary), shared2 = uniform(rng, n_ordinary);
      const std::size_t sentence_len = 8;
      const std::size_t sentences = std::max<std::size_t>(2, L / sentence_len);
      CorefChainSpec chains;
      chains.chains.resize(2);
      std::vector<std::size_t> a_sentences;
      for (std::size_t s = 0; s < sentences; ++s) {
        const bool is_a = s % 2 == 0;
        doc.sentence_starts.push_back(doc.size());
        if (is_a) a_sentences.push_back(s);
        chains.chains[is_a ? 0 : 1].push_back({{doc.size(), doc.size()}, std::nullopt});
        append_token(doc, entity(is_a ? ea : eb), "Noun", "Person");
        add_word(uniform(rng, n_ordinary));
        add_word(uniform(rng, n_ordinary));
        add_word(shared1);
        add_word(shared2);
        for (std::size_t i = 5; i + 1 < sentence_len; ++i) add_word(uniform(rng, n_ordinary));
        add_period();
      }
      apply_coref(doc, chains);
      for (auto s : a_sentences) {
        const auto b = doc.sentence_starts[s], e = doc.sentence_end(s);
        doc.summary.insert(doc.summary.end(), doc.tokens.begin() + static_cast<std::ptrdiff_t>(b),
                           doc.tokens.begin() + static_cast<std::ptrdiff_t>(e));
      }
      break;
    }
  }
  doc.validate();
  return doc;
}

inline std::vector<AnnotatedDocument> generate_synthetic(const SyntheticTaskSpec& spec, std::size_t count,
                                                         std::size_t first_index = 0) {
  std::vector<AnnotatedDocument> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) out.push_back(generate_document(spec, first_index + k));
  return out;
}

/// Held-out documents come from a disjoint index range of the same stream.
inline constexpr std::size_t kHeldOutOffset = std::size_t{1} << 40;

/// Small random document for gradient checks and property tests: `n` tokens
/// in two sentences, random cue labels, two coreference chains, one OOV
/// token, and a summary of `steps - 1` tokens (so `steps` decode targets).
inline Vocabulary tiny_vocabulary(std::size_t size) {
  if (size < 6) throw ConfigError("tiny vocabulary needs at least 6 entries");
  std::vector<std::string> words;
  for (std::size_t k = 0; k + 4 < size; ++k) words.push_back("t" + std::to_string(k));
  return Vocabulary::with_reserved(words);
}

inline AnnotatedDocument tiny_document(const Vocabulary& vocab, std::size_t n, std::size_t steps, std::uint64_t seed) {
  if (n < 2 || steps < 1) throw ConfigError("tiny document needs n >= 2 and at least one decode step");
  std::mt19937_64 rng(seed);
  static const char* pos[] = {"Noun", "Verb", "Adjective", "Other"};
  static const char* ner[] = {"Person", "Location", "Date", "Other"};
  auto pick = [&](std::size_t k) { return std::uniform_int_distribution<std::size_t>(0, k - 1)(rng); };
  AnnotatedDocument doc;
  doc.id = "tiny-" + std::to_string(seed);
  const std::size_t words = vocab.size() - 4;
  const std::size_t oov_at = pick(n);
  doc.sentence_starts = {0};
  if (n >= 4) doc.sentence_starts.push_back(n / 2);
  for (std::size_t i = 0; i < n; ++i) {
    std::string tok = i == oov_at ? "zz" + std::to_string(seed % 97) : vocab.word(4 + pick(words));
    append_token(doc, tok, pos[pick(4)], ner[pick(4)]);
  }
  CorefChainSpec chains;
  chains.chains.resize(2);
  chains.chains[0].push_back({{0, 0}, TokenSpan{0, std::min<std::size_t>(2, n - 1)}});
  chains.chains[0].push_back({{n - 1, n - 1}, TokenSpan{n - 2, n - 1}});
  chains.chains[1].push_back({{1, 1}, TokenSpan{1, 1}});
  apply_coref(doc, chains);
  for (std::size_t t = 0; t + 1 < steps; ++t)
    doc.summary.push_back(t % 2 == 0 ? doc.tokens[pick(n)] : vocab.word(4 + pick(words)));
  doc.validate();
  return doc;
}

// ---------------------------------------------------------------------------
// Training

class TrainingError : public std::runtime_error {
 public:
  TrainingError(std::size_t step, const std::string& what)
      : std::runtime_error("step " + std::to_string(step) + ": " + what), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

struct LossRecord {
  std::size_t step = 0;
  double nll = 0.0;
  double insignificance = 0.0;
  double affinity = 0.0;
  double total = 0.0;
};

struct TrainingResult {
  ModelParameters params;
  std::vector<LossRecord> curve;
};

/// Supplies training document k (k counts documents across all steps).
using DocumentSource = std::function<PreparedDocument(std::size_t)>;

inline DocumentSource synthetic_source(const SyntheticTaskSpec& spec, const Vocabulary& vocab, const ModelConfig& cfg) {
  return [spec, &vocab, cfg](std::size_t k) { return prepare_document(generate_document(spec, k), vocab, cfg); };
}

inline DocumentSource corpus_source(std::vector<PreparedDocument> docs) {
  if (docs.empty()) throw ConfigError("training corpus is empty");
  return [docs = std::move(docs)](std::size_t k) { return docs[k % docs.size()]; };
}

/// Step s (0-based) adds the affinity loss once s >= phase * steps.
inline bool affinity_phase_active(const TrainingConfig& cfg, std::size_t step) {
  return static_cast<double>(step) >= cfg.affinity_phase * static_cast<double>(cfg.steps);
}

/// Teacher-forced training with Adagrad. Each step averages the gradient of
/// `batch` documents, clips it, and applies one update.
inline TrainingResult train(const TrainingConfig& cfg, ModelParameters params, const DocumentSource& source,
                            const std::function<void(const LossRecord&)>& on_step = {}) {
  TrainingResult result;
  AdagradState opt(cfg.optimizer);
  auto all = params.all();
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    params.zero_grad();
    LossRecord rec;
    rec.step = step;
    const bool aff = affinity_phase_active(cfg, step);
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      PreparedDocument doc = source(step * cfg.batch + b);
      Graph g;
      SequenceLoss loss = sequence_loss(g, params, cfg.model, doc, aff);
      const double total = loss.total.item();
      if (!std::isfinite(total)) throw TrainingError(step, "non-finite loss on document '" + doc.id + "'");
      g.backward(loss.total);
      rec.nll += loss.nll;
      rec.insignificance += loss.insignificance;
      rec.affinity += loss.affinity;
      rec.total += total;
    }
    const double inv = 1.0 / static_cast<double>(cfg.batch);
    rec.nll *= inv;
    rec.insignificance *= inv;
    rec.affinity *= inv;
    rec.total *= inv;
    for (auto* p : all)
      for (auto& gv : p->grad) gv *= inv;
    for (auto* p : all)
      for (double gv : p->grad)
        if (!std::isfinite(gv)) throw TrainingError(step, "non-finite gradient in " + p->name);
    clip_grad_norm(all, cfg.optimizer.clip_norm);
    adagrad_step(all, opt);
    result.curve.push_back(rec);
    if (on_step) on_step(rec);
  }
  result.params = std::move(params);
  return result;
}

inline void write_loss_curve(std::ostream& out, std::span<const LossRecord> curve) {
  out << "step\tnll\tL\taffinity\ttotal\n";
  char buf[160];
  for (const auto& r : curve) {
    std::snprintf(buf, sizeof buf, "%zu\t%.9g\t%.9g\t%.9g\t%.9g\n", r.step, r.nll, r.insignificance, r.affinity,
                  r.total);
    out << buf;
  }
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvaluationResult {
  std::vector<MetricsReport> documents;
  std::vector<DecodingTrace> traces;
  MetricsReport overall;
};

inline DecodingTrace decode_document(ModelParameters& m, const ModelConfig& cfg, const PreparedDocument& doc,
                                     const Vocabulary& vocab, std::size_t beam) {
  return beam <= 1 ? decode_greedy(m, cfg, doc, vocab, cfg.max_decode)
                   : decode_beam(m, cfg, doc, vocab, beam, cfg.max_decode);
}

/// Decodes every document and computes all metrics against its reference.
inline EvaluationResult evaluate(ModelParameters& m, const ModelConfig& cfg, std::span<const PreparedDocument> docs,
                                 const Vocabulary& vocab, std::size_t beam = 1, bool macro = false) {
  EvaluationResult out;
  for (const auto& doc : docs) {
    auto trace = decode_document(m, cfg, doc, vocab, beam);
    auto summary = summary_tokens(trace);
    out.documents.push_back(document_report(doc.id, summary, doc.summary, doc.tokens, &trace));
    out.traces.push_back(std::move(trace));
  }
  out.overall = aggregate_reports(std::string(mode_name(cfg.mode)), out.documents, macro);
  return out;
}

/// Position-wise agreement with the reference over the longer sequence.
inline double token_accuracy(TokenView decoded, TokenView reference) {
  const auto len = std::max(decoded.size(), reference.size());
  if (len == 0) return 1.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < std::min(decoded.size(), reference.size()); ++i)
    if (decoded[i] == reference[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(len);
}

}  // namespace gpg
