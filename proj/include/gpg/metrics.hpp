#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gpg/decode.hpp"

namespace gpg {

using Tokens = std::vector<std::string>;
using TokenView = std::span<const std::string>;

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

namespace detail {

inline double f1_score(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

inline std::map<std::vector<std::string>, std::size_t> ngram_counts(TokenView tokens, std::size_t n) {
  std::map<std::vector<std::string>, std::size_t> counts;
  if (n == 0 || tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) ++counts[std::vector<std::string>(tokens.begin() + i, tokens.begin() + i + n)];
  return counts;
}

inline bool contains_sequence(TokenView haystack, TokenView needle) {
  if (needle.empty()) return true;
  if (needle.size() > haystack.size()) return false;
  return std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end()) != haystack.end();
}

}  // namespace detail

/// Clipped n-gram overlap; F1 is 0 when either side has no n-grams.
inline PrecisionRecall rouge_n(TokenView candidate, TokenView reference, std::size_t n) {
  if (n == 0) throw std::invalid_argument("rouge_n: n must be at least 1");
  auto cand = detail::ngram_counts(candidate, n);
  auto ref = detail::ngram_counts(reference, n);
  std::size_t cand_total = candidate.size() >= n ? candidate.size() - n + 1 : 0;
  std::size_t ref_total = reference.size() >= n ? reference.size() - n + 1 : 0;
  std::size_t overlap = 0;
  for (const auto& [gram, c] : cand)
    if (auto it = ref.find(gram); it != ref.end()) overlap += std::min(c, it->second);
  PrecisionRecall out;
  if (cand_total) out.precision = static_cast<double>(overlap) / static_cast<double>(cand_total);
  if (ref_total) out.recall = static_cast<double>(overlap) / static_cast<double>(ref_total);
  out.f1 = detail::f1_score(out.precision, out.recall);
  return out;
}

inline std::size_t lcs_length(TokenView a, TokenView b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline PrecisionRecall rouge_l(TokenView candidate, TokenView reference) {
  PrecisionRecall out;
  if (candidate.empty() || reference.empty()) return out;
  const auto l = static_cast<double>(lcs_length(candidate, reference));
  out.precision = l / static_cast<double>(candidate.size());
  out.recall = l / static_cast<double>(reference.size());
  out.f1 = detail::f1_score(out.precision, out.recall);
  return out;
}

// ---------------------------------------------------------------------------
// Novelty and overlap

struct NoveltyCount {
  std::size_t novel = 0;
  std::size_t total = 0;

  std::optional<double> percent() const {
    if (total == 0) return std::nullopt;
    return 100.0 * static_cast<double>(novel) / static_cast<double>(total);
  }
  NoveltyCount& operator+=(const NoveltyCount& o) {
    novel += o.novel;
    total += o.total;
    return *this;
  }
};

/// Summary n-grams (with positional multiplicity) absent from the article.
inline NoveltyCount novel_ngram_count(TokenView summary, TokenView article, std::size_t n) {
  if (n == 0) throw std::invalid_argument("novel_ngram_count: n must be at least 1");
  NoveltyCount c;
  if (summary.size() < n) return c;
  auto article_grams = detail::ngram_counts(article, n);
  for (std::size_t i = 0; i + n <= summary.size(); ++i) {
    ++c.total;
    if (!article_grams.count(std::vector<std::string>(summary.begin() + i, summary.begin() + i + n))) ++c.novel;
  }
  return c;
}

/// Percentage of novel n-grams, absent when the summary is shorter than n.
inline std::optional<double> novel_ngram_pct(TokenView summary, TokenView article, std::size_t n) {
  return novel_ngram_count(summary, article, n).percent();
}

/// Splits on "." tokens; the period stays with its sentence. A trailing
/// fragment without a period is a sentence too.
inline std::vector<Tokens> split_sentences(TokenView tokens) {
  std::vector<Tokens> out;
  Tokens cur;
  for (const auto& t : tokens) {
    cur.push_back(t);
    if (t == ".") {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

inline NoveltyCount novel_sentence_count(TokenView summary, TokenView article) {
  NoveltyCount c;
  for (const auto& s : split_sentences(summary)) {
    ++c.total;
    if (!detail::contains_sequence(article, s)) ++c.novel;
  }
  return c;
}

inline std::optional<double> novel_sentence_pct(TokenView summary, TokenView article) {
  return novel_sentence_count(summary, article).percent();
}

struct OverlapAnalysis {
  std::array<std::optional<double>, 4> ngram;  // n = 1..4
  std::optional<double> sentence;
};

/// Complement of novelty: share of summary n-grams / sentences found in the article.
inline OverlapAnalysis overlap_analysis(TokenView summary, TokenView article) {
  OverlapAnalysis out;
  // Taken as 100 minus novelty so the two always add up to exactly 100.
  for (std::size_t n = 1; n <= 4; ++n)
    if (auto novel = novel_ngram_pct(summary, article, n)) out.ngram[n - 1] = 100.0 - *novel;
  if (auto novel = novel_sentence_pct(summary, article)) out.sentence = 100.0 - *novel;
  return out;
}

// ---------------------------------------------------------------------------
// Generation probability and attention statistics

struct PgenStats {
  double mean = 0.0;
  std::array<std::size_t, 10> histogram{};  // bucket k covers [k/10, (k+1)/10), last closed at 1
  std::size_t steps = 0;
};

inline std::size_t pgen_bucket(double p) {
  auto k = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(std::floor(p * 10.0)), 0, 9);
  // p * 10 can round across a boundary; compare against the edges themselves.
  if (k > 0 && p < static_cast<double>(k) / 10.0) --k;
  else if (k < 9 && p >= static_cast<double>(k + 1) / 10.0) ++k;
  return static_cast<std::size_t>(k);
}

inline PgenStats pgen_stats(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("pgen_stats: no decoding steps");
  PgenStats s;
  double total = 0.0;
  for (double p : values) {
    total += p;
    ++s.histogram[pgen_bucket(p)];
  }
  s.steps = values.size();
  s.mean = total / static_cast<double>(values.size());
  return s;
}

inline PgenStats pgen_stats(std::span<const DecodingTrace> traces) {
  std::vector<double> values;
  for (const auto& t : traces)
    for (const auto& s : t.steps) values.push_back(s.p_gen);
  return pgen_stats(values);
}

/// Total attention received by each article position over all steps.
inline std::vector<double> cumulative_attention(const DecodingTrace& trace) {
  std::vector<double> out(trace.length, 0.0);
  for (const auto& s : trace.steps)
    for (std::size_t i = 0; i < out.size() && i < s.attention.size(); ++i) out[i] += s.attention[i];
  return out;
}

// ---------------------------------------------------------------------------
// Paired permutation test

struct PermutationOptions {
  std::size_t exact_limit = 20;
  std::size_t monte_carlo_trials = 100000;
  std::uint64_t seed = 12345;
};

/// One-sided paired permutation test on the mean of sign-flipped deltas:
/// p = #{patterns with permuted mean >= observed} / #patterns, identity
/// included. All 2^k patterns are enumerated when k <= exact_limit.
inline double fisher_pitman_test(std::span<const double> deltas, const PermutationOptions& opt = {}) {
  const auto k = deltas.size();
  if (k == 0) throw std::invalid_argument("fisher_pitman_test: no paired deltas");
  double observed = 0.0, scale_sum = 0.0;
  for (double d : deltas) {
    observed += d;
    scale_sum += std::abs(d);
  }
  const double tol = 1e-9 * std::max(scale_sum, 1e-300);

  if (k <= opt.exact_limit) {
    // Gray-code walk: consecutive patterns differ in one sign.
    std::vector<int> sign(k, 1);
    double current = observed;
    std::uint64_t count = current >= observed - tol ? 1 : 0;
    const std::uint64_t total = std::uint64_t{1} << k;
    for (std::uint64_t i = 1; i < total; ++i) {
      const auto bit = static_cast<std::size_t>(std::countr_zero(i));
      current -= 2.0 * sign[bit] * deltas[bit];
      sign[bit] = -sign[bit];
      if (current >= observed - tol) ++count;
    }
    return static_cast<double>(count) / static_cast<double>(total);
  }

  std::mt19937_64 rng(opt.seed);
  std::uint64_t count = 1;  // identity pattern
  for (std::size_t t = 0; t < opt.monte_carlo_trials; ++t) {
    double s = 0.0;
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < k; ++i) {
      if (i % 64 == 0) bits = rng();
      s += (bits & 1u) ? -deltas[i] : deltas[i];
      bits >>= 1;
    }
    if (s >= observed - tol) ++count;
  }
  return static_cast<double>(count) / static_cast<double>(opt.monte_carlo_trials + 1);
}

// ---------------------------------------------------------------------------
// Shunting

struct ShuntEvent {
  std::size_t step = 0;
  std::size_t from_position = 0;
  std::size_t from_sentence = 0;
  std::size_t to_position = 0;
  std::size_t to_sentence = 0;
  bool mid_clause = true;
};

inline bool is_sentence_final(std::string_view token) { return token == "."; }

/// A shunt is a step where the attention argmax moves to another article
/// sentence, the previous argmax was not its sentence's last token, and the
/// previous emitted token was not a period.
inline std::vector<ShuntEvent> detect_shunts(const DecodingTrace& trace) {
  std::vector<ShuntEvent> events;
  auto sentence_last = [&](std::size_t sentence) {
    std::size_t end = sentence + 1 < trace.sentence_starts.size() ? trace.sentence_starts[sentence + 1] : trace.length;
    return end - 1;
  };
  bool period_since_event = false;
  for (std::size_t t = 1; t < trace.steps.size(); ++t) {
    const auto& prev = trace.steps[t - 1];
    const auto& cur = trace.steps[t];
    if (is_sentence_final(prev.surface)) period_since_event = true;
    const auto from_s = trace.sentence_of(prev.copy_position);
    const auto to_s = trace.sentence_of(cur.copy_position);
    if (from_s == to_s) continue;
    if (prev.copy_position == sentence_last(from_s)) continue;
    if (is_sentence_final(prev.surface)) continue;
    events.push_back({t, prev.copy_position, from_s, cur.copy_position, to_s, !period_since_event});
    period_since_event = false;
  }
  return events;
}

// ---------------------------------------------------------------------------
// Reports

struct MetricsReport {
  std::string name;
  double rouge1 = 0.0, rouge2 = 0.0, rougeL = 0.0;
  std::array<NoveltyCount, 4> novel_ngrams{};
  NoveltyCount novel_sentences;
  std::array<std::optional<double>, 4> novel_ngram_percent{};  // n = 1..4
  std::optional<double> novel_sentence_percent;
  double pgen_sum = 0.0;
  std::size_t pgen_steps = 0;
  std::array<std::size_t, 10> pgen_histogram{};
  std::vector<ShuntEvent> shunts;
  std::size_t documents = 1;

  std::optional<double> novel_ngram_pct(std::size_t n) const { return novel_ngram_percent.at(n - 1); }
  std::optional<double> novel_sentence_pct() const { return novel_sentence_percent; }
  std::optional<double> avg_pgen() const {
    if (pgen_steps == 0) return std::nullopt;
    return pgen_sum / static_cast<double>(pgen_steps);
  }
};

inline MetricsReport document_report(std::string name, TokenView summary, TokenView reference, TokenView article,
                                     const DecodingTrace* trace) {
  MetricsReport r;
  r.name = std::move(name);
  r.rouge1 = rouge_n(summary, reference, 1).f1;
  r.rouge2 = rouge_n(summary, reference, 2).f1;
  r.rougeL = rouge_l(summary, reference).f1;
  for (std::size_t n = 1; n <= 4; ++n) {
    r.novel_ngrams[n - 1] = novel_ngram_count(summary, article, n);
    r.novel_ngram_percent[n - 1] = r.novel_ngrams[n - 1].percent();
  }
  r.novel_sentences = novel_sentence_count(summary, article);
  r.novel_sentence_percent = r.novel_sentences.percent();
  if (trace) {
    for (const auto& s : trace->steps) {
      r.pgen_sum += s.p_gen;
      ++r.pgen_steps;
      ++r.pgen_histogram[pgen_bucket(s.p_gen)];
    }
    r.shunts = detect_shunts(*trace);
  }
  return r;
}

/// Corpus aggregate: ROUGE is the per-document mean and p_gen is pooled
/// over all steps. Novelty is pooled over all n-grams (micro) or, with
/// `macro`, the mean of per-document percentages.
inline MetricsReport aggregate_reports(std::string name, std::span<const MetricsReport> reports, bool macro = false) {
  MetricsReport out;
  out.name = std::move(name);
  out.documents = reports.size();
  if (reports.empty()) return out;
  std::array<double, 5> pct_sum{};
  std::array<std::size_t, 5> pct_count{};
  for (const auto& r : reports) {
    out.rouge1 += r.rouge1;
    out.rouge2 += r.rouge2;
    out.rougeL += r.rougeL;
    for (std::size_t n = 0; n < 4; ++n) {
      out.novel_ngrams[n] += r.novel_ngrams[n];
      if (r.novel_ngram_percent[n]) {
        pct_sum[n] += *r.novel_ngram_percent[n];
        ++pct_count[n];
      }
    }
    out.novel_sentences += r.novel_sentences;
    if (r.novel_sentence_percent) {
      pct_sum[4] += *r.novel_sentence_percent;
      ++pct_count[4];
    }
    out.pgen_sum += r.pgen_sum;
    out.pgen_steps += r.pgen_steps;
    for (std::size_t k = 0; k < 10; ++k) out.pgen_histogram[k] += r.pgen_histogram[k];
    out.shunts.insert(out.shunts.end(), r.shunts.begin(), r.shunts.end());
  }
  const double d = static_cast<double>(reports.size());
  out.rouge1 /= d;
  out.rouge2 /= d;
  out.rougeL /= d;
  auto mean = [&](std::size_t k) -> std::optional<double> {
    if (!pct_count[k]) return std::nullopt;
    return pct_sum[k] / static_cast<double>(pct_count[k]);
  };
  for (std::size_t n = 0; n < 4; ++n) out.novel_ngram_percent[n] = macro ? mean(n) : out.novel_ngrams[n].percent();
  out.novel_sentence_percent = macro ? mean(4) : out.novel_sentences.percent();
  return out;
}

inline const char* report_header() {
  return "system\tROUGE-1\tROUGE-2\tROUGE-L\tnovel-1\tnovel-2\tnovel-3\tnovel-4\tnovel-sentences\tavg-pgen";
}

/// Tab-separated rows in the published table's column order.
inline void emit_report(std::ostream& out, std::span<const MetricsReport> reports) {
  out << report_header() << '\n';
  char buf[64];
  auto pct = [&](std::optional<double> v) -> std::string {
    if (!v) return "-";
    std::snprintf(buf, sizeof buf, "%.2f", *v);
    return buf;
  };
  auto four = [&](double v) -> std::string {
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
  };
  for (const auto& r : reports) {
    out << r.name << '\t' << four(r.rouge1) << '\t' << four(r.rouge2) << '\t' << four(r.rougeL);
    for (std::size_t n = 1; n <= 4; ++n) out << '\t' << pct(r.novel_ngram_pct(n));
    out << '\t' << pct(r.novel_sentence_pct());
    auto p = r.avg_pgen();
    out << '\t' << (p ? four(*p) : std::string("-")) << '\n';
  }
  if (!out) throw std::runtime_error("report write failed");
}

/// One line per event: doc, step, positions, sentences.
inline void write_shunt_log(std::ostream& out, const std::string& doc_id, std::span<const ShuntEvent> events,
                            bool header = true) {
  if (header) out << "doc\tstep\tfrom_pos\tto_pos\tfrom_sent\tto_sent\n";
  for (const auto& e : events)
    out << doc_id << '\t' << e.step << '\t' << e.from_position << '\t' << e.to_position << '\t' << e.from_sentence
        << '\t' << e.to_sentence << '\n';
}

}  // namespace gpg
