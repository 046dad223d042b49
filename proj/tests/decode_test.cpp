#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <sstream>

#include "gpg/decode.hpp"
#include "tiny.hpp"

using namespace gpg;

namespace {

using History = std::vector<std::size_t>;
using Table = std::function<std::vector<double>(const History&)>;

struct Best {
  History tokens;
  double score = -INFINITY;
  double log_prob = 0.0;
};

// Every sequence that either ends in `stop` within `max_steps` tokens or
// reaches `max_steps` without it, scored by log-probability per token.
void enumerate(const Table& table, std::size_t stop, std::size_t max_steps, History& h, double lp, Best& best) {
  auto probs = table(h);
  for (std::size_t tok = 0; tok < probs.size(); ++tok) {
    h.push_back(tok);
    const double next = lp + std::log(std::max(probs[tok], 1e-12));
    if (tok == stop || h.size() == max_steps) {
      const double score = next / static_cast<double>(h.size());
      const bool tie = std::abs(score - best.score) <= 1e-12 * std::max(1.0, std::abs(best.score));
      if (best.tokens.empty() || (!tie && score > best.score) || (tie && h < best.tokens)) best = {h, score, next};
    } else {
      enumerate(table, stop, max_steps, h, next, best);
    }
    h.pop_back();
  }
}

Best brute_force(const Table& table, std::size_t stop, std::size_t max_steps) {
  Best best;
  History h;
  enumerate(table, stop, max_steps, h, 0.0, best);
  return best;
}

Hypothesis<History, int> run_beam(const Table& table, std::size_t stop, std::size_t width, std::size_t max_steps) {
  auto expand = [&](const Hypothesis<History, int>& h) {
    Expansion<History, int> x;
    x.probs = table(h.tokens);
    x.state = h.tokens;
    x.record = static_cast<int>(h.tokens.size());
    return x;
  };
  return beam_search<History, int>(History{}, 99, stop, width, max_steps, expand);
}

Table random_table(std::uint64_t seed, std::size_t V) {
  return [seed, V](const History& h) {
    std::seed_seq seq(h.begin(), h.end());
    std::vector<std::uint32_t> key(1);
    seq.generate(key.begin(), key.end());
    std::mt19937_64 rng(seed * 1000003 + key[0] + h.size());
    std::gamma_distribution<double> gam(0.7, 1.0);
    std::vector<double> p(V);
    double z = 0.0;
    for (auto& x : p) z += x = gam(rng) + 1e-3;
    for (auto& x : p) x /= z;
    return p;
  };
}

}  // namespace

TEST(BeamSearch, HandTableMatchesEnumeration) {
  // tokens a = 0, b = 1, stop = 2; greedy commits to a, the best sequence is [b, stop]
  Table table = [](const History& h) -> std::vector<double> {
    if (h.empty()) return {0.5, 0.4, 0.1};
    if (h[0] == 1) return {0.05, 0.05, 0.9};
    return {0.34, 0.33, 0.33};
  };
  auto oracle = brute_force(table, 2, 3);
  EXPECT_EQ(oracle.tokens, (History{1, 2}));
  auto beam = run_beam(table, 2, 4, 3);
  EXPECT_EQ(beam.tokens, oracle.tokens);
  EXPECT_NEAR(beam.log_prob, oracle.log_prob, 1e-15);
  EXPECT_EQ(beam.records, (std::vector<int>{0, 1}));
  EXPECT_EQ(run_beam(table, 2, 1, 3).tokens, (History{0, 0, 0}));
}

TEST(BeamSearch, WideBeamEqualsEnumeration) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    auto table = random_table(seed, 3);
    auto oracle = brute_force(table, 2, 3);
    auto beam = run_beam(table, 2, 27, 3);
    EXPECT_EQ(beam.tokens, oracle.tokens) << "seed " << seed;
    EXPECT_NEAR(beam.log_prob, oracle.log_prob, 1e-12);
  }
}

TEST(BeamSearch, UniformTieGoesToLowestSequence) {
  Table uniform = [](const History&) { return std::vector<double>(3, 1.0 / 3.0); };
  EXPECT_EQ(run_beam(uniform, 2, 4, 3).tokens, (History{0, 0, 0}));
  EXPECT_EQ(run_beam(uniform, 2, 1, 3).tokens, (History{0, 0, 0}));
}

TEST(BeamSearch, StopFirstGivesSingleRecord) {
  Table stop_now = [](const History&) { return std::vector<double>{0.0, 1.0}; };
  auto h = run_beam(stop_now, 1, 3, 5);
  EXPECT_EQ(h.tokens, (History{1}));
  EXPECT_EQ(h.records.size(), 1u);
}

TEST(BeamSearch, RejectsZeroWidthOrSteps) {
  Table t = [](const History&) { return std::vector<double>{1.0}; };
  EXPECT_THROW(run_beam(t, 0, 0, 3), std::invalid_argument);
  EXPECT_THROW(run_beam(t, 0, 2, 0), std::invalid_argument);
}

TEST(Decode, BeamWidthOneEqualsGreedyOnRandomModels) {
  const Mode modes[] = {Mode::Baseline, Mode::Guided, Mode::Affinity, Mode::Both};
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    auto t = make_tiny(modes[seed % 4], seed, 6 + seed % 5, 4, 1.5);
    auto greedy = decode_greedy(t.m, t.cfg, t.doc, t.vocab, 8);
    auto beam = decode_beam(t.m, t.cfg, t.doc, t.vocab, 1, 8);
    ASSERT_EQ(beam.tokens, greedy.tokens) << "seed " << seed;
    ASSERT_EQ(beam.steps.size(), greedy.steps.size());
    EXPECT_NEAR(beam.log_prob, greedy.log_prob, 1e-12);
    for (std::size_t k = 0; k < beam.steps.size(); ++k) {
      EXPECT_EQ(beam.steps[k].attention, greedy.steps[k].attention);
      EXPECT_EQ(beam.steps[k].surface, greedy.steps[k].surface);
    }
  }
}

TEST(Decode, StopAtFirstStepGivesEmptySummary) {
  auto t = make_tiny(Mode::Baseline, 2);
  t.m.gen_b.value[0] = 50.0;
  t.m.out_b.value[t.vocab.stop()] = 100.0;
  auto tr = decode_greedy(t.m, t.cfg, t.doc, t.vocab, 5);
  EXPECT_TRUE(tr.tokens.empty());
  ASSERT_EQ(tr.steps.size(), 1u);
  EXPECT_EQ(tr.steps[0].surface, "<stop>");
  EXPECT_TRUE(summary_tokens(tr).empty());
}

TEST(Decode, MaxStepsWithoutStop) {
  auto t = make_tiny(Mode::Baseline, 2);
  t.m.gen_b.value[0] = 50.0;
  t.m.out_b.value[5] = 100.0;
  auto tr = decode_greedy(t.m, t.cfg, t.doc, t.vocab, 3);
  EXPECT_EQ(tr.tokens, (std::vector<std::size_t>{5, 5, 5}));
  EXPECT_EQ(tr.steps.size(), 3u);
  EXPECT_THROW(decode_greedy(t.m, t.cfg, t.doc, t.vocab, 0), std::invalid_argument);
}

TEST(Decode, PureCopyEmitsOovSurface) {
  auto t = make_tiny(Mode::Baseline, 7);
  t.m.gen_b.value[0] = -60.0;  // copy only
  ASSERT_EQ(t.doc.oov_count(), 1u);
  auto tr = decode_greedy(t.m, t.cfg, t.doc, t.vocab, 4);
  for (const auto& s : tr.steps) EXPECT_EQ(s.token, t.doc.extended_ids[argmax(s.attention)]);
  const std::string resolved = resolve_tokens(tr, t.doc, t.vocab);
  std::string joined;
  for (const auto& w : summary_tokens(tr)) joined += (joined.empty() ? "" : " ") + w;
  EXPECT_EQ(resolved, joined);
}

TEST(ResolveTokens, MapsOovAndRejectsDangling) {
  auto vocab = Vocabulary::with_reserved(std::vector<std::string>{"the", "said"});
  AnnotatedDocument d;
  d.id = "r";
  for (auto w : {"the", "tsarnaev", "said"}) append_token(d, w, "Noun", "Other");
  d.sentence_starts = {0};
  ModelConfig c;
  auto p = prepare_document(d, vocab, c);
  DecodingTrace tr;
  tr.tokens = {4, vocab.size(), 5};
  EXPECT_EQ(resolve_tokens(tr, p, vocab), "the tsarnaev said");
  tr.tokens = {vocab.size() + 1};
  EXPECT_THROW(resolve_tokens(tr, p, vocab), std::out_of_range);
}

TEST(Trace, RoundTrip) {
  auto t = make_tiny(Mode::Both, 5, 9, 6, 1.0);
  std::vector<DecodingTrace> traces = {decode_beam(t.m, t.cfg, t.doc, t.vocab, 3, 6),
                                       decode_greedy(t.m, t.cfg, t.doc, t.vocab, 6)};
  traces[1].doc_id = "second";
  std::stringstream ss;
  write_traces(ss, traces);
  auto back = read_traces(ss);
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_EQ(back[k].doc_id, traces[k].doc_id);
    EXPECT_EQ(back[k].length, traces[k].length);
    EXPECT_EQ(back[k].sentence_starts, traces[k].sentence_starts);
    EXPECT_EQ(back[k].tokens, traces[k].tokens);
    EXPECT_EQ(back[k].dncm.size(), traces[k].dncm.size());
    ASSERT_EQ(back[k].steps.size(), traces[k].steps.size());
    for (std::size_t s = 0; s < back[k].steps.size(); ++s) {
      EXPECT_EQ(back[k].steps[s].surface, traces[k].steps[s].surface);
      EXPECT_NEAR(back[k].steps[s].p_gen, traces[k].steps[s].p_gen, 5e-7);
      for (std::size_t i = 0; i < back[k].length; ++i)
        EXPECT_NEAR(back[k].steps[s].attention[i], traces[k].steps[s].attention[i], 5e-7);
    }
  }
  std::stringstream again;
  write_traces(again, back);
  std::stringstream first;
  write_traces(first, traces);
  EXPECT_EQ(again.str(), first.str());
}

TEST(Trace, MalformedInputs) {
  std::stringstream orphan("0 4 the 0.5 1.0\n");
  EXPECT_THROW(read_traces(orphan), ParseError);
  std::stringstream short_row("#trace d n=2 starts=0\n0 4 the 0.5 1.0\n");
  EXPECT_THROW(read_traces(short_row), ParseError);
  std::stringstream order("#trace d n=1 starts=0\n1 4 the 0.5 1.0\n");
  EXPECT_THROW(read_traces(order), ParseError);
  std::stringstream header("#trace d 2 0\n");
  EXPECT_THROW(read_traces(header), ParseError);
}

TEST(Trace, DncmLineOnlyInGuidedModes) {
  auto guided = make_tiny(Mode::Guided, 3, 7, 4, 1.0);
  auto tr = decode_greedy(guided.m, guided.cfg, guided.doc, guided.vocab, 4);
  Graph g;
  auto e = encode_document(g, guided.m, guided.cfg, guided.doc);
  ASSERT_EQ(tr.dncm.size(), 7u);
  for (std::size_t i = 0; i < 7; ++i) EXPECT_EQ(tr.dncm[i], e.dncm->weights[i]);
  EXPECT_EQ(decode_beam(guided.m, guided.cfg, guided.doc, guided.vocab, 2, 4).dncm, tr.dncm);

  std::stringstream ss;
  write_traces(ss, std::vector<DecodingTrace>{tr});
  EXPECT_NE(ss.str().find("\n#dncm "), std::string::npos);
  auto back = read_traces(ss);
  ASSERT_EQ(back[0].dncm.size(), 7u);
  for (std::size_t i = 0; i < 7; ++i) EXPECT_NEAR(back[0].dncm[i], tr.dncm[i], 5e-7);
  EXPECT_EQ(back[0].steps.size(), tr.steps.size());

  auto base = make_tiny(Mode::Baseline, 3, 7, 4, 1.0);
  auto plain = decode_greedy(base.m, base.cfg, base.doc, base.vocab, 4);
  EXPECT_TRUE(plain.dncm.empty());
  std::stringstream ps;
  write_traces(ps, std::vector<DecodingTrace>{plain});
  EXPECT_EQ(ps.str().find("#dncm"), std::string::npos);
}

TEST(Trace, DncmLineMustFollowHeader) {
  std::stringstream late("#trace d n=1 starts=0\n0 4 the 0.5 1.0\n#dncm 1.0\n");
  EXPECT_THROW(read_traces(late), ParseError);
  std::stringstream short_line("#trace d n=2 starts=0\n#dncm 1.0\n");
  EXPECT_THROW(read_traces(short_line), ParseError);
}
