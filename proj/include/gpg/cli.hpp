#pragma once

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "gpg/checkpoint.hpp"
#include "gpg/gradcheck.hpp"
#include "gpg/render.hpp"
#include "gpg/train.hpp"

namespace gpg::cli {

inline constexpr int kOk = 0;
inline constexpr int kInvalid = 1;
inline constexpr int kFailure = 2;

/// Thrown for bad user input (as opposed to I/O or numerical failures).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline const char* usage() {
  return "usage: gpg <command> [options] [key=value ...]\n"
         "\n"
         "commands:\n"
         "  train     --config F [--warm-start CKPT]\n"
         "  decode    --ckpt F --corpus F [--mode M] [--beam K] --trace-out F\n"
         "  evaluate  --ckpt F --corpus F --report F [--beam K] [--macro] [--per-doc]\n"
         "  analyze   --trace F --corpus F [--shunts F] [--heat F] [--report F]\n"
         "  gradcheck --config F [--eps E]\n"
         "  synth     --task T --n N --seed S --out F\n"
         "\n"
         "Trailing key=value pairs override config file entries.\n";
}

inline void apply_overrides(TrainingConfig& cfg, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    auto [k, v] = parse_assignment(o);
    cfg.set(k, v);
  }
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  return f;
}

struct LoadedModel {
  TrainingConfig config;
  Vocabulary vocab;
  ModelParameters params;
};

inline std::string vocab_sidecar(const std::string& ckpt) { return ckpt + ".vocab"; }
inline std::string config_sidecar(const std::string& ckpt) { return ckpt + ".cfg"; }

/// Checkpoint plus its vocabulary and config sidecars.
inline LoadedModel load_model(const std::string& ckpt, const std::vector<std::string>& overrides) {
  LoadedModel lm;
  {
    std::ifstream in(config_sidecar(ckpt));
    if (!in) throw std::runtime_error("cannot open " + config_sidecar(ckpt));
    read_config(in, lm.config);
  }
  apply_overrides(lm.config, overrides);
  lm.vocab = Vocabulary::load(vocab_sidecar(ckpt));
  lm.params = init_parameters(lm.vocab.size(), lm.config.model);
  auto tensors = load_checkpoint(ckpt);
  const auto loaded = lm.params.load(tensors);
  if (loaded != lm.params.all().size())
    throw CheckpointError("checkpoint " + ckpt + " holds " + std::to_string(loaded) + " of " +
                          std::to_string(lm.params.all().size()) + " model parameters");
  return lm;
}

inline void save_model(const std::string& ckpt, const TrainingConfig& cfg, const Vocabulary& vocab,
                       const ModelParameters& params) {
  auto ps = params.all();
  save_checkpoint(ckpt, ps);
  auto v = open_out(vocab_sidecar(ckpt));
  vocab.save(v);
  auto c = open_out(config_sidecar(ckpt));
  write_config(c, cfg);
}

inline std::vector<PreparedDocument> prepare_all(std::span<const AnnotatedDocument> docs, const Vocabulary& vocab,
                                                 const ModelConfig& cfg) {
  std::vector<PreparedDocument> out;
  out.reserve(docs.size());
  for (const auto& d : docs) out.push_back(prepare_document(d, vocab, cfg));
  return out;
}

// ---------------------------------------------------------------------------
// Subcommands

inline int cmd_train(const std::string& config_path, const std::string& warm_start,
                     const std::vector<std::string>& overrides, std::ostream& out, std::ostream& err) {
  TrainingConfig cfg = load_config(config_path);
  apply_overrides(cfg, overrides);
  if (cfg.checkpoint.empty()) throw ConfigError("config key 'checkpoint' is required for training");

  Vocabulary vocab;
  DocumentSource source;
  if (cfg.use_synthetic) {
    vocab = synthetic_vocabulary(cfg.task);
    source = synthetic_source(cfg.task, vocab, cfg.model);
  } else {
    auto docs = load_corpus(cfg.corpus);
    vocab = cfg.vocab.empty() ? Vocabulary::build(docs, cfg.model.vocab_size) : Vocabulary::load(cfg.vocab);
    source = corpus_source(prepare_all(docs, vocab, cfg.model));
  }

  ModelParameters params = init_parameters(vocab.size(), cfg.model);
  if (!warm_start.empty()) {
    // The extension parameters start fresh on top of a baseline checkpoint.
    std::unordered_set<std::string> skip;
    for (auto* p : params.extension_parameters()) skip.insert(p->name);
    params.load(load_checkpoint(warm_start), skip);
  }

  auto result = train(cfg, std::move(params), source);
  save_model(cfg.checkpoint, cfg, vocab, result.params);
  if (!cfg.loss_curve.empty()) {
    auto f = open_out(cfg.loss_curve);
    write_loss_curve(f, result.curve);
  }
  if (!result.curve.empty()) {
    const auto& last = result.curve.back();
    out << "steps\t" << result.curve.size() << "\nfinal_nll\t" << last.nll << "\nfinal_total\t" << last.total
        << '\n';
  }
  err << "checkpoint written to " << cfg.checkpoint << '\n';
  return kOk;
}

inline int cmd_decode(const std::string& ckpt, const std::string& corpus, const std::string& mode, std::size_t beam,
                      const std::string& trace_out, const std::vector<std::string>& overrides, std::ostream& out) {
  auto lm = load_model(ckpt, overrides);
  if (!mode.empty()) lm.config.model.mode = parse_mode(mode);
  if (beam == 0) beam = lm.config.beam;
  auto docs = prepare_all(load_corpus(corpus), lm.vocab, lm.config.model);
  std::vector<DecodingTrace> traces;
  for (const auto& d : docs) {
    traces.push_back(decode_document(lm.params, lm.config.model, d, lm.vocab, beam));
    out << d.id << '\t' << resolve_tokens(traces.back(), d, lm.vocab) << '\n';
  }
  auto f = open_out(trace_out);
  write_traces(f, traces);
  return kOk;
}

inline int cmd_evaluate(const std::string& ckpt, const std::string& corpus, const std::string& report,
                        std::size_t beam, bool macro, bool per_doc, const std::vector<std::string>& overrides) {
  auto lm = load_model(ckpt, overrides);
  if (beam == 0) beam = lm.config.beam;
  auto docs = prepare_all(load_corpus(corpus), lm.vocab, lm.config.model);
  auto result = evaluate(lm.params, lm.config.model, docs, lm.vocab, beam, macro);
  std::vector<MetricsReport> rows;
  if (per_doc) rows = result.documents;
  if (!docs.empty()) rows.push_back(result.overall);
  auto f = open_out(report);
  emit_report(f, rows);
  return kOk;
}

inline int cmd_analyze(const std::string& trace_path, const std::string& corpus, const std::string& shunts_path,
                       const std::string& heat_path, const std::string& report_path, std::ostream& out) {
  std::ifstream tin(trace_path);
  if (!tin) throw std::runtime_error("cannot open trace " + trace_path);
  auto traces = read_traces(tin);
  auto docs = load_corpus(corpus);
  std::map<std::string, const AnnotatedDocument*> by_id;
  for (const auto& d : docs) by_id[d.id] = &d;

  std::ostringstream shunts, heat;
  shunts << "doc\tstep\tfrom_pos\tto_pos\tfrom_sent\tto_sent\n";
  std::vector<MetricsReport> reports;
  std::size_t events = 0;
  for (const auto& t : traces) {
    auto it = by_id.find(t.doc_id);
    if (it == by_id.end()) throw ValidationError("trace for unknown document '" + t.doc_id + "'");
    const auto& doc = *it->second;
    if (t.length > doc.size())
      throw ValidationError("trace for '" + t.doc_id + "' is longer than its article");
    TokenView article(doc.tokens.data(), t.length);
    auto summary = summary_tokens(t);
    reports.push_back(document_report(t.doc_id, summary, doc.summary, article, &t));
    write_shunt_log(shunts, t.doc_id, reports.back().shunts, false);
    events += reports.back().shunts.size();
    heat << "#doc " << t.doc_id << '\n' << render_attention(t, article);
  }
  if (!shunts_path.empty()) open_out(shunts_path) << shunts.str();
  if (!heat_path.empty()) open_out(heat_path) << heat.str();
  auto overall = aggregate_reports("trace", reports);
  if (!report_path.empty()) {
    auto f = open_out(report_path);
    std::vector<MetricsReport> rows;
    if (!reports.empty()) rows.push_back(overall);
    emit_report(f, rows);
  }

  char buf[64];
  out << "documents\t" << traces.size() << "\nshunt_events\t" << events << '\n';
  if (auto p = overall.avg_pgen()) {
    std::snprintf(buf, sizeof buf, "%.4f", *p);
    out << "avg_pgen\t" << buf << "\npgen_histogram";
    for (auto c : overall.pgen_histogram) out << '\t' << c;
    out << '\n';
  }
  return kOk;
}

inline int cmd_gradcheck(const std::string& config_path, double eps, const std::vector<std::string>& overrides,
                         std::ostream& out, std::ostream& err) {
  TrainingConfig cfg = load_config(config_path);
  apply_overrides(cfg, overrides);
  auto vocab = tiny_vocabulary(cfg.model.vocab_size);
  auto doc = prepare_document(tiny_document(vocab, cfg.task.article_length, cfg.model.max_decode, cfg.seed), vocab,
                              cfg.model);
  auto params = init_parameters(vocab.size(), cfg.model);
  auto all = params.all();
  const ModelConfig model = cfg.model;
  auto result = gradient_check(
      [&](Graph& g) { return sequence_loss(g, params, model, doc, true).total; }, all, eps);
  char buf[96];
  std::snprintf(buf, sizeof buf, "%.3e", result.max_relative_error);
  out << "mode\t" << mode_name(model.mode) << "\nentries\t" << result.entries_checked << "\nmax_relative_error\t"
      << buf << "\nworst\t" << result.worst_parameter << '[' << result.worst_index << "]\n";
  const bool pass = result.max_relative_error < 1e-4;
  out << (pass ? "PASS" : "FAIL") << '\n';
  if (!pass) err << "gradient check exceeded 1e-4\n";
  return pass ? kOk : kFailure;
}

inline int cmd_synth(const std::string& task, std::size_t n, std::uint64_t seed, const std::string& out_path,
                     const std::vector<std::string>& overrides) {
  TrainingConfig cfg;
  cfg.set("task", task);
  apply_overrides(cfg, overrides);
  cfg.task.seed = seed;
  auto docs = generate_synthetic(cfg.task, n);
  save_corpus(out_path, docs);
  auto v = open_out(out_path + ".vocab");
  synthetic_vocabulary(cfg.task).save(v);
  return kOk;
}

// ---------------------------------------------------------------------------

/// Entry point: 0 on success, 1 on invalid input, 2 on runtime failure.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  if (argc <= 1) {
    err << usage();
    return kInvalid;
  }
  CLI::App app{"pointer-generator summarization with guided attention", "gpg"};
  app.require_subcommand(1);
  app.set_help_flag("-h,--help", "show help");

  std::vector<std::string> overrides;
  std::string config, warm, ckpt, corpus, mode, trace_out, report, trace, shunts, heat, task, synth_out;
  std::size_t beam = 0, n = 0;
  std::uint64_t seed = 0;
  double eps = 3e-4;
  bool macro = false, per_doc = false;

  auto* train_cmd = app.add_subcommand("train", "train a model");
  train_cmd->add_option("--config", config, "config file")->required();
  train_cmd->add_option("--warm-start", warm, "baseline checkpoint to start from");
  train_cmd->add_option("overrides", overrides, "key=value overrides");

  auto* decode_cmd = app.add_subcommand("decode", "decode a corpus and dump traces");
  decode_cmd->add_option("--ckpt", ckpt)->required();
  decode_cmd->add_option("--corpus", corpus)->required();
  decode_cmd->add_option("--mode", mode);
  decode_cmd->add_option("--beam", beam);
  decode_cmd->add_option("--trace-out", trace_out)->required();
  decode_cmd->add_option("overrides", overrides);

  auto* eval_cmd = app.add_subcommand("evaluate", "decode and score a corpus");
  eval_cmd->add_option("--ckpt", ckpt)->required();
  eval_cmd->add_option("--corpus", corpus)->required();
  eval_cmd->add_option("--report", report)->required();
  eval_cmd->add_option("--beam", beam);
  eval_cmd->add_flag("--macro", macro, "average novelty per document");
  eval_cmd->add_flag("--per-doc", per_doc, "one row per document before the corpus row");
  eval_cmd->add_option("overrides", overrides);

  auto* analyze_cmd = app.add_subcommand("analyze", "metrics, shunt log and heat rendering from traces");
  analyze_cmd->add_option("--trace", trace)->required();
  analyze_cmd->add_option("--corpus", corpus)->required();
  analyze_cmd->add_option("--shunts", shunts);
  analyze_cmd->add_option("--heat", heat);
  analyze_cmd->add_option("--report", report);

  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference check of the full objective");
  grad_cmd->add_option("--config", config)->required();
  grad_cmd->add_option("--eps", eps);
  grad_cmd->add_option("overrides", overrides);

  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic corpus");
  synth_cmd->add_option("--task", task)->required();
  synth_cmd->add_option("--n", n)->required();
  synth_cmd->add_option("--seed", seed)->required();
  synth_cmd->add_option("--out", synth_out)->required();
  synth_cmd->add_option("overrides", overrides);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n' << usage();
    return kInvalid;
  }

  try {
    if (*train_cmd) return cmd_train(config, warm, overrides, out, err);
    if (*decode_cmd) return cmd_decode(ckpt, corpus, mode, beam, trace_out, overrides, out);
    if (*eval_cmd) return cmd_evaluate(ckpt, corpus, report, beam, macro, per_doc, overrides);
    if (*analyze_cmd) return cmd_analyze(trace, corpus, shunts, heat, report, out);
    if (*grad_cmd) return cmd_gradcheck(config, eps, overrides, out, err);
    if (*synth_cmd) return cmd_synth(task, n, seed, synth_out, overrides);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kInvalid;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kInvalid;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kInvalid;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kInvalid;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kInvalid;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
  err << usage();
  return kInvalid;
}

}  // namespace gpg::cli
