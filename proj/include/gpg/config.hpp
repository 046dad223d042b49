#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gpg/adagrad.hpp"
#include "gpg/annotate.hpp"

namespace gpg {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Mode { Baseline, Guided, Affinity, Both };

inline bool uses_guided(Mode m) { return m == Mode::Guided || m == Mode::Both; }
inline bool uses_affinity(Mode m) { return m == Mode::Affinity || m == Mode::Both; }

inline Mode parse_mode(std::string_view s) {
  if (s == "baseline") return Mode::Baseline;
  if (s == "guided") return Mode::Guided;
  if (s == "affinity") return Mode::Affinity;
  if (s == "both") return Mode::Both;
  throw ConfigError("unknown mode '" + std::string(s) + "' (expected baseline, guided, affinity or both)");
}

inline std::string_view mode_name(Mode m) {
  switch (m) {
    case Mode::Baseline: return "baseline";
    case Mode::Guided: return "guided";
    case Mode::Affinity: return "affinity";
    case Mode::Both: return "both";
  }
  return "baseline";
}

/// How per-step transition affinity is aggregated over article positions.
enum class AffinityAggregation {
  Expected,    // sum_i a_i^t * sum_j a_j^{t-1} t(j,i)
  Unweighted,  // (1/n) sum_i sum_j a_j^{t-1} t(j,i)
};

enum class SyntheticTask { CopySpan, ForbiddenCopy, TwoEntity };

inline SyntheticTask parse_task(std::string_view s) {
  if (s == "copy-span") return SyntheticTask::CopySpan;
  if (s == "forbidden-copy") return SyntheticTask::ForbiddenCopy;
  if (s == "two-entity") return SyntheticTask::TwoEntity;
  throw ConfigError("unknown synthetic task '" + std::string(s) + "'");
}

inline std::string_view task_name(SyntheticTask t) {
  switch (t) {
    case SyntheticTask::CopySpan: return "copy-span";
    case SyntheticTask::ForbiddenCopy: return "forbidden-copy";
    case SyntheticTask::TwoEntity: return "two-entity";
  }
  return "copy-span";
}

struct SyntheticTaskSpec {
  SyntheticTask task = SyntheticTask::CopySpan;
  std::size_t vocab_size = 200;
  std::size_t article_length = 30;
  double oov_rate = 0.1;
  std::uint64_t seed = 7;
};

struct ModelConfig {
  Mode mode = Mode::Baseline;
  std::size_t vocab_size = 2000;
  std::size_t embedding = 16;
  std::size_t hidden = 32;
  CueSet cues{true, true};
  bool cue_input = true;
  bool bidirectional = false;
  double mu = 1.0;
  double lambda = 0.1;
  AffinityAggregation aggregation = AffinityAggregation::Expected;
  double init_range = 0.1;
  double wa_init = 0.0;
  std::size_t max_encode = 60;
  std::size_t max_decode = 20;
  std::uint64_t seed = 1;
};

struct TrainingConfig {
  ModelConfig model;
  AdagradOptions optimizer;
  std::size_t batch = 8;
  std::size_t steps = 2000;
  std::uint64_t seed = 1;
  /// Fraction of the run after which the auxiliary affinity loss is added.
  double affinity_phase = 0.75;
  std::size_t beam = 1;
  std::size_t eval_docs = 100;
  bool use_synthetic = true;
  SyntheticTaskSpec task;
  std::string corpus;
  std::string vocab;
  std::string checkpoint;
  std::string loss_curve;

  /// Defaults scaled up to full-size news summarization.
  static TrainingConfig full_scale() {
    TrainingConfig c;
    c.model.hidden = 256;
    c.model.embedding = 128;
    c.model.vocab_size = 50000;
    c.model.max_encode = 400;
    c.model.max_decode = 100;
    return c;
  }

  /// Sets one key; unknown keys are rejected by name.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static const std::vector<std::string>& keys();
};

namespace detail {

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  if constexpr (std::is_floating_point_v<T>) {
    try {
      std::size_t used = 0;
      out = static_cast<T>(std::stod(value, &used));
      if (used != value.size()) throw std::invalid_argument(value);
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "': '" + value + "' is not a number");
    }
  } else {
    auto [p, ec] = std::from_chars(first, last, out);
    if (ec != std::errc() || p != last) throw ConfigError("config key '" + key + "': '" + value + "' is not an integer");
  }
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "on" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "off" || value == "no") return false;
  throw ConfigError("config key '" + key + "': '" + value + "' is not a boolean");
}

inline std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

inline std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace detail

inline const std::vector<std::string>& TrainingConfig::keys() {
  static const std::vector<std::string> k = {
      "mode",        "vocab_size",     "embedding",  "hidden",      "cues",           "cue_input",
      "bidirectional", "mu",           "lambda",     "aggregation", "init_range",     "wa_init",
      "max_encode",  "max_decode",     "model_seed", "learning_rate", "accumulator_init", "adagrad_epsilon",
      "clip_norm",   "batch",          "steps",      "seed",        "affinity_phase", "beam",
      "eval_docs",   "task",           "task_vocab", "task_length", "oov_rate",       "task_seed",
      "corpus",      "vocab",          "checkpoint", "loss_curve"};
  return k;
}

inline void TrainingConfig::set(const std::string& key, const std::string& value) {
  using detail::parse_bool;
  using detail::parse_number;
  if (key == "mode") model.mode = parse_mode(value);
  else if (key == "vocab_size") model.vocab_size = parse_number<std::size_t>(key, value);
  else if (key == "embedding") model.embedding = parse_number<std::size_t>(key, value);
  else if (key == "hidden") model.hidden = parse_number<std::size_t>(key, value);
  else if (key == "cues") {
    try {
      model.cues = CueSet::parse(value);
    } catch (const ValidationError& e) {
      throw ConfigError(std::string("config key 'cues': ") + e.what());
    }
  } else if (key == "cue_input") model.cue_input = parse_bool(key, value);
  else if (key == "bidirectional") model.bidirectional = parse_bool(key, value);
  else if (key == "mu") model.mu = parse_number<double>(key, value);
  else if (key == "lambda") model.lambda = parse_number<double>(key, value);
  else if (key == "aggregation") {
    if (value == "expected") model.aggregation = AffinityAggregation::Expected;
    else if (value == "unweighted") model.aggregation = AffinityAggregation::Unweighted;
    else throw ConfigError("config key 'aggregation': expected 'expected' or 'unweighted'");
  } else if (key == "init_range") model.init_range = parse_number<double>(key, value);
  else if (key == "wa_init") model.wa_init = parse_number<double>(key, value);
  else if (key == "max_encode") model.max_encode = parse_number<std::size_t>(key, value);
  else if (key == "max_decode") model.max_decode = parse_number<std::size_t>(key, value);
  else if (key == "model_seed") model.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "learning_rate") optimizer.learning_rate = parse_number<double>(key, value);
  else if (key == "accumulator_init") optimizer.accumulator_init = parse_number<double>(key, value);
  else if (key == "adagrad_epsilon") optimizer.epsilon = parse_number<double>(key, value);
  else if (key == "clip_norm") optimizer.clip_norm = parse_number<double>(key, value);
  else if (key == "batch") batch = parse_number<std::size_t>(key, value);
  else if (key == "steps") steps = parse_number<std::size_t>(key, value);
  else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
  else if (key == "affinity_phase") affinity_phase = parse_number<double>(key, value);
  else if (key == "beam") beam = parse_number<std::size_t>(key, value);
  else if (key == "eval_docs") eval_docs = parse_number<std::size_t>(key, value);
  else if (key == "task") task.task = parse_task(value), use_synthetic = true;
  else if (key == "task_vocab") task.vocab_size = parse_number<std::size_t>(key, value);
  else if (key == "task_length") task.article_length = parse_number<std::size_t>(key, value);
  else if (key == "oov_rate") task.oov_rate = parse_number<double>(key, value);
  else if (key == "task_seed") task.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "corpus") corpus = value, use_synthetic = value.empty();
  else if (key == "vocab") vocab = value;
  else if (key == "checkpoint") checkpoint = value;
  else if (key == "loss_curve") loss_curve = value;
  else throw ConfigError("unknown config key '" + key + "'");

  if (model.mu < 0) throw ConfigError("config key 'mu' must be non-negative");
  if (model.lambda < 0) throw ConfigError("config key 'lambda' must be non-negative");
  if (key == "hidden" && model.hidden == 0) throw ConfigError("config key 'hidden' must be positive");
  if (key == "embedding" && model.embedding == 0) throw ConfigError("config key 'embedding' must be positive");
  if (key == "max_decode" && model.max_decode == 0) throw ConfigError("config key 'max_decode' must be positive");
  if (key == "beam" && beam == 0) throw ConfigError("config key 'beam' must be at least 1");
  if (key == "batch" && batch == 0) throw ConfigError("config key 'batch' must be at least 1");
}

inline std::string TrainingConfig::get(const std::string& key) const {
  using detail::fmt_double;
  if (key == "mode") return std::string(mode_name(model.mode));
  if (key == "vocab_size") return std::to_string(model.vocab_size);
  if (key == "embedding") return std::to_string(model.embedding);
  if (key == "hidden") return std::to_string(model.hidden);
  if (key == "cues") return model.cues.str();
  if (key == "cue_input") return model.cue_input ? "true" : "false";
  if (key == "bidirectional") return model.bidirectional ? "true" : "false";
  if (key == "mu") return fmt_double(model.mu);
  if (key == "lambda") return fmt_double(model.lambda);
  if (key == "aggregation") return model.aggregation == AffinityAggregation::Expected ? "expected" : "unweighted";
  if (key == "init_range") return fmt_double(model.init_range);
  if (key == "wa_init") return fmt_double(model.wa_init);
  if (key == "max_encode") return std::to_string(model.max_encode);
  if (key == "max_decode") return std::to_string(model.max_decode);
  if (key == "model_seed") return std::to_string(model.seed);
  if (key == "learning_rate") return fmt_double(optimizer.learning_rate);
  if (key == "accumulator_init") return fmt_double(optimizer.accumulator_init);
  if (key == "adagrad_epsilon") return fmt_double(optimizer.epsilon);
  if (key == "clip_norm") return fmt_double(optimizer.clip_norm);
  if (key == "batch") return std::to_string(batch);
  if (key == "steps") return std::to_string(steps);
  if (key == "seed") return std::to_string(seed);
  if (key == "affinity_phase") return fmt_double(affinity_phase);
  if (key == "beam") return std::to_string(beam);
  if (key == "eval_docs") return std::to_string(eval_docs);
  if (key == "task") return std::string(task_name(task.task));
  if (key == "task_vocab") return std::to_string(task.vocab_size);
  if (key == "task_length") return std::to_string(task.article_length);
  if (key == "oov_rate") return fmt_double(task.oov_rate);
  if (key == "task_seed") return std::to_string(task.seed);
  if (key == "corpus") return corpus;
  if (key == "vocab") return vocab;
  if (key == "checkpoint") return checkpoint;
  if (key == "loss_curve") return loss_curve;
  throw ConfigError("unknown config key '" + key + "'");
}

/// Parses one "key = value" assignment.
inline std::pair<std::string, std::string> parse_assignment(std::string_view text) {
  auto eq = text.find('=');
  if (eq == std::string_view::npos) throw ConfigError("expected key=value, got '" + std::string(text) + "'");
  auto key = detail::trim(text.substr(0, eq));
  auto value = detail::trim(text.substr(eq + 1));
  if (key.empty()) throw ConfigError("empty key in '" + std::string(text) + "'");
  return {key, value};
}

/// key = value lines; '#' starts a comment.
inline void read_config(std::istream& in, TrainingConfig& config) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (detail::trim(line).empty()) continue;
    try {
      auto [k, v] = parse_assignment(line);
      config.set(k, v);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

inline TrainingConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  TrainingConfig c;
  read_config(in, c);
  return c;
}

inline void write_config(std::ostream& out, const TrainingConfig& config) {
  for (const auto& k : TrainingConfig::keys()) {
    auto v = config.get(k);
    if (v.empty()) continue;
    out << k << " = " << v << '\n';
  }
}

}  // namespace gpg
