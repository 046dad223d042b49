#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstddef>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace gpg {

class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// ---------------------------------------------------------------------------
// Tag inventories. The slot order is part of the checkpoint contract.

enum class PosTag { Noun = 0, Verb, Adjective, Other };
inline constexpr std::size_t kPosCount = 4;

enum class NerTag {
  Person = 0,
  Location,
  Organization,
  Duration,
  Date,
  Cardinal,
  Percent,
  Money,
  Measure,
  Facility,
  Gpe,
  Other
};
inline constexpr std::size_t kNerCount = 12;

inline constexpr std::array<std::string_view, kPosCount> kPosNames = {"Noun", "Verb", "Adjective", "Other"};
inline constexpr std::array<std::string_view, kNerCount> kNerNames = {
    "Person", "Location", "Organization", "Duration", "Date",     "Cardinal",
    "Percent", "Money",   "Measure",      "Facility", "GPE",      "Other"};

inline std::string lowercase(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline std::string_view pos_name(PosTag t) { return kPosNames[static_cast<std::size_t>(t)]; }
inline std::string_view ner_name(NerTag t) { return kNerNames[static_cast<std::size_t>(t)]; }

/// Accepts the inventory names (any case) and Penn-style prefixes; anything
/// else is Other.
inline PosTag parse_pos(std::string_view label) {
  auto l = lowercase(label);
  if (l == "noun" || l.rfind("nn", 0) == 0 || l == "propn") return PosTag::Noun;
  if (l == "verb" || l.rfind("vb", 0) == 0 || l == "aux") return PosTag::Verb;
  if (l == "adjective" || l == "adj" || l.rfind("jj", 0) == 0) return PosTag::Adjective;
  return PosTag::Other;
}

/// Accepts the inventory names (any case) and OntoNotes labels.
inline NerTag parse_ner(std::string_view label) {
  static const std::unordered_map<std::string, NerTag> table = {
      {"person", NerTag::Person},         {"per", NerTag::Person},
      {"location", NerTag::Location},     {"loc", NerTag::Location},
      {"organization", NerTag::Organization}, {"org", NerTag::Organization},
      {"duration", NerTag::Duration},     {"time", NerTag::Duration},
      {"date", NerTag::Date},             {"cardinal", NerTag::Cardinal},
      {"percent", NerTag::Percent},       {"money", NerTag::Money},
      {"measure", NerTag::Measure},       {"quantity", NerTag::Measure},
      {"facility", NerTag::Facility},     {"fac", NerTag::Facility},
      {"gpe", NerTag::Gpe},
  };
  auto l = lowercase(label);
  if (l.size() > 2 && (l[0] == 'b' || l[0] == 'i') && l[1] == '-') l = l.substr(2);
  if (auto it = table.find(l); it != table.end()) return it->second;
  return NerTag::Other;
}

// ---------------------------------------------------------------------------
// Cue vectors

struct CueSet {
  bool pos = true;
  bool ner = true;

  std::size_t dimension() const { return (pos ? kPosCount : 0) + (ner ? kNerCount : 0); }
  bool any() const { return pos || ner; }

  static CueSet parse(std::string_view s) {
    auto l = lowercase(s);
    if (l == "both" || l == "pos+ner") return {true, true};
    if (l == "pos") return {true, false};
    if (l == "ner") return {false, true};
    if (l == "none") return {false, false};
    throw ValidationError("unknown cue set '" + std::string(s) + "' (expected pos, ner, both or none)");
  }
  std::string str() const {
    if (pos && ner) return "both";
    if (pos) return "pos";
    if (ner) return "ner";
    return "none";
  }
  bool operator==(const CueSet&) const = default;
};

using CueVector = std::vector<double>;

inline std::vector<CueVector> build_cue_vectors(std::span<const PosTag> pos, std::span<const NerTag> ner,
                                                CueSet active) {
  if (pos.size() != ner.size())
    throw ValidationError("build_cue_vectors: " + std::to_string(pos.size()) + " POS tags vs " +
                          std::to_string(ner.size()) + " NER tags");
  std::vector<CueVector> out;
  out.reserve(pos.size());
  for (std::size_t i = 0; i < pos.size(); ++i) {
    CueVector v(active.dimension(), 0.0);
    std::size_t off = 0;
    if (active.pos) {
      v[static_cast<std::size_t>(pos[i])] = 1.0;
      off = kPosCount;
    }
    if (active.ner) v[off + static_cast<std::size_t>(ner[i])] = 1.0;
    out.push_back(std::move(v));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Documents

enum class CorefRole { Mention, Clause };

struct CorefMark {
  int chain = 0;
  CorefRole role = CorefRole::Mention;
  bool operator==(const CorefMark&) const = default;
};

/// Sorted, duplicate-free chain ids on one token.
using TagSet = std::vector<int>;

struct AnnotatedDocument {
  std::string id;
  std::vector<std::string> tokens;
  std::vector<std::string> pos_labels;
  std::vector<std::string> ner_labels;
  std::vector<std::string> coref_labels;
  std::vector<PosTag> pos;
  std::vector<NerTag> ner;
  std::vector<TagSet> coref_tags;
  std::vector<std::size_t> sentence_starts;
  std::vector<std::string> summary;

  std::size_t size() const { return tokens.size(); }

  std::size_t sentence_of(std::size_t position) const {
    auto it = std::upper_bound(sentence_starts.begin(), sentence_starts.end(), position);
    return static_cast<std::size_t>(it - sentence_starts.begin()) - 1;
  }
  std::size_t sentence_end(std::size_t sentence) const {
    return sentence + 1 < sentence_starts.size() ? sentence_starts[sentence + 1] : tokens.size();
  }

  void validate() const {
    const auto n = tokens.size();
    if (n == 0) throw ValidationError("document '" + id + "' has no article tokens");
    if (pos.size() != n || ner.size() != n || coref_tags.size() != n || pos_labels.size() != n ||
        ner_labels.size() != n || coref_labels.size() != n)
      throw ValidationError("document '" + id + "': per-token lists are not aligned");
    if (sentence_starts.empty() || sentence_starts.front() != 0)
      throw ValidationError("document '" + id + "': sentence starts must begin with 0");
    for (std::size_t i = 0; i < sentence_starts.size(); ++i) {
      if (sentence_starts[i] >= n) throw ValidationError("document '" + id + "': sentence start out of range");
      if (i && sentence_starts[i] <= sentence_starts[i - 1])
        throw ValidationError("document '" + id + "': sentence starts must increase strictly");
    }
    for (const auto& t : tokens)
      if (t.empty()) throw ValidationError("document '" + id + "': empty token");
  }
};

/// Parses "0:m,1:c" (or "-") into marks. Full role words are accepted.
inline std::vector<CorefMark> parse_coref_marks(std::string_view field, std::size_t line) {
  std::vector<CorefMark> out;
  if (field == "-" || field.empty()) return out;
  std::size_t pos = 0;
  while (pos <= field.size()) {
    auto comma = field.find(',', pos);
    auto item = field.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos);
    auto colon = item.find(':');
    if (colon == std::string_view::npos || colon == 0) throw ParseError(line, "bad coref entry '" + std::string(item) + "'");
    auto chain_text = item.substr(0, colon);
    auto role_text = lowercase(item.substr(colon + 1));
    int chain = 0;
    for (char c : chain_text) {
      if (!std::isdigit(static_cast<unsigned char>(c))) throw ParseError(line, "bad coref chain '" + std::string(item) + "'");
      chain = chain * 10 + (c - '0');
    }
    CorefRole role;
    if (role_text == "m" || role_text == "mention")
      role = CorefRole::Mention;
    else if (role_text == "c" || role_text == "clause")
      role = CorefRole::Clause;
    else
      throw ParseError(line, "bad coref role '" + std::string(item) + "'");
    out.push_back({chain, role});
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

inline std::string format_coref_marks(std::span<const CorefMark> marks) {
  if (marks.empty()) return "-";
  std::string out;
  for (std::size_t i = 0; i < marks.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(marks[i].chain);
    out += marks[i].role == CorefRole::Mention ? ":m" : ":c";
  }
  return out;
}

inline TagSet tags_from_marks(std::span<const CorefMark> marks) {
  TagSet t;
  for (const auto& m : marks) t.push_back(m.chain);
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  return t;
}

/// Appends one article token with its raw annotation columns.
inline void append_token(AnnotatedDocument& doc, std::string surface, std::string pos_label, std::string ner_label,
                         std::string coref_label = "-", std::size_t line = 0) {
  doc.pos.push_back(parse_pos(pos_label));
  doc.ner.push_back(parse_ner(ner_label));
  doc.coref_tags.push_back(tags_from_marks(parse_coref_marks(coref_label, line)));
  doc.tokens.push_back(std::move(surface));
  doc.pos_labels.push_back(std::move(pos_label));
  doc.ner_labels.push_back(std::move(ner_label));
  doc.coref_labels.push_back(std::move(coref_label));
}

// ---------------------------------------------------------------------------
// Corpus file format

namespace detail {

inline std::string_view rtrim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_tabs(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  for (;;) {
    auto t = s.find('\t', pos);
    out.push_back(s.substr(pos, t == std::string_view::npos ? std::string_view::npos : t - pos));
    if (t == std::string_view::npos) break;
    pos = t + 1;
  }
  return out;
}

}  // namespace detail

/// Streams documents from a corpus file, one record at a time.
class CorpusReader {
 public:
  explicit CorpusReader(std::istream& in) : in_(in) {}

  std::optional<AnnotatedDocument> next() {
    std::string raw;
    // Skip blank separators.
    std::string_view line;
    for (;;) {
      if (!std::getline(in_, raw)) return std::nullopt;
      ++line_no_;
      line = detail::rtrim(raw);
      if (!line.empty()) break;
    }
    if (line.rfind("#doc", 0) != 0) throw ParseError(line_no_, "expected '#doc <id>'");
    AnnotatedDocument doc;
    auto rest = line.substr(4);
    while (!rest.empty() && rest.front() == ' ') rest.remove_prefix(1);
    doc.id = std::string(rest);
    const std::size_t doc_line = line_no_;

    enum class Section { Article, Summary } section = Section::Article;
    bool pending_sentence = true;
    while (std::getline(in_, raw)) {
      ++line_no_;
      line = detail::rtrim(raw);
      if (line.empty()) break;
      if (section == Section::Article) {
        if (line == "#sent") {
          pending_sentence = true;
          continue;
        }
        if (line == "#summary") {
          section = Section::Summary;
          continue;
        }
        if (line.front() == '#' && line.rfind("#doc", 0) == 0)
          throw ParseError(line_no_, "new record without a blank separator");
        auto cols = detail::split_tabs(line);
        if (cols.size() != 4 || cols[0].empty())
          throw ParseError(line_no_, "article token line needs 4 tab-separated columns");
        if (pending_sentence) {
          doc.sentence_starts.push_back(doc.tokens.size());
          pending_sentence = false;
        }
        append_token(doc, std::string(cols[0]), std::string(cols[1]), std::string(cols[2]), std::string(cols[3]),
                     line_no_);
      } else {
        doc.summary.emplace_back(line);
      }
    }
    if (doc.tokens.empty()) throw ParseError(doc_line, "document '" + doc.id + "' has no article tokens");
    doc.validate();
    return doc;
  }

  std::size_t line() const { return line_no_; }

 private:
  std::istream& in_;
  std::size_t line_no_ = 0;
};

inline std::vector<AnnotatedDocument> load_corpus(std::istream& in) {
  CorpusReader reader(in);
  std::vector<AnnotatedDocument> docs;
  while (auto d = reader.next()) docs.push_back(std::move(*d));
  return docs;
}

inline std::vector<AnnotatedDocument> load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus " + path);
  return load_corpus(in);
}

inline void write_document(std::ostream& out, const AnnotatedDocument& doc) {
  out << "#doc " << doc.id << '\n';
  std::size_t next_sentence = 0;
  for (std::size_t i = 0; i < doc.tokens.size(); ++i) {
    if (next_sentence < doc.sentence_starts.size() && doc.sentence_starts[next_sentence] == i) {
      out << "#sent\n";
      ++next_sentence;
    }
    out << doc.tokens[i] << '\t' << doc.pos_labels[i] << '\t' << doc.ner_labels[i] << '\t' << doc.coref_labels[i]
        << '\n';
  }
  out << "#summary\n";
  for (const auto& t : doc.summary) out << t << '\n';
}

inline void save_corpus(std::ostream& out, std::span<const AnnotatedDocument> docs) {
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (i) out << '\n';
    write_document(out, docs[i]);
  }
}

inline void save_corpus(const std::string& path, std::span<const AnnotatedDocument> docs) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  save_corpus(out, docs);
}

// ---------------------------------------------------------------------------
// Rule-based fallback taggers

namespace detail {

inline const std::unordered_set<std::string>& closed_class_words() {
  static const std::unordered_set<std::string> words = {
      "the", "a", "an", "this", "that", "these", "those", "and", "or", "but", "nor", "so", "yet", "of", "in",
      "on", "at", "by", "for", "with", "about", "against", "between", "into", "through", "during", "before",
      "after", "above", "below", "to", "from", "up", "down", "out", "off", "over", "under", "again", "then",
      "once", "here", "there", "when", "where", "why", "how", "all", "any", "both", "each", "few", "more",
      "most", "other", "some", "such", "no", "not", "only", "own", "same", "than", "too", "very", "i", "me",
      "my", "we", "our", "you", "your", "he", "him", "his", "she", "her", "it", "its", "they", "them", "their",
      "what", "which", "who", "whom", "whose", "if", "because", "as", "until", "while", "can", "will", "just",
      "should", "would", "could", "may", "might", "must", "shall", "also", "even", "still"};
  return words;
}

inline const std::unordered_set<std::string>& common_verbs() {
  static const std::unordered_set<std::string> words = {
      "is", "was", "are", "were", "be", "been", "am", "has", "have", "had", "do", "does", "did", "said", "says",
      "say", "made", "make", "took", "take", "went", "go", "got", "get", "came", "come", "told", "tell", "gave",
      "give", "found", "find", "left", "won", "lost", "ran", "run", "saw", "see", "knew", "know", "wrote"};
  return words;
}

inline const std::unordered_set<std::string>& common_adjectives() {
  static const std::unordered_set<std::string> words = {
      "good", "bad", "new", "old", "great", "big", "small", "large", "young", "long", "high", "low", "best",
      "worst", "top", "real", "former", "many", "much", "early", "late", "public", "local", "national"};
  return words;
}

inline bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

inline bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

inline bool has_alpha(std::string_view s) {
  return std::any_of(s.begin(), s.end(), [](char c) { return std::isalpha(static_cast<unsigned char>(c)); });
}

}  // namespace detail

inline PosTag fallback_pos_tag(std::string_view token) {
  const auto l = lowercase(token);
  if (detail::closed_class_words().count(l)) return PosTag::Other;
  if (detail::common_verbs().count(l)) return PosTag::Verb;
  if (detail::common_adjectives().count(l)) return PosTag::Adjective;
  if (!detail::has_alpha(l)) return PosTag::Other;
  // Suffix rules need a stem of at least three characters.
  for (std::string_view suf : {"ly", "ing", "ed"})
    if (l.size() >= suf.size() + 3 && detail::ends_with(l, suf)) return PosTag::Verb;
  for (std::string_view suf : {"ous", "ful", "ive"})
    if (l.size() >= suf.size() + 3 && detail::ends_with(l, suf)) return PosTag::Adjective;
  return PosTag::Noun;
}

inline std::vector<PosTag> fallback_pos_tag(std::span<const std::string> tokens) {
  std::vector<PosTag> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(fallback_pos_tag(t));
  return out;
}

namespace detail {

inline const std::unordered_map<std::string, NerTag>& ner_gazetteer() {
  static const std::unordered_map<std::string, NerTag> table = [] {
    std::unordered_map<std::string, NerTag> t;
    for (const char* w : {"john", "mary", "james", "michael", "david", "sarah", "robert", "maria", "ronaldo",
                          "cristiano", "paul", "rand", "brown", "obama", "smith", "emma", "william", "anna"})
      t.emplace(w, NerTag::Person);
    for (const char* w : {"europe", "asia", "africa", "america", "antarctica", "pacific", "atlantic", "everest",
                          "amazon", "nile", "alps", "sahara", "arctic"})
      t.emplace(w, NerTag::Location);
    for (const char* w : {"japan", "china", "india", "france", "germany", "spain", "italy", "russia", "canada",
                          "mexico", "brazil", "london", "paris", "tokyo", "washington", "kentucky", "missouri",
                          "oklahoma", "ferguson", "louisville", "madrid", "granada", "texas", "california",
                          "britain", "england", "usa", "uk"})
      t.emplace(w, NerTag::Gpe);
    for (const char* w : {"january", "february", "march", "april", "june", "july", "august", "september",
                          "october", "november", "december", "monday", "tuesday", "wednesday", "thursday",
                          "friday", "saturday", "sunday", "yesterday", "today", "tomorrow"})
      t.emplace(w, NerTag::Date);
    for (const char* w : {"seconds", "minutes", "hours", "days", "weeks", "months", "years", "decade", "decades"})
      t.emplace(w, NerTag::Duration);
    for (const char* w : {"km", "kg", "miles", "mph", "pounds", "tons", "metres", "meters", "feet", "inches"})
      t.emplace(w, NerTag::Measure);
    for (const char* w : {"airport", "bridge", "stadium", "bernabeu", "hospital", "station"})
      t.emplace(w, NerTag::Facility);
    for (const char* w : {"cnn", "nasa", "fbi", "un", "nato", "google", "adobe", "university", "inc", "corp"})
      t.emplace(w, NerTag::Organization);
    return t;
  }();
  return table;
}

}  // namespace detail

inline NerTag fallback_ner_tag(std::string_view token) {
  if (token.size() > 1 && token.front() == '$') return NerTag::Money;
  if (token.size() > 1 && token.back() == '%') return NerTag::Percent;
  if (detail::all_digits(token)) {
    if (token.size() == 4) {
      int year = std::stoi(std::string(token));
      if (year >= 1000 && year <= 2100) return NerTag::Date;
    }
    return NerTag::Cardinal;
  }
  if (auto it = detail::ner_gazetteer().find(lowercase(token)); it != detail::ner_gazetteer().end()) return it->second;
  return NerTag::Other;
}

inline std::vector<NerTag> fallback_ner_tag(std::span<const std::string> tokens) {
  std::vector<NerTag> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(fallback_ner_tag(t));
  return out;
}

// ---------------------------------------------------------------------------
// Coreference tags

struct TokenSpan {
  std::size_t start = 0;
  std::size_t end = 0;  // inclusive
  bool contains(std::size_t i) const { return i >= start && i <= end; }
  bool contains(const TokenSpan& o) const { return o.start >= start && o.end <= end; }
  bool operator==(const TokenSpan&) const = default;
};

struct CorefMention {
  TokenSpan span;
  std::optional<TokenSpan> clause;
};

struct CorefChainSpec {
  std::vector<std::vector<CorefMention>> chains;
};

namespace detail {

inline bool is_clause_punct(std::string_view t) { return t == "," || t == ";"; }

inline bool is_clause_conjunction(std::string_view t) {
  auto l = lowercase(t);
  return l == "and" || l == "but" || l == "which" || l == "who" || l == "that";
}

}  // namespace detail

/// Grows a mention to its enclosing clause: stops at commas/semicolons
/// (excluded), at a clause-opening conjunction (which belongs to the clause it
/// opens) and at sentence boundaries.
inline TokenSpan clause_fallback(const AnnotatedDocument& doc, TokenSpan mention) {
  if (mention.start > mention.end || mention.end >= doc.size())
    throw ValidationError("clause_fallback: mention span out of range");
  const auto sentence = doc.sentence_of(mention.start);
  const auto s_begin = doc.sentence_starts[sentence];
  const auto s_end = doc.sentence_end(sentence);  // exclusive
  if (mention.end >= s_end) throw ValidationError("clause_fallback: mention crosses a sentence boundary");

  std::size_t left = mention.start;
  while (left > s_begin) {
    const auto& cur = doc.tokens[left];
    if (left < mention.start && detail::is_clause_conjunction(cur)) break;
    if (detail::is_clause_punct(doc.tokens[left - 1])) break;
    --left;
  }
  std::size_t right = mention.end;
  while (right + 1 < s_end) {
    const auto& nxt = doc.tokens[right + 1];
    if (detail::is_clause_punct(nxt) || detail::is_clause_conjunction(nxt)) break;
    ++right;
  }
  return {left, right};
}

/// Per-token annotation marks for a chain spec: chain k marks every token of
/// each of its mentions (role m) and of each mention's clause (role c).
inline std::vector<std::vector<CorefMark>> coref_marks(const AnnotatedDocument& doc, const CorefChainSpec& spec) {
  const auto n = doc.size();
  std::vector<std::map<int, CorefRole>> per_token(n);
  for (std::size_t k = 0; k < spec.chains.size(); ++k) {
    for (const auto& m : spec.chains[k]) {
      if (m.span.start > m.span.end || m.span.end >= n)
        throw ValidationError("coref mention span [" + std::to_string(m.span.start) + "," +
                              std::to_string(m.span.end) + "] outside article of length " + std::to_string(n));
      TokenSpan clause = m.clause ? *m.clause : clause_fallback(doc, m.span);
      if (clause.start > clause.end || clause.end >= n)
        throw ValidationError("coref clause span outside article");
      if (!clause.contains(m.span)) throw ValidationError("coref clause span does not contain its mention");
      const int chain = static_cast<int>(k);
      for (auto i = clause.start; i <= clause.end; ++i) {
        auto role = m.span.contains(i) ? CorefRole::Mention : CorefRole::Clause;
        auto [it, inserted] = per_token[i].emplace(chain, role);
        if (!inserted && role == CorefRole::Mention) it->second = CorefRole::Mention;
      }
    }
  }
  std::vector<std::vector<CorefMark>> out(n);
  for (std::size_t i = 0; i < n; ++i)
    for (auto [chain, role] : per_token[i]) out[i].push_back({chain, role});
  return out;
}

inline std::vector<TagSet> assign_coref_tags(const AnnotatedDocument& doc, const CorefChainSpec& spec) {
  auto marks = coref_marks(doc, spec);
  std::vector<TagSet> out;
  out.reserve(marks.size());
  for (const auto& m : marks) out.push_back(tags_from_marks(m));
  return out;
}

/// Writes chain tags into the document's coref columns.
inline void apply_coref(AnnotatedDocument& doc, const CorefChainSpec& spec) {
  auto marks = coref_marks(doc, spec);
  for (std::size_t i = 0; i < marks.size(); ++i) {
    doc.coref_labels[i] = format_coref_marks(marks[i]);
    doc.coref_tags[i] = tags_from_marks(marks[i]);
  }
}

// ---------------------------------------------------------------------------
// Vocabulary

inline constexpr std::string_view kPad = "<pad>";
inline constexpr std::string_view kUnk = "<unk>";
inline constexpr std::string_view kStart = "<start>";
inline constexpr std::string_view kStop = "<stop>";

class Vocabulary {
 public:
  Vocabulary() = default;

  explicit Vocabulary(std::vector<std::string> words) : words_(std::move(words)) {
    for (std::size_t i = 0; i < words_.size(); ++i)
      if (!index_.emplace(words_[i], i).second) throw ValidationError("duplicate vocabulary entry '" + words_[i] + "'");
    for (auto r : {kPad, kUnk, kStart, kStop})
      if (!index_.count(std::string(r)))
        throw ValidationError("vocabulary is missing reserved token " + std::string(r));
    unk_ = index_.at(std::string(kUnk));
    start_ = index_.at(std::string(kStart));
    stop_ = index_.at(std::string(kStop));
    pad_ = index_.at(std::string(kPad));
  }

  /// Reserved tokens followed by `words` (duplicates and reserved entries skipped).
  static Vocabulary with_reserved(std::span<const std::string> words) {
    std::vector<std::string> all = {std::string(kPad), std::string(kUnk), std::string(kStart), std::string(kStop)};
    std::unordered_set<std::string> seen(all.begin(), all.end());
    for (const auto& w : words)
      if (seen.insert(w).second) all.push_back(w);
    return Vocabulary(std::move(all));
  }

  /// Most frequent corpus words (ties by first appearance) up to `max_size`
  /// entries including the reserved tokens.
  static Vocabulary build(std::span<const AnnotatedDocument> docs, std::size_t max_size) {
    std::unordered_map<std::string, std::pair<std::size_t, std::size_t>> counts;  // word -> (count, first)
    std::size_t order = 0;
    auto see = [&](const std::string& w) {
      auto [it, inserted] = counts.emplace(w, std::make_pair(0, order));
      if (inserted) ++order;
      ++it->second.first;
    };
    for (const auto& d : docs) {
      for (const auto& t : d.tokens) see(t);
      for (const auto& t : d.summary) see(t);
    }
    std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> ranked(counts.begin(), counts.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      if (a.second.first != b.second.first) return a.second.first > b.second.first;
      return a.second.second < b.second.second;
    });
    std::vector<std::string> words;
    for (const auto& r : ranked) {
      if (words.size() + 4 >= max_size) break;
      words.push_back(r.first);
    }
    return with_reserved(words);
  }

  static Vocabulary load(std::istream& in) {
    std::vector<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
      auto t = detail::rtrim(line);
      if (!t.empty()) words.emplace_back(t);
    }
    return Vocabulary(std::move(words));
  }
  static Vocabulary load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open vocabulary " + path);
    return load(in);
  }
  void save(std::ostream& out) const {
    for (const auto& w : words_) out << w << '\n';
  }
  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    save(out);
  }

  std::size_t size() const { return words_.size(); }
  const std::string& word(std::size_t id) const { return words_.at(id); }
  std::optional<std::size_t> find(const std::string& w) const {
    if (auto it = index_.find(w); it != index_.end()) return it->second;
    return std::nullopt;
  }
  bool contains(const std::string& w) const { return index_.count(w) != 0; }
  std::size_t unk() const { return unk_; }
  std::size_t start() const { return start_; }
  std::size_t stop() const { return stop_; }
  std::size_t pad() const { return pad_; }
  const std::vector<std::string>& words() const { return words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t unk_ = 0, start_ = 0, stop_ = 0, pad_ = 0;
};

/// Vocabulary ids of an article plus its per-article OOV bookkeeping.
struct VocabMapping {
  std::vector<std::size_t> ids;                       // <unk> id for OOV tokens
  std::vector<std::optional<std::size_t>> oov_index;  // dense, first-occurrence order
  std::vector<std::string> oov_words;                 // oov_words[k] has oov-index k

  /// Extended-vocabulary id of token i: vocab id, or |V| + oov-index.
  std::size_t extended_id(std::size_t i, std::size_t vocab_size) const {
    return oov_index[i] ? vocab_size + *oov_index[i] : ids[i];
  }
};

inline VocabMapping map_vocab(std::span<const std::string> tokens, const Vocabulary& vocab) {
  VocabMapping m;
  std::unordered_map<std::string, std::size_t> seen;
  for (const auto& t : tokens) {
    if (auto id = vocab.find(t)) {
      m.ids.push_back(*id);
      m.oov_index.push_back(std::nullopt);
      continue;
    }
    auto [it, inserted] = seen.emplace(t, m.oov_words.size());
    if (inserted) m.oov_words.push_back(t);
    m.ids.push_back(vocab.unk());
    m.oov_index.push_back(it->second);
  }
  return m;
}

}  // namespace gpg
