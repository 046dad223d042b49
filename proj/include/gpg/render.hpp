#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "gpg/decode.hpp"
#include "gpg/metrics.hpp"

namespace gpg {

/// Quantization of cumulative attention relative to the most-attended token.
inline const char* heat_glyph(double fraction) {
  if (fraction < 0.05) return "·";
  if (fraction < 0.25) return "░";
  if (fraction < 0.5) return "▒";
  if (fraction < 0.75) return "▓";
  return "█";
}

/// Article tokens each followed by a glyph for the attention it received
/// over the whole decode; one line per article sentence.
inline std::string render_attention(const DecodingTrace& trace, TokenView article) {
  const auto n = std::min(trace.length, article.size());
  auto cum = cumulative_attention(trace);
  cum.resize(trace.length, 0.0);
  const double peak = cum.empty() ? 0.0 : *std::max_element(cum.begin(), cum.end());
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0) out += std::binary_search(trace.sentence_starts.begin(), trace.sentence_starts.end(), i) ? '\n' : ' ';
    out += article[i];
    out += heat_glyph(peak > 0.0 ? cum[i] / peak : 0.0);
  }
  if (n > 0) out += '\n';
  return out;
}

}  // namespace gpg
