#pragma once

// Plain-loop re-statements of the model equations, used as test oracles.
// Nothing here touches the differentiation graph.

#include <cmath>
#include <vector>

#include "gpg/model.hpp"

namespace oracle {

using Vec = std::vector<double>;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Vec softmax(const Vec& x) {
  double m = x[0];
  for (double v : x) m = std::max(m, v);
  Vec out(x.size());
  double z = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) z += out[i] = std::exp(x[i] - m);
  for (auto& v : out) v /= z;
  return out;
}

// y = x W for W stored row-major [rows, cols].
inline Vec vecmat(const Vec& x, const gpg::Tensor& w) {
  const auto rows = w.shape[0], cols = w.shape[1];
  Vec y(cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) y[c] += x[r] * w.values[r * cols + c];
  return y;
}

inline double dot(const Vec& a, const gpg::Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b.values[i];
  return s;
}

struct Cell {
  Vec h, c;
};

inline Cell lstm(const gpg::Tensor& w, const gpg::Tensor& b, const Vec& x, const Cell& prev) {
  const auto H = prev.h.size();
  Vec in = x;
  in.insert(in.end(), prev.h.begin(), prev.h.end());
  Vec z = vecmat(in, w);
  Cell out{Vec(H), Vec(H)};
  for (std::size_t k = 0; k < H; ++k) {
    const double i = sigmoid(z[k] + b.values[k]);
    const double f = sigmoid(z[H + k] + b.values[H + k]);
    const double o = sigmoid(z[2 * H + k] + b.values[2 * H + k]);
    const double g = std::tanh(z[3 * H + k] + b.values[3 * H + k]);
    out.c[k] = f * prev.c[k] + i * g;
    out.h[k] = o * std::tanh(out.c[k]);
  }
  return out;
}

inline Vec embedding(const gpg::ModelParameters& m, std::size_t id) {
  const auto E = m.embedding_dim;
  return Vec(m.embedding.value.values.begin() + static_cast<std::ptrdiff_t>(id * E),
             m.embedding.value.values.begin() + static_cast<std::ptrdiff_t>((id + 1) * E));
}

// Unidirectional encoder; returns all h_i and the final cell.
inline std::pair<std::vector<Vec>, Cell> encode(const gpg::ModelParameters& m, const gpg::PreparedDocument& doc) {
  const auto H = m.hidden;
  Cell s{Vec(H, 0.0), Vec(H, 0.0)};
  std::vector<Vec> hs;
  const auto C = m.cue_dim();
  for (std::size_t i = 0; i < doc.size(); ++i) {
    Vec x = embedding(m, doc.mapping.ids[i]);
    if (m.cue_input)
      for (std::size_t k = 0; k < C; ++k) x.push_back(doc.cues.values[i * C + k]);
    s = lstm(m.enc_w.value, m.enc_b.value, x, s);
    hs.push_back(s.h);
  }
  return {hs, s};
}

inline Vec attention_logits(const gpg::ModelParameters& m, const std::vector<Vec>& hs, const Vec& s) {
  const auto H = m.hidden;
  Vec q = vecmat(s, m.att_ws.value);
  Vec e(hs.size());
  for (std::size_t i = 0; i < hs.size(); ++i) {
    Vec p = vecmat(hs[i], m.att_wh.value);
    double v = 0.0;
    for (std::size_t k = 0; k < H; ++k) v += m.att_v.value.values[k] * std::tanh(p[k] + q[k] + m.att_b.value.values[k]);
    e[i] = v;
  }
  return e;
}

inline Vec weighted_sum(const Vec& a, const std::vector<Vec>& hs) {
  Vec out(hs[0].size(), 0.0);
  for (std::size_t i = 0; i < hs.size(); ++i)
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += a[i] * hs[i][k];
  return out;
}

inline double pgen(const gpg::ModelParameters& m, const Vec& ctx, const Vec& s, const Vec& y,
                   const Vec* dncm_ctx = nullptr) {
  double z = dot(ctx, m.gen_wh.value) + dot(s, m.gen_ws.value) + dot(y, m.gen_wy.value) + m.gen_b.value.values[0];
  if (dncm_ctx) z += dot(*dncm_ctx, m.gen_wdncm.value);
  return sigmoid(z);
}

inline Vec vocab(const gpg::ModelParameters& m, const Vec& s, const Vec& ctx) {
  Vec in = s;
  in.insert(in.end(), ctx.begin(), ctx.end());
  Vec z = vecmat(in, m.out_w.value);
  for (std::size_t k = 0; k < z.size(); ++k) z[k] += m.out_b.value.values[k];
  return softmax(z);
}

inline Vec final_dist(double p_gen, const Vec& p_vocab, const Vec& a, const std::vector<std::size_t>& ext_ids,
                      std::size_t ext_size) {
  Vec out(ext_size, 0.0);
  for (std::size_t w = 0; w < p_vocab.size(); ++w) out[w] = p_gen * p_vocab[w];
  for (std::size_t i = 0; i < a.size(); ++i) out[ext_ids[i]] += (1.0 - p_gen) * a[i];
  return out;
}

// I = softmax(u . tanh(W r_i + b)); returns (scores, I).
inline std::pair<Vec, Vec> dncm(const gpg::ModelParameters& m, const gpg::Tensor& cues) {
  const auto n = cues.shape[0], C = cues.shape[1], H = m.hidden;
  Vec g(n);
  for (std::size_t i = 0; i < n; ++i) {
    Vec r(cues.values.begin() + static_cast<std::ptrdiff_t>(i * C),
          cues.values.begin() + static_cast<std::ptrdiff_t>((i + 1) * C));
    Vec z = vecmat(r, m.dncm_w.value);
    double v = 0.0;
    for (std::size_t k = 0; k < H; ++k) v += m.dncm_u.value.values[k] * std::tanh(z[k] + m.dncm_b.value.values[k]);
    g[i] = v;
  }
  return {g, softmax(g)};
}

inline double affinity(const gpg::TagSet& a, const gpg::TagSet& b) {
  double c = 0;
  for (int x : a)
    for (int y : b)
      if (x == y) ++c;
  return c;
}

struct Step {
  Vec attention, p_vocab, p_final;
  double p_gen = 0.0;
  Cell state;
  Vec context;
};

// Whole forward pass for teacher-forced inputs, in any mode.
inline std::vector<Step> run(const gpg::ModelParameters& m, const gpg::ModelConfig& cfg,
                             const gpg::PreparedDocument& doc, const std::vector<std::size_t>& inputs) {
  auto [hs, fin] = encode(m, doc);
  const bool guided = gpg::uses_guided(cfg.mode), aff = gpg::uses_affinity(cfg.mode);
  Vec dncm_ctx;
  if (guided) dncm_ctx = weighted_sum(dncm(m, doc.cues).second, hs);
  Cell s = fin;
  Vec ctx(m.hidden, 0.0), prev_a;
  std::vector<Step> out;
  for (auto tok : inputs) {
    Vec y = embedding(m, doc.input_id(tok));
    Vec x = y;
    x.insert(x.end(), ctx.begin(), ctx.end());
    s = lstm(m.dec_w.value, m.dec_b.value, x, s);
    Vec e = attention_logits(m, hs, s.h);
    if (aff && !prev_a.empty())
      for (std::size_t i = 0; i < e.size(); ++i) {
        double b = 0.0;
        for (std::size_t j = 0; j < e.size(); ++j) b += prev_a[j] * affinity(doc.tags[j], doc.tags[i]);
        e[i] += m.affinity_wa.value.values[0] * b;
      }
    Step st;
    st.attention = softmax(e);
    st.context = weighted_sum(st.attention, hs);
    st.p_vocab = vocab(m, s.h, st.context);
    st.p_gen = pgen(m, st.context, s.h, y, guided ? &dncm_ctx : nullptr);
    st.p_final = final_dist(st.p_gen, st.p_vocab, st.attention, doc.extended_ids, doc.extended_size());
    st.state = s;
    ctx = st.context;
    prev_a = st.attention;
    out.push_back(st);
  }
  return out;
}

}  // namespace oracle
