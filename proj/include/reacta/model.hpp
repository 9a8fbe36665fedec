#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "reacta/actr.hpp"
#include "reacta/autodiff.hpp"
#include "reacta/corpus.hpp"
#include "reacta/embeddings.hpp"
#include "reacta/rng.hpp"

namespace reacta {

struct ModelConfig {
  int d = 16;        // collaborative embedding dimension
  int d_audio = 16;  // audio embedding dimension
  int L = 8;         // maximum observed sessions per sequence
  int B = 2;         // transformer blocks
  int H = 2;         // attention heads
  int n_users = 0;
  std::uint64_t init_seed = 1;

  void validate() const {
    if (d < 1 || d_audio < 1 || L < 1 || B < 1 || H < 1 || n_users < 1)
      throw std::invalid_argument("ModelConfig: all dimensions must be at least 1");
    if (d % H != 0) throw std::invalid_argument("ModelConfig: d must be divisible by H");
  }
};

// Attention mixture, transformer stack, long-term user rows and the
// short/long mixing network.
struct PisaParams {
  Param* mix_raw = nullptr;  // 1x3, softplus-reparameterized (BL, SPR, P)
  Param* pos = nullptr;      // L x d learned positional embeddings
  Param* user_long = nullptr;
  Param* mix_w = nullptr;  // 2d x 1
  Param* mix_b = nullptr;  // 1 x 1

  struct Block {
    Param *wq, *bq, *wk, *bk, *wv, *bv, *wo, *bo;
    Param *ln1_g, *ln1_b;
    Param *ffn_w1, *ffn_b1, *ffn_w2, *ffn_b2;
    Param *ln2_g, *ln2_b;
  };
  std::vector<Block> blocks;
};

// Audio encoder f (d' -> d) and activation predictor g (2d -> 2), both
// two-layer with a ReLU between.
struct ReactaParams {
  Param *enc_w1, *enc_b1, *enc_w2, *enc_b2;
  Param *pred_w1, *pred_b1, *pred_w2, *pred_b2;
};

struct Model {
  ModelConfig cfg;
  ParamStore store;
  PisaParams pisa;
  ReactaParams reacta;

  static Model init(const ModelConfig& cfg) {
    cfg.validate();
    Model m;
    m.cfg = cfg;
    Rng rng(cfg.init_seed);
    const int d = cfg.d;
    auto& st = m.store;

    // softplus(0.5413) = 1: the three components start equally weighted
    m.pisa.mix_raw = &st.add("attn.mix_raw", full({1, 3}, 0.54132485f));
    m.pisa.pos = &st.add("pos", glorot_uniform(cfg.L, d, rng));
    m.pisa.user_long = &st.add("user.long", glorot_uniform(cfg.n_users, d, rng));
    m.pisa.mix_w = &st.add("mix.w", glorot_uniform(2 * d, 1, rng));
    m.pisa.mix_b = &st.add("mix.b", zeros({1, 1}));

    for (int b = 0; b < cfg.B; ++b) {
      const std::string p = "blk" + std::to_string(b) + ".";
      PisaParams::Block blk;
      blk.wq = &st.add(p + "wq", glorot_uniform(d, d, rng));
      blk.bq = &st.add(p + "bq", zeros({1, d}));
      blk.wk = &st.add(p + "wk", glorot_uniform(d, d, rng));
      blk.bk = &st.add(p + "bk", zeros({1, d}));
      blk.wv = &st.add(p + "wv", glorot_uniform(d, d, rng));
      blk.bv = &st.add(p + "bv", zeros({1, d}));
      blk.wo = &st.add(p + "wo", glorot_uniform(d, d, rng));
      blk.bo = &st.add(p + "bo", zeros({1, d}));
      blk.ln1_g = &st.add(p + "ln1.g", full({1, d}, 1.0f));
      blk.ln1_b = &st.add(p + "ln1.b", zeros({1, d}));
      blk.ffn_w1 = &st.add(p + "ffn.w1", glorot_uniform(d, 4 * d, rng));
      blk.ffn_b1 = &st.add(p + "ffn.b1", zeros({1, 4 * d}));
      blk.ffn_w2 = &st.add(p + "ffn.w2", glorot_uniform(4 * d, d, rng));
      blk.ffn_b2 = &st.add(p + "ffn.b2", zeros({1, d}));
      blk.ln2_g = &st.add(p + "ln2.g", full({1, d}, 1.0f));
      blk.ln2_b = &st.add(p + "ln2.b", zeros({1, d}));
      m.pisa.blocks.push_back(blk);
    }

    m.reacta.enc_w1 = &st.add("enc.w1", glorot_uniform(cfg.d_audio, d, rng));
    m.reacta.enc_b1 = &st.add("enc.b1", zeros({1, d}));
    m.reacta.enc_w2 = &st.add("enc.w2", glorot_uniform(d, d, rng));
    m.reacta.enc_b2 = &st.add("enc.b2", zeros({1, d}));
    m.reacta.pred_w1 = &st.add("pred.w1", glorot_uniform(2 * d, d, rng));
    m.reacta.pred_b1 = &st.add("pred.b1", zeros({1, d}));
    m.reacta.pred_w2 = &st.add("pred.w2", glorot_uniform(d, 2, rng));
    m.reacta.pred_b2 = &st.add("pred.b2", zeros({1, 2}));
    return m;
  }
};

// Constant node holding selected embedding rows (gradients never flow into
// the pre-trained matrices).
inline ad::Var embedding_rows(ad::Tape& t, const EmbeddingMatrix& m, std::span<const std::int32_t> tracks) {
  std::vector<double> data;
  data.reserve(tracks.size() * static_cast<std::size_t>(m.dim));
  for (std::int32_t v : tracks) {
    const float* row = m.row(v);
    for (int i = 0; i < m.dim; ++i) data.push_back(static_cast<double>(row[i]));
  }
  return t.constant_raw(static_cast<std::int64_t>(tracks.size()), m.dim, std::move(data));
}

// ACT-R-informed attention pooling: w_v proportional to the nonnegative
// mixture of the session's activation components, normalized to sum 1.
// Negative mixtures are clamped at zero so the output always stays in the
// convex hull of the session's track embeddings; uniform fallback when the
// whole mixture vanishes.
inline ad::Var session_embedding_node(ad::Tape& t, Model& model, const Session& session,
                                      std::span<const ActivationRow> comps, const EmbeddingMatrix& m) {
  const std::size_t n = session.tracks.size();
  if (n == 0) throw std::invalid_argument("session_embedding: empty session");
  if (comps.size() != n) throw std::invalid_argument("session_embedding: activation row does not cover the session");

  std::vector<double> bl(n), spr(n), pm(n);
  for (std::size_t k = 0; k < n; ++k) {
    bl[k] = comps[k].bl;
    spr[k] = comps[k].spr;
    pm[k] = comps[k].p;
  }
  ad::Var mix = t.softplus(t.param(*model.pisa.mix_raw));  // 1x3, nonnegative
  ad::Var w_bl = t.slice_cols(mix, 0, 1);
  ad::Var w_spr = t.slice_cols(mix, 1, 1);
  ad::Var w_p = t.slice_cols(mix, 2, 1);
  const std::int64_t cols = static_cast<std::int64_t>(n);
  ad::Var raw = t.add(t.add(t.mul(t.constant_raw(1, cols, std::move(bl)), w_bl),
                            t.mul(t.constant_raw(1, cols, std::move(spr)), w_spr)),
                      t.mul(t.constant_raw(1, cols, std::move(pm)), w_p));
  ad::Var clamped = t.relu(raw);
  ad::Var total = t.reduce_sum(clamped);
  ad::Var weights;
  if (t.value_scalar(total) <= 1e-12)
    weights = t.constant_raw(1, cols, std::vector<double>(n, 1.0 / static_cast<double>(n)));
  else
    weights = t.div(clamped, total);
  return t.matmul(weights, embedding_rows(t, m, session.tracks));
}

namespace detail {

inline ad::Var causal_mask(ad::Tape& t, std::int64_t l) {
  std::vector<double> mask(static_cast<std::size_t>(l * l), 0.0);
  for (std::int64_t i = 0; i < l; ++i)
    for (std::int64_t j = i + 1; j < l; ++j) mask[static_cast<std::size_t>(i * l + j)] = -1e9;
  return t.constant_raw(l, l, std::move(mask));
}

inline ad::Var layer_norm_affine(ad::Tape& t, ad::Var x, Param& gamma, Param& beta) {
  return t.add(t.mul(t.layer_norm_rows(x), t.param(gamma)), t.param(beta));
}

}  // namespace detail

// Causally masked transformer over the session-embedding sequence; row i of
// the result depends only on sessions 0..i.
inline ad::Var transformer_states_node(ad::Tape& t, Model& model, const std::vector<ad::Var>& session_embs) {
  const std::int64_t l = static_cast<std::int64_t>(session_embs.size());
  if (l < 1) throw std::invalid_argument("transformer_states_node: no observed session");
  if (l > model.cfg.L)
    throw std::invalid_argument("transformer_states_node: sequence longer than configured L");
  const int d = model.cfg.d;
  const int h = model.cfg.H;
  const std::int64_t dh = d / h;

  std::vector<std::int64_t> pos_idx(static_cast<std::size_t>(l));
  for (std::int64_t i = 0; i < l; ++i) pos_idx[static_cast<std::size_t>(i)] = i;
  ad::Var x = t.add(t.concat_rows(session_embs), t.gather_rows(t.param(*model.pisa.pos), pos_idx));
  ad::Var mask = detail::causal_mask(t, l);

  for (auto& blk : model.pisa.blocks) {
    ad::Var q = t.affine(x, t.param(*blk.wq), t.param(*blk.bq));
    ad::Var k = t.affine(x, t.param(*blk.wk), t.param(*blk.bk));
    ad::Var v = t.affine(x, t.param(*blk.wv), t.param(*blk.bv));
    std::vector<ad::Var> heads;
    for (int head = 0; head < h; ++head) {
      ad::Var qh = t.slice_cols(q, head * dh, dh);
      ad::Var kh = t.slice_cols(k, head * dh, dh);
      ad::Var vh = t.slice_cols(v, head * dh, dh);
      ad::Var scores = t.scale(t.matmul(qh, kh, false, true), 1.0 / std::sqrt(static_cast<double>(dh)));
      ad::Var attn = t.softmax_rows(t.add(scores, mask));
      heads.push_back(t.matmul(attn, vh));
    }
    ad::Var o = t.affine(t.concat_cols(heads), t.param(*blk.wo), t.param(*blk.bo));
    x = detail::layer_norm_affine(t, t.add(x, o), *blk.ln1_g, *blk.ln1_b);
    ad::Var ffn = t.affine(t.relu(t.affine(x, t.param(*blk.ffn_w1), t.param(*blk.ffn_b1))),
                           t.param(*blk.ffn_w2), t.param(*blk.ffn_b2));
    x = detail::layer_norm_affine(t, t.add(x, ffn), *blk.ln2_g, *blk.ln2_b);
  }
  return x;
}

// The last position's output is the short-term user state.
inline ad::Var short_term_node(ad::Tape& t, Model& model, const std::vector<ad::Var>& session_embs) {
  ad::Var states = transformer_states_node(t, model, session_embs);
  return t.slice_rows(states, static_cast<std::int64_t>(session_embs.size()) - 1, 1);
}

// m_{u,l}: sigmoid-gated blend of the transformer output and the user's
// long-term row.
inline ad::Var user_embedding_node(ad::Tape& t, Model& model, const std::vector<ad::Var>& session_embs,
                                   std::int32_t user) {
  ad::Var m_short = short_term_node(t, model, session_embs);
  ad::Var m_long = t.gather_rows(t.param(*model.pisa.user_long), {user});
  ad::Var beta = t.sigmoid(t.add(t.matmul(t.concat_cols({m_short, m_long}), t.param(*model.pisa.mix_w)),
                                 t.param(*model.pisa.mix_b)));
  ad::Var one_minus = t.sub(t.scalar(1.0), beta);
  return t.add(t.mul(m_short, beta), t.mul(m_long, one_minus));
}

// f: rows of audio embeddings -> rows in the collaborative space
inline ad::Var encode_audio_node(ad::Tape& t, Model& model, ad::Var audio_rows) {
  if (t.cols(audio_rows) != model.cfg.d_audio)
    throw std::invalid_argument("encode_audio: input dimension mismatch");
  ad::Var hidden = t.relu(t.affine(audio_rows, t.param(*model.reacta.enc_w1), t.param(*model.reacta.enc_b1)));
  return t.affine(hidden, t.param(*model.reacta.enc_w2), t.param(*model.reacta.enc_b2));
}

// g: per row, [f(a_v); m_u] -> (BL_hat, SPR_hat). The BL head is a sigmoid
// (target is a softmax weight), the SPR head a softplus (target is a
// nonnegative sum of correlation entries).
inline ad::Var predict_activation_node(ad::Tape& t, Model& model, ad::Var encoded_rows, ad::Var m_u) {
  const std::int64_t n = t.rows(encoded_rows);
  ad::Var m_rep = n == 1 ? m_u : t.matmul(t.ones(n, 1), m_u);
  ad::Var input = t.concat_cols({encoded_rows, m_rep});
  ad::Var hidden = t.relu(t.affine(input, t.param(*model.reacta.pred_w1), t.param(*model.reacta.pred_b1)));
  ad::Var out = t.affine(hidden, t.param(*model.reacta.pred_w2), t.param(*model.reacta.pred_b2));
  ad::Var bl_hat = t.sigmoid(t.slice_cols(out, 0, 1));
  ad::Var spr_hat = t.softplus(t.slice_cols(out, 1, 1));
  return t.concat_cols({bl_hat, spr_hat});
}

// Convenience for callers outside the training loop.
inline std::vector<float> eval_row(const ad::Tape& t, ad::Var v) {
  const auto& vals = t.value(v);
  return std::vector<float>(vals.begin(), vals.end());
}

}  // namespace reacta
