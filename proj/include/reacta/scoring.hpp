#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "reacta/actr.hpp"
#include "reacta/bpr.hpp"
#include "reacta/corpus.hpp"
#include "reacta/embeddings.hpp"
#include "reacta/model.hpp"

namespace reacta {

struct ScoredEntry {
  std::int32_t track = 0;
  double score = 0.0;
  bool repeated = false;
};

// Ranked recommendations, scores non-increasing, at most K entries.
using ScoredList = std::vector<ScoredEntry>;

// K highest scores; ties broken by ascending track index so rankings are
// reproducible. Flags each pick as repeated or new against the history.
inline ScoredList top_k(const std::vector<double>& scores, int k,
                        const std::unordered_set<std::int32_t>& heard) {
  std::vector<std::int32_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  const std::size_t keep = std::min<std::size_t>(static_cast<std::size_t>(k), scores.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep), idx.end(),
                    [&](std::int32_t a, std::int32_t b) {
                      if (scores[static_cast<std::size_t>(a)] != scores[static_cast<std::size_t>(b)])
                        return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
                      return a < b;
                    });
  ScoredList out;
  for (std::size_t i = 0; i < keep; ++i)
    out.push_back({idx[i], scores[static_cast<std::size_t>(idx[i])], heard.count(idx[i]) > 0});
  return out;
}

inline ScoredList top_k_candidates(std::vector<ScoredEntry> candidates, int k) {
  std::sort(candidates.begin(), candidates.end(), [](const ScoredEntry& a, const ScoredEntry& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.track < b.track;
  });
  if (static_cast<int>(candidates.size()) > k) candidates.resize(static_cast<std::size_t>(k));
  return candidates;
}

// One evaluation-time input: the observed window, who it belongs to and the
// (known) start time of the masked session being predicted.
struct ScoringInputs {
  std::span<const Session> observed;
  std::int32_t user = 0;
  double now = 0.0;
};

namespace detail {

inline std::vector<std::int32_t> heard_tracks(std::span<const Session> observed) {
  std::unordered_set<std::int32_t> set;
  std::vector<std::int32_t> list;
  for (const auto& s : observed)
    for (std::int32_t v : s.tracks)
      if (set.insert(v).second) list.push_back(v);
  std::sort(list.begin(), list.end());
  return list;
}

inline ListenHistoryIndex local_history(std::span<const Session> observed) {
  ListenHistoryIndex h(1);
  for (const auto& s : observed) h.add_session(0, s);
  return h;
}

}  // namespace detail

// m_{u,L} evaluated from the observed window; components are computed
// instance-locally, exactly as during training.
inline std::vector<double> compute_user_embedding(Model& model, const EmbeddingMatrix& m,
                                                  const CorrelationMatrix& c, double alpha,
                                                  const ScoringInputs& in) {
  if (in.observed.empty()) throw std::invalid_argument("compute_user_embedding: no observed session");
  const SequenceActivation comps = compute_sequence_activation(in.observed, m, c, alpha);
  ad::Tape t;
  std::vector<ad::Var> embs;
  for (std::size_t l = 0; l < in.observed.size(); ++l)
    embs.push_back(session_embedding_node(t, model, in.observed[l], comps[l], m));
  ad::Var m_u = user_embedding_node(t, model, embs, in.user);
  return t.value(m_u);
}

// Two-stage full-catalog scoring. Heard tracks use memory-based activation:
// BL softmaxed over the user's heard set at `now`, SPR spread from the last
// observed session. Unheard tracks get (BL_hat, SPR_hat) from the predictor.
// P = m_u . m_v for every track; r = BL + SPR + P. Predicted and memory BL
// are not renormalized against each other.
inline std::vector<double> reacta_scores(Model& model, const EmbeddingMatrix& m,
                                         const EmbeddingMatrix& audio, const CorrelationMatrix& c,
                                         double alpha, const ScoringInputs& in) {
  const std::int32_t n_tracks = m.n_rows;
  if (audio.n_rows != n_tracks) throw std::invalid_argument("reacta_scores: audio catalog size mismatch");
  const std::vector<std::int32_t> heard = detail::heard_tracks(in.observed);
  const ListenHistoryIndex history = detail::local_history(in.observed);

  std::vector<double> bl(static_cast<std::size_t>(n_tracks), 0.0);
  std::vector<double> spr(static_cast<std::size_t>(n_tracks), 0.0);
  const std::vector<double> bl_heard = base_level_over(history, 0, heard, in.now, alpha);
  for (std::size_t i = 0; i < heard.size(); ++i) bl[static_cast<std::size_t>(heard[i])] = bl_heard[i];
  spreading_all(c, in.observed.back(), spr);

  const SequenceActivation comps = compute_sequence_activation(in.observed, m, c, alpha);
  ad::Tape t;
  std::vector<ad::Var> embs;
  for (std::size_t l = 0; l < in.observed.size(); ++l)
    embs.push_back(session_embedding_node(t, model, in.observed[l], comps[l], m));
  ad::Var m_u = user_embedding_node(t, model, embs, in.user);

  std::vector<std::int32_t> all(static_cast<std::size_t>(n_tracks));
  std::iota(all.begin(), all.end(), 0);
  ad::Var p_all = t.matmul(embedding_rows(t, m, all), m_u, false, true);  // V x 1
  const std::vector<double>& p = t.value(p_all);

  std::unordered_set<std::int32_t> heard_set(heard.begin(), heard.end());
  std::vector<std::int32_t> unheard;
  for (std::int32_t v = 0; v < n_tracks; ++v)
    if (!heard_set.count(v)) unheard.push_back(v);

  std::vector<double> scores(static_cast<std::size_t>(n_tracks), 0.0);
  if (!unheard.empty()) {
    for (std::int32_t v : unheard) {
      const float* row = audio.row(v);
      bool any = false;
      for (int i = 0; i < audio.dim; ++i)
        if (row[i] != 0.0f) any = true;
      if (!any && audio.dim > 0) {
        // zero audio row means the track was never provided to the encoder
        throw std::runtime_error("reacta_scores: missing audio embedding for unheard track index " +
                                 std::to_string(v));
      }
    }
    ad::Var f = encode_audio_node(t, model, embedding_rows(t, audio, unheard));
    ad::Var pred = predict_activation_node(t, model, f, m_u);  // n x 2
    const std::vector<double>& pv = t.value(pred);
    for (std::size_t i = 0; i < unheard.size(); ++i) {
      bl[static_cast<std::size_t>(unheard[i])] = pv[2 * i];
      spr[static_cast<std::size_t>(unheard[i])] = pv[2 * i + 1];
    }
  }
  for (std::int32_t v = 0; v < n_tracks; ++v)
    scores[static_cast<std::size_t>(v)] =
        bl[static_cast<std::size_t>(v)] + spr[static_cast<std::size_t>(v)] + p[static_cast<std::size_t>(v)];
  return scores;
}

// PISA ranks by the quantity its loss optimizes: r = m_u . m_v.
inline std::vector<double> pisa_scores(Model& model, const EmbeddingMatrix& m, const CorrelationMatrix& c,
                                       double alpha, const ScoringInputs& in) {
  const std::vector<double> m_u = compute_user_embedding(model, m, c, alpha, in);
  std::vector<double> scores(static_cast<std::size_t>(m.n_rows), 0.0);
  for (std::int32_t v = 0; v < m.n_rows; ++v) {
    const float* row = m.row(v);
    double s = 0.0;
    for (int i = 0; i < m.dim; ++i) s += static_cast<double>(row[i]) * m_u[static_cast<std::size_t>(i)];
    scores[static_cast<std::size_t>(v)] = s;
  }
  return scores;
}

// Memory-only baseline: activation over heard tracks, nothing else. The
// returned candidate list may be shorter than K.
inline std::vector<ScoredEntry> actr_repeat_scores(const EmbeddingMatrix& m, const CorrelationMatrix& c,
                                                   double alpha, const ScoringInputs& in) {
  const std::vector<std::int32_t> heard = detail::heard_tracks(in.observed);
  if (heard.empty()) throw std::invalid_argument("actr_repeat_scores: empty history");
  const ListenHistoryIndex history = detail::local_history(in.observed);
  const std::vector<double> bl = base_level_over(history, 0, heard, in.now, alpha);
  const Session& last = in.observed.back();
  std::vector<ScoredEntry> out;
  for (std::size_t i = 0; i < heard.size(); ++i) {
    const double spr = spreading(c, &last, heard[i]);
    const double p = partial_matching(m, &last, heard[i]);
    out.push_back({heard[i], bl[i] + spr + p, true});
  }
  return out;
}

namespace detail {

inline void min_max_normalize(std::vector<double>& x) {
  const auto [mn, mx] = std::minmax_element(x.begin(), x.end());
  const double lo = *mn, hi = *mx;
  if (hi - lo < 1e-300) {
    std::fill(x.begin(), x.end(), 0.0);
    return;
  }
  for (double& v : x) v = (v - lo) / (hi - lo);
}

}  // namespace detail

// Collaborative scores adjusted by memory activation at inference: both
// terms min-max normalized over the catalog, activation added for heard
// tracks only, so unheard tracks rank purely by the BPR term.
inline std::vector<double> actr_bpr_scores(const BprModel& bpr, const CorrelationMatrix& c, double alpha,
                                           const ScoringInputs& in) {
  if (!bpr.trained) throw std::invalid_argument("actr_bpr_scores: BPR factors are untrained");
  const std::int32_t n_tracks = bpr.n_items;
  std::vector<double> bpr_term(static_cast<std::size_t>(n_tracks), 0.0);
  for (std::int32_t v = 0; v < n_tracks; ++v) bpr_term[static_cast<std::size_t>(v)] = bpr.score(in.user, v);

  const std::vector<std::int32_t> heard = detail::heard_tracks(in.observed);
  const ListenHistoryIndex history = detail::local_history(in.observed);
  const std::vector<double> bl = base_level_over(history, 0, heard, in.now, alpha);
  std::vector<double> spr;
  spreading_all(c, in.observed.back(), spr);
  std::vector<double> act(static_cast<std::size_t>(n_tracks), 0.0);
  for (std::size_t i = 0; i < heard.size(); ++i)
    act[static_cast<std::size_t>(heard[i])] = bl[i] + spr[static_cast<std::size_t>(heard[i])];

  detail::min_max_normalize(bpr_term);
  detail::min_max_normalize(act);
  std::unordered_set<std::int32_t> heard_set(heard.begin(), heard.end());
  std::vector<double> scores(static_cast<std::size_t>(n_tracks), 0.0);
  for (std::int32_t v = 0; v < n_tracks; ++v)
    scores[static_cast<std::size_t>(v)] = bpr_term[static_cast<std::size_t>(v)] +
                                          (heard_set.count(v) ? act[static_cast<std::size_t>(v)] : 0.0);
  return scores;
}

}  // namespace reacta
