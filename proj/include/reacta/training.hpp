#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "reacta/actr.hpp"
#include "reacta/corpus.hpp"
#include "reacta/embeddings.hpp"
#include "reacta/eval.hpp"
#include "reacta/model.hpp"
#include "reacta/optim.hpp"
#include "reacta/rng.hpp"
#include "reacta/scoring.hpp"

namespace reacta {

enum class SamplerKind { uniform, popularity };
enum class ScoringRule { reacta, pisa };

struct TrainingConfig {
  double lr = 1e-3;
  double lambda = 0.8;    // ranking vs alignment inside the session loss
  double beta_enc = 0.4;  // encoder loss weight
  double gamma = 0.4;     // activation regression weight
  int epochs = 100;
  int batch_size = 512;
  int patience = 10;
  int k_rec = 10;  // negatives per instance and evaluation cutoff
  SamplerKind sampler = SamplerKind::uniform;
  ScoringRule scoring = ScoringRule::reacta;
  std::uint64_t seed = 1;

  void validate() const {
    if (lambda < 0.0 || lambda > 1.0) throw std::invalid_argument("TrainingConfig: lambda must lie in [0,1]");
    if (beta_enc < 0.0 || gamma < 0.0)
      throw std::invalid_argument("TrainingConfig: loss weights must be nonnegative");
    if (epochs < 1 || epochs > 100) throw std::invalid_argument("TrainingConfig: epochs must lie in [1,100]");
    if (batch_size < 1 || k_rec < 1 || patience < 0)
      throw std::invalid_argument("TrainingConfig: invalid batch/k/patience");
  }
};

// K tracks drawn from the catalog minus the target session. Uniform draws
// without replacement; popularity draws proportionally to training listen
// counts, renormalized as exclusions accumulate.
inline std::vector<std::int32_t> sample_negatives(const std::vector<std::int32_t>& target,
                                                  const TrackCatalog& catalog, SamplerKind kind, int k,
                                                  Rng& rng) {
  const std::int32_t n = catalog.size();
  if (n - static_cast<int>(target.size()) < k)
    throw std::invalid_argument("sample_negatives: catalog too small for K negatives");
  std::unordered_set<std::int32_t> excluded(target.begin(), target.end());
  std::vector<std::int32_t> out;
  out.reserve(static_cast<std::size_t>(k));
  if (kind == SamplerKind::uniform) {
    while (static_cast<int>(out.size()) < k) {
      const std::int32_t v = static_cast<std::int32_t>(rng.uniform_int(n));
      if (excluded.insert(v).second) out.push_back(v);
    }
  } else {
    std::vector<double> cum(static_cast<std::size_t>(n));
    double acc = 0.0;
    bool any_weight = false;
    for (std::int32_t v = 0; v < n; ++v) {
      if (!excluded.count(v) && catalog.popularity[static_cast<std::size_t>(v)] > 0) any_weight = true;
      acc += excluded.count(v) ? 0.0 : static_cast<double>(catalog.popularity[static_cast<std::size_t>(v)]);
      cum[static_cast<std::size_t>(v)] = acc;
    }
    while (static_cast<int>(out.size()) < k) {
      std::int32_t v;
      if (any_weight && cum.back() > 0.0) {
        v = static_cast<std::int32_t>(rng.weighted_index(cum));
      } else {
        v = static_cast<std::int32_t>(rng.uniform_int(n));  // all candidate mass is zero
      }
      if (excluded.count(v)) continue;
      excluded.insert(v);
      out.push_back(v);
      // zero out the chosen track's mass
      const double w = static_cast<double>(catalog.popularity[static_cast<std::size_t>(v)]);
      if (w > 0.0)
        for (std::int32_t i = v; i < n; ++i) cum[static_cast<std::size_t>(i)] -= w;
      any_weight = cum.back() > 1e-9;
    }
  }
  return out;
}

// ---- loss terms ----

// sum over all (positive, negative) pairs of softplus(-(pos_i - neg_j))
inline ad::Var ranking_pairs_node(ad::Tape& t, ad::Var pos_scores, ad::Var neg_scores) {
  const std::int64_t p = t.cols(pos_scores);
  const std::int64_t n = t.cols(neg_scores);
  ad::Var pos_mat = t.matmul(pos_scores, t.ones(1, n), true, false);  // P x N, row i = pos_i
  ad::Var neg_mat = t.matmul(t.ones(p, 1), neg_scores);               // P x N, col j = neg_j
  ad::Var margin = t.sub(pos_mat, neg_mat);
  return t.reduce_sum(t.softplus(t.scale(margin, -1.0)));
}

// lambda * pairwise ranking + (1 - lambda) * (1 - m_u . m_target)
inline ad::Var loss_pisa_node(ad::Tape& t, ad::Var m_u, ad::Var m_pos, ad::Var m_neg, ad::Var m_target,
                              double lambda) {
  ad::Var pos_scores = t.matmul(m_u, m_pos, false, true);  // 1 x P
  ad::Var neg_scores = t.matmul(m_u, m_neg, false, true);  // 1 x N
  ad::Var rank = ranking_pairs_node(t, pos_scores, neg_scores);
  if (lambda >= 1.0) return rank;
  ad::Var align = t.sub(t.scalar(1.0), t.dot(m_u, m_target));
  if (lambda <= 0.0) return align;
  return t.add(t.scale(rank, lambda), t.scale(align, 1.0 - lambda));
}

// pushes f(a_v) toward its own m_v and away from each negative's m_v'
inline ad::Var loss_enc_node(ad::Tape& t, ad::Var f_pos, ad::Var m_pos, ad::Var m_neg) {
  ad::Var own = t.row_sum(t.mul(f_pos, m_pos));             // P x 1, f_i . m_i
  ad::Var others = t.matmul(f_pos, m_neg, false, true);     // P x N, f_i . m_j
  ad::Var margin = t.sub(t.matmul(own, t.ones(1, t.cols(others))), others);
  return t.reduce_sum(t.softplus(t.scale(margin, -1.0)));
}

// squared error between predicted and measured (BL, SPR), summed
inline ad::Var loss_actr_node(ad::Tape& t, ad::Var pred, ad::Var targets) {
  return t.squared_error(pred, targets);
}

// ---- instance expansion and the loop ----

// One sub-sequence: the first `prefix` sessions of a training window with
// session `prefix` (0-based within the window) as target.
struct TrainingInstance {
  std::int32_t window = 0;
  std::int32_t prefix = 0;
};

inline std::vector<TrainingInstance> expand_instances(const CorpusSplit& split) {
  std::vector<TrainingInstance> out;
  for (std::size_t wi = 0; wi < split.train.size(); ++wi)
    for (std::int32_t l = 1; l < split.train[wi].len; ++l)
      out.push_back({static_cast<std::int32_t>(wi), l});
  return out;
}

struct InstanceLoss {
  ad::Var total;
  double pisa = 0.0, enc = 0.0, actr = 0.0;
};

// Builds the multi-task loss of one instance on the shared batch tape.
inline InstanceLoss instance_loss_node(ad::Tape& t, Model& model, const Corpus& corpus,
                                       const CorpusSplit& split, const ActivationTable& table,
                                       const EmbeddingMatrix& m, const EmbeddingMatrix& audio,
                                       const TrainingInstance& inst,
                                       const std::vector<std::int32_t>& negatives,
                                       const TrainingConfig& cfg) {
  const TrainWindow& w = split.train[static_cast<std::size_t>(inst.window)];
  const auto& sessions = corpus.sequences[static_cast<std::size_t>(w.user)].sessions;
  const SequenceActivation& comps = table.per_window[static_cast<std::size_t>(inst.window)];
  const Session& target = sessions[static_cast<std::size_t>(w.first + inst.prefix)];

  for (std::int32_t v : negatives)
    if (target.contains(v)) throw std::logic_error("instance_loss_node: negative overlaps the target");

  std::vector<ad::Var> embs;
  for (std::int32_t l = 0; l < inst.prefix; ++l)
    embs.push_back(session_embedding_node(t, model, sessions[static_cast<std::size_t>(w.first + l)],
                                          comps[static_cast<std::size_t>(l)], m));
  ad::Var m_u = user_embedding_node(t, model, embs, w.user);
  ad::Var m_pos = embedding_rows(t, m, target.tracks);
  ad::Var m_neg = embedding_rows(t, m, negatives);
  ad::Var m_target = session_embedding_node(t, model, target, comps[static_cast<std::size_t>(inst.prefix)], m);

  InstanceLoss out;
  ad::Var pisa = loss_pisa_node(t, m_u, m_pos, m_neg, m_target, cfg.lambda);
  out.pisa = t.value_scalar(pisa);
  out.total = pisa;

  if (cfg.beta_enc > 0.0 || cfg.gamma > 0.0) {
    ad::Var f_pos = encode_audio_node(t, model, embedding_rows(t, audio, target.tracks));
    if (cfg.beta_enc > 0.0) {
      ad::Var enc = loss_enc_node(t, f_pos, m_pos, m_neg);
      out.enc = t.value_scalar(enc);
      out.total = t.add(out.total, t.scale(enc, cfg.beta_enc));
    }
    if (cfg.gamma > 0.0) {
      const auto& target_comps = comps[static_cast<std::size_t>(inst.prefix)];
      std::vector<double> targets;
      targets.reserve(target.tracks.size() * 2);
      for (const auto& row : target_comps) {
        targets.push_back(row.bl);
        targets.push_back(row.spr);
      }
      ad::Var pred = predict_activation_node(t, model, f_pos, m_u);
      ad::Var actr = loss_actr_node(
          t, pred, t.constant_raw(static_cast<std::int64_t>(target.tracks.size()), 2, std::move(targets)));
      out.actr = t.value_scalar(actr);
      out.total = t.add(out.total, t.scale(actr, cfg.gamma));
    }
  }
  return out;
}

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double loss_pisa = 0.0;
  double loss_enc = 0.0;
  double loss_actr = 0.0;
  double val_ndcg = -1.0;  // negative when no validation instances exist
  double wall_seconds = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = -1;
  double best_val_ndcg = -1.0;
};

inline ScoredList score_instance(Model& model, const Corpus& corpus, const CorpusSplit& split,
                                 const EmbeddingMatrix& m, const EmbeddingMatrix& audio,
                                 const CorrelationMatrix& c, double alpha, ScoringRule rule,
                                 const EvalInstance& inst, int k) {
  const auto& sessions = corpus.sequences[static_cast<std::size_t>(inst.user)].sessions;
  ScoringInputs in;
  in.observed = std::span<const Session>(sessions.data() + inst.target - split.L,
                                         static_cast<std::size_t>(split.L));
  in.user = inst.user;
  in.now = static_cast<double>(sessions[static_cast<std::size_t>(inst.target)].start_time);
  std::unordered_set<std::int32_t> heard;
  for (const auto& s : in.observed)
    for (std::int32_t v : s.tracks) heard.insert(v);
  const std::vector<double> scores = rule == ScoringRule::reacta
                                         ? reacta_scores(model, m, audio, c, alpha, in)
                                         : pisa_scores(model, m, c, alpha, in);
  return top_k(scores, k, heard);
}

// Multi-task optimization: every training window is expanded into prefix
// instances, instances are shuffled per epoch, negatives resampled per
// epoch, batches run through one tape and one Adam step. Keeps the
// checkpoint with the best validation NDCG; stops early after `patience`
// epochs without improvement. Fully deterministic under a fixed seed.
inline TrainResult train_model(Model& model, const Corpus& corpus, const CorpusSplit& split,
                               const EmbeddingMatrix& m, const EmbeddingMatrix& audio,
                               const CorrelationMatrix& c, double alpha, const TrainingConfig& cfg,
                               const std::function<bool(int)>& stop_check = {}) {
  cfg.validate();
  const ActivationTable table = build_activation_table(corpus, split, m, c, alpha);
  std::vector<TrainingInstance> instances = expand_instances(split);
  if (instances.empty()) throw std::runtime_error("train_model: no training instances");

  Rng rng(cfg.seed);
  AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  AdamState adam = AdamState::init(model.store);

  TrainResult result;
  std::vector<Tensor> best_params;
  double best_val = -1.0;
  int since_best = 0;
  const auto t0 = std::chrono::steady_clock::now();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(instances);
    double sum_total = 0.0, sum_pisa = 0.0, sum_enc = 0.0, sum_actr = 0.0;

    for (std::size_t begin = 0; begin < instances.size(); begin += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(instances.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      ad::Tape t;
      ad::Var batch_loss;
      for (std::size_t i = begin; i < end; ++i) {
        const TrainingInstance& inst = instances[i];
        const TrainWindow& w = split.train[static_cast<std::size_t>(inst.window)];
        const Session& target =
            corpus.sequences[static_cast<std::size_t>(w.user)].sessions[static_cast<std::size_t>(w.first + inst.prefix)];
        const std::vector<std::int32_t> negatives =
            sample_negatives(target.tracks, split.catalog, cfg.sampler, cfg.k_rec, rng);
        InstanceLoss il = instance_loss_node(t, model, corpus, split, table, m, audio, inst, negatives, cfg);
        sum_pisa += il.pisa;
        sum_enc += il.enc;
        sum_actr += il.actr;
        batch_loss = batch_loss.valid() ? t.add(batch_loss, il.total) : il.total;
      }
      const double batch_value = t.value_scalar(batch_loss);
      if (!std::isfinite(batch_value))
        throw std::runtime_error("train_model: non-finite loss at epoch " + std::to_string(epoch) +
                                 ", batch starting at instance " + std::to_string(begin));
      sum_total += batch_value;
      model.store.zero_grads();
      t.backward(batch_loss);
      adam_step(model.store, adam, adam_cfg);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = sum_total;
    rec.loss_pisa = sum_pisa;
    rec.loss_enc = sum_enc;
    rec.loss_actr = sum_actr;

    if (!split.validation.empty()) {
      double ndcg_sum = 0.0;
      for (const auto& inst : split.validation) {
        const auto& sessions = corpus.sequences[static_cast<std::size_t>(inst.user)].sessions;
        std::unordered_set<std::int32_t> heard;
        for (std::int32_t l = inst.target - split.L; l < inst.target; ++l)
          for (std::int32_t v : sessions[static_cast<std::size_t>(l)].tracks) heard.insert(v);
        const ScoredList rec_list =
            score_instance(model, corpus, split, m, audio, c, alpha, cfg.scoring, inst, cfg.k_rec);
        ndcg_sum += ndcg_recall(rec_list, sessions[static_cast<std::size_t>(inst.target)].tracks,
                                GtSubset::All, heard, cfg.k_rec)
                        .ndcg;
      }
      rec.val_ndcg = ndcg_sum / static_cast<double>(split.validation.size());
      if (rec.val_ndcg > best_val) {
        best_val = rec.val_ndcg;
        result.best_epoch = epoch;
        since_best = 0;
        best_params.clear();
        for (std::size_t i = 0; i < model.store.size(); ++i) best_params.push_back(model.store[i].value);
      } else {
        ++since_best;
      }
    }

    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(rec);

    if (stop_check && stop_check(epoch)) break;
    if (!split.validation.empty() && since_best > cfg.patience) break;
  }

  if (!best_params.empty())
    for (std::size_t i = 0; i < model.store.size(); ++i) model.store[i].value = best_params[i];
  result.best_val_ndcg = best_val;
  if (result.best_epoch < 0 && !result.history.empty()) result.best_epoch = result.history.back().epoch;
  return result;
}

}  // namespace reacta
