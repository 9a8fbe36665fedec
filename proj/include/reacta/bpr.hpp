#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "reacta/actr.hpp"
#include "reacta/corpus.hpp"
#include "reacta/rng.hpp"

namespace reacta {

struct BprConfig {
  int dim = 16;
  double lr = 0.05;
  double reg = 0.01;
  int epochs = 50;
  std::uint64_t seed = 1;
};

// Plain matrix factorization trained with the pairwise softplus objective:
// observed (user, track) pairs are pushed above sampled unobserved ones.
struct BprModel {
  int n_users = 0;
  int n_items = 0;
  int dim = 0;
  std::vector<float> user_f;
  std::vector<float> item_f;
  bool trained = false;

  double score(std::int32_t u, std::int32_t i) const {
    const float* pu = user_f.data() + static_cast<std::size_t>(u) * static_cast<std::size_t>(dim);
    const float* qi = item_f.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(dim);
    double s = 0.0;
    for (int k = 0; k < dim; ++k) s += static_cast<double>(pu[k]) * static_cast<double>(qi[k]);
    return s;
  }
};

namespace detail {

inline std::vector<std::pair<std::int32_t, std::int32_t>> bpr_pairs(const Corpus& corpus,
                                                                    const CorpusSplit& split) {
  std::vector<std::pair<std::int32_t, std::int32_t>> pairs;
  for (const auto& w : split.train) {
    const auto& seq = corpus.sequences[static_cast<std::size_t>(w.user)];
    for (std::int32_t l = w.first; l < w.first + w.len; ++l)
      for (std::int32_t v : seq.sessions[static_cast<std::size_t>(l)].tracks) pairs.push_back({w.user, v});
  }
  return pairs;
}

}  // namespace detail

inline BprModel train_bpr(const Corpus& corpus, const CorpusSplit& split, const BprConfig& cfg) {
  BprModel m;
  m.n_users = corpus.n_users();
  m.n_items = split.catalog.size();
  m.dim = cfg.dim;
  Rng rng(cfg.seed);
  m.user_f.resize(static_cast<std::size_t>(m.n_users) * static_cast<std::size_t>(m.dim));
  m.item_f.resize(static_cast<std::size_t>(m.n_items) * static_cast<std::size_t>(m.dim));
  for (auto& x : m.user_f) x = static_cast<float>(0.1 * rng.normal());
  for (auto& x : m.item_f) x = static_cast<float>(0.1 * rng.normal());

  auto pairs = detail::bpr_pairs(corpus, split);
  if (pairs.empty()) throw std::runtime_error("train_bpr: no training pairs");

  std::vector<std::unordered_set<std::int32_t>> positives(static_cast<std::size_t>(m.n_users));
  for (const auto& [u, v] : pairs) positives[static_cast<std::size_t>(u)].insert(v);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(pairs);
    for (const auto& [u, i] : pairs) {
      std::int32_t j = static_cast<std::int32_t>(rng.uniform_int(m.n_items));
      int guard = 0;
      while (positives[static_cast<std::size_t>(u)].count(j) && guard++ < 100)
        j = static_cast<std::int32_t>(rng.uniform_int(m.n_items));
      if (positives[static_cast<std::size_t>(u)].count(j)) continue;  // user heard everything

      float* pu = m.user_f.data() + static_cast<std::size_t>(u) * static_cast<std::size_t>(m.dim);
      float* qi = m.item_f.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(m.dim);
      float* qj = m.item_f.data() + static_cast<std::size_t>(j) * static_cast<std::size_t>(m.dim);
      double x = 0.0;
      for (int k = 0; k < m.dim; ++k) x += static_cast<double>(pu[k]) * (qi[k] - qj[k]);
      // d/dx softplus(-x) = -sigmoid(-x)
      const double e = 1.0 / (1.0 + std::exp(x));
      for (int k = 0; k < m.dim; ++k) {
        const double gu = e * (qi[k] - qj[k]) - cfg.reg * pu[k];
        const double gi = e * pu[k] - cfg.reg * qi[k];
        const double gj = -e * pu[k] - cfg.reg * qj[k];
        pu[k] = static_cast<float>(pu[k] + cfg.lr * gu);
        qi[k] = static_cast<float>(qi[k] + cfg.lr * gi);
        qj[k] = static_cast<float>(qj[k] + cfg.lr * gj);
      }
    }
  }
  m.trained = true;
  return m;
}

// Sampled pairwise AUC: fraction of (observed, unobserved) pairs the model
// orders correctly.
inline double bpr_pairwise_auc(const BprModel& m, const Corpus& corpus, const CorpusSplit& split,
                               std::uint64_t seed, int samples_per_user = 200) {
  Rng rng(seed);
  auto pairs = detail::bpr_pairs(corpus, split);
  std::vector<std::unordered_set<std::int32_t>> positives(static_cast<std::size_t>(m.n_users));
  for (const auto& [u, v] : pairs) positives[static_cast<std::size_t>(u)].insert(v);

  std::int64_t wins = 0, total = 0;
  for (std::int32_t u = 0; u < m.n_users; ++u) {
    const auto& pos = positives[static_cast<std::size_t>(u)];
    if (pos.empty() || static_cast<int>(pos.size()) >= m.n_items) continue;
    std::vector<std::int32_t> pos_list(pos.begin(), pos.end());
    std::sort(pos_list.begin(), pos_list.end());
    for (int s = 0; s < samples_per_user; ++s) {
      const std::int32_t i = pos_list[static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(pos_list.size())))];
      std::int32_t j = static_cast<std::int32_t>(rng.uniform_int(m.n_items));
      int guard = 0;
      while (pos.count(j) && guard++ < 100) j = static_cast<std::int32_t>(rng.uniform_int(m.n_items));
      if (pos.count(j)) continue;
      if (m.score(u, i) > m.score(u, j)) ++wins;
      ++total;
    }
  }
  return total > 0 ? static_cast<double>(wins) / static_cast<double>(total) : 0.0;
}

}  // namespace reacta
