#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "reacta/corpus.hpp"
#include "reacta/scoring.hpp"

namespace reacta {

enum class GtSubset { All, Repeated, New };

struct NdcgRecall {
  double ndcg = 0.0;
  double recall = 0.0;
  bool defined = false;  // false when the requested subset of the ground truth is empty
};

// Binary-relevance NDCG and Recall at K against a subset of the ground
// truth (all / previously-heard / never-heard). The recommended list itself
// is never filtered. Recall normalizes by min(K, |GT subset|).
inline NdcgRecall ndcg_recall(const ScoredList& recommended, const std::vector<std::int32_t>& ground_truth,
                              GtSubset subset, const std::unordered_set<std::int32_t>& heard, int k) {
  if (ground_truth.empty()) throw std::invalid_argument("ndcg_recall: empty ground truth");
  std::unordered_set<std::int32_t> gt;
  for (std::int32_t v : ground_truth) {
    const bool rep = heard.count(v) > 0;
    if (subset == GtSubset::All || (subset == GtSubset::Repeated && rep) || (subset == GtSubset::New && !rep))
      gt.insert(v);
  }
  NdcgRecall out;
  if (gt.empty()) return out;
  out.defined = true;

  const std::size_t top = std::min<std::size_t>(static_cast<std::size_t>(k), recommended.size());
  int hits = 0;
  double dcg = 0.0;
  for (std::size_t i = 0; i < top; ++i)
    if (gt.count(recommended[i].track)) {
      ++hits;
      dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
    }
  const int ideal = std::min<int>(k, static_cast<int>(gt.size()));
  double idcg = 0.0;
  for (int i = 0; i < ideal; ++i) idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  out.ndcg = idcg > 0.0 ? dcg / idcg : 0.0;
  out.recall = static_cast<double>(hits) / static_cast<double>(ideal);
  return out;
}

inline double recommended_repeat_fraction(const ScoredList& recommended) {
  if (recommended.empty()) return 0.0;
  int rep = 0;
  for (const auto& e : recommended)
    if (e.repeated) ++rep;
  return static_cast<double>(rep) / static_cast<double>(recommended.size());
}

inline double ground_truth_repeat_fraction(const std::vector<std::int32_t>& ground_truth,
                                           const std::unordered_set<std::int32_t>& heard) {
  if (ground_truth.empty()) return 0.0;
  int rep = 0;
  for (std::int32_t v : ground_truth)
    if (heard.count(v)) ++rep;
  return static_cast<double>(rep) / static_cast<double>(ground_truth.size());
}

// Popularity percentile per track: 0 = most popular, 100 = least, ties
// broken by ascending index; a single-track catalog maps to 0.
inline std::vector<double> popularity_percentiles(const std::vector<std::int64_t>& popularity) {
  const std::size_t n = popularity.size();
  std::vector<std::int32_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::int32_t a, std::int32_t b) {
    if (popularity[static_cast<std::size_t>(a)] != popularity[static_cast<std::size_t>(b)])
      return popularity[static_cast<std::size_t>(a)] > popularity[static_cast<std::size_t>(b)];
    return a < b;
  });
  std::vector<double> pct(n, 0.0);
  for (std::size_t rank = 0; rank < n; ++rank)
    pct[static_cast<std::size_t>(order[rank])] =
        n > 1 ? 100.0 * static_cast<double>(rank) / static_cast<double>(n - 1) : 0.0;
  return pct;
}

// Median popularity percentile of one recommended list. Lower values mean
// the list leans on popular tracks.
inline double median_popularity_percentile(const ScoredList& recommended, const std::vector<double>& pct) {
  if (recommended.empty()) return 0.0;
  std::vector<double> vals;
  vals.reserve(recommended.size());
  for (const auto& e : recommended) vals.push_back(pct[static_cast<std::size_t>(e.track)]);
  std::sort(vals.begin(), vals.end());
  const std::size_t n = vals.size();
  return n % 2 == 1 ? vals[n / 2] : 0.5 * (vals[n / 2 - 1] + vals[n / 2]);
}

// One run of the eight-metric protocol. Accuracy metrics are percentages;
// instances whose Rep (or Exp) ground-truth subset is empty are excluded
// from that metric's mean instead of counting as zero.
struct EvalMetrics {
  double ndcg = 0.0, recall = 0.0;
  double ndcg_rep = 0.0, recall_rep = 0.0;
  double ndcg_exp = 0.0, recall_exp = 0.0;
  double rep_bias = 0.0;
  double pop_bias = 0.0;
  double rep_ratio_gt = 0.0;
  int n_instances = 0;
  std::vector<double> per_instance_ndcg;
  std::vector<double> per_instance_recall;
};

using InstanceScorer = std::function<ScoredList(const EvalInstance&)>;

inline EvalMetrics evaluate(const InstanceScorer& scorer, const Corpus& corpus, const CorpusSplit& split,
                            const std::vector<EvalInstance>& instances, int k) {
  EvalMetrics out;
  double ndcg_sum = 0, recall_sum = 0;
  double ndcg_rep_sum = 0, recall_rep_sum = 0;
  double ndcg_exp_sum = 0, recall_exp_sum = 0;
  double rep_bias_sum = 0, pop_bias_sum = 0, rep_ratio_sum = 0;
  int n = 0, n_rep = 0, n_exp = 0;
  const std::vector<double> pct = popularity_percentiles(split.catalog.popularity);

  for (const auto& inst : instances) {
    const auto& sessions = corpus.sequences[static_cast<std::size_t>(inst.user)].sessions;
    const std::vector<std::int32_t>& gt = sessions[static_cast<std::size_t>(inst.target)].tracks;
    std::unordered_set<std::int32_t> heard;
    for (std::int32_t l = inst.target - split.L; l < inst.target; ++l)
      for (std::int32_t v : sessions[static_cast<std::size_t>(l)].tracks) heard.insert(v);

    const ScoredList rec = scorer(inst);
    const NdcgRecall all = ndcg_recall(rec, gt, GtSubset::All, heard, k);
    const NdcgRecall rep = ndcg_recall(rec, gt, GtSubset::Repeated, heard, k);
    const NdcgRecall exp = ndcg_recall(rec, gt, GtSubset::New, heard, k);
    ndcg_sum += all.ndcg;
    recall_sum += all.recall;
    if (rep.defined) {
      ndcg_rep_sum += rep.ndcg;
      recall_rep_sum += rep.recall;
      ++n_rep;
    }
    if (exp.defined) {
      ndcg_exp_sum += exp.ndcg;
      recall_exp_sum += exp.recall;
      ++n_exp;
    }
    rep_bias_sum += recommended_repeat_fraction(rec) - ground_truth_repeat_fraction(gt, heard);
    pop_bias_sum += median_popularity_percentile(rec, pct);
    rep_ratio_sum += ground_truth_repeat_fraction(gt, heard);
    out.per_instance_ndcg.push_back(all.ndcg);
    out.per_instance_recall.push_back(all.recall);
    ++n;
  }
  if (n == 0) throw std::invalid_argument("evaluate: no instances");
  out.ndcg = 100.0 * ndcg_sum / n;
  out.recall = 100.0 * recall_sum / n;
  out.ndcg_rep = n_rep > 0 ? 100.0 * ndcg_rep_sum / n_rep : 0.0;
  out.recall_rep = n_rep > 0 ? 100.0 * recall_rep_sum / n_rep : 0.0;
  out.ndcg_exp = n_exp > 0 ? 100.0 * ndcg_exp_sum / n_exp : 0.0;
  out.recall_exp = n_exp > 0 ? 100.0 * recall_exp_sum / n_exp : 0.0;
  out.rep_bias = 100.0 * rep_bias_sum / n;
  out.pop_bias = pop_bias_sum / n;
  out.rep_ratio_gt = 100.0 * rep_ratio_sum / n;
  out.n_instances = n;
  return out;
}

struct AggregateStat {
  double mean = 0.0;
  double stddev = 0.0;
};

inline AggregateStat aggregate(const std::vector<double>& xs) {
  AggregateStat s;
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - s.mean) * (x - s.mean);
  s.stddev = std::sqrt(var / static_cast<double>(xs.size()));
  return s;
}

// Rows of the comparison report: one model, one or more runs (seeds).
struct ModelReport {
  std::string model;
  std::vector<EvalMetrics> runs;

  AggregateStat stat(double EvalMetrics::* field) const {
    std::vector<double> xs;
    for (const auto& r : runs) xs.push_back(r.*field);
    return aggregate(xs);
  }
};

struct EvalReport {
  int k = 10;
  double rep_ratio_gt = 0.0;
  std::vector<ModelReport> rows;
};

inline nlohmann::json eval_report_json(const EvalReport& report, bool per_instance_arrays = false) {
  nlohmann::json j;
  j["k"] = report.k;
  j["rep_ratio_gt"] = report.rep_ratio_gt;
  j["rows"] = nlohmann::json::array();
  static const std::vector<std::pair<const char*, double EvalMetrics::*>> fields = {
      {"ndcg", &EvalMetrics::ndcg},
      {"recall", &EvalMetrics::recall},
      {"ndcg_rep", &EvalMetrics::ndcg_rep},
      {"recall_rep", &EvalMetrics::recall_rep},
      {"ndcg_exp", &EvalMetrics::ndcg_exp},
      {"recall_exp", &EvalMetrics::recall_exp},
      {"rep_bias", &EvalMetrics::rep_bias},
      {"pop_bias", &EvalMetrics::pop_bias},
  };
  for (const auto& row : report.rows) {
    nlohmann::json r;
    r["model"] = row.model;
    r["n_runs"] = row.runs.size();
    for (const auto& [name, field] : fields) {
      const AggregateStat s = row.stat(field);
      r["metrics"][name]["mean"] = s.mean;
      r["metrics"][name]["std"] = s.stddev;
      nlohmann::json per_run = nlohmann::json::array();
      for (const auto& run : row.runs) per_run.push_back(run.*field);
      r["metrics"][name]["per_run"] = per_run;
    }
    if (per_instance_arrays && !row.runs.empty()) {
      r["per_instance_ndcg"] = row.runs.front().per_instance_ndcg;
      r["per_instance_recall"] = row.runs.front().per_instance_recall;
    }
    j["rows"].push_back(r);
  }
  return j;
}

// Aligned-column text table following the usual grouping: global metrics,
// repetition-focused, exploration-focused, beyond-accuracy.
inline std::string eval_report_table(const EvalReport& report) {
  char buf[256];
  std::string out;
  std::snprintf(buf, sizeof(buf), "RepRatio-GT = %.2f%%   (K = %d)\n", report.rep_ratio_gt, report.k);
  out += buf;
  std::snprintf(buf, sizeof(buf), "%-12s | %8s %8s | %8s %8s | %8s %8s | %8s %8s\n", "model", "NDCG",
                "Recall", "NDCG-R", "Recall-R", "NDCG-E", "Recall-E", "RepBias", "PopBias");
  out += buf;
  out += std::string(std::strlen(buf) - 1, '-') + "\n";
  for (const auto& row : report.rows) {
    const auto f = [&](double EvalMetrics::* field) { return row.stat(field); };
    std::snprintf(buf, sizeof(buf),
                  "%-12s | %8.2f %8.2f | %8.2f %8.2f | %8.2f %8.2f | %8.2f %8.2f\n", row.model.c_str(),
                  f(&EvalMetrics::ndcg).mean, f(&EvalMetrics::recall).mean, f(&EvalMetrics::ndcg_rep).mean,
                  f(&EvalMetrics::recall_rep).mean, f(&EvalMetrics::ndcg_exp).mean,
                  f(&EvalMetrics::recall_exp).mean, f(&EvalMetrics::rep_bias).mean,
                  f(&EvalMetrics::pop_bias).mean);
    out += buf;
  }
  return out;
}

}  // namespace reacta
