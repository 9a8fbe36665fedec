#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <unordered_set>

#include "reacta/eval.hpp"
#include "reacta/synthetic.hpp"

using namespace reacta;

namespace {

ScoredList list_of(std::initializer_list<std::int32_t> tracks,
                   const std::unordered_set<std::int32_t>& heard = {}) {
  ScoredList out;
  double score = 100.0;
  for (std::int32_t v : tracks) out.push_back({v, score -= 1.0, heard.count(v) > 0});
  return out;
}

}  // namespace

TEST_CASE("perfect top placement gives ndcg and recall of one") {
  std::vector<std::int32_t> gt = {4, 7, 9};
  auto rec = list_of({4, 7, 9, 1, 2});
  auto r = ndcg_recall(rec, gt, GtSubset::All, {}, 10);
  CHECK(r.defined);
  CHECK(r.ndcg == Catch::Approx(1.0));
  CHECK(r.recall == Catch::Approx(1.0));
}

TEST_CASE("half the ground truth anywhere in the list gives recall one half") {
  std::vector<std::int32_t> gt = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  auto rec = list_of({0, 1, 2, 3, 4, 90, 91, 92, 93, 94});
  auto r = ndcg_recall(rec, gt, GtSubset::All, {}, 10);
  CHECK(r.recall == Catch::Approx(0.5));
}

TEST_CASE("hand-computed ndcg for ranks one and three") {
  std::vector<std::int32_t> gt = {10, 20};
  auto rec = list_of({10, 55, 20, 56, 57});
  auto r = ndcg_recall(rec, gt, GtSubset::All, {}, 10);
  const double dcg = 1.0 + 1.0 / std::log2(4.0);
  const double idcg = 1.0 + 1.0 / std::log2(3.0);
  CHECK(dcg == Catch::Approx(1.5));
  CHECK(idcg == Catch::Approx(1.6309).margin(1e-4));
  CHECK(r.ndcg == Catch::Approx(dcg / idcg));
  CHECK(r.ndcg == Catch::Approx(0.9198).margin(1e-4));
}

TEST_CASE("empty full ground truth is an error, empty subsets are undefined") {
  auto rec = list_of({1, 2, 3});
  CHECK_THROWS(ndcg_recall(rec, {}, GtSubset::All, {}, 10));
  std::vector<std::int32_t> gt = {1, 2};
  // nothing in gt was heard, so the repeated subset is empty
  auto rep = ndcg_recall(rec, gt, GtSubset::Repeated, {}, 10);
  CHECK_FALSE(rep.defined);
  auto exp = ndcg_recall(rec, gt, GtSubset::New, {}, 10);
  CHECK(exp.defined);
}

TEST_CASE("rep and exp hits partition global hits on randomized instances") {
  Rng rng(77);
  for (int trial = 0; trial < 1000; ++trial) {
    const int catalog = 40;
    std::unordered_set<std::int32_t> heard;
    for (int i = 0; i < 12; ++i) heard.insert(static_cast<std::int32_t>(rng.uniform_int(catalog)));

    std::unordered_set<std::int32_t> gt_set;
    while (gt_set.size() < 6) gt_set.insert(static_cast<std::int32_t>(rng.uniform_int(catalog)));
    std::vector<std::int32_t> gt(gt_set.begin(), gt_set.end());

    std::unordered_set<std::int32_t> rec_set;
    while (rec_set.size() < 10) rec_set.insert(static_cast<std::int32_t>(rng.uniform_int(catalog)));
    ScoredList rec;
    double s = 50;
    for (std::int32_t v : rec_set) rec.push_back({v, s -= 1, heard.count(v) > 0});

    const int k = 10;
    auto all = ndcg_recall(rec, gt, GtSubset::All, heard, k);
    auto rep = ndcg_recall(rec, gt, GtSubset::Repeated, heard, k);
    auto exp = ndcg_recall(rec, gt, GtSubset::New, heard, k);

    int gt_rep = 0;
    for (std::int32_t v : gt)
      if (heard.count(v)) ++gt_rep;
    const int gt_exp = static_cast<int>(gt.size()) - gt_rep;

    const long hits_all = std::lround(all.recall * std::min<int>(k, static_cast<int>(gt.size())));
    const long hits_rep = rep.defined ? std::lround(rep.recall * std::min(k, gt_rep)) : 0;
    const long hits_exp = exp.defined ? std::lround(exp.recall * std::min(k, gt_exp)) : 0;
    CHECK(hits_all == hits_rep + hits_exp);
  }
}

TEST_CASE("repeat fractions and popularity percentiles") {
  SECTION("reproducing the ground truth exactly zeroes the bias") {
    std::unordered_set<std::int32_t> heard = {1, 2};
    std::vector<std::int32_t> gt = {1, 2, 3, 4};
    auto rec = list_of({1, 2, 3, 4}, heard);
    CHECK(recommended_repeat_fraction(rec) == Catch::Approx(ground_truth_repeat_fraction(gt, heard)));
  }

  SECTION("always recommending the most popular tracks sits near percentile zero") {
    std::vector<std::int64_t> pop(1000);
    for (std::size_t i = 0; i < pop.size(); ++i) pop[i] = 100000 - static_cast<std::int64_t>(i);
    auto pct = popularity_percentiles(pop);
    auto rec = list_of({0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
    const double med = median_popularity_percentile(rec, pct);
    CHECK(med == Catch::Approx(100.0 * 4.5 / 999.0).margin(1e-9));
    CHECK(med < 1.0);
  }

  SECTION("uniform recommendations sit near percentile fifty") {
    std::vector<std::int64_t> pop(1000);
    for (std::size_t i = 0; i < pop.size(); ++i) pop[i] = 1000 - static_cast<std::int64_t>(i / 2);
    auto pct = popularity_percentiles(pop);
    Rng rng(3);
    double sum = 0.0;
    const int trials = 4000;
    for (int t = 0; t < trials; ++t) {
      ScoredList rec;
      std::unordered_set<std::int32_t> seen;
      while (seen.size() < 10) {
        std::int32_t v = static_cast<std::int32_t>(rng.uniform_int(1000));
        if (seen.insert(v).second) rec.push_back({v, 1.0, false});
      }
      sum += median_popularity_percentile(rec, pct);
    }
    CHECK(sum / trials == Catch::Approx(50.0).margin(3.0));
  }

  SECTION("single-track catalog is percentile zero by convention") {
    auto pct = popularity_percentiles({42});
    CHECK(pct[0] == 0.0);
    CHECK(median_popularity_percentile(list_of({0}), pct) == 0.0);
  }
}

namespace {

struct EvalFixture {
  Corpus corpus;
  CorpusSplit split;
};

EvalFixture make_eval_fixture(std::uint64_t seed, double p_repeat = 0.5, int n_tracks = 30) {
  SyntheticConfig cfg;
  cfg.n_users = 10;
  cfg.n_tracks = n_tracks;
  cfg.sessions_per_user = 7;
  cfg.k = 4;
  cfg.p_repeat = p_repeat;
  cfg.seed = seed;
  EvalFixture f;
  f.corpus = sessionize(generate_synthetic(cfg).events, 1800, cfg.k);
  f.split = make_split(f.corpus, 4, 0, 2, seed + 1);
  return f;
}

}  // namespace

TEST_CASE("oracle scorer tops out every metric") {
  auto f = make_eval_fixture(5);
  InstanceScorer oracle = [&](const EvalInstance& inst) {
    const auto& sessions = f.corpus.sequences[static_cast<std::size_t>(inst.user)].sessions;
    std::unordered_set<std::int32_t> heard;
    for (std::int32_t l = inst.target - f.split.L; l < inst.target; ++l)
      for (std::int32_t v : sessions[static_cast<std::size_t>(l)].tracks) heard.insert(v);
    ScoredList rec;
    double s = 10.0;
    for (std::int32_t v : sessions[static_cast<std::size_t>(inst.target)].tracks)
      rec.push_back({v, s -= 1.0, heard.count(v) > 0});
    return rec;
  };
  auto metrics = evaluate(oracle, f.corpus, f.split, f.split.test, 10);
  CHECK(metrics.ndcg == Catch::Approx(100.0));
  CHECK(metrics.recall == Catch::Approx(100.0));
  CHECK(metrics.rep_bias == Catch::Approx(0.0).margin(1e-9));
}

TEST_CASE("random recommender over a mostly-new catalog has strongly negative rep bias") {
  auto f = make_eval_fixture(9, /*p_repeat=*/0.9, /*n_tracks=*/500);
  Rng rng(10);
  InstanceScorer random_scorer = [&](const EvalInstance& inst) {
    const auto& sessions = f.corpus.sequences[static_cast<std::size_t>(inst.user)].sessions;
    std::unordered_set<std::int32_t> heard;
    for (std::int32_t l = inst.target - f.split.L; l < inst.target; ++l)
      for (std::int32_t v : sessions[static_cast<std::size_t>(l)].tracks) heard.insert(v);
    ScoredList rec;
    std::unordered_set<std::int32_t> seen;
    while (seen.size() < 10) {
      std::int32_t v = static_cast<std::int32_t>(rng.uniform_int(f.corpus.catalog.size()));
      if (seen.insert(v).second) rec.push_back({v, 1.0, heard.count(v) > 0});
    }
    return rec;
  };
  auto metrics = evaluate(random_scorer, f.corpus, f.split, f.split.test, 10);
  CHECK(metrics.rep_ratio_gt > 50.0);
  CHECK(metrics.rep_bias < -40.0);
}

TEST_CASE("three-instance toy report matches hand-computed metrics") {
  // one user, five sessions; L = 1, targets at sessions 1, 2, 3
  std::vector<ListeningEvent> events;
  auto add_session = [&](int s, std::initializer_list<const char*> tracks) {
    int i = 0;
    for (const char* tr : tracks) events.push_back({"u0", tr, static_cast<std::int64_t>(s) * 10000 + i++ * 30});
  };
  add_session(0, {"a", "b"});
  add_session(1, {"a", "c"});
  add_session(2, {"b", "c"});
  add_session(3, {"d", "e"});
  add_session(4, {"a", "d"});
  Corpus corpus = sessionize(events, 1800, 4);
  CorpusSplit split;
  split.L = 1;
  split.catalog = corpus.catalog;
  std::vector<EvalInstance> instances = {{0, 1}, {0, 2}, {0, 3}};

  const std::int32_t a = corpus.catalog.lookup("a");
  const std::int32_t b = corpus.catalog.lookup("b");
  const std::int32_t c = corpus.catalog.lookup("c");
  const std::int32_t d = corpus.catalog.lookup("d");

  InstanceScorer fixed = [&](const EvalInstance& inst) -> ScoredList {
    // instance 1: observed {a,b}, gt {a,c}: recommend a at rank 1, c at rank 3
    if (inst.target == 1) return {{a, 3.0, true}, {b, 2.0, true}, {c, 1.0, false}};
    // instance 2: observed {a,c}, gt {b,c}: recommend c only, at rank 2
    if (inst.target == 2) return {{d, 3.0, false}, {c, 2.0, true}};
    // instance 3: observed {b,c}, gt {d,e}: miss entirely
    return {{a, 3.0, false}, {b, 2.0, true}};
  };
  auto metrics = evaluate(fixed, corpus, split, instances, 10);

  // hand: ndcg_1 = (1 + 1/log2(4)) / (1 + 1/log2(3)) = 0.9198, recall_1 = 1
  // ndcg_2 = (1/log2(3)) / (1 + 1/log2(3)) = 0.3869, recall_2 = 0.5
  // ndcg_3 = 0, recall_3 = 0
  const double n1 = 1.5 / (1.0 + 1.0 / std::log2(3.0));
  const double n2 = (1.0 / std::log2(3.0)) / (1.0 + 1.0 / std::log2(3.0));
  CHECK(metrics.ndcg == Catch::Approx(100.0 * (n1 + n2 + 0.0) / 3.0).margin(1e-9));
  CHECK(metrics.recall == Catch::Approx(100.0 * (1.0 + 0.5 + 0.0) / 3.0).margin(1e-9));

  // rep fractions: rec1 2/3 vs gt1 1/2; rec2 1/2 vs gt2 1/2; rec3 1/2 vs gt3 0
  const double bias = ((2.0 / 3.0 - 0.5) + 0.0 + 0.5) / 3.0;
  CHECK(metrics.rep_bias == Catch::Approx(100.0 * bias).margin(1e-9));
  CHECK(metrics.rep_ratio_gt == Catch::Approx(100.0 * (0.5 + 0.5 + 0.0) / 3.0).margin(1e-9));
}

TEST_CASE("evaluate is deterministic for a fixed scorer") {
  auto f = make_eval_fixture(13);
  InstanceScorer first_k = [&](const EvalInstance&) { return list_of({0, 1, 2, 3, 4}); };
  auto a = evaluate(first_k, f.corpus, f.split, f.split.test, 5);
  auto b = evaluate(first_k, f.corpus, f.split, f.split.test, 5);
  CHECK(a.ndcg == b.ndcg);
  CHECK(a.recall == b.recall);
  CHECK(a.rep_bias == b.rep_bias);
  CHECK(a.pop_bias == b.pop_bias);
}

TEST_CASE("rep bias of a full-list scorer stays within its structural bounds") {
  auto f = make_eval_fixture(21, 0.8);
  Rng rng(5);
  InstanceScorer random_scorer = [&](const EvalInstance& inst) {
    const auto& sessions = f.corpus.sequences[static_cast<std::size_t>(inst.user)].sessions;
    std::unordered_set<std::int32_t> heard;
    for (std::int32_t l = inst.target - f.split.L; l < inst.target; ++l)
      for (std::int32_t v : sessions[static_cast<std::size_t>(l)].tracks) heard.insert(v);
    ScoredList rec;
    std::unordered_set<std::int32_t> seen;
    while (seen.size() < 10) {
      std::int32_t v = static_cast<std::int32_t>(rng.uniform_int(f.corpus.catalog.size()));
      if (seen.insert(v).second) rec.push_back({v, 1.0, heard.count(v) > 0});
    }
    return rec;
  };
  auto m = evaluate(random_scorer, f.corpus, f.split, f.split.test, 10);
  CHECK(m.rep_bias >= -m.rep_ratio_gt - 1e-9);
  CHECK(m.rep_bias <= 100.0 - m.rep_ratio_gt + 1e-9);
}
