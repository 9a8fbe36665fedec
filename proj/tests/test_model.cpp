#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "reacta/gradcheck.hpp"
#include "reacta/model.hpp"

using namespace reacta;

namespace {

EmbeddingMatrix make_embedding(const std::vector<std::vector<float>>& rows) {
  EmbeddingMatrix m;
  m.kind = EmbeddingKind::svd;
  m.n_rows = static_cast<int>(rows.size());
  m.dim = rows.empty() ? 0 : static_cast<int>(rows[0].size());
  for (const auto& r : rows) m.data.insert(m.data.end(), r.begin(), r.end());
  return m;
}

EmbeddingMatrix random_embedding(int n, int d, std::uint64_t seed) {
  Rng rng(seed);
  EmbeddingMatrix m;
  m.kind = EmbeddingKind::svd;
  m.n_rows = n;
  m.dim = d;
  m.data.resize(static_cast<std::size_t>(n) * static_cast<std::size_t>(d));
  for (auto& x : m.data) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return m;
}

ModelConfig tiny_config(int d = 8, int users = 4) {
  ModelConfig cfg;
  cfg.d = d;
  cfg.d_audio = d;
  cfg.L = 6;
  cfg.B = 1;
  cfg.H = 1;
  cfg.n_users = users;
  cfg.init_seed = 3;
  return cfg;
}

// softplus^{-1}, for pinning exact mixture weights in tests
float inv_softplus(double w) { return static_cast<float>(std::log(std::exp(w) - 1.0)); }

}  // namespace

TEST_CASE("single-track session embeds to exactly its track embedding") {
  auto model = Model::init(tiny_config(4));
  auto m = random_embedding(6, 4, 11);
  Session s{100, {3}};
  std::vector<ActivationRow> comps = {{0.7f, 1.3f, -0.2f}};
  ad::Tape t;
  auto vals = eval_row(t, session_embedding_node(t, model, s, comps, m));
  for (int i = 0; i < 4; ++i) CHECK(vals[static_cast<std::size_t>(i)] == m.row(3)[i]);
}

TEST_CASE("two tracks with identical components embed to the midpoint") {
  auto model = Model::init(tiny_config(4));
  auto m = random_embedding(6, 4, 12);
  Session s{100, {1, 4}};
  std::vector<ActivationRow> comps = {{0.5f, 0.8f, 0.1f}, {0.5f, 0.8f, 0.1f}};
  ad::Tape t;
  auto vals = eval_row(t, session_embedding_node(t, model, s, comps, m));
  for (int i = 0; i < 4; ++i)
    CHECK(vals[static_cast<std::size_t>(i)] ==
          Catch::Approx(0.5 * (m.row(1)[i] + m.row(4)[i])).margin(1e-6));
}

TEST_CASE("three-track session matches the hand-computed convex combination") {
  auto model = Model::init(tiny_config(4));
  // pin mixture weights to (0.5, 1.0, 2.0)
  model.pisa.mix_raw->value.values = {inv_softplus(0.5), inv_softplus(1.0), inv_softplus(2.0)};
  auto m = make_embedding({{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}});
  Session s{100, {0, 1, 2}};
  std::vector<ActivationRow> comps = {{0.2f, 1.0f, 0.3f}, {0.5f, 0.0f, 0.2f}, {0.3f, 0.5f, 1.0f}};

  // hand evaluation: raw_v = 0.5 BL + 1.0 SPR + 2.0 P, normalized
  double raw0 = 0.5 * 0.2 + 1.0 * 1.0 + 2.0 * 0.3;
  double raw1 = 0.5 * 0.5 + 1.0 * 0.0 + 2.0 * 0.2;
  double raw2 = 0.5 * 0.3 + 1.0 * 0.5 + 2.0 * 1.0;
  const double total = raw0 + raw1 + raw2;

  ad::Tape t;
  auto vals = eval_row(t, session_embedding_node(t, model, s, comps, m));
  CHECK(vals[0] == Catch::Approx(raw0 / total).margin(1e-6));
  CHECK(vals[1] == Catch::Approx(raw1 / total).margin(1e-6));
  CHECK(vals[2] == Catch::Approx(raw2 / total).margin(1e-6));
  CHECK(vals[3] == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("attention weights are a distribution even with negative components") {
  auto model = Model::init(tiny_config(4));
  Rng rng(31);
  auto m = random_embedding(10, 4, 13);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform_int(5));
    Session s{100, {}};
    std::vector<ActivationRow> comps;
    for (int i = 0; i < n; ++i) {
      s.tracks.push_back(static_cast<std::int32_t>(rng.uniform_int(10)));
      comps.push_back({static_cast<float>(rng.uniform(0.0, 1.0)), static_cast<float>(rng.uniform(0.0, 2.0)),
                       static_cast<float>(rng.uniform(-3.0, 3.0))});
    }
    // recover the weights by feeding basis embeddings through the same node
    EmbeddingMatrix basis;
    basis.kind = EmbeddingKind::svd;
    basis.n_rows = 10;
    basis.dim = n;
    basis.data.assign(static_cast<std::size_t>(10 * n), 0.0f);
    for (int i = 0; i < n; ++i)
      basis.data[static_cast<std::size_t>(s.tracks[static_cast<std::size_t>(i)] * n + i)] = 1.0f;
    // repeated tracks within the constructed session would double up basis
    // columns; skip those trials
    bool dup = false;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (s.tracks[static_cast<std::size_t>(i)] == s.tracks[static_cast<std::size_t>(j)]) dup = true;
    if (dup) continue;
    ad::Tape t;
    auto w = eval_row(t, session_embedding_node(t, model, s, comps, basis));
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      CHECK(w[static_cast<std::size_t>(i)] >= 0.0f);
      sum += static_cast<double>(w[static_cast<std::size_t>(i)]);
    }
    CHECK(sum == Catch::Approx(1.0).margin(1e-6));
  }
}

TEST_CASE("session embedding is permutation invariant") {
  auto model = Model::init(tiny_config(4));
  auto m = random_embedding(8, 4, 14);
  Session s1{100, {2, 5, 7}};
  std::vector<ActivationRow> c1 = {{0.3f, 0.1f, 0.4f}, {0.5f, 0.9f, 0.0f}, {0.2f, 0.3f, 0.8f}};
  Session s2{100, {7, 2, 5}};
  std::vector<ActivationRow> c2 = {c1[2], c1[0], c1[1]};
  ad::Tape t;
  auto a = eval_row(t, session_embedding_node(t, model, s1, c1, m));
  ad::Tape t2;
  auto b = eval_row(t2, session_embedding_node(t2, model, s2, c2, m));
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == Catch::Approx(b[i]).margin(1e-7));
}

TEST_CASE("mixing gate forced saturates to short or long term") {
  auto model = Model::init(tiny_config(8));
  Rng rng(15);
  std::vector<ad::Var> embs;
  ad::Tape t;
  for (int i = 0; i < 3; ++i) {
    Tensor e({1, 8});
    for (auto& v : e.values) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    embs.push_back(t.constant(e));
  }

  model.pisa.mix_b->value.values[0] = 60.0f;  // sigmoid(60) ~ 1
  ad::Var m_u = user_embedding_node(t, model, embs, 2);
  ad::Var m_short = short_term_node(t, model, embs);
  auto got = eval_row(t, m_u);
  auto want = eval_row(t, m_short);
  for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == Catch::Approx(want[i]).margin(1e-5));

  model.pisa.mix_b->value.values[0] = -60.0f;  // sigmoid(-60) ~ 0
  ad::Tape t2;
  std::vector<ad::Var> embs2;
  for (int i = 0; i < 3; ++i) {
    Tensor e({1, 8});
    for (auto& v : e.values) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    embs2.push_back(t2.constant(e));
  }
  auto got2 = eval_row(t2, user_embedding_node(t2, model, embs2, 2));
  const float* lng = model.pisa.user_long->value.values.data() + 2 * 8;
  for (std::size_t i = 0; i < got2.size(); ++i) CHECK(got2[i] == Catch::Approx(lng[i]).margin(1e-5));
}

TEST_CASE("beta stays strictly inside (0,1)") {
  auto model = Model::init(tiny_config(8));
  Rng rng(16);
  ad::Tape t;
  std::vector<ad::Var> embs;
  Tensor e({1, 8});
  for (auto& v : e.values) v = static_cast<float>(rng.uniform(-2.0, 2.0));
  embs.push_back(t.constant(e));
  ad::Var m_short = short_term_node(t, model, embs);
  ad::Var m_long = t.gather_rows(t.param(*model.pisa.user_long), {1});
  ad::Var beta = t.sigmoid(t.add(t.matmul(t.concat_cols({m_short, m_long}), t.param(*model.pisa.mix_w)),
                                 t.param(*model.pisa.mix_b)));
  const double b = t.value_scalar(beta);
  CHECK(b > 0.0);
  CHECK(b < 1.0);
}

TEST_CASE("paper-shaped transformer reacts to prefix changes") {
  ModelConfig cfg = tiny_config(8);
  cfg.B = 2;
  cfg.H = 2;
  auto model = Model::init(cfg);
  Rng rng(17);
  auto emb = [&](ad::Tape& t) {
    Tensor e({1, 8});
    for (auto& v : e.values) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    return t.constant(e);
  };
  ad::Tape t;
  std::vector<ad::Var> p1 = {emb(t), emb(t)};
  std::vector<ad::Var> p2 = {p1[0], p1[1], emb(t)};
  auto a = eval_row(t, user_embedding_node(t, model, p1, 0));
  auto b = eval_row(t, user_embedding_node(t, model, p2, 0));
  double dist = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dist += (a[i] - b[i]) * (a[i] - b[i]);
  CHECK(std::sqrt(dist) > 0.0);
}

TEST_CASE("causal mask: earlier states ignore later sessions") {
  auto model = Model::init(tiny_config(8));
  Rng rng(18);
  Tensor e1({1, 8}), e2({1, 8}), e3a({1, 8}), e3b({1, 8});
  for (auto* e : {&e1, &e2, &e3a, &e3b})
    for (auto& v : e->values) v = static_cast<float>(rng.uniform(-1.0, 1.0));

  ad::Tape ta;
  ad::Var sa = transformer_states_node(ta, model, {ta.constant(e1), ta.constant(e2), ta.constant(e3a)});
  ad::Tape tb;
  ad::Var sb = transformer_states_node(tb, model, {tb.constant(e1), tb.constant(e2), tb.constant(e3b)});
  const auto& va = ta.value(sa);
  const auto& vb = tb.value(sb);
  for (std::size_t i = 0; i < 2 * 8; ++i) CHECK(va[i] == vb[i]);  // rows 0 and 1 bitwise equal
  bool last_differs = false;
  for (std::size_t i = 2 * 8; i < 3 * 8; ++i)
    if (va[i] != vb[i]) last_differs = true;
  CHECK(last_differs);
}

TEST_CASE("audio encoder basics") {
  auto model = Model::init(tiny_config(6));

  SECTION("zero weights map everything to zero") {
    for (Param* p : {model.reacta.enc_w1, model.reacta.enc_b1, model.reacta.enc_w2, model.reacta.enc_b2})
      for (auto& v : p->value.values) v = 0.0f;
    ad::Tape t;
    Tensor a({1, 6}, {1, -2, 3, -4, 5, -6});
    auto out = eval_row(t, encode_audio_node(t, model, t.constant(a)));
    for (float v : out) CHECK(v == 0.0f);
  }

  SECTION("identity layers pass nonnegative input through") {
    for (Param* p : {model.reacta.enc_w1, model.reacta.enc_w2}) {
      for (auto& v : p->value.values) v = 0.0f;
      for (int i = 0; i < 6; ++i) p->value.values[static_cast<std::size_t>(i * 6 + i)] = 1.0f;
    }
    for (Param* p : {model.reacta.enc_b1, model.reacta.enc_b2})
      for (auto& v : p->value.values) v = 0.0f;
    ad::Tape t;
    Tensor a({1, 6}, {0.1f, 0.0f, 2.0f, 0.5f, 1.0f, 0.25f});
    auto out = eval_row(t, encode_audio_node(t, model, t.constant(a)));
    for (int i = 0; i < 6; ++i) CHECK(out[static_cast<std::size_t>(i)] == a.values[static_cast<std::size_t>(i)]);
  }

  SECTION("same input, same output") {
    ad::Tape t;
    Tensor a({1, 6}, {0.4f, -0.8f, 0.2f, 0.9f, -0.1f, 0.3f});
    auto x = eval_row(t, encode_audio_node(t, model, t.constant(a)));
    ad::Tape t2;
    auto y = eval_row(t2, encode_audio_node(t2, model, t2.constant(a)));
    CHECK(x == y);
  }

  SECTION("dimension mismatch is an error") {
    ad::Tape t;
    Tensor a({1, 5});
    CHECK_THROWS(encode_audio_node(t, model, t.constant(a)));
  }
}

TEST_CASE("activation predictor heads") {
  auto model = Model::init(tiny_config(6));

  SECTION("zero final layer gives (sigmoid(0), softplus(0))") {
    for (auto& v : model.reacta.pred_w2->value.values) v = 0.0f;
    for (auto& v : model.reacta.pred_b2->value.values) v = 0.0f;
    ad::Tape t;
    Tensor f({1, 6}, {1, 2, 3, 4, 5, 6});
    Tensor mu({1, 6}, {0.1f, 0.2f, 0.3f, 0.4f, 0.5f, 0.6f});
    auto out = eval_row(t, predict_activation_node(t, model, t.constant(f), t.constant(mu)));
    REQUIRE(out.size() == 2);
    CHECK(out[0] == Catch::Approx(0.5));
    CHECK(out[1] == Catch::Approx(std::log(2.0)).epsilon(1e-6));
  }

  SECTION("row count follows the encoded batch") {
    ad::Tape t;
    Tensor f({3, 6});
    Tensor mu({1, 6});
    ad::Var out = predict_activation_node(t, model, t.constant(f), t.constant(mu));
    CHECK(t.rows(out) == 3);
    CHECK(t.cols(out) == 2);
  }
}

TEST_CASE("model forward stack passes finite differences") {
  auto model = Model::init(tiny_config(8));
  auto m = random_embedding(10, 8, 19);
  EmbeddingMatrix audio = random_embedding(10, 8, 20);

  Session s1{100, {0, 1, 2}};
  Session s2{5000, {2, 3}};
  std::vector<ActivationRow> c1 = {{0.4f, 0.2f, 0.1f}, {0.3f, 0.0f, 0.5f}, {0.3f, 1.0f, 0.2f}};
  std::vector<ActivationRow> c2 = {{0.6f, 0.7f, -0.4f}, {0.4f, 0.1f, 0.9f}};

  auto build = [&](ad::Tape& t) {
    std::vector<ad::Var> embs = {session_embedding_node(t, model, s1, c1, m),
                                 session_embedding_node(t, model, s2, c2, m)};
    ad::Var m_u = user_embedding_node(t, model, embs, 1);
    ad::Var f = encode_audio_node(t, model, embedding_rows(t, audio, std::vector<std::int32_t>{4, 5}));
    ad::Var pred = predict_activation_node(t, model, f, m_u);
    ad::Var target = t.constant_raw(2, 2, {0.25, 0.5, 0.75, 1.5});
    return t.add(t.squared_error(pred, target), t.reduce_sum(t.mul(m_u, m_u)));
  };

  std::vector<Param*> params;
  for (std::size_t i = 0; i < model.store.size(); ++i) params.push_back(&model.store[i]);
  GradCheckOptions opt;
  opt.h = 1e-3;
  opt.tolerance = 1e-3;
  auto report = check_gradients(build, params, opt);
  INFO("max rel err " << report.max_rel_err);
  CHECK(report.pass);
}
