#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "reacta/embeddings.hpp"
#include "reacta/synthetic.hpp"

using namespace reacta;

namespace {

SparseSym dense_to_sparse(const std::vector<std::vector<double>>& dense) {
  SparseSym s;
  s.n = static_cast<int>(dense.size());
  s.row_ptr.push_back(0);
  for (int i = 0; i < s.n; ++i) {
    for (int j = 0; j < s.n; ++j)
      if (dense[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] != 0.0) {
        s.col.push_back(j);
        s.val.push_back(dense[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);
      }
    s.row_ptr.push_back(static_cast<std::int64_t>(s.col.size()));
  }
  return s;
}

double cosine(const EmbeddingMatrix& m, std::int32_t a, std::int32_t b) {
  const double na = std::sqrt(m.dot_rows(a, a));
  const double nb = std::sqrt(m.dot_rows(b, b));
  return m.dot_rows(a, b) / (na * nb + 1e-30);
}

}  // namespace

TEST_CASE("full-rank truncated eigendecomposition reconstructs exactly") {
  // 5-track symmetric toy statistic
  std::vector<std::vector<double>> dense = {
      {0, 3, 1, 0, 0}, {3, 0, 2, 0, 1}, {1, 2, 0, 4, 0}, {0, 0, 4, 0, 2}, {0, 1, 0, 2, 0},
  };
  SparseSym s = dense_to_sparse(dense);
  auto eig = sym_eigen_truncated(s, 5, /*seed=*/3);
  REQUIRE(eig.eigenvalues.size() == 5);

  double err = 0.0, ref = 0.0;
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) {
      double rec = 0.0;
      for (int e = 0; e < 5; ++e)
        rec += eig.eigenvalues[static_cast<std::size_t>(e)] *
               eig.vecs[static_cast<std::size_t>(e)][static_cast<std::size_t>(i)] *
               eig.vecs[static_cast<std::size_t>(e)][static_cast<std::size_t>(j)];
      const double d = rec - dense[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      err += d * d;
      ref += dense[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] *
             dense[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
  CHECK(std::sqrt(err / ref) < 1e-6);
}

TEST_CASE("co-occurring tracks embed closer than non-co-occurring ones") {
  // tracks 0 and 1 always together; track 2 never with track 0
  std::vector<Session> sessions;
  for (int i = 0; i < 10; ++i) sessions.push_back(Session{i * 10000, {0, 1}});
  for (int i = 0; i < 5; ++i) sessions.push_back(Session{(i + 20) * 10000, {2, 3}});
  for (int i = 0; i < 5; ++i) sessions.push_back(Session{(i + 40) * 10000, {1, 3}});
  std::vector<const Session*> ptrs;
  for (const auto& s : sessions) ptrs.push_back(&s);

  auto m = build_svd_embeddings(ptrs, 4, 3, /*seed=*/5);
  CHECK(cosine(m, 0, 1) > cosine(m, 0, 2));
  // gram ordering: dot products rank the co-occurring pair higher too
  CHECK(m.dot_rows(0, 1) > m.dot_rows(0, 2));
}

TEST_CASE("svd embeddings are seed deterministic and mean-norm one") {
  SyntheticConfig cfg;
  cfg.n_users = 10;
  cfg.n_tracks = 30;
  cfg.sessions_per_user = 6;
  cfg.k = 5;
  cfg.seed = 8;
  auto corpus = sessionize(generate_synthetic(cfg).events, 1800, cfg.k);
  std::vector<const Session*> ptrs;
  for (const auto& seq : corpus.sequences)
    for (const auto& s : seq.sessions) ptrs.push_back(&s);

  auto a = build_svd_embeddings(ptrs, corpus.catalog.size(), 8, 77);
  auto b = build_svd_embeddings(ptrs, corpus.catalog.size(), 8, 77);
  CHECK(a.data == b.data);

  double mean_norm = 0.0;
  for (std::int32_t v = 0; v < a.n_rows; ++v) mean_norm += std::sqrt(a.dot_rows(v, v));
  mean_norm /= a.n_rows;
  CHECK(mean_norm == Catch::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("requesting more dimensions than the rank reduces with a warning") {
  // only tracks 0 and 1 ever co-occur: the statistic has rank 2 in a
  // 4-track catalog, so d = 4 cannot be honored
  std::vector<Session> sessions = {Session{0, {0, 1}}, Session{20000, {0, 1}}};
  std::vector<const Session*> ptrs;
  for (const auto& s : sessions) ptrs.push_back(&s);
  auto m = build_svd_embeddings(ptrs, 4, 4, 1);
  CHECK(m.dim == 2);
}

TEST_CASE("embedding file round trip is bitwise identical") {
  SyntheticConfig cfg;
  cfg.n_tracks = 25;
  cfg.d_audio = 7;
  cfg.seed = 12;
  auto data = generate_synthetic(cfg);
  auto m = audio_matrix(data);

  const std::string path = "/tmp/reacta_test_audio.bin";
  save_embeddings(path, m, data.track_ids);

  TrackCatalog catalog;
  for (const auto& id : data.track_ids) catalog.add(id);
  auto loaded = load_embeddings(path, EmbeddingKind::audio, cfg.d_audio, catalog);
  REQUIRE(loaded.n_rows == m.n_rows);
  REQUIRE(loaded.dim == m.dim);
  // generator rows are already unit-norm, so renormalization must not move
  // the payload beyond float rounding; check near-equality then exact norms
  for (std::size_t i = 0; i < loaded.data.size(); ++i)
    CHECK(loaded.data[i] == Catch::Approx(m.data[i]).margin(1e-6));

  // raw payload on disk is bitwise what was saved
  std::ifstream in(path, std::ios::binary);
  std::string header;
  std::getline(in, header);
  std::vector<float> raw(m.data.size());
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * sizeof(float)));
  CHECK(raw == m.data);
  std::remove(path.c_str());
}

TEST_CASE("missing catalog track is reported by name") {
  SyntheticConfig cfg;
  cfg.n_tracks = 5;
  cfg.d_audio = 4;
  cfg.seed = 2;
  auto data = generate_synthetic(cfg);
  auto m = audio_matrix(data);
  const std::string path = "/tmp/reacta_test_audio_missing.bin";
  save_embeddings(path, m, data.track_ids);

  TrackCatalog catalog;
  for (const auto& id : data.track_ids) catalog.add(id);
  catalog.add("t_not_in_file");
  REQUIRE_THROWS_WITH(load_embeddings(path, EmbeddingKind::audio, cfg.d_audio, catalog),
                      Catch::Matchers::ContainsSubstring("t_not_in_file"));
  std::remove(path.c_str());
}

TEST_CASE("dimension mismatch is an error") {
  SyntheticConfig cfg;
  cfg.n_tracks = 5;
  cfg.d_audio = 4;
  auto data = generate_synthetic(cfg);
  const std::string path = "/tmp/reacta_test_audio_dim.bin";
  save_embeddings(path, audio_matrix(data), data.track_ids);
  TrackCatalog catalog;
  for (const auto& id : data.track_ids) catalog.add(id);
  CHECK_THROWS(load_embeddings(path, EmbeddingKind::audio, 9, catalog));
  std::remove(path.c_str());
}

TEST_CASE("generated audio loads as unit-norm rows for the full catalog") {
  SyntheticConfig cfg;
  cfg.n_users = 30;
  cfg.n_tracks = 100;
  cfg.sessions_per_user = 6;
  cfg.d_audio = 16;
  cfg.seed = 91;
  auto data = generate_synthetic(cfg);
  const std::string path = "/tmp/reacta_test_audio100.bin";
  save_embeddings(path, audio_matrix(data), data.track_ids);

  TrackCatalog catalog;
  for (const auto& id : data.track_ids) catalog.add(id);
  auto loaded = load_embeddings(path, EmbeddingKind::audio, 16, catalog);
  REQUIRE(loaded.n_rows == 100);
  for (std::int32_t v = 0; v < loaded.n_rows; ++v)
    CHECK(std::sqrt(loaded.dot_rows(v, v)) == Catch::Approx(1.0).epsilon(1e-5));
  std::remove(path.c_str());
}
