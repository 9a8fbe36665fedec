#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iostream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "reacta/corpus.hpp"
#include "reacta/rng.hpp"

namespace reacta {

enum class EmbeddingKind { svd, audio };

inline const char* embedding_kind_name(EmbeddingKind k) { return k == EmbeddingKind::svd ? "svd" : "audio"; }

// Row v holds the embedding of catalog track v. Audio rows are unit-L2;
// collaborative (svd) rows keep their magnitudes, only the mean norm is 1.
struct EmbeddingMatrix {
  EmbeddingKind kind = EmbeddingKind::svd;
  int dim = 0;
  int n_rows = 0;
  std::vector<float> data;  // row-major n_rows x dim

  const float* row(std::int32_t v) const { return data.data() + static_cast<std::size_t>(v) * static_cast<std::size_t>(dim); }
  float* row(std::int32_t v) { return data.data() + static_cast<std::size_t>(v) * static_cast<std::size_t>(dim); }

  double dot_rows(std::int32_t a, std::int32_t b) const {
    const float* x = row(a);
    const float* y = row(b);
    double s = 0.0;
    for (int i = 0; i < dim; ++i) s += static_cast<double>(x[i]) * static_cast<double>(y[i]);
    return s;
  }
};

// Sparse symmetric matrix in CSR form, used for the PPMI co-occurrence
// statistic fed to the truncated factorization.
struct SparseSym {
  int n = 0;
  std::vector<std::int64_t> row_ptr;
  std::vector<std::int32_t> col;
  std::vector<double> val;

  void matvec(const double* x, double* y) const {
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::int64_t p = row_ptr[static_cast<std::size_t>(i)]; p < row_ptr[static_cast<std::size_t>(i) + 1]; ++p)
        s += val[static_cast<std::size_t>(p)] * x[col[static_cast<std::size_t>(p)]];
      y[i] = s;
    }
  }
};

namespace detail {

// within-session co-occurrence counts, symmetric, zero diagonal
inline std::unordered_map<std::uint64_t, double> cooccurrence_counts(const std::vector<const Session*>& sessions) {
  std::unordered_map<std::uint64_t, double> counts;
  for (const Session* s : sessions) {
    const auto& tr = s->tracks;
    for (std::size_t a = 0; a < tr.size(); ++a)
      for (std::size_t b = a + 1; b < tr.size(); ++b) {
        const std::uint64_t i = static_cast<std::uint32_t>(tr[a]);
        const std::uint64_t j = static_cast<std::uint32_t>(tr[b]);
        counts[(i << 32) | j] += 1.0;
        counts[(j << 32) | i] += 1.0;
      }
  }
  return counts;
}

// positive PMI re-weighting of raw counts
inline SparseSym ppmi_matrix(const std::unordered_map<std::uint64_t, double>& counts, int n) {
  std::vector<double> row_sum(static_cast<std::size_t>(n), 0.0);
  double total = 0.0;
  for (const auto& [key, c] : counts) {
    row_sum[static_cast<std::size_t>(key >> 32)] += c;
    total += c;
  }
  std::vector<std::vector<std::pair<std::int32_t, double>>> rows(static_cast<std::size_t>(n));
  for (const auto& [key, c] : counts) {
    const std::int32_t i = static_cast<std::int32_t>(key >> 32);
    const std::int32_t j = static_cast<std::int32_t>(key & 0xffffffffULL);
    const double denom = row_sum[static_cast<std::size_t>(i)] * row_sum[static_cast<std::size_t>(j)];
    if (denom <= 0.0) continue;
    const double pmi = std::log(c * total / denom);
    if (pmi > 0.0) rows[static_cast<std::size_t>(i)].push_back({j, pmi});
  }
  SparseSym s;
  s.n = n;
  s.row_ptr.assign(static_cast<std::size_t>(n) + 1, 0);
  for (int i = 0; i < n; ++i) {
    auto& r = rows[static_cast<std::size_t>(i)];
    std::sort(r.begin(), r.end());
    s.row_ptr[static_cast<std::size_t>(i) + 1] = s.row_ptr[static_cast<std::size_t>(i)] + static_cast<std::int64_t>(r.size());
    for (const auto& [j, v] : r) {
      s.col.push_back(j);
      s.val.push_back(v);
    }
  }
  return s;
}

// modified Gram-Schmidt; columns with vanishing norm are re-seeded at zero
inline void orthonormalize_cols(std::vector<double>& q, int n, int r) {
  for (int c = 0; c < r; ++c) {
    for (int prev = 0; prev < c; ++prev) {
      double d = 0.0;
      for (int i = 0; i < n; ++i) d += q[static_cast<std::size_t>(i) * r + prev] * q[static_cast<std::size_t>(i) * r + c];
      for (int i = 0; i < n; ++i) q[static_cast<std::size_t>(i) * r + c] -= d * q[static_cast<std::size_t>(i) * r + prev];
    }
    double norm = 0.0;
    for (int i = 0; i < n; ++i) norm += q[static_cast<std::size_t>(i) * r + c] * q[static_cast<std::size_t>(i) * r + c];
    norm = std::sqrt(norm);
    if (norm > 1e-12)
      for (int i = 0; i < n; ++i) q[static_cast<std::size_t>(i) * r + c] /= norm;
    else
      for (int i = 0; i < n; ++i) q[static_cast<std::size_t>(i) * r + c] = 0.0;
  }
}

// cyclic Jacobi eigendecomposition of a dense symmetric r x r matrix
inline void jacobi_eigen(std::vector<double>& a, int r, std::vector<double>& eigvals,
                         std::vector<double>& eigvecs) {
  eigvecs.assign(static_cast<std::size_t>(r) * static_cast<std::size_t>(r), 0.0);
  for (int i = 0; i < r; ++i) eigvecs[static_cast<std::size_t>(i) * r + i] = 1.0;
  auto at = [&](int i, int j) -> double& { return a[static_cast<std::size_t>(i) * r + j]; };
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int i = 0; i < r; ++i)
      for (int j = i + 1; j < r; ++j) off += at(i, j) * at(i, j);
    if (off < 1e-24) break;
    for (int p = 0; p < r - 1; ++p)
      for (int q = p + 1; q < r; ++q) {
        if (std::abs(at(p, q)) < 1e-300) continue;
        const double theta = (at(q, q) - at(p, p)) / (2.0 * at(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int i = 0; i < r; ++i) {
          const double aip = at(i, p), aiq = at(i, q);
          at(i, p) = c * aip - s * aiq;
          at(i, q) = s * aip + c * aiq;
        }
        for (int i = 0; i < r; ++i) {
          const double api = at(p, i), aqi = at(q, i);
          at(p, i) = c * api - s * aqi;
          at(q, i) = s * api + c * aqi;
        }
        for (int i = 0; i < r; ++i) {
          const double vip = eigvecs[static_cast<std::size_t>(i) * r + p];
          const double viq = eigvecs[static_cast<std::size_t>(i) * r + q];
          eigvecs[static_cast<std::size_t>(i) * r + p] = c * vip - s * viq;
          eigvecs[static_cast<std::size_t>(i) * r + q] = s * vip + c * viq;
        }
      }
  }
  eigvals.resize(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) eigvals[static_cast<std::size_t>(i)] = at(i, i);
}

}  // namespace detail

// Truncated eigendecomposition of a sparse symmetric matrix via seeded
// randomized subspace iteration. Pairs are returned sorted by |eigenvalue|,
// descending; signs are kept so S ~ sum_i lambda_i u_i u_i^T.
struct TruncatedSymEigen {
  std::vector<double> eigenvalues;        // length r
  std::vector<std::vector<double>> vecs;  // r vectors of length n
};

inline TruncatedSymEigen sym_eigen_truncated(const SparseSym& s, int k, std::uint64_t seed,
                                             int oversample = 8, int power_iters = 3) {
  const int n = s.n;
  const int r = std::min(n, k + oversample);
  Rng rng(seed);
  std::vector<double> q(static_cast<std::size_t>(n) * static_cast<std::size_t>(r));
  for (auto& x : q) x = rng.normal();
  detail::orthonormalize_cols(q, n, r);

  std::vector<double> xcol(static_cast<std::size_t>(n)), ycol(static_cast<std::size_t>(n));
  std::vector<double> y(static_cast<std::size_t>(n) * static_cast<std::size_t>(r));
  for (int it = 0; it < power_iters; ++it) {
    for (int c = 0; c < r; ++c) {
      for (int i = 0; i < n; ++i) xcol[static_cast<std::size_t>(i)] = q[static_cast<std::size_t>(i) * r + c];
      s.matvec(xcol.data(), ycol.data());
      for (int i = 0; i < n; ++i) y[static_cast<std::size_t>(i) * r + c] = ycol[static_cast<std::size_t>(i)];
    }
    q.swap(y);
    detail::orthonormalize_cols(q, n, r);
  }

  // project: T = Q^T S Q
  std::vector<double> sq(static_cast<std::size_t>(n) * static_cast<std::size_t>(r));
  for (int c = 0; c < r; ++c) {
    for (int i = 0; i < n; ++i) xcol[static_cast<std::size_t>(i)] = q[static_cast<std::size_t>(i) * r + c];
    s.matvec(xcol.data(), ycol.data());
    for (int i = 0; i < n; ++i) sq[static_cast<std::size_t>(i) * r + c] = ycol[static_cast<std::size_t>(i)];
  }
  std::vector<double> t(static_cast<std::size_t>(r) * static_cast<std::size_t>(r), 0.0);
  for (int a = 0; a < r; ++a)
    for (int b = 0; b < r; ++b) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i)
        acc += q[static_cast<std::size_t>(i) * r + a] * sq[static_cast<std::size_t>(i) * r + b];
      t[static_cast<std::size_t>(a) * r + b] = acc;
    }
  // symmetrize against round-off before Jacobi
  for (int a = 0; a < r; ++a)
    for (int b = a + 1; b < r; ++b) {
      const double m = 0.5 * (t[static_cast<std::size_t>(a) * r + b] + t[static_cast<std::size_t>(b) * r + a]);
      t[static_cast<std::size_t>(a) * r + b] = m;
      t[static_cast<std::size_t>(b) * r + a] = m;
    }

  std::vector<double> eigvals, eigvecs;
  detail::jacobi_eigen(t, r, eigvals, eigvecs);

  std::vector<int> order(static_cast<std::size_t>(r));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double xa = std::abs(eigvals[static_cast<std::size_t>(a)]);
    const double xb = std::abs(eigvals[static_cast<std::size_t>(b)]);
    if (xa != xb) return xa > xb;
    return a < b;
  });

  TruncatedSymEigen out;
  const int keep = std::min(k, r);
  for (int oi = 0; oi < keep; ++oi) {
    const int e = order[static_cast<std::size_t>(oi)];
    out.eigenvalues.push_back(eigvals[static_cast<std::size_t>(e)]);
    std::vector<double> u(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
      double acc = 0.0;
      for (int c = 0; c < r; ++c)
        acc += q[static_cast<std::size_t>(i) * r + c] * eigvecs[static_cast<std::size_t>(c) * r + e];
      u[static_cast<std::size_t>(i)] = acc;
    }
    out.vecs.push_back(std::move(u));
  }
  return out;
}

inline std::vector<const Session*> collect_training_sessions(const Corpus& corpus, const CorpusSplit& split) {
  std::vector<const Session*> out;
  for (const auto& w : split.train) {
    const auto& seq = corpus.sequences[static_cast<std::size_t>(w.user)];
    for (std::int32_t l = w.first; l < w.first + w.len; ++l)
      out.push_back(&seq.sessions[static_cast<std::size_t>(l)]);
  }
  return out;
}

// Collaborative track embeddings: PPMI-weighted within-session co-occurrence,
// factorized by seeded randomized truncated SVD; row v is U_v * sqrt(|lambda|)
// rescaled so the mean row norm is 1. Requesting more dimensions than the
// statistic supports reduces d with a warning.
inline EmbeddingMatrix build_svd_embeddings(const std::vector<const Session*>& train_sessions,
                                            int n_tracks, int d, std::uint64_t seed) {
  if (d < 1 || d > n_tracks)
    throw std::invalid_argument("build_svd_embeddings: d must lie in [1, catalog size]");
  const SparseSym s = detail::ppmi_matrix(detail::cooccurrence_counts(train_sessions), n_tracks);
  TruncatedSymEigen eig = sym_eigen_truncated(s, d, seed);

  // effective rank: eigenvalues that carry signal
  const double top = eig.eigenvalues.empty() ? 0.0 : std::abs(eig.eigenvalues[0]);
  int rank = 0;
  for (double ev : eig.eigenvalues)
    if (std::abs(ev) > std::max(1e-10, 1e-9 * top)) ++rank;
  if (rank < 1) rank = 1;
  if (rank < d) {
    std::cerr << "build_svd_embeddings: requested d=" << d << " exceeds attainable rank " << rank
              << ", reducing\n";
    d = rank;
  }

  EmbeddingMatrix m;
  m.kind = EmbeddingKind::svd;
  m.dim = d;
  m.n_rows = n_tracks;
  m.data.assign(static_cast<std::size_t>(n_tracks) * static_cast<std::size_t>(d), 0.0f);
  for (int i = 0; i < d; ++i) {
    const double scale = std::sqrt(std::abs(eig.eigenvalues[static_cast<std::size_t>(i)]));
    const auto& u = eig.vecs[static_cast<std::size_t>(i)];
    for (int v = 0; v < n_tracks; ++v)
      m.data[static_cast<std::size_t>(v) * static_cast<std::size_t>(d) + static_cast<std::size_t>(i)] =
          static_cast<float>(u[static_cast<std::size_t>(v)] * scale);
  }
  double mean_norm = 0.0;
  for (int v = 0; v < n_tracks; ++v) {
    double norm = 0.0;
    const float* row = m.row(v);
    for (int i = 0; i < d; ++i) norm += static_cast<double>(row[i]) * static_cast<double>(row[i]);
    mean_norm += std::sqrt(norm);
  }
  mean_norm /= static_cast<double>(n_tracks);
  if (mean_norm > 1e-12)
    for (auto& x : m.data) x = static_cast<float>(x / mean_norm);
  return m;
}

// File layout: one JSON header line {kind, dim, n_rows, track_ids}, then
// n_rows * dim little-endian float32 values.
inline void save_embeddings(const std::string& path, const EmbeddingMatrix& m,
                            const std::vector<std::string>& track_ids) {
  if (static_cast<int>(track_ids.size()) != m.n_rows)
    throw std::invalid_argument("save_embeddings: track id count mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_embeddings: cannot open " + path);
  nlohmann::json header;
  header["kind"] = embedding_kind_name(m.kind);
  header["dim"] = m.dim;
  header["n_rows"] = m.n_rows;
  header["track_ids"] = track_ids;
  out << header.dump() << '\n';
  out.write(reinterpret_cast<const char*>(m.data.data()),
            static_cast<std::streamsize>(m.data.size() * sizeof(float)));
}

// Loads rows aligned to catalog indices. Audio rows are renormalized to unit
// L2 on load; svd rows are taken as stored.
inline EmbeddingMatrix load_embeddings(const std::string& path, EmbeddingKind kind, int expected_dim,
                                       const TrackCatalog& catalog) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_embeddings: cannot open " + path);
  std::string header_line;
  if (!std::getline(in, header_line)) throw std::runtime_error("load_embeddings: missing header in " + path);
  nlohmann::json header = nlohmann::json::parse(header_line);
  const std::string kind_str = header.at("kind").get<std::string>();
  if (kind_str != embedding_kind_name(kind))
    throw std::runtime_error("load_embeddings: expected kind '" + std::string(embedding_kind_name(kind)) +
                             "' but file holds '" + kind_str + "'");
  const int dim = header.at("dim").get<int>();
  if (expected_dim > 0 && dim != expected_dim)
    throw std::runtime_error("load_embeddings: dimension mismatch, expected " + std::to_string(expected_dim) +
                             " got " + std::to_string(dim));
  const int n_rows = header.at("n_rows").get<int>();
  const auto track_ids = header.at("track_ids").get<std::vector<std::string>>();
  if (static_cast<int>(track_ids.size()) != n_rows)
    throw std::runtime_error("load_embeddings: header track id count disagrees with n_rows");

  std::vector<float> raw(static_cast<std::size_t>(n_rows) * static_cast<std::size_t>(dim));
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(raw.size() * sizeof(float)))
    throw std::runtime_error("load_embeddings: truncated payload in " + path);

  std::unordered_map<std::string, int> file_index;
  for (int i = 0; i < n_rows; ++i) file_index[track_ids[static_cast<std::size_t>(i)]] = i;

  EmbeddingMatrix m;
  m.kind = kind;
  m.dim = dim;
  m.n_rows = catalog.size();
  m.data.assign(static_cast<std::size_t>(m.n_rows) * static_cast<std::size_t>(dim), 0.0f);
  std::vector<std::string> missing;
  for (std::int32_t v = 0; v < catalog.size(); ++v) {
    auto it = file_index.find(catalog.ids[static_cast<std::size_t>(v)]);
    if (it == file_index.end()) {
      if (missing.size() < 20) missing.push_back(catalog.ids[static_cast<std::size_t>(v)]);
      continue;
    }
    std::memcpy(m.row(v), raw.data() + static_cast<std::size_t>(it->second) * static_cast<std::size_t>(dim),
                static_cast<std::size_t>(dim) * sizeof(float));
  }
  if (!missing.empty()) {
    std::string msg = "load_embeddings: file lacks rows for catalog tracks:";
    for (const auto& id : missing) msg += " " + id;
    throw std::runtime_error(msg);
  }
  if (kind == EmbeddingKind::audio) {
    for (std::int32_t v = 0; v < m.n_rows; ++v) {
      float* row = m.row(v);
      double norm = 0.0;
      for (int i = 0; i < dim; ++i) norm += static_cast<double>(row[i]) * static_cast<double>(row[i]);
      norm = std::sqrt(norm);
      if (norm > 1e-12)
        for (int i = 0; i < dim; ++i) row[i] = static_cast<float>(row[i] / norm);
    }
  }
  for (float x : m.data)
    if (!std::isfinite(x)) throw std::runtime_error("load_embeddings: non-finite value in " + path);
  return m;
}

}  // namespace reacta
