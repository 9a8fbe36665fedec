#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "reacta/corpus.hpp"
#include "reacta/embeddings.hpp"

namespace reacta {

// Sorted listen timestamps per (user, track). A track listened to within a
// session is stamped with that session's start time, so timestamps are
// strictly increasing per pair.
class ListenHistoryIndex {
public:
  explicit ListenHistoryIndex(std::int32_t n_users) : by_user_(static_cast<std::size_t>(n_users)) {}

  void add_session(std::int32_t user, const Session& s) {
    auto& tracks = by_user_[static_cast<std::size_t>(user)];
    for (std::int32_t v : s.tracks) {
      auto& times = tracks[v];
      if (!times.empty() && times.back() >= static_cast<double>(s.start_time))
        throw std::invalid_argument("ListenHistoryIndex: session start times must strictly increase");
      times.push_back(static_cast<double>(s.start_time));
    }
  }

  std::span<const double> listens(std::int32_t user, std::int32_t track) const {
    const auto& tracks = by_user_[static_cast<std::size_t>(user)];
    auto it = tracks.find(track);
    if (it == tracks.end()) return {};
    return {it->second.data(), it->second.size()};
  }

private:
  std::vector<std::unordered_map<std::int32_t, std::vector<double>>> by_user_;
};

// Power-law decayed sum over past listen times (the raw base-level value).
// Every listen must precede `now`; a future timestamp is a leak upstream.
inline double base_level_raw(std::span<const double> times, double now, double alpha) {
  if (alpha <= 0.0) throw std::invalid_argument("base_level_raw: alpha must be positive");
  double sum = 0.0;
  for (double t : times) {
    if (t >= now)
      throw std::invalid_argument("base_level_raw: listen at " + std::to_string(t) +
                                  " does not precede " + std::to_string(now) + " (future leak)");
    sum += std::pow(now - t, -alpha);
  }
  return sum;
}

// Softmax of raw base-level values over an arbitrary candidate track set.
// Tracks never heard contribute raw 0, so an all-unheard set comes out
// uniform.
inline std::vector<double> base_level_over(const ListenHistoryIndex& history, std::int32_t user,
                                           const std::vector<std::int32_t>& tracks, double now,
                                           double alpha) {
  std::vector<double> raw(tracks.size());
  for (std::size_t i = 0; i < tracks.size(); ++i)
    raw[i] = base_level_raw(history.listens(user, tracks[i]), now, alpha);
  double mx = raw.empty() ? 0.0 : raw[0];
  for (double r : raw) mx = std::max(mx, r);
  double sum = 0.0;
  for (double& r : raw) {
    r = std::exp(r - mx);
    sum += r;
  }
  for (double& r : raw) r /= sum;
  return raw;
}

// BL of Eq.-1 shape: softmax normalized across the tracks of one session.
inline std::vector<double> base_level(const ListenHistoryIndex& history, std::int32_t user,
                                      const Session& session, double alpha) {
  if (session.tracks.empty()) throw std::invalid_argument("base_level: empty session");
  return base_level_over(history, user, session.tracks, static_cast<double>(session.start_time), alpha);
}

// Directional track correlation: F[i][j] counts how often track j appeared
// in the session immediately preceding a session containing track i.
// C = D^{-1/2} F D^{-1/2} with D_ii = sum_j F_ij; zero-degree rows/columns
// stay zero. Stored CSR by row.
struct CorrelationMatrix {
  std::int32_t n = 0;
  std::vector<std::int64_t> row_ptr;
  std::vector<std::int32_t> col;
  std::vector<float> c_val;   // normalized entries
  std::vector<double> f_val;  // raw counts, same sparsity
  std::vector<double> degree;

  double at(std::int32_t i, std::int32_t j) const {
    for (std::int64_t p = row_ptr[static_cast<std::size_t>(i)]; p < row_ptr[static_cast<std::size_t>(i) + 1]; ++p)
      if (col[static_cast<std::size_t>(p)] == j) return static_cast<double>(c_val[static_cast<std::size_t>(p)]);
    return 0.0;
  }

  double f_at(std::int32_t i, std::int32_t j) const {
    for (std::int64_t p = row_ptr[static_cast<std::size_t>(i)]; p < row_ptr[static_cast<std::size_t>(i) + 1]; ++p)
      if (col[static_cast<std::size_t>(p)] == j) return f_val[static_cast<std::size_t>(p)];
    return 0.0;
  }
};

// Accumulates F over consecutive session pairs of each sequence. Pass the
// training portion only; evaluation may still use C on its observed input.
inline CorrelationMatrix build_correlation(const std::vector<std::vector<const Session*>>& sequences,
                                           std::int32_t n_tracks) {
  std::unordered_map<std::uint64_t, double> f;
  for (const auto& sessions : sequences)
    for (std::size_t l = 1; l < sessions.size(); ++l)
      for (std::int32_t i : sessions[l]->tracks)
        for (std::int32_t j : sessions[l - 1]->tracks)
          f[(static_cast<std::uint64_t>(static_cast<std::uint32_t>(i)) << 32) |
            static_cast<std::uint32_t>(j)] += 1.0;

  CorrelationMatrix m;
  m.n = n_tracks;
  m.degree.assign(static_cast<std::size_t>(n_tracks), 0.0);
  for (const auto& [key, cnt] : f) m.degree[static_cast<std::size_t>(key >> 32)] += cnt;

  std::vector<std::vector<std::pair<std::int32_t, double>>> rows(static_cast<std::size_t>(n_tracks));
  for (const auto& [key, cnt] : f)
    rows[static_cast<std::size_t>(key >> 32)].push_back(
        {static_cast<std::int32_t>(key & 0xffffffffULL), cnt});

  m.row_ptr.assign(static_cast<std::size_t>(n_tracks) + 1, 0);
  for (std::int32_t i = 0; i < n_tracks; ++i) {
    auto& r = rows[static_cast<std::size_t>(i)];
    std::sort(r.begin(), r.end());
    m.row_ptr[static_cast<std::size_t>(i) + 1] = m.row_ptr[static_cast<std::size_t>(i)] + static_cast<std::int64_t>(r.size());
    for (const auto& [j, cnt] : r) {
      m.col.push_back(j);
      m.f_val.push_back(cnt);
      const double di = m.degree[static_cast<std::size_t>(i)];
      const double dj = m.degree[static_cast<std::size_t>(j)];
      m.c_val.push_back(di > 0.0 && dj > 0.0 ? static_cast<float>(cnt / std::sqrt(di * dj)) : 0.0f);
    }
  }
  return m;
}

// SPR_v: activation spread into v from the previous session's tracks.
// Zero when there is no previous session.
inline double spreading(const CorrelationMatrix& c, const Session* prev, std::int32_t v) {
  if (prev == nullptr) return 0.0;
  double sum = 0.0;
  for (std::int32_t vp : prev->tracks) sum += c.at(vp, v);
  return sum;
}

// Dense SPR over the whole catalog: accumulate the CSR rows of the previous
// session's tracks. Used by full-catalog scoring.
inline void spreading_all(const CorrelationMatrix& c, const Session& prev, std::vector<double>& out) {
  out.assign(static_cast<std::size_t>(c.n), 0.0);
  for (std::int32_t vp : prev.tracks)
    for (std::int64_t p = c.row_ptr[static_cast<std::size_t>(vp)]; p < c.row_ptr[static_cast<std::size_t>(vp) + 1]; ++p)
      out[static_cast<std::size_t>(c.col[static_cast<std::size_t>(p)])] += static_cast<double>(c.c_val[static_cast<std::size_t>(p)]);
}

// P_v: summed dot products against the previous session's embeddings.
inline double partial_matching(const EmbeddingMatrix& m, const Session* prev, std::int32_t v) {
  if (prev == nullptr) return 0.0;
  double sum = 0.0;
  for (std::int32_t vp : prev->tracks) sum += m.dot_rows(v, vp);
  return sum;
}

struct ActivationRow {
  double bl = 0.0;
  double spr = 0.0;
  double p = 0.0;
};

// Per-sequence activation components: entry [l][k] belongs to the k-th track
// of session l. The sequence is its own universe: session 0 has no previous
// session (SPR = P = 0) and an empty listen history (uniform BL).
using SequenceActivation = std::vector<std::vector<ActivationRow>>;

inline SequenceActivation compute_sequence_activation(std::span<const Session> sessions,
                                                      const EmbeddingMatrix& m,
                                                      const CorrelationMatrix& c, double alpha) {
  SequenceActivation table(sessions.size());
  ListenHistoryIndex history(1);
  for (std::size_t l = 0; l < sessions.size(); ++l) {
    const Session& s = sessions[l];
    const Session* prev = l > 0 ? &sessions[l - 1] : nullptr;
    const std::vector<double> bl = base_level(history, 0, s, alpha);
    auto& rows = table[l];
    rows.resize(s.tracks.size());
    for (std::size_t k = 0; k < s.tracks.size(); ++k) {
      rows[k].bl = bl[k];
      rows[k].spr = spreading(c, prev, s.tracks[k]);
      rows[k].p = partial_matching(m, prev, s.tracks[k]);
    }
    history.add_session(0, s);
  }
  return table;
}

// Activation components for every training window, keyed like split.train.
struct ActivationTable {
  std::vector<SequenceActivation> per_window;
};

inline ActivationTable build_activation_table(const Corpus& corpus, const CorpusSplit& split,
                                              const EmbeddingMatrix& m, const CorrelationMatrix& c,
                                              double alpha) {
  ActivationTable table;
  table.per_window.reserve(split.train.size());
  for (const auto& w : split.train) {
    const auto& sessions = corpus.sequences[static_cast<std::size_t>(w.user)].sessions;
    table.per_window.push_back(compute_sequence_activation(
        std::span<const Session>(sessions.data() + w.first, static_cast<std::size_t>(w.len)), m, c, alpha));
  }
  return table;
}

// Line-delimited export for offline inspection:
// user <TAB> session <TAB> track <TAB> BL <TAB> SPR <TAB> P
inline void export_activation_table(const std::string& path, const Corpus& corpus,
                                    const CorpusSplit& split, const ActivationTable& table) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("export_activation_table: cannot open " + path);
  char buf[160];
  for (std::size_t wi = 0; wi < split.train.size(); ++wi) {
    const TrainWindow& w = split.train[wi];
    const auto& seq = corpus.sequences[static_cast<std::size_t>(w.user)];
    const auto& windows = table.per_window[wi];
    for (std::size_t l = 0; l < windows.size(); ++l) {
      const Session& s = seq.sessions[static_cast<std::size_t>(w.first) + l];
      for (std::size_t k = 0; k < windows[l].size(); ++k) {
        const ActivationRow& r = windows[l][k];
        std::snprintf(buf, sizeof(buf), "%d\t%zu\t%d\t%.9g\t%.9g\t%.9g\n", w.user,
                      l + static_cast<std::size_t>(w.first), s.tracks[k], r.bl, r.spr, r.p);
        out << buf;
      }
    }
  }
}

// Correlation artifact: JSON header {n, nnz} then nnz little-endian triplets
// (i: int32, j: int32, count: float64). Degrees and C are rebuilt from the
// exact counts on load.
inline void save_correlation(const std::string& path, const CorrelationMatrix& c) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_correlation: cannot open " + path);
  out << "{\"n\":" << c.n << ",\"nnz\":" << c.col.size() << "}\n";
  for (std::int32_t i = 0; i < c.n; ++i)
    for (std::int64_t p = c.row_ptr[static_cast<std::size_t>(i)]; p < c.row_ptr[static_cast<std::size_t>(i) + 1]; ++p) {
      const std::int32_t j = c.col[static_cast<std::size_t>(p)];
      const double f = c.f_val[static_cast<std::size_t>(p)];
      out.write(reinterpret_cast<const char*>(&i), sizeof(i));
      out.write(reinterpret_cast<const char*>(&j), sizeof(j));
      out.write(reinterpret_cast<const char*>(&f), sizeof(f));
    }
}

inline CorrelationMatrix load_correlation(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_correlation: cannot open " + path);
  std::string header;
  if (!std::getline(in, header)) throw std::runtime_error("load_correlation: missing header in " + path);
  std::int64_t n = 0, nnz = 0;
  if (std::sscanf(header.c_str(), "{\"n\":%ld,\"nnz\":%ld}", &n, &nnz) != 2)
    throw std::runtime_error("load_correlation: bad header in " + path);

  CorrelationMatrix m;
  m.n = static_cast<std::int32_t>(n);
  m.degree.assign(static_cast<std::size_t>(n), 0.0);
  std::vector<std::vector<std::pair<std::int32_t, double>>> rows(static_cast<std::size_t>(n));
  for (std::int64_t e = 0; e < nnz; ++e) {
    std::int32_t i = 0, j = 0;
    double f = 0.0;
    in.read(reinterpret_cast<char*>(&i), sizeof(i));
    in.read(reinterpret_cast<char*>(&j), sizeof(j));
    in.read(reinterpret_cast<char*>(&f), sizeof(f));
    if (!in) throw std::runtime_error("load_correlation: truncated payload in " + path);
    rows[static_cast<std::size_t>(i)].push_back({j, f});
    m.degree[static_cast<std::size_t>(i)] += f;
  }
  m.row_ptr.assign(static_cast<std::size_t>(n) + 1, 0);
  for (std::int32_t i = 0; i < m.n; ++i) {
    auto& r = rows[static_cast<std::size_t>(i)];
    std::sort(r.begin(), r.end());
    m.row_ptr[static_cast<std::size_t>(i) + 1] = m.row_ptr[static_cast<std::size_t>(i)] + static_cast<std::int64_t>(r.size());
    for (const auto& [j, f] : r) {
      m.col.push_back(j);
      m.f_val.push_back(f);
      const double di = m.degree[static_cast<std::size_t>(i)];
      const double dj = m.degree[static_cast<std::size_t>(j)];
      m.c_val.push_back(di > 0.0 && dj > 0.0 ? static_cast<float>(f / std::sqrt(di * dj)) : 0.0f);
    }
  }
  return m;
}

inline std::vector<std::vector<const Session*>> training_session_pointers(const Corpus& corpus,
                                                                          const CorpusSplit& split) {
  std::vector<std::vector<const Session*>> out;
  out.reserve(split.train.size());
  for (const auto& w : split.train) {
    std::vector<const Session*> seq;
    const auto& sessions = corpus.sequences[static_cast<std::size_t>(w.user)].sessions;
    for (std::int32_t l = w.first; l < w.first + w.len; ++l) seq.push_back(&sessions[static_cast<std::size_t>(l)]);
    out.push_back(std::move(seq));
  }
  return out;
}

}  // namespace reacta
