#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "reacta/corpus.hpp"
#include "reacta/embeddings.hpp"
#include "reacta/rng.hpp"

namespace reacta {

struct SyntheticConfig {
  int n_users = 20;
  int n_tracks = 50;
  int sessions_per_user = 9;
  int k = 10;
  double p_repeat = 0.84;
  double zipf_s = 1.1;
  int n_genres = 5;
  int d_audio = 16;
  std::uint64_t seed = 1;

  void validate() const {
    if (n_users < 1 || n_tracks < 1 || sessions_per_user < 1 || k < 1 || n_genres < 1 || d_audio < 1)
      throw std::invalid_argument("SyntheticConfig: counts must be at least 1");
    if (p_repeat < 0.0 || p_repeat > 1.0)
      throw std::invalid_argument("SyntheticConfig: p_repeat must lie in [0, 1]");
  }
};

struct SyntheticData {
  std::vector<ListeningEvent> events;            // sorted by (user, time)
  std::vector<std::string> track_ids;
  std::vector<std::vector<float>> audio;         // one unit-norm row per track
  std::vector<int> genre_of_track;
};

namespace detail {

inline std::string padded_id(char prefix, int i, int width) {
  std::string digits = std::to_string(i);
  std::string out(1, prefix);
  for (int p = static_cast<int>(digits.size()); p < width; ++p) out.push_back('0');
  out += digits;
  return out;
}

inline int id_width(int n) {
  int w = 1;
  for (int x = n - 1; x >= 10; x /= 10) ++w;
  return w < 4 ? 4 : w;
}

}  // namespace detail

// Seed-deterministic corpus with genre structure: each user mixes a primary
// and secondary genre; fresh tracks follow a Zipf law within the chosen
// genre; with probability p_repeat a session slot replays a past listen.
// Audio rows are genre centroids plus Gaussian noise, unit-normalized.
inline SyntheticData generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  SyntheticData data;

  const int tw = detail::id_width(cfg.n_tracks);
  const int uw = detail::id_width(cfg.n_users);
  data.track_ids.reserve(static_cast<std::size_t>(cfg.n_tracks));
  data.genre_of_track.reserve(static_cast<std::size_t>(cfg.n_tracks));
  for (int v = 0; v < cfg.n_tracks; ++v) {
    data.track_ids.push_back(detail::padded_id('t', v, tw));
    data.genre_of_track.push_back(v % cfg.n_genres);
  }

  // genre centroids on the unit sphere
  std::vector<std::vector<double>> centroid(static_cast<std::size_t>(cfg.n_genres));
  for (auto& c : centroid) {
    c.resize(static_cast<std::size_t>(cfg.d_audio));
    double norm = 0.0;
    for (auto& x : c) {
      x = rng.normal();
      norm += x * x;
    }
    norm = std::sqrt(norm);
    for (auto& x : c) x /= norm > 0 ? norm : 1.0;
  }
  data.audio.resize(static_cast<std::size_t>(cfg.n_tracks));
  for (int v = 0; v < cfg.n_tracks; ++v) {
    auto& row = data.audio[static_cast<std::size_t>(v)];
    row.resize(static_cast<std::size_t>(cfg.d_audio));
    const auto& c = centroid[static_cast<std::size_t>(data.genre_of_track[static_cast<std::size_t>(v)])];
    double norm = 0.0;
    for (int i = 0; i < cfg.d_audio; ++i) {
      const double x = c[static_cast<std::size_t>(i)] + 0.3 * rng.normal();
      row[static_cast<std::size_t>(i)] = static_cast<float>(x);
      norm += x * x;
    }
    norm = std::sqrt(norm);
    for (auto& x : row) x = static_cast<float>(x / (norm > 0 ? norm : 1.0));
  }

  // per-genre Zipf weights over that genre's tracks, cumulative for sampling
  std::vector<std::vector<std::int32_t>> genre_tracks(static_cast<std::size_t>(cfg.n_genres));
  for (int v = 0; v < cfg.n_tracks; ++v)
    genre_tracks[static_cast<std::size_t>(data.genre_of_track[static_cast<std::size_t>(v)])].push_back(v);
  std::vector<std::vector<double>> genre_cum(static_cast<std::size_t>(cfg.n_genres));
  for (int g = 0; g < cfg.n_genres; ++g) {
    double acc = 0.0;
    for (std::size_t i = 0; i < genre_tracks[static_cast<std::size_t>(g)].size(); ++i) {
      acc += std::pow(static_cast<double>(i + 1), -cfg.zipf_s);
      genre_cum[static_cast<std::size_t>(g)].push_back(acc);
    }
  }

  const std::int64_t day = 86400;
  for (int u = 0; u < cfg.n_users; ++u) {
    const std::string uid = detail::padded_id('u', u, uw);
    const int primary = static_cast<int>(rng.uniform_int(cfg.n_genres));
    int secondary = static_cast<int>(rng.uniform_int(cfg.n_genres));
    if (cfg.n_genres > 1)
      while (secondary == primary) secondary = static_cast<int>(rng.uniform_int(cfg.n_genres));

    auto fresh_track = [&]() {
      const double r = rng.uniform();
      int g = r < 0.7 ? primary : (r < 0.9 ? secondary : static_cast<int>(rng.uniform_int(cfg.n_genres)));
      if (genre_tracks[static_cast<std::size_t>(g)].empty()) g = data.genre_of_track[0];
      const auto& cum = genre_cum[static_cast<std::size_t>(g)];
      return genre_tracks[static_cast<std::size_t>(g)][rng.weighted_index(cum)];
    };

    std::vector<std::int32_t> history;  // one entry per past listen, frequency-weighted
    std::unordered_set<std::int32_t> heard;
    for (int s = 0; s < cfg.sessions_per_user; ++s) {
      const std::int64_t start = static_cast<std::int64_t>(u) * 1000 + static_cast<std::int64_t>(s) * day;
      std::unordered_set<std::int32_t> chosen;
      std::vector<std::int32_t> session_tracks;
      int attempts = 0;
      while (static_cast<int>(session_tracks.size()) < cfg.k && attempts < 50 * cfg.k) {
        ++attempts;
        std::int32_t v;
        if (!history.empty() && rng.uniform() < cfg.p_repeat) {
          v = history[static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(history.size())))];
        } else {
          // fresh means fresh: retry the draw while it hits the user's
          // history, so p_repeat is the actual repetition rate
          v = fresh_track();
          for (int retry = 0; retry < 20 && heard.count(v); ++retry) v = fresh_track();
        }
        if (chosen.insert(v).second) session_tracks.push_back(v);
      }
      for (std::size_t i = 0; i < session_tracks.size(); ++i) {
        data.events.push_back(ListeningEvent{uid, data.track_ids[static_cast<std::size_t>(session_tracks[i])],
                                             start + static_cast<std::int64_t>(i) * 30});
        history.push_back(session_tracks[i]);
        heard.insert(session_tracks[i]);
      }
    }
  }
  return data;
}

inline EmbeddingMatrix audio_matrix(const SyntheticData& data) {
  EmbeddingMatrix m;
  m.kind = EmbeddingKind::audio;
  m.n_rows = static_cast<int>(data.audio.size());
  m.dim = m.n_rows > 0 ? static_cast<int>(data.audio[0].size()) : 0;
  m.data.reserve(static_cast<std::size_t>(m.n_rows) * static_cast<std::size_t>(m.dim));
  for (const auto& row : data.audio) m.data.insert(m.data.end(), row.begin(), row.end());
  return m;
}

// Fraction of final-session tracks already heard in earlier sessions,
// averaged over users. Used to sanity-check the generator.
inline double repetition_ratio_of_last_sessions(const Corpus& corpus) {
  double sum = 0.0;
  int n = 0;
  for (const auto& seq : corpus.sequences) {
    if (seq.sessions.size() < 2) continue;
    std::unordered_set<std::int32_t> heard;
    for (std::size_t l = 0; l + 1 < seq.sessions.size(); ++l)
      for (std::int32_t v : seq.sessions[l].tracks) heard.insert(v);
    const Session& last = seq.sessions.back();
    if (last.tracks.empty()) continue;
    int rep = 0;
    for (std::int32_t v : last.tracks)
      if (heard.count(v)) ++rep;
    sum += static_cast<double>(rep) / static_cast<double>(last.tracks.size());
    ++n;
  }
  return n > 0 ? sum / n : 0.0;
}

}  // namespace reacta
