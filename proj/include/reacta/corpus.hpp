#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "reacta/rng.hpp"

namespace reacta {

struct ListeningEvent {
  std::string user_id;
  std::string track_id;
  std::int64_t timestamp = 0;
};

// Up to K unique tracks kept in first-occurrence order. All model math treats
// the tracks as a set; the order only pins serialization.
struct Session {
  std::int64_t start_time = 0;
  std::vector<std::int32_t> tracks;

  bool contains(std::int32_t v) const {
    return std::find(tracks.begin(), tracks.end(), v) != tracks.end();
  }
};

struct SessionSequence {
  std::int32_t user_index = 0;
  std::vector<Session> sessions;
};

struct TrackCatalog {
  std::vector<std::string> ids;
  std::unordered_map<std::string, std::int32_t> index;
  std::vector<std::int64_t> popularity;  // listen counts over the training portion

  std::int32_t size() const { return static_cast<std::int32_t>(ids.size()); }

  std::int32_t add(const std::string& id) {
    auto it = index.find(id);
    if (it != index.end()) return it->second;
    const std::int32_t v = size();
    ids.push_back(id);
    index[id] = v;
    popularity.push_back(0);
    return v;
  }

  std::int32_t lookup(const std::string& id) const {
    auto it = index.find(id);
    return it == index.end() ? -1 : it->second;
  }
};

struct Corpus {
  TrackCatalog catalog;
  std::vector<std::string> user_ids;
  std::vector<SessionSequence> sequences;  // aligned with user_ids
  std::int64_t dropped_users = 0;          // users with fewer than two sessions

  std::int32_t n_users() const { return static_cast<std::int32_t>(sequences.size()); }
};

// Groups one user's time-sorted events into sessions: a gap greater than
// `session_gap` between consecutive events starts a new session. Tracks are
// deduplicated in first-occurrence order and truncated to K.
inline std::vector<Session> sessionize_user(const std::vector<ListeningEvent>& events,
                                            const std::vector<std::size_t>& order,
                                            std::int64_t session_gap, int k,
                                            TrackCatalog& catalog) {
  std::vector<Session> sessions;
  std::int64_t prev_t = 0;
  std::size_t session_event_count = 0;
  std::unordered_set<std::int32_t> seen;
  for (std::size_t oi = 0; oi < order.size(); ++oi) {
    const ListeningEvent& e = events[order[oi]];
    if (sessions.empty() || e.timestamp - prev_t > session_gap) {
      sessions.push_back(Session{e.timestamp, {}});
      seen.clear();
      session_event_count = 0;
    }
    prev_t = e.timestamp;
    ++session_event_count;
    const std::int32_t v = catalog.add(e.track_id);
    if (static_cast<int>(sessions.back().tracks.size()) < k && seen.insert(v).second)
      sessions.back().tracks.push_back(v);
  }
  (void)session_event_count;
  return sessions;
}

// Builds the corpus from raw events. Events are re-sorted per user before
// grouping, so input order does not matter. Users ending up with fewer than
// two sessions are dropped (counted in Corpus::dropped_users).
inline Corpus sessionize(const std::vector<ListeningEvent>& events, std::int64_t session_gap, int k) {
  if (session_gap <= 0) throw std::invalid_argument("sessionize: session_gap must be positive");
  if (k < 1) throw std::invalid_argument("sessionize: K must be at least 1");

  // first-appearance order of users keeps ingestion deterministic
  std::vector<std::string> user_order;
  std::unordered_map<std::string, std::vector<std::size_t>> by_user;
  for (std::size_t i = 0; i < events.size(); ++i) {
    const ListeningEvent& e = events[i];
    if (e.user_id.empty() || e.track_id.empty())
      throw std::invalid_argument("sessionize: empty user or track id");
    if (e.timestamp < 0) throw std::invalid_argument("sessionize: negative timestamp");
    auto [it, inserted] = by_user.try_emplace(e.user_id);
    if (inserted) user_order.push_back(e.user_id);
    it->second.push_back(i);
  }

  Corpus corpus;
  for (const std::string& uid : user_order) {
    std::vector<std::size_t>& idx = by_user[uid];
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return events[a].timestamp < events[b].timestamp;
    });
    std::vector<Session> sessions = sessionize_user(events, idx, session_gap, k, corpus.catalog);
    if (sessions.size() < 2) {
      corpus.dropped_users += 1;
      continue;
    }
    SessionSequence seq;
    seq.user_index = corpus.n_users();
    seq.sessions = std::move(sessions);
    corpus.user_ids.push_back(uid);
    corpus.sequences.push_back(std::move(seq));
  }
  // pre-split popularity: listen counts over all retained sessions
  for (const auto& seq : corpus.sequences)
    for (const auto& s : seq.sessions)
      for (std::int32_t v : s.tracks) corpus.catalog.popularity[static_cast<std::size_t>(v)] += 1;
  return corpus;
}

// Line format: user_id<TAB>track_id<TAB>timestamp. '#' lines and blank lines
// are ignored. A malformed line aborts with its line number.
inline std::vector<ListeningEvent> read_events_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_events_file: cannot open " + path);
  std::vector<ListeningEvent> events;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::size_t t1 = line.find('\t');
    const std::size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos)
      throw std::runtime_error("events file line " + std::to_string(line_no) + ": expected 3 tab-separated fields");
    ListeningEvent e;
    e.user_id = line.substr(0, t1);
    e.track_id = line.substr(t1 + 1, t2 - t1 - 1);
    const std::string ts = line.substr(t2 + 1);
    try {
      std::size_t used = 0;
      e.timestamp = std::stoll(ts, &used);
      if (used != ts.size()) throw std::invalid_argument(ts);
    } catch (const std::exception&) {
      throw std::runtime_error("events file line " + std::to_string(line_no) + ": bad timestamp '" + ts + "'");
    }
    if (e.user_id.empty() || e.track_id.empty() || e.timestamp < 0)
      throw std::runtime_error("events file line " + std::to_string(line_no) + ": invalid record");
    events.push_back(std::move(e));
  }
  return events;
}

inline Corpus ingest_events(const std::string& path, std::int64_t session_gap, int k) {
  Corpus corpus = sessionize(read_events_file(path), session_gap, k);
  if (corpus.dropped_users > 0)
    std::cerr << "ingest_events: dropped " << corpus.dropped_users << " user(s) with fewer than two sessions\n";
  return corpus;
}

inline void write_events_file(const std::string& path, const std::vector<ListeningEvent>& events) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_events_file: cannot open " + path);
  for (const auto& e : events) out << e.user_id << '\t' << e.track_id << '\t' << e.timestamp << '\n';
}

// Evaluation instance: the target session is masked; the L sessions
// preceding it (indices target-L .. target-1) are the observed input.
struct EvalInstance {
  std::int32_t user = 0;
  std::int32_t target = 0;
};

// Contiguous run of sessions used for training sub-sequence expansion.
struct TrainWindow {
  std::int32_t user = 0;
  std::int32_t first = 0;
  std::int32_t len = 0;
};

struct CorpusSplit {
  int L = 0;
  int n_val = 0;
  int n_test = 0;
  std::uint64_t seed = 0;
  std::vector<TrainWindow> train;
  std::vector<EvalInstance> validation;
  std::vector<EvalInstance> test;
  TrackCatalog catalog;  // popularity recomputed over the training portion
};

// Draws the most recent eval targets per eligible user (those with at least
// L+1 sessions), splits them n_val/n_test by seeded shuffle and carves the
// remaining prefix into one training window of at most L+1 sessions.
// Popularity is recomputed over training-portion sessions only.
inline CorpusSplit make_split(const Corpus& corpus, int L, int n_val, int n_test, std::uint64_t seed) {
  if (L < 1) throw std::invalid_argument("make_split: L must be at least 1");
  CorpusSplit split;
  split.L = L;
  split.n_val = n_val;
  split.n_test = n_test;
  split.seed = seed;
  split.catalog = corpus.catalog;
  std::fill(split.catalog.popularity.begin(), split.catalog.popularity.end(), 0);

  Rng rng(seed);
  bool any_eligible = false;
  for (const auto& seq : corpus.sequences) {
    const std::int32_t n = static_cast<std::int32_t>(seq.sessions.size());
    std::int32_t zone_end = n;  // sessions below this index form the training portion
    if (n_val + n_test > 0 && n >= L + 1) {
      any_eligible = true;
      std::vector<std::int32_t> targets;  // candidates, most recent first
      for (std::int32_t t = n - 1; t >= L && static_cast<int>(targets.size()) < n_val + n_test; --t)
        targets.push_back(t);
      zone_end = targets.empty() ? n : targets.back();
      rng.shuffle(targets);
      for (std::size_t i = 0; i < targets.size(); ++i) {
        EvalInstance inst{seq.user_index, targets[i]};
        if (static_cast<int>(i) < n_val)
          split.validation.push_back(inst);
        else
          split.test.push_back(inst);
      }
    }
    for (std::int32_t l = 0; l < zone_end; ++l)
      for (std::int32_t v : seq.sessions[static_cast<std::size_t>(l)].tracks)
        split.catalog.popularity[static_cast<std::size_t>(v)] += 1;
    // one training window: the most recent L+1 sessions of the training zone
    const std::int32_t len = std::min<std::int32_t>(zone_end, L + 1);
    if (len >= 2) split.train.push_back(TrainWindow{seq.user_index, zone_end - len, len});
  }
  if (n_val + n_test > 0 && !any_eligible)
    throw std::runtime_error("make_split: no user has enough sessions for evaluation instances");
  return split;
}

}  // namespace reacta
