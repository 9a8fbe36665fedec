#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "reacta/corpus.hpp"

namespace reacta {

// FNV-1a over the canonical JSON dump; used to version artifacts by the
// configuration that produced them.
inline std::string config_hash(const nlohmann::json& j) {
  const std::string s = j.dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Catalog + split manifest: track-id/index mapping, training-portion
// popularity, split instance lists and the parameters that produced them.
inline nlohmann::json manifest_json(const CorpusSplit& split, const nlohmann::json& params) {
  nlohmann::json j;
  j["track_ids"] = split.catalog.ids;
  j["popularity"] = split.catalog.popularity;
  j["L"] = split.L;
  j["n_val"] = split.n_val;
  j["n_test"] = split.n_test;
  j["seed"] = split.seed;
  j["params"] = params;
  nlohmann::json train = nlohmann::json::array();
  for (const auto& w : split.train) train.push_back({w.user, w.first, w.len});
  j["train_windows"] = train;
  nlohmann::json val = nlohmann::json::array(), test = nlohmann::json::array();
  for (const auto& i : split.validation) val.push_back({i.user, i.target});
  for (const auto& i : split.test) test.push_back({i.user, i.target});
  j["validation"] = val;
  j["test"] = test;
  j["config_hash"] = config_hash(params);
  return j;
}

inline void save_manifest(const std::string& path, const nlohmann::json& manifest) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_manifest: cannot open " + path);
  out << manifest.dump(2) << '\n';
}

inline nlohmann::json load_manifest_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_manifest_file: cannot open " + path);
  nlohmann::json j;
  in >> j;
  return j;
}

// Rebuilds the split from a manifest, checking that the re-ingested corpus
// still produces the same catalog.
inline CorpusSplit manifest_to_split(const nlohmann::json& j, const Corpus& corpus) {
  CorpusSplit split;
  split.L = j.at("L").get<int>();
  split.n_val = j.at("n_val").get<int>();
  split.n_test = j.at("n_test").get<int>();
  split.seed = j.at("seed").get<std::uint64_t>();
  const auto ids = j.at("track_ids").get<std::vector<std::string>>();
  if (ids != corpus.catalog.ids)
    throw std::runtime_error("manifest_to_split: catalog disagrees with the manifest; re-run the build step");
  split.catalog = corpus.catalog;
  split.catalog.popularity = j.at("popularity").get<std::vector<std::int64_t>>();
  for (const auto& w : j.at("train_windows"))
    split.train.push_back({w[0].get<std::int32_t>(), w[1].get<std::int32_t>(), w[2].get<std::int32_t>()});
  for (const auto& i : j.at("validation"))
    split.validation.push_back({i[0].get<std::int32_t>(), i[1].get<std::int32_t>()});
  for (const auto& i : j.at("test"))
    split.test.push_back({i[0].get<std::int32_t>(), i[1].get<std::int32_t>()});
  return split;
}

}  // namespace reacta
