#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "reacta/autodiff.hpp"

namespace reacta {

inline constexpr int kCheckpointFormatVersion = 1;

// Layout: one JSON header line {format_version, dtype, tensors: [{name,
// shape}...], ...extra}, then each tensor's raw little-endian float32 values
// in header order.
inline void save_checkpoint(const std::string& path, const ParamStore& store,
                            const nlohmann::json& extra = {}) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  nlohmann::json header;
  header["format_version"] = kCheckpointFormatVersion;
  header["dtype"] = "float32";
  header["tensors"] = nlohmann::json::array();
  for (std::size_t i = 0; i < store.size(); ++i) {
    nlohmann::json t;
    t["name"] = store[i].name;
    t["shape"] = store[i].value.shape;
    header["tensors"].push_back(t);
  }
  if (!extra.is_null())
    for (auto it = extra.begin(); it != extra.end(); ++it) header[it.key()] = it.value();
  out << header.dump() << '\n';
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& v = store[i].value.values;
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
  }
}

// Loads into an already-constructed store; names and shapes must agree,
// which pins the hyperparameters the store was built from.
inline nlohmann::json load_checkpoint(const std::string& path, ParamStore& store) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  std::string header_line;
  if (!std::getline(in, header_line)) throw std::runtime_error("load_checkpoint: missing header in " + path);
  nlohmann::json header = nlohmann::json::parse(header_line);
  if (header.at("format_version").get<int>() != kCheckpointFormatVersion)
    throw std::runtime_error("load_checkpoint: unsupported format version");
  if (header.at("dtype").get<std::string>() != "float32")
    throw std::runtime_error("load_checkpoint: unsupported dtype");
  const auto& tensors = header.at("tensors");
  if (tensors.size() != store.size())
    throw std::runtime_error("load_checkpoint: tensor count mismatch (file " + std::to_string(tensors.size()) +
                             ", store " + std::to_string(store.size()) + ")");
  for (std::size_t i = 0; i < store.size(); ++i) {
    const std::string name = tensors[i].at("name").get<std::string>();
    const auto shape = tensors[i].at("shape").get<std::vector<std::int64_t>>();
    if (name != store[i].name)
      throw std::runtime_error("load_checkpoint: tensor order mismatch at '" + name + "', expected '" +
                               store[i].name + "'");
    if (shape != store[i].value.shape)
      throw std::runtime_error("load_checkpoint: shape mismatch for '" + name + "'");
    auto& v = store[i].value.values;
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
    if (in.gcount() != static_cast<std::streamsize>(v.size() * sizeof(float)))
      throw std::runtime_error("load_checkpoint: truncated payload for '" + name + "'");
  }
  return header;
}

}  // namespace reacta
