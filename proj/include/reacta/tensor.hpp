#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "reacta/rng.hpp"

namespace reacta {

// Dense row-major float32 tensor. Shapes are kept as explicit dimension
// lists; 2-D is the common case (matrices, row vectors as 1 x d).
struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<float> values;

  Tensor() = default;

  explicit Tensor(std::vector<std::int64_t> s)
      : shape(std::move(s)), values(static_cast<std::size_t>(numel_of(shape)), 0.0f) {}

  Tensor(std::vector<std::int64_t> s, std::vector<float> v)
      : shape(std::move(s)), values(std::move(v)) {
    if (static_cast<std::int64_t>(values.size()) != numel_of(shape))
      throw std::invalid_argument("Tensor: value count does not match shape product");
  }

  static std::int64_t numel_of(const std::vector<std::int64_t>& s) {
    std::int64_t n = 1;
    for (auto d : s) {
      if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
      n *= d;
    }
    return n;
  }

  std::int64_t numel() const { return static_cast<std::int64_t>(values.size()); }

  // 2-D accessors; a 1-D tensor is treated as a single row
  std::int64_t rows() const { return shape.size() >= 2 ? shape[0] : 1; }
  std::int64_t cols() const {
    if (shape.empty()) return 0;
    return shape.size() >= 2 ? shape[1] : shape[0];
  }

  float& at(std::int64_t r, std::int64_t c) { return values[static_cast<std::size_t>(r * cols() + c)]; }
  float at(std::int64_t r, std::int64_t c) const { return values[static_cast<std::size_t>(r * cols() + c)]; }

  bool all_finite() const {
    for (float v : values)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

inline Tensor zeros(std::vector<std::int64_t> shape) { return Tensor(std::move(shape)); }

inline Tensor full(std::vector<std::int64_t> shape, float value) {
  Tensor t(std::move(shape));
  for (auto& v : t.values) v = value;
  return t;
}

// uniform in +/- sqrt(6 / (fan_in + fan_out))
inline Tensor glorot_uniform(std::int64_t fan_in, std::int64_t fan_out, Rng& rng) {
  Tensor t({fan_in, fan_out});
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : t.values) v = static_cast<float>(rng.uniform(-limit, limit));
  return t;
}

}  // namespace reacta
