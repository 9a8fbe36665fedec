#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "reacta/autodiff.hpp"

namespace reacta {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Moment accumulators mirror the parameter shapes, aligned with ParamStore order.
struct AdamState {
  std::int64_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  static AdamState init(const ParamStore& store) {
    AdamState s;
    for (std::size_t i = 0; i < store.size(); ++i) {
      s.m.push_back(Tensor(store[i].value.shape));
      s.v.push_back(Tensor(store[i].value.shape));
    }
    return s;
  }
};

// Standard Adam update with bias correction, consuming Param::grad.
inline void adam_step(ParamStore& store, AdamState& state, const AdamConfig& cfg) {
  if (state.m.size() != store.size())
    throw std::invalid_argument("adam_step: state not initialized for this store");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < store.size(); ++i) {
    Param& p = store[i];
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    if (m.shape != p.value.shape)
      throw std::invalid_argument("adam_step: accumulator shape mismatch for " + p.name);
    for (std::size_t k = 0; k < p.value.values.size(); ++k) {
      const double g = static_cast<double>(p.grad.values[k]);
      const double mk = cfg.beta1 * static_cast<double>(m.values[k]) + (1.0 - cfg.beta1) * g;
      const double vk = cfg.beta2 * static_cast<double>(v.values[k]) + (1.0 - cfg.beta2) * g * g;
      m.values[k] = static_cast<float>(mk);
      v.values[k] = static_cast<float>(vk);
      const double mhat = mk / bc1;
      const double vhat = vk / bc2;
      p.value.values[k] = static_cast<float>(static_cast<double>(p.value.values[k]) -
                                             cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

}  // namespace reacta
