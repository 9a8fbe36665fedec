#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "reacta/autodiff.hpp"

namespace reacta {

struct GradCheckOptions {
  double h = 1e-3;
  double tolerance = 1e-4;
  // self-test hook: scales the analytic gradient before comparison, so a
  // deliberately wrong gradient (e.g. 1.01) must make the check fail
  double corrupt_analytic = 1.0;
};

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> per_param;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

// Compares reverse-mode gradients against central finite differences.
// `build` must construct the scalar loss on a fresh tape from the current
// parameter values; it is re-invoked for every perturbed evaluation.
// Relative error uses |ga - gf| / max(1e-6, |ga| + |gf|) so parameters with
// genuinely tiny gradients are not penalized by the floor.
template <typename BuildFn>
GradCheckReport check_gradients(BuildFn&& build, const std::vector<Param*>& params,
                                GradCheckOptions opt = {}) {
  GradCheckReport report;
  report.tolerance = opt.tolerance;

  std::vector<std::vector<double>> analytic;
  {
    ad::Tape tape;
    ad::Var loss = build(tape);
    tape.backward(loss);
    for (Param* p : params) analytic.push_back(tape.grad_of(*p));
  }

  auto eval = [&]() {
    ad::Tape tape;
    return tape.value_scalar(build(tape));
  };

  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Param& p = *params[pi];
    GradCheckEntry entry{p.name, 0.0};
    for (std::size_t i = 0; i < p.value.values.size(); ++i) {
      const float saved = p.value.values[i];
      const float hi = static_cast<float>(static_cast<double>(saved) + opt.h);
      const float lo = static_cast<float>(static_cast<double>(saved) - opt.h);
      p.value.values[i] = hi;
      const double f_plus = eval();
      p.value.values[i] = lo;
      const double f_minus = eval();
      p.value.values[i] = saved;
      // effective step from the actually stored float32 endpoints
      const double denom = static_cast<double>(hi) - static_cast<double>(lo);
      const double g_fd = (f_plus - f_minus) / denom;
      const double g_ad = analytic[pi][i] * opt.corrupt_analytic;
      const double rel = std::abs(g_ad - g_fd) / std::max(1e-6, std::abs(g_ad) + std::abs(g_fd));
      entry.max_rel_err = std::max(entry.max_rel_err, rel);
    }
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.per_param.push_back(std::move(entry));
  }
  report.pass = report.max_rel_err < opt.tolerance;
  return report;
}

}  // namespace reacta
