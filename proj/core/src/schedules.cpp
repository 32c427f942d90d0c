#include "ddpm/schedules.hpp"

#include <algorithm>
#include <cmath>

#include "ddpm/targets.hpp"

namespace ddpm {

namespace {

void accumulate_abar(NoiseSchedule& s) {
  s.abar_arr.resize(s.alpha.size());
  double log_abar = 0.0;
  for (size_t i = 0; i < s.alpha.size(); ++i) {
    log_abar += std::log(s.alpha[i]);
    s.abar_arr[i] = std::exp(log_abar);
  }
}

}  // namespace

NoiseSchedule make_constant(int T, double c) {
  if (T < 2) throw ContractError("make_constant: T must be >= 2");
  const double step = c * std::log(static_cast<double>(T)) / T;
  if (!(step > 0.0)) throw ContractError("make_constant: c must be positive");
  if (step >= 1.0) throw ContractError("make_constant: step size exceeds unity");
  NoiseSchedule s;
  s.T = T;
  s.kind = "constant";
  s.c = c;
  s.alpha.assign(T, 1.0 - step);
  accumulate_abar(s);
  if (c <= 1.0)
    s.warnings.push_back("constant schedule with c <= 1: regular-sampler "
                         "convergence conditions not met");
  else if (c <= 2.0)
    s.warnings.push_back("constant schedule with c <= 2: accelerated-sampler "
                         "convergence conditions not met");
  return s;
}

NoiseSchedule make_li(int T, double c, double delta) {
  if (T < 2) throw ContractError("make_li: T must be >= 2");
  if (!(c > 2.0)) throw ContractError("make_li: requires c > 2");
  if (!(delta > std::exp(-c) && delta < 1.0))
    throw ContractError("make_li: delta must lie in (e^{-c}, 1)");
  const double step = c * std::log(static_cast<double>(T)) / T;
  NoiseSchedule s;
  s.T = T;
  s.kind = "li";
  s.c = c;
  s.delta = delta;
  s.alpha.resize(T);
  s.alpha[0] = 1.0 - delta;
  for (int t = 2; t <= T; ++t) {
    const double growth = delta * std::pow(1.0 + step, t);
    s.alpha[t - 1] = 1.0 - step * std::min(growth, 1.0);
  }
  accumulate_abar(s);
  if (c <= 4.0)
    s.warnings.push_back("li schedule with c <= 4: accelerated-sampler "
                         "convergence conditions not met");
  return s;
}

ScheduleDiagnostics diagnostics(const NoiseSchedule& s, int p) {
  if (p < 1) throw ContractError("diagnostics: p must be >= 1");
  if (s.T < 2) throw ContractError("diagnostics: T must be >= 2");
  ScheduleDiagnostics d;
  d.abar_T = s.abar(s.T);
  d.max_step = 0.0;
  d.max_ratio = 0.0;
  for (int t = 1; t <= s.T; ++t)
    d.max_step = std::max(d.max_step, 1.0 - s.a(t));
  for (int t = 2; t <= s.T; ++t) {
    const double denom = std::pow(1.0 - s.abar(t - 1), p);
    d.max_ratio = std::max(d.max_ratio, (1.0 - s.a(t)) / denom);
  }
  return d;
}

}  // namespace ddpm
