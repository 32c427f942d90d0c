#pragma once

#include <string>
#include <vector>

namespace ddpm {

/// Per-step retention factors alpha_t and aggregates abar_t = prod alpha_i,
/// t = 1..T (index 0 of the arrays is t = 1). abar is accumulated in log
/// space; abar(0) is defined as 1.
struct NoiseSchedule {
  int T = 0;
  std::vector<double> alpha;     // size T
  std::vector<double> abar_arr;  // size T
  std::string kind;              // "constant" or "li"
  double c = 0.0;
  double delta = 0.0;
  std::vector<std::string> warnings;

  double a(int t) const { return alpha.at(t - 1); }        // alpha_t, t>=1
  double abar(int t) const {                               // abar_t, t>=0
    return t == 0 ? 1.0 : abar_arr.at(t - 1);
  }
  double sigma2(int t) const {                             // (1-a_t)/a_t
    const double at = a(t);
    return (1.0 - at) / at;
  }
};

/// Constant schedule: 1 - alpha_t = c log T / T for all t. Warns (does not
/// error) when c <= 1 (regular sampler) since the accelerated chain wants
/// c > 2; errors only if the step size reaches 1.
NoiseSchedule make_constant(int T, double c);

/// Geometric warm-up schedule: 1 - alpha_1 = delta and, for t >= 2,
/// 1 - alpha_t = (c log T / T) * min{ delta (1 + c log T / T)^t, 1 }.
/// Requires c > 2 and delta in (e^{-c}, 1).
NoiseSchedule make_li(int T, double c, double delta);

struct ScheduleDiagnostics {
  double max_ratio;  // max_{t>=2} (1-alpha_t) / (1-abar_{t-1})^p
  double abar_T;
  double max_step;   // max_t (1-alpha_t)
};

ScheduleDiagnostics diagnostics(const NoiseSchedule& s, int p);

}  // namespace ddpm
