#pragma once

#include <string>
#include <vector>

#include "ddpm/quadrature.hpp"
#include "ddpm/samplers.hpp"
#include "ddpm/schedules.hpp"
#include "ddpm/targets.hpp"

namespace ddpm {

/// Marginal ledger of the reverse chain for a single-Gaussian target, where
/// the affine score keeps every marginal Gaussian.
struct GaussianChainState {
  int stop_at = 0;
  std::vector<VectorXd> means;  // index 0 = t = T, last = t = stop_at
  std::vector<MatrixXd> covs;
};

struct KLBreakdown {
  double init_error = 0.0;  // exact E_{Q_T} log(q_T / p_T) = KL(Q_T || P_T)
  double init_bound = 0.0;  // (1/2) E||X_0||^2 abar_T
  double est_error = 0.0;
  std::vector<double> rev_error_per_step;  // index 0 = t = stop_at+1
  double total = 0.0;        // init_error + est_error + sum rev
  double bound_total = 0.0;  // init_bound + est_error + sum rev
};

struct GaussianChainResult {
  GaussianChainState state;
  double kl_exact = 0.0;  // exact KL(Q_stop || hat-P_stop)
  KLBreakdown breakdown;
};

/// Exact (quadrature-free) propagation of the reverse chain for a
/// single-Gaussian target. Estimator must be exact or a constant score bias
/// (the affine cases that preserve Gaussianity); anything else throws
/// "Gaussian closure broken".
GaussianChainResult gaussian_chain(const Target& target, const NoiseSchedule& s,
                                   const ReverseSamplerSpec& spec);

/// Three-term KL decomposition by adaptive quadrature for 1D targets:
/// initialization term, estimation term, and per-step reverse errors.
KLBreakdown kl_decomposition_quadrature(const Target& target,
                                        const NoiseSchedule& s,
                                        const ReverseSamplerSpec& spec,
                                        const QuadratureSpec& grid = {});

struct InitError {
  double exact = 0.0;
  double bound = 0.0;
};

/// KL(Q_T || N(0, I)) exactly (closed form for one-component targets,
/// quadrature for 1D) next to the (1/2) E||X_0||^2 abar_T bound.
InitError init_error(const Target& target, const NoiseSchedule& s);

struct W2Check {
  double mc_estimate = 0.0;
  double bound = 0.0;
  long n_samples = 0;
};

/// Synchronous-coupling MC estimate of E||X_1 - X_0||^2 against the
/// (1 - alpha_1)(M_2 + 1) d bound, M_2 = max eigenvalue of E[X_0 X_0^T].
W2Check coupling_w2_check(const Target& target, double alpha_1, long n_samples,
                          std::uint64_t seed);

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::vector<double> T_values;
  std::vector<double> values;
  std::vector<std::string> warnings;
};

/// OLS of log(value) on log(T). Nonpositive values are excluded with a
/// warning; fewer than 2 distinct abscissae is an error.
RateFit fit_rate(const std::vector<std::pair<double, double>>& points);

double gaussian_kl(const VectorXd& m0, const MatrixXd& S0, const VectorXd& m1,
                   const MatrixXd& S1);

/// Pinsker: TV <= sqrt(kl/2), capped at 1.
double pinsker_tv(double kl);

}  // namespace ddpm
