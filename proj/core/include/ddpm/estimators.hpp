#pragma once

#include <functional>
#include <memory>
#include <string>

#include "ddpm/samplers.hpp"
#include "ddpm/schedules.hpp"
#include "ddpm/targets.hpp"

namespace ddpm {

/// Feature map for the linear function classes used by score / Hessian
/// matching. Linear-in-feature models keep the population objectives
/// computable in closed form or by quadrature.
struct FeatureBasis {
  std::vector<std::function<double(const VectorXd&)>> phi;
  std::vector<std::string> names;

  int size() const { return static_cast<int>(phi.size()); }
  VectorXd eval(const VectorXd& x) const;

  /// {1, x_i, x_i x_j (i <= j)}.
  static FeatureBasis poly2(int dim);
  /// poly2 plus per-component posterior responsibilities of the marginal at
  /// level abar (useful when the target family is known).
  static FeatureBasis responsibility(const Target& target, double abar);
};

struct FittedEstimator {
  enum class Kind { score, v_matrix };
  Kind kind = Kind::score;
  int dim = 0;
  std::shared_ptr<const FeatureBasis> basis;
  // K x d (score) or K x d(d+1)/2 upper-triangular columns (v_matrix).
  MatrixXd coef;
  // Diagnostics.
  double residual_mse = 0.0;  // in-sample regression MSE
  double realized_mse = 0.0;  // MC distance to the exact oracle
  long n_samples = 0;
  bool ridge_used = false;

  VectorXd score_at(const VectorXd& x) const;
  MatrixXd v_at(const VectorXd& x) const;  // symmetrized on read
};

/// Denoising score matching: least squares of the feature-linear model
/// against -w / sqrt(1 - abar_t) over forward samples.
FittedEstimator fit_score(const Target& target, const NoiseSchedule& s, int t,
                          const FeatureBasis& basis, long n_samples,
                          std::uint64_t seed);

/// Hessian matching: regress v(x_t) onto w w^T / (1 - abar_t) in Frobenius
/// norm. The population minimizer is grad^2 q_t / q_t + I/(1 - abar_t).
FittedEstimator fit_v(const Target& target, const NoiseSchedule& s, int t,
                      const FeatureBasis& basis, long n_samples,
                      std::uint64_t seed);

/// H_t(x) = v_t(x) - I/(1 - abar_t) - s_t(x) s_t(x)^T, symmetrized.
std::function<MatrixXd(const VectorXd&)> assemble_H(const FittedEstimator& v,
                                                    const FittedEstimator& s,
                                                    const NoiseSchedule& sched,
                                                    int t);

struct MatchingReport {
  // max over theta pairs of |DeltaLoss(theta_1) - DeltaLoss(theta_2)| where
  // DeltaLoss = (matching objective) - (direct regression objective).
  double max_discrepancy = 0.0;
  bool closed_form = false;  // Gaussian closed-form path used
  int n_thetas = 0;
};

/// Verifies that the Hessian-matching and direct-regression objectives differ
/// by a theta-independent constant. Closed form for a single-Gaussian 1D
/// target with a polynomial basis, quadrature for 1D atom clouds.
MatchingReport matching_identity_check(const Target& target,
                                       const NoiseSchedule& s, int t,
                                       const FeatureBasis& basis, int n_thetas,
                                       std::uint64_t seed);

}  // namespace ddpm
