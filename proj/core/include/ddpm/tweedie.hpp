#pragma once

#include <limits>

#include "ddpm/quadrature.hpp"
#include "ddpm/schedules.hpp"
#include "ddpm/targets.hpp"

namespace ddpm {

/// Centralized moments of the true posterior Q_{t-1|t}(. | x_t).
/// fourth is filled for d <= 4; fifth/sixth only for d == 1 (NaN otherwise).
struct PosteriorMoments {
  VectorXd mean;
  MatrixXd cov;
  Tensor3 third;
  Tensor4 fourth;
  double fifth = std::numeric_limits<double>::quiet_NaN();
  double sixth = std::numeric_limits<double>::quiet_NaN();
  double normalizer = std::numeric_limits<double>::quiet_NaN();  // quadrature
};

/// Moments assembled from the cumulant function of the exponential tilt:
/// kappa_2 = sigma_t^2 I + ((1-a_t)^2/a_t) grad^2 log q_t, kappa_n =
/// ((1-a_t)/sqrt(a_t))^n d^n log q_t for n >= 3, and the exact
/// cumulant-to-moment relations through order 6.
PosteriorMoments posterior_moments_formula(const Target& target,
                                           const NoiseSchedule& s, int t,
                                           const VectorXd& x_t);

/// Brute-force oracle: integrates the tilted density
/// q_{t-1}(y) N(x_t; sqrt(a_t) y, (1-a_t) I) on an adaptive grid (d <= 2;
/// moments beyond order 4 require d == 1).
PosteriorMoments posterior_moments_quadrature(const Target& target,
                                              const NoiseSchedule& s, int t,
                                              const VectorXd& x_t,
                                              const QuadratureSpec& grid = {});

/// Tilting factor: zeta = log q_{t-1}(x_prev) - log q_{t-1}(mu_t)
/// - (x_prev - mu_t)' sqrt(a_t) grad log q_t(x_t); with `accelerated`, the
/// zeta' variant subtracting (1/(2 sigma_t^2)) (x_prev-mu_t)' B_t (x_prev-mu_t)
/// where A_t = (1-a_t) grad^2 log q_t(x_t) and B_t = I - (I + A_t)^{-1}.
double zeta(const Target& target, const NoiseSchedule& s, int t,
            const VectorXd& x_t, const VectorXd& x_prev, bool accelerated);

enum class ZetaLaw { P, P_accel, Q };

/// E[zeta^power] (zeta'^power when law == P_accel) under the regular kernel
/// N(mu_t, sigma_t^2 I), the accelerated kernel N(mu_t, Sigma_t), or the
/// true posterior Q_{t-1|t}. Quadrature; d <= 2.
double expected_zeta(const Target& target, const NoiseSchedule& s, int t,
                     const VectorXd& x_t, ZetaLaw law, int power,
                     const QuadratureSpec& grid = {});

struct TiltingReport {
  // Quadrature values.
  double E_P_zeta, E_Q_zeta, E_P_zeta2, E_P_zeta3;
  double E_Paccel_zetap, E_Q_zetap;  // zeta' under P' and Q
  // Formula predictions.
  double leading_EP;    // (1/2) sigma_t^2 tr grad^2 log q_{t-1}(mu_t)
  double leading_EQ;    // (1/2) <grad^2 log q_{t-1}(mu_t), Cov_Q>_F
  double leading_diff;  // dominant third-derivative product term
  // residual = quadrature - prediction.
  double residual_EP, residual_EQ, residual_diff;
};

TiltingReport leading_order_report(const Target& target, const NoiseSchedule& s,
                                   int t, const VectorXd& x_t,
                                   const QuadratureSpec& grid = {});

/// Isserlis fourth-moment product formula for a centered Gaussian.
inline double isserlis_fourth(const MatrixXd& cov, int i, int j, int k, int l) {
  return cov(i, j) * cov(k, l) + cov(i, k) * cov(j, l) + cov(i, l) * cov(j, k);
}

}  // namespace ddpm
