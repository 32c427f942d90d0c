#pragma once

#include <Eigen/Dense>
#include <array>
#include <optional>
#include <stdexcept>
#include <variant>
#include <vector>

#include "ddpm/tensor3.hpp"

namespace ddpm {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Thrown when an operation is called outside its contract (dimension
/// mismatches, invalid parameters, undefined densities).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Mixture of Gaussians in R^d. Weights live on the probability simplex;
/// covariances are repaired to a minimum eigenvalue of 1e-10 at construction.
struct GaussianMixture {
  int dim = 0;
  VectorXd weights;
  std::vector<VectorXd> means;
  std::vector<MatrixXd> covs;

  static constexpr double kEigenFloor = 1e-10;

  /// Validates simplex/symmetry invariants and applies the eigenvalue floor.
  static GaussianMixture make(int dim, VectorXd weights,
                              std::vector<VectorXd> means,
                              std::vector<MatrixXd> covs);

  static GaussianMixture standard_normal(int dim);

  int component_count() const { return static_cast<int>(weights.size()); }
  double second_moment_trace() const;  // E||X_0||^2
  MatrixXd second_moment() const;      // E[X_0 X_0^T]
};

/// Weighted point cloud in R^d (non-smooth target with bounded support).
struct AtomCloud {
  int dim = 0;
  std::vector<VectorXd> atoms;
  VectorXd weights;
  std::optional<double> radius_bound;  // R * sqrt(d)

  static AtomCloud make(int dim, std::vector<VectorXd> atoms, VectorXd weights,
                        std::optional<double> radius_bound = std::nullopt);

  int atom_count() const { return static_cast<int>(weights.size()); }
  double second_moment_trace() const;
  MatrixXd second_moment() const;
};

using Target = std::variant<GaussianMixture, AtomCloud>;

int target_dim(const Target& t);
double target_second_moment_trace(const Target& t);
MatrixXd target_second_moment(const Target& t);

/// Exact oracle for the forward marginal q at aggregated retention abar:
/// the law of sqrt(abar) X_0 + sqrt(1-abar) N(0, I).
///
/// abar is a raw real in (0, 1]; the oracle is schedule-agnostic.
class MarginalOracle {
 public:
  MarginalOracle(Target target, double abar);

  const Target& target() const { return target_; }
  double abar() const { return abar_; }
  int dim() const { return dim_; }

  /// log q(x) by log-sum-exp over the component Gaussians.
  double log_density(const VectorXd& x) const;

  struct Derivatives {
    VectorXd score;    // grad log q
    MatrixXd hessian;  // grad^2 log q (symmetric)
    Tensor3 third;     // third partials, fully symmetric
  };

  /// Score, Hessian and third-derivative tensor of log q, evaluated through
  /// the posterior-over-origin moment identities (one code path for both
  /// target families).
  Derivatives derivatives(const VectorXd& x) const;

  struct PosteriorOriginMoments {
    VectorXd mean;         // E[X_0 | x]
    MatrixXd central_cov;  // Cov[X_0 | x]
    Tensor3 central_third;
    VectorXd responsibilities;  // per component / atom
  };

  /// Moments of the tilted posterior over X_0 given the noisy observation x.
  /// Requires abar in (0, 1).
  PosteriorOriginMoments posterior_origin(const VectorXd& x) const;

  /// Fourth partial derivatives of log q, via the fourth cumulant of the
  /// latent posterior (same smoothing route as derivatives()).
  Tensor4 log_density_fourth(const VectorXd& x) const;

  /// Derivatives of log q up to `max_order` (<= 8) for 1D targets, computed
  /// from normalized density-derivative ratios via the cumulant recurrence.
  /// Index k of the result is d^k/dx^k log q(x); index 0 is log q itself.
  std::vector<double> log_density_derivatives_1d(double x, int max_order) const;

  /// Component parameters of q as a finite Gaussian mixture:
  /// mean_at(n) = sqrt(abar) * (mu_n or atom_n),
  /// cov_at(n)  = abar*Sigma_n + (1-abar) I  (mixture) or (1-abar) I (atoms).
  int component_count() const;
  VectorXd component_mean(int n) const;
  MatrixXd component_cov(int n) const;
  double component_log_weight(int n) const;

 private:
  struct Component {
    double log_w;
    VectorXd mean;          // component mean of q
    MatrixXd cov;           // component covariance of q
    MatrixXd cov_inv;
    double log_norm;        // -1/2 log det(2 pi cov)
    VectorXd origin;        // mu_{0,n} or atom
    MatrixXd origin_cov;    // Sigma_{0,n} or 0
  };

  VectorXd log_responsibilities(const VectorXd& x) const;
  void check_dim(const VectorXd& x) const;

  // Posterior moments of the latent y where q(x) = E[N(x; y, eps I)] and
  // y = component mean + latent Gaussian with covariance cov - eps I.
  struct LatentMoments {
    VectorXd mean;
    MatrixXd cov;
    Tensor3 third;
    Tensor4 fourth_central;  // filled only when requested
  };
  LatentMoments latent_posterior(const VectorXd& x, double eps,
                                 bool with_fourth = false) const;
  double smoothing_eps() const;

  Target target_;
  double abar_;
  int dim_;
  bool atoms_;
  std::vector<Component> comps_;
};

}  // namespace ddpm
