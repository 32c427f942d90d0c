#pragma once

#include <cstdint>
#include <functional>
#include <memory>

#include "ddpm/rng.hpp"
#include "ddpm/schedules.hpp"
#include "ddpm/targets.hpp"

namespace ddpm {

enum class SamplerKind { regular, accelerated };
enum class EstimatorKind { exact, perturbed, fitted };
enum class PerturbMode { additive_gaussian, systematic_bias };

/// Frozen smooth perturbation field for score estimates: a random-Fourier
/// feature map with approximately unit mean-squared norm under the forward
/// marginals, scaled to a requested MSE. Deterministic in x given the stream.
struct ScorePerturbation {
  double scale = 0.0;  // sqrt(mse)
  Eigen::MatrixXd omega;  // d x d frequency rows
  Eigen::VectorXd phase;  // d

  static ScorePerturbation make(int dim, double mse, std::uint64_t stream);
  Eigen::VectorXd eval(const Eigen::VectorXd& x) const;
};

/// Same idea for the Hessian estimate: a frozen symmetric matrix field with
/// approximately unit Frobenius MSE, scaled to a requested MSE.
struct HessianPerturbation {
  double scale = 0.0;
  Eigen::MatrixXd omega;  // one frequency row per upper-triangular entry
  Eigen::VectorXd phase;

  static HessianPerturbation make(int dim, double mse, std::uint64_t stream);
  Eigen::MatrixXd eval(const Eigen::VectorXd& x) const;
};

struct ReverseSamplerSpec {
  SamplerKind kind = SamplerKind::regular;
  EstimatorKind estimator = EstimatorKind::exact;
  PerturbMode perturb_mode = PerturbMode::additive_gaussian;
  double score_mse = 0.0;    // eps^2 (per-step, flat profile)
  double hessian_mse = 0.0;  // eps_H^2
  Eigen::VectorXd score_bias;  // systematic_bias mode; empty = derive from seed
  std::uint64_t perturb_seed = 0;
  double psd_floor = 1e-6;   // relative to sigma_t^2
  int stop_at = 0;           // 0 or 1
  // Fitted estimators, indexed by time step (estimators module plugs in here).
  std::function<Eigen::VectorXd(int t, const Eigen::VectorXd&)> fitted_score;
  std::function<Eigen::MatrixXd(int t, const Eigen::VectorXd&)> fitted_hessian;

  void validate() const;
};

struct SampleBatch {
  int t = 0;
  Eigen::MatrixXd samples;  // n x d
  RngLineage lineage;
};

/// One draw from Q_0.
Eigen::VectorXd draw_origin(const Target& target, std::mt19937_64& eng);

Eigen::VectorXd standard_normal_vector(std::mt19937_64& eng, int d);

/// One-shot draws from Q_t: x = sqrt(abar_t) x_0 + sqrt(1-abar_t) w.
SampleBatch simulate_forward(const Target& target, const NoiseSchedule& s,
                             int t, long n, std::uint64_t seed);

struct ReverseKernel {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  int clip_events = 0;  // eigenvalues raised to the PSD floor
};

/// Mean and covariance of the reverse transition at step t evaluated at x_t.
/// `oracle_t` must be the marginal oracle at level abar_t.
ReverseKernel reverse_kernel(const ReverseSamplerSpec& spec,
                             const MarginalOracle& oracle_t,
                             const NoiseSchedule& s, int t,
                             const Eigen::VectorXd& x_t);

struct ReverseRunStats {
  long clip_events = 0;
};

/// Runs the reverse chain from x_T ~ N(0, I) down to t = stop_at. Chains are
/// independent across samples and parallelized over them; per-sample RNG
/// streams are derived from (seed, sample index) so results do not depend on
/// thread count.
SampleBatch run_reverse(const ReverseSamplerSpec& spec, const Target& target,
                        const NoiseSchedule& s, long n, std::uint64_t seed,
                        ReverseRunStats* stats = nullptr);

/// Wraps the oracle score in a frozen perturbation of prescribed MSE.
/// mse = 0 returns the exact score unchanged.
std::function<Eigen::VectorXd(const Eigen::VectorXd&)> make_perturbed_score(
    MarginalOracle oracle, double mse_target, PerturbMode mode,
    std::uint64_t seed);

}  // namespace ddpm
