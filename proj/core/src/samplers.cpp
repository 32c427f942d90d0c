#include "ddpm/samplers.hpp"

#include <cmath>

#include "ddpm/parallel.hpp"

namespace ddpm {

VectorXd standard_normal_vector(std::mt19937_64& eng, int d) {
  std::normal_distribution<double> nd(0.0, 1.0);
  VectorXd z(d);
  for (int i = 0; i < d; ++i) z[i] = nd(eng);
  return z;
}

VectorXd draw_origin(const Target& target, std::mt19937_64& eng) {
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  if (const auto* g = std::get_if<GaussianMixture>(&target)) {
    double u = ud(eng);
    int n = 0;
    for (; n + 1 < g->component_count(); ++n) {
      u -= g->weights[n];
      if (u <= 0.0) break;
    }
    Eigen::LLT<MatrixXd> llt(g->covs[n]);
    return g->means[n] + llt.matrixL() * standard_normal_vector(eng, g->dim);
  }
  const auto& c = std::get<AtomCloud>(target);
  double u = ud(eng);
  int n = 0;
  for (; n + 1 < c.atom_count(); ++n) {
    u -= c.weights[n];
    if (u <= 0.0) break;
  }
  return c.atoms[n];
}

namespace {

VectorXd unit_vector_from_stream(int d, std::uint64_t stream) {
  auto eng = make_engine(stream);
  VectorXd v = standard_normal_vector(eng, d);
  double nrm = v.norm();
  return nrm > 0 ? VectorXd(v / nrm) : VectorXd::Unit(d, 0);
}

}  // namespace

ScorePerturbation ScorePerturbation::make(int dim, double mse,
                                          std::uint64_t stream) {
  ScorePerturbation p;
  p.scale = std::sqrt(mse);
  auto eng = make_engine(stream);
  std::normal_distribution<double> nd(0.0, 2.0);  // frequency std 2
  std::uniform_real_distribution<double> up(0.0, 2.0 * M_PI);
  p.omega = Eigen::MatrixXd(dim, dim);
  p.phase = Eigen::VectorXd(dim);
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < dim; ++j) p.omega(i, j) = nd(eng);
    p.phase[i] = up(eng);
  }
  return p;
}

Eigen::VectorXd ScorePerturbation::eval(const Eigen::VectorXd& x) const {
  const int d = static_cast<int>(phase.size());
  Eigen::VectorXd g(d);
  // sqrt(2) cos(omega_i . x + phi_i) has unit second moment once the phase
  // averages out; dividing by sqrt(d) makes E||g||^2 ~= 1.
  const double amp = std::sqrt(2.0 / d);
  for (int i = 0; i < d; ++i)
    g[i] = amp * std::cos(omega.row(i).dot(x) + phase[i]);
  return scale * g;
}

HessianPerturbation HessianPerturbation::make(int dim, double mse,
                                              std::uint64_t stream) {
  HessianPerturbation p;
  p.scale = std::sqrt(mse);
  const int m = dim * (dim + 1) / 2;
  auto eng = make_engine(stream);
  std::normal_distribution<double> nd(0.0, 2.0);
  std::uniform_real_distribution<double> up(0.0, 2.0 * M_PI);
  p.omega = Eigen::MatrixXd(m, dim);
  p.phase = Eigen::VectorXd(m);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < dim; ++j) p.omega(i, j) = nd(eng);
    p.phase[i] = up(eng);
  }
  return p;
}

Eigen::MatrixXd HessianPerturbation::eval(const Eigen::VectorXd& x) const {
  const int d = static_cast<int>(x.size());
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(d, d);
  // Off-diagonal entries appear twice in the Frobenius norm, so weight them
  // by 1/sqrt(2) to keep E||G||_F^2 ~= 1.
  const int m = d * (d + 1) / 2;
  const double amp = std::sqrt(2.0 / m);
  int r = 0;
  for (int i = 0; i < d; ++i) {
    for (int j = i; j < d; ++j, ++r) {
      double v = amp * std::cos(omega.row(r).dot(x) + phase[r]);
      if (i != j) v /= std::sqrt(2.0);
      g(i, j) = v;
      g(j, i) = v;
    }
  }
  return scale * g;
}

void ReverseSamplerSpec::validate() const {
  if (score_mse < 0.0 || hessian_mse < 0.0)
    throw ContractError("ReverseSamplerSpec: perturbation MSEs must be >= 0");
  if (estimator == EstimatorKind::perturbed) {
    if (kind == SamplerKind::accelerated && !(psd_floor > 0.0))
      throw ContractError(
          "ReverseSamplerSpec: accelerated + perturbed requires psd_floor > 0");
  }
  if (estimator == EstimatorKind::fitted) {
    if (!fitted_score)
      throw ContractError("ReverseSamplerSpec: fitted estimator missing score");
    if (kind == SamplerKind::accelerated && !fitted_hessian)
      throw ContractError(
          "ReverseSamplerSpec: accelerated fitted estimator missing Hessian");
  }
  if (stop_at != 0 && stop_at != 1)
    throw ContractError("ReverseSamplerSpec: stop_at must be 0 or 1");
  if (psd_floor < 0.0)
    throw ContractError("ReverseSamplerSpec: psd_floor must be >= 0");
}

SampleBatch simulate_forward(const Target& target, const NoiseSchedule& s,
                             int t, long n, std::uint64_t seed) {
  if (t < 0 || t > s.T)
    throw ContractError("simulate_forward: t out of range");
  const int d = target_dim(target);
  const double abar = s.abar(t);
  const double srt = std::sqrt(abar);
  const double noise = std::sqrt(1.0 - abar);
  SampleBatch batch;
  batch.t = t;
  batch.lineage = RngLineage::derive(seed, static_cast<std::uint64_t>(s.T),
                                     static_cast<std::uint64_t>(t));
  batch.samples = Eigen::MatrixXd(n, d);
  parallel_for(n, [&](long i) {
    auto eng = make_engine(
        derive_stream(batch.lineage.stream, static_cast<std::uint64_t>(i)));
    VectorXd x0 = draw_origin(target, eng);
    VectorXd x = srt * x0;
    if (noise > 0.0) x += noise * standard_normal_vector(eng, d);
    batch.samples.row(i) = x.transpose();
  });
  return batch;
}

ReverseKernel reverse_kernel(const ReverseSamplerSpec& spec,
                             const MarginalOracle& oracle_t,
                             const NoiseSchedule& s, int t,
                             const Eigen::VectorXd& x_t) {
  if (t < 1 || t > s.T) throw ContractError("reverse_kernel: t out of range");
  const int d = oracle_t.dim();
  const double at = s.a(t);
  const double srt = std::sqrt(at);
  const double sig2 = s.sigma2(t);
  const bool need_hessian = spec.kind == SamplerKind::accelerated;

  VectorXd score;
  MatrixXd hessian;
  switch (spec.estimator) {
    case EstimatorKind::exact: {
      if (need_hessian) {
        auto der = oracle_t.derivatives(x_t);
        score = der.score;
        hessian = der.hessian;
      } else {
        auto pm = oracle_t.posterior_origin(x_t);
        score = (std::sqrt(oracle_t.abar()) * pm.mean - x_t) /
                (1.0 - oracle_t.abar());
      }
      break;
    }
    case EstimatorKind::perturbed: {
      auto der = oracle_t.derivatives(x_t);
      score = der.score;
      if (spec.perturb_mode == PerturbMode::systematic_bias) {
        VectorXd b = spec.score_bias;
        if (b.size() == 0)
          b = std::sqrt(spec.score_mse) *
              unit_vector_from_stream(d, derive_stream(spec.perturb_seed, 1));
        score += b;
      } else if (spec.score_mse > 0.0) {
        auto field = ScorePerturbation::make(
            d, spec.score_mse,
            derive_stream(spec.perturb_seed, 2, static_cast<std::uint64_t>(t)));
        score += field.eval(x_t);
      }
      if (need_hessian) {
        hessian = der.hessian;
        if (spec.hessian_mse > 0.0) {
          auto field = HessianPerturbation::make(
              d, spec.hessian_mse,
              derive_stream(spec.perturb_seed, 3,
                            static_cast<std::uint64_t>(t)));
          hessian += field.eval(x_t);
        }
      }
      break;
    }
    case EstimatorKind::fitted: {
      score = spec.fitted_score(t, x_t);
      if (need_hessian) hessian = spec.fitted_hessian(t, x_t);
      break;
    }
  }
  if (!score.allFinite())
    throw std::runtime_error("reverse_kernel: non-finite score at t=" +
                             std::to_string(t));

  ReverseKernel k;
  k.mean = (x_t + (1.0 - at) * score) / srt;
  if (spec.kind == SamplerKind::regular) {
    k.cov = sig2 * MatrixXd::Identity(d, d);
    return k;
  }
  if (!hessian.allFinite())
    throw std::runtime_error("reverse_kernel: non-finite Hessian at t=" +
                             std::to_string(t));
  MatrixXd sigma = sig2 * (MatrixXd::Identity(d, d) + (1.0 - at) * hessian);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (sigma + sigma.transpose()));
  const double floor = spec.psd_floor * sig2;
  VectorXd ev = es.eigenvalues();
  for (int i = 0; i < d; ++i) {
    if (ev[i] < floor) {
      ev[i] = floor;
      ++k.clip_events;
    }
  }
  k.cov = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  return k;
}

SampleBatch run_reverse(const ReverseSamplerSpec& spec, const Target& target,
                        const NoiseSchedule& s, long n, std::uint64_t seed,
                        ReverseRunStats* stats) {
  spec.validate();
  if (std::holds_alternative<AtomCloud>(target) && spec.stop_at == 0)
    throw ContractError("run_reverse: early stopping required for atom targets");
  const int d = target_dim(target);

  std::vector<MarginalOracle> oracles;  // oracle at t = stop_at+1 .. T
  oracles.reserve(s.T - spec.stop_at);
  for (int t = spec.stop_at + 1; t <= s.T; ++t)
    oracles.emplace_back(target, s.abar(t));
  auto oracle_at = [&](int t) -> const MarginalOracle& {
    return oracles[t - spec.stop_at - 1];
  };

  SampleBatch batch;
  batch.t = spec.stop_at;
  batch.lineage = RngLineage::derive(seed, static_cast<std::uint64_t>(s.T),
                                     static_cast<std::uint64_t>(spec.stop_at));
  batch.samples = Eigen::MatrixXd(n, d);
  std::vector<long> clip_counts(static_cast<size_t>(n), 0);
  parallel_for(n, [&](long i) {
    auto eng = make_engine(
        derive_stream(batch.lineage.stream, static_cast<std::uint64_t>(i)));
    VectorXd x = standard_normal_vector(eng, d);
    for (int t = s.T; t > spec.stop_at; --t) {
      ReverseKernel k = reverse_kernel(spec, oracle_at(t), s, t, x);
      clip_counts[static_cast<size_t>(i)] += k.clip_events;
      VectorXd z = standard_normal_vector(eng, d);
      if (spec.kind == SamplerKind::regular) {
        x = k.mean + std::sqrt(s.sigma2(t)) * z;
      } else {
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(k.cov);
        VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
        x = k.mean + es.eigenvectors() * ev.asDiagonal() *
                         (es.eigenvectors().transpose() * z);
      }
    }
    batch.samples.row(i) = x.transpose();
  });
  if (stats) {
    stats->clip_events = 0;
    for (long c : clip_counts) stats->clip_events += c;
  }
  return batch;
}

std::function<Eigen::VectorXd(const Eigen::VectorXd&)> make_perturbed_score(
    MarginalOracle oracle, double mse_target, PerturbMode mode,
    std::uint64_t seed) {
  if (mse_target < 0.0)
    throw ContractError("make_perturbed_score: mse_target must be >= 0");
  auto shared = std::make_shared<MarginalOracle>(std::move(oracle));
  auto exact = [shared](const Eigen::VectorXd& x) {
    auto pm = shared->posterior_origin(x);
    return Eigen::VectorXd(
        (std::sqrt(shared->abar()) * pm.mean - x) / (1.0 - shared->abar()));
  };
  if (mse_target == 0.0) return exact;
  if (mode == PerturbMode::systematic_bias) {
    Eigen::VectorXd b = std::sqrt(mse_target) *
                        unit_vector_from_stream(shared->dim(),
                                                derive_stream(seed, 1));
    return [exact, b](const Eigen::VectorXd& x) {
      return Eigen::VectorXd(exact(x) + b);
    };
  }
  auto field = ScorePerturbation::make(shared->dim(), mse_target,
                                       derive_stream(seed, 2));
  return [exact, field](const Eigen::VectorXd& x) {
    return Eigen::VectorXd(exact(x) + field.eval(x));
  };
}

}  // namespace ddpm
