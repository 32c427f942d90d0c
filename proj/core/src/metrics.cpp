#include "ddpm/metrics.hpp"

#include <cmath>
#include <numeric>

#include "ddpm/parallel.hpp"

namespace ddpm {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

/// (1/2)(r - 1 - log r) written through u = r - 1 so that near-identical
/// variances do not cancel catastrophically.
double half_bregman(double u) { return 0.5 * (u - std::log1p(u)); }

}  // namespace

GaussianChainResult gaussian_chain(const Target& target, const NoiseSchedule& s,
                                   const ReverseSamplerSpec& spec) {
  const auto* gm = std::get_if<GaussianMixture>(&target);
  if (!gm || gm->component_count() != 1)
    throw ContractError("gaussian_chain: target must be a single Gaussian");
  spec.validate();
  if (spec.estimator == EstimatorKind::fitted ||
      (spec.estimator == EstimatorKind::perturbed &&
       (spec.perturb_mode != PerturbMode::systematic_bias ||
        spec.hessian_mse != 0.0)))
    throw ContractError("gaussian_chain: Gaussian closure broken");
  const int d = gm->dim;
  const bool accel = spec.kind == SamplerKind::accelerated;

  // Everything co-diagonalizes in the eigenbasis of the target covariance, so
  // the chain reduces to d independent scalar recursions.
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(gm->covs[0]);
  const VectorXd evals = es.eigenvalues();
  const MatrixXd U = es.eigenvectors();
  const VectorXd m0 = U.transpose() * gm->means[0];
  VectorXd bias = VectorXd::Zero(d);
  if (spec.estimator == EstimatorKind::perturbed) {
    if (spec.score_bias.size() != d)
      throw ContractError("gaussian_chain: systematic bias vector required");
    bias = U.transpose() * spec.score_bias;
  }

  GaussianChainResult res;
  res.breakdown.rev_error_per_step.assign(s.T - spec.stop_at, 0.0);
  res.state.stop_at = spec.stop_at;
  const int steps = s.T - spec.stop_at;
  res.state.means.assign(steps + 1, VectorXd::Zero(d));
  res.state.covs.assign(steps + 1, MatrixXd::Zero(d, d));

  // Diagonal ledgers in the eigenbasis, index 0 = t = T.
  MatrixXd diag_vars(steps + 1, d);
  MatrixXd diag_means(steps + 1, d);

  const double abar_T = s.abar(s.T);
  double kl_exact = 0.0;
  for (int i = 0; i < d; ++i) {
    const double sv = evals[i];
    // q_t variance along this eigendirection: G_t = abar_t sv + 1 - abar_t.
    auto G = [&](int t) { return s.abar(t) * (sv - 1.0) + 1.0; };
    // Initialization error (exact, per direction): KL(N(m_T, G_T) || N(0,1)).
    {
      const double u = abar_T * (sv - 1.0);  // G_T - 1, no cancellation
      res.breakdown.init_error +=
          half_bregman(u) + 0.5 * abar_T * m0[i] * m0[i];
    }

    double D = abar_T * (1.0 - sv);  // V_t - G_t, t = T
    double e = -std::sqrt(abar_T) * m0[i];  // hat-mean minus q mean
    diag_vars(0, i) = G(s.T) + D;
    diag_means(0, i) = std::sqrt(abar_T) * m0[i] + e;
    for (int t = s.T; t > spec.stop_at; --t) {
      const double at = s.a(t);
      const double one_minus = 1.0 - at;
      const double gt = G(t);
      const double A = (1.0 - one_minus / gt) / std::sqrt(at);
      // Per-step variances: true posterior v_q, sampler kernel v_p. Their
      // difference has the closed form (1-a)^2/(a G_t) for the regular chain
      // and vanishes identically for the accelerated one.
      const double vdiff = accel ? 0.0 : one_minus * one_minus / (at * gt);
      D = A * A * D + vdiff;
      e = A * e + one_minus * bias[i] / std::sqrt(at);
      const int row = s.T - t + 1;
      diag_vars(row, i) = G(t - 1) + D;
      diag_means(row, i) = std::sqrt(s.abar(t - 1)) * m0[i] + e;

      // Reverse-step error per Eq-style decomposition: the true-score kernel
      // against the exact posterior; mean slopes coincide, so only the
      // variance mismatch contributes. u = v_q/v_p - 1 = -(1-a)/G_t.
      // Entry idx corresponds to step t = stop_at + 1 + idx.
      if (!accel)
        res.breakdown.rev_error_per_step[t - spec.stop_at - 1] +=
            half_bregman(-one_minus / gt);
    }
    // Exact final KL(Q_stop || hat-P_stop) along this direction.
    const double g0 = G(spec.stop_at);
    const double v0 = g0 + D;
    kl_exact += half_bregman(-D / v0) + 0.5 * e * e / v0;
  }

  for (int row = 0; row <= steps; ++row) {
    res.state.means[row] = U * diag_means.row(row).transpose();
    res.state.covs[row] =
        U * diag_vars.row(row).asDiagonal() * U.transpose();
  }
  res.kl_exact = kl_exact;
  res.breakdown.init_bound =
      0.5 * abar_T * (evals.sum() + m0.squaredNorm());
  const double b2 = bias.squaredNorm();
  for (int t = spec.stop_at + 1; t <= s.T; ++t)
    res.breakdown.est_error += 0.5 * (1.0 - s.a(t)) * b2;
  const double rev_sum =
      std::accumulate(res.breakdown.rev_error_per_step.begin(),
                      res.breakdown.rev_error_per_step.end(), 0.0);
  res.breakdown.total =
      res.breakdown.init_error + res.breakdown.est_error + rev_sum;
  res.breakdown.bound_total =
      res.breakdown.init_bound + res.breakdown.est_error + rev_sum;
  return res;
}

namespace {

struct Window {
  double lo, hi;
};

/// Window covering all component Gaussians of a 1D marginal.
Window marginal_window(const MarginalOracle& oracle, double k) {
  Window w{1e300, -1e300};
  for (int n = 0; n < oracle.component_count(); ++n) {
    const double m = oracle.component_mean(n)[0];
    const double sd = std::sqrt(oracle.component_cov(n)(0, 0));
    w.lo = std::min(w.lo, m - k * sd);
    w.hi = std::max(w.hi, m + k * sd);
  }
  return w;
}

}  // namespace

KLBreakdown kl_decomposition_quadrature(const Target& target,
                                        const NoiseSchedule& s,
                                        const ReverseSamplerSpec& spec,
                                        const QuadratureSpec& grid) {
  if (target_dim(target) != 1)
    throw ContractError("kl_decomposition_quadrature: d == 1 required");
  spec.validate();
  if (std::holds_alternative<AtomCloud>(target) && spec.stop_at == 0)
    throw ContractError(
        "kl_decomposition_quadrature: early stopping required for atom "
        "targets");
  const bool accel = spec.kind == SamplerKind::accelerated;
  KLBreakdown out;

  std::vector<MarginalOracle> oracles;  // level t = stop_at .. T
  for (int t = spec.stop_at; t <= s.T; ++t)
    oracles.emplace_back(target, s.abar(t));
  auto oracle_at = [&](int t) -> const MarginalOracle& {
    return oracles[t - spec.stop_at];
  };

  // Initialization term: KL(Q_T || N(0,1)) by quadrature.
  {
    const auto& oT = oracle_at(s.T);
    Window w = marginal_window(oT, grid.half_width_sigmas);
    out.init_error = integrate(
        [&](double x) {
          VectorXd xv(1);
          xv[0] = x;
          const double lq = oT.log_density(xv);
          const double lp = -0.5 * (kLog2Pi + x * x);
          return std::exp(lq) * (lq - lp);
        },
        w.lo, w.hi, grid.rel_tol);
  }
  out.init_bound = 0.5 * s.abar(s.T) * target_second_moment_trace(target);

  // Estimation term: sum_t ((1-a_t)/2) E_{Q_t} (s_hat - s)^2.
  if (spec.estimator == EstimatorKind::perturbed && spec.score_mse > 0.0) {
    for (int t = spec.stop_at + 1; t <= s.T; ++t) {
      double e2;
      if (spec.perturb_mode == PerturbMode::systematic_bias) {
        e2 = spec.score_bias.size() == 1 ? spec.score_bias.squaredNorm()
                                         : spec.score_mse;
      } else {
        auto field = ScorePerturbation::make(
            1, spec.score_mse,
            derive_stream(spec.perturb_seed, 2, static_cast<std::uint64_t>(t)));
        const auto& ot = oracle_at(t);
        Window w = marginal_window(ot, grid.half_width_sigmas);
        e2 = integrate(
            [&](double x) {
              VectorXd xv(1);
              xv[0] = x;
              return std::exp(ot.log_density(xv)) *
                     field.eval(xv).squaredNorm();
            },
            w.lo, w.hi, grid.rel_tol);
      }
      out.est_error += 0.5 * (1.0 - s.a(t)) * e2;
    }
  } else if (spec.estimator == EstimatorKind::fitted) {
    throw ContractError(
        "kl_decomposition_quadrature: fitted estimators unsupported");
  }

  // Reverse-step terms: E_{Q_t} KL(q_{t-1|t}(.|x) || p_{t-1|t}(.|x)), with
  // the true-score kernel (estimation error is accounted above).
  out.rev_error_per_step.assign(s.T - spec.stop_at, 0.0);
  parallel_for(s.T - spec.stop_at, [&](long idx) {
    const int t = spec.stop_at + 1 + static_cast<int>(idx);
    const auto& ot = oracle_at(t);
    const auto& oprev = oracle_at(t - 1);
    const double at = s.a(t);
    const double srt = std::sqrt(at);
    const double one_minus = 1.0 - at;
    const double sig2 = one_minus / at;

    auto kl_at = [&](double x) {
      VectorXd xv(1);
      xv[0] = x;
      auto l = ot.log_density_derivatives_1d(xv[0], 2);
      const double mu = (x + one_minus * l[1]) / srt;
      double vp = sig2;
      if (accel) vp = sig2 * (1.0 + one_minus * l[2]);
      const double log_vp = std::log(vp);
      // Posterior variance from the exact cumulant formula sets the window.
      const double vq = sig2 + one_minus * one_minus / at * l[2];
      const double hw =
          grid.half_width_sigmas * std::sqrt(std::max(vq, 1e-12 * sig2));
      // log posterior = log q_{t-1}(y) + log N(x; sqrt(a) y, 1-a) - log q_t(x)
      const double log_qt = l[0];
      auto inner = [&](double y) {
        VectorXd yv(1);
        yv[0] = y;
        const double lpost = oprev.log_density(yv) -
                             0.5 * (kLog2Pi + std::log(one_minus)) -
                             (x - srt * y) * (x - srt * y) / (2.0 * one_minus) -
                             log_qt;
        const double lp = -0.5 * (kLog2Pi + log_vp) -
                          (y - mu) * (y - mu) / (2.0 * vp);
        return std::exp(lpost) * (lpost - lp);
      };
      return integrate(inner, mu - hw, mu + hw, grid.rel_tol);
    };

    Window w = marginal_window(ot, grid.half_width_sigmas);
    out.rev_error_per_step[idx] = integrate(
        [&](double x) {
          VectorXd xv(1);
          xv[0] = x;
          return std::exp(ot.log_density(xv)) * kl_at(x);
        },
        w.lo, w.hi, grid.rel_tol);
  });

  const double rev_sum =
      std::accumulate(out.rev_error_per_step.begin(),
                      out.rev_error_per_step.end(), 0.0);
  out.total = out.init_error + out.est_error + rev_sum;
  out.bound_total = out.init_bound + out.est_error + rev_sum;
  return out;
}

InitError init_error(const Target& target, const NoiseSchedule& s) {
  const double abar = s.abar(s.T);
  InitError r;
  r.bound = 0.5 * abar * target_second_moment_trace(target);
  const int d = target_dim(target);

  if (const auto* gm = std::get_if<GaussianMixture>(&target);
      gm && gm->component_count() == 1) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(gm->covs[0]);
    for (int i = 0; i < d; ++i)
      r.exact += half_bregman(abar * (es.eigenvalues()[i] - 1.0));
    r.exact += 0.5 * abar * gm->means[0].squaredNorm();
    return r;
  }
  if (const auto* cloud = std::get_if<AtomCloud>(&target);
      cloud && cloud->atom_count() == 1) {
    // Q_T = N(sqrt(abar) mu, (1-abar) I).
    r.exact = d * half_bregman(-abar) +
              0.5 * abar * cloud->atoms[0].squaredNorm();
    return r;
  }
  if (d != 1)
    throw ContractError("init_error: closed form unavailable and d > 1");
  MarginalOracle oT(target, abar);
  Window w = marginal_window(oT, 12.0);
  r.exact = integrate(
      [&](double x) {
        VectorXd xv(1);
        xv[0] = x;
        const double lq = oT.log_density(xv);
        return std::exp(lq) * (lq + 0.5 * (kLog2Pi + x * x));
      },
      w.lo, w.hi, 1e-11);
  return r;
}

W2Check coupling_w2_check(const Target& target, double alpha_1, long n_samples,
                          std::uint64_t seed) {
  if (!(alpha_1 > 0.0 && alpha_1 <= 1.0))
    throw ContractError("coupling_w2_check: alpha_1 must lie in (0,1]");
  const int d = target_dim(target);
  const double one_minus = 1.0 - alpha_1;
  W2Check r;
  r.n_samples = n_samples;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(target_second_moment(target));
  r.bound = one_minus * (es.eigenvalues().maxCoeff() + 1.0) * d;
  std::vector<double> contrib(static_cast<size_t>(n_samples));
  parallel_for(n_samples, [&](long i) {
    auto eng = make_engine(derive_stream(seed, static_cast<std::uint64_t>(i)));
    VectorXd x0 = draw_origin(target, eng);
    VectorXd w = standard_normal_vector(eng, d);
    VectorXd x1 = std::sqrt(alpha_1) * x0 + std::sqrt(one_minus) * w;
    contrib[static_cast<size_t>(i)] = (x1 - x0).squaredNorm();
  });
  r.mc_estimate = std::accumulate(contrib.begin(), contrib.end(), 0.0) /
                  static_cast<double>(n_samples);
  return r;
}

RateFit fit_rate(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 4)
    throw ContractError("fit_rate: need at least 4 points");
  RateFit f;
  for (const auto& [T, v] : points) {
    if (!(v > 0.0)) {
      f.warnings.push_back("excluded nonpositive value at T=" +
                           std::to_string(T));
      continue;
    }
    f.T_values.push_back(T);
    f.values.push_back(v);
  }
  const size_t n = f.T_values.size();
  double distinct = 0;
  for (size_t i = 1; i < n; ++i)
    if (f.T_values[i] != f.T_values[0]) distinct = 1;
  if (n < 2 || distinct == 0)
    throw ContractError("fit_rate: degenerate abscissa");
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (size_t i = 0; i < n; ++i) {
    const double x = std::log(f.T_values[i]);
    const double y = std::log(f.values[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    syy += y * y;
  }
  const double nn = static_cast<double>(n);
  const double vx = sxx - sx * sx / nn;
  const double cxy = sxy - sx * sy / nn;
  const double vy = syy - sy * sy / nn;
  f.slope = cxy / vx;
  f.intercept = (sy - f.slope * sx) / nn;
  f.r_squared = vy > 0.0 ? (cxy * cxy) / (vx * vy) : 1.0;
  return f;
}

double gaussian_kl(const VectorXd& m0, const MatrixXd& S0, const VectorXd& m1,
                   const MatrixXd& S1) {
  const int d = static_cast<int>(m0.size());
  Eigen::LLT<MatrixXd> l1(S1);
  Eigen::LLT<MatrixXd> l0(S0);
  if (l0.info() != Eigen::Success || l1.info() != Eigen::Success)
    throw ContractError("gaussian_kl: covariances must be SPD");
  const MatrixXd s1inv_s0 = l1.solve(S0);
  double log_det_ratio = 0.0;
  for (int i = 0; i < d; ++i)
    log_det_ratio += 2.0 * (std::log(l1.matrixL()(i, i)) -
                            std::log(l0.matrixL()(i, i)));
  const VectorXd dm = m1 - m0;
  return 0.5 * (s1inv_s0.trace() - d + dm.dot(l1.solve(dm)) + log_det_ratio);
}

double pinsker_tv(double kl) {
  if (kl < 0.0) throw ContractError("pinsker_tv: kl must be >= 0");
  return std::min(1.0, std::sqrt(kl / 2.0));
}

}  // namespace ddpm
