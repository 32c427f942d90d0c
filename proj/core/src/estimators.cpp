#include "ddpm/estimators.hpp"

#include <array>
#include <cmath>

#include "ddpm/quadrature.hpp"

namespace ddpm {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

/// Shared regression core: solves min ||Phi C - Y||^2 by normal equations
/// with a deterministic ridge fallback.
struct Regression {
  MatrixXd coef;
  double residual_mse = 0.0;
  bool ridge_used = false;
};

Regression solve_normal_equations(const MatrixXd& gram, const MatrixXd& cross,
                                  double y_sq_sum, long n) {
  const int K = static_cast<int>(gram.rows());
  Regression r;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(gram);
  const double floor = 1e-12 * gram.trace();
  MatrixXd g = gram;
  if (es.eigenvalues().minCoeff() < floor) {
    g += (1e-8 * gram.trace() / K) * MatrixXd::Identity(K, K);
    r.ridge_used = true;
  }
  Eigen::LLT<MatrixXd> llt(g);
  r.coef = llt.solve(cross);
  double rss = y_sq_sum - 2.0 * (r.coef.array() * cross.array()).sum() +
               (r.coef.array() * (gram * r.coef).array()).sum();
  r.residual_mse = std::max(0.0, rss) / static_cast<double>(n);
  return r;
}

int tri_cols(int d) { return d * (d + 1) / 2; }

}  // namespace

VectorXd FeatureBasis::eval(const VectorXd& x) const {
  VectorXd f(size());
  for (int k = 0; k < size(); ++k) f[k] = phi[k](x);
  return f;
}

FeatureBasis FeatureBasis::poly2(int dim) {
  FeatureBasis b;
  b.phi.push_back([](const VectorXd&) { return 1.0; });
  b.names.push_back("1");
  for (int i = 0; i < dim; ++i) {
    b.phi.push_back([i](const VectorXd& x) { return x[i]; });
    b.names.push_back("x" + std::to_string(i));
  }
  for (int i = 0; i < dim; ++i)
    for (int j = i; j < dim; ++j) {
      b.phi.push_back([i, j](const VectorXd& x) { return x[i] * x[j]; });
      b.names.push_back("x" + std::to_string(i) + "x" + std::to_string(j));
    }
  return b;
}

FeatureBasis FeatureBasis::responsibility(const Target& target, double abar) {
  const int dim = target_dim(target);
  FeatureBasis b = poly2(dim);
  auto oracle = std::make_shared<MarginalOracle>(target, abar);
  const int nc = oracle->component_count();
  for (int n = 0; n < nc; ++n) {
    b.phi.push_back([oracle, n, nc](const VectorXd& x) {
      // Posterior responsibility of component n at x, computed through the
      // public component accessors.
      VectorXd lp(nc);
      for (int m = 0; m < nc; ++m) {
        VectorXd d = x - oracle->component_mean(m);
        Eigen::LLT<MatrixXd> llt(oracle->component_cov(m));
        double log_det = 0.0;
        for (int i = 0; i < d.size(); ++i)
          log_det += 2.0 * std::log(llt.matrixL()(i, i));
        lp[m] = oracle->component_log_weight(m) -
                0.5 * (d.size() * kLog2Pi + log_det + d.dot(llt.solve(d)));
      }
      const double mx = lp.maxCoeff();
      double s = 0.0;
      for (int m = 0; m < nc; ++m) s += std::exp(lp[m] - mx);
      return std::exp(lp[n] - mx) / s;
    });
    b.names.push_back("resp" + std::to_string(n));
  }
  return b;
}

VectorXd FittedEstimator::score_at(const VectorXd& x) const {
  if (kind != Kind::score)
    throw ContractError("FittedEstimator: not a score estimator");
  return coef.transpose() * basis->eval(x);
}

MatrixXd FittedEstimator::v_at(const VectorXd& x) const {
  if (kind != Kind::v_matrix)
    throw ContractError("FittedEstimator: not a v estimator");
  VectorXd flat = coef.transpose() * basis->eval(x);
  MatrixXd m(dim, dim);
  int c = 0;
  for (int i = 0; i < dim; ++i)
    for (int j = i; j < dim; ++j, ++c) {
      m(i, j) = flat[c];
      m(j, i) = flat[c];
    }
  return m;
}

namespace {

struct ForwardDraws {
  // Accumulated normal-equation statistics only; samples are streamed.
  MatrixXd gram;
  MatrixXd cross;
  double y_sq_sum = 0.0;
};

template <typename TargetFn>
ForwardDraws accumulate(const Target& target, double abar,
                        const FeatureBasis& basis, long n, std::uint64_t seed,
                        int out_cols, TargetFn&& target_of) {
  const int d = target_dim(target);
  const int K = basis.size();
  ForwardDraws acc;
  acc.gram = MatrixXd::Zero(K, K);
  acc.cross = MatrixXd::Zero(K, out_cols);
  const double srt = std::sqrt(abar);
  const double noise = std::sqrt(1.0 - abar);
  for (long i = 0; i < n; ++i) {
    auto eng = make_engine(derive_stream(seed, static_cast<std::uint64_t>(i)));
    VectorXd x0 = draw_origin(target, eng);
    VectorXd w = standard_normal_vector(eng, d);
    VectorXd xt = srt * x0 + noise * w;
    VectorXd f = basis.eval(xt);
    VectorXd y = target_of(w);
    acc.gram.noalias() += f * f.transpose();
    acc.cross.noalias() += f * y.transpose();
    acc.y_sq_sum += y.squaredNorm();
  }
  return acc;
}

}  // namespace

FittedEstimator fit_score(const Target& target, const NoiseSchedule& s, int t,
                          const FeatureBasis& basis, long n_samples,
                          std::uint64_t seed) {
  if (t < 1 || t > s.T) throw ContractError("fit_score: t out of range");
  if (n_samples < 10L * basis.size())
    throw ContractError("fit_score: need n_samples >= 10 K");
  const double abar = s.abar(t);
  const int d = target_dim(target);
  const double noise = std::sqrt(1.0 - abar);
  auto acc = accumulate(target, abar, basis, n_samples, seed, d,
                        [&](const VectorXd& w) { return VectorXd(-w / noise); });
  auto reg = solve_normal_equations(acc.gram, acc.cross, acc.y_sq_sum,
                                    n_samples);
  FittedEstimator e;
  e.kind = FittedEstimator::Kind::score;
  e.dim = d;
  e.basis = std::make_shared<FeatureBasis>(basis);
  e.coef = reg.coef;
  e.residual_mse = reg.residual_mse;
  e.ridge_used = reg.ridge_used;
  e.n_samples = n_samples;
  // Realized estimation error against the exact score, fresh MC stream.
  MarginalOracle oracle(target, abar);
  const long n_eval = std::min<long>(n_samples, 100000);
  const double srt = std::sqrt(abar);
  double mse = 0.0;
  for (long i = 0; i < n_eval; ++i) {
    auto eng = make_engine(derive_stream(seed ^ 0x5ca1ab1eULL,
                                         static_cast<std::uint64_t>(i)));
    VectorXd xt = srt * draw_origin(target, eng) +
                  noise * standard_normal_vector(eng, d);
    auto pm = oracle.posterior_origin(xt);
    VectorXd exact = (srt * pm.mean - xt) / (1.0 - abar);
    mse += (e.score_at(xt) - exact).squaredNorm();
  }
  e.realized_mse = mse / static_cast<double>(n_eval);
  return e;
}

FittedEstimator fit_v(const Target& target, const NoiseSchedule& s, int t,
                      const FeatureBasis& basis, long n_samples,
                      std::uint64_t seed) {
  if (t < 1 || t > s.T) throw ContractError("fit_v: t out of range");
  if (n_samples < 10L * basis.size())
    throw ContractError("fit_v: need n_samples >= 10 K");
  const double abar = s.abar(t);
  const int d = target_dim(target);
  const int cols = tri_cols(d);
  auto acc = accumulate(target, abar, basis, n_samples, seed, cols,
                        [&](const VectorXd& w) {
                          VectorXd y(cols);
                          int c = 0;
                          for (int i = 0; i < d; ++i)
                            for (int j = i; j < d; ++j, ++c)
                              y[c] = w[i] * w[j] / (1.0 - abar);
                          return y;
                        });
  auto reg = solve_normal_equations(acc.gram, acc.cross, acc.y_sq_sum,
                                    n_samples);
  FittedEstimator e;
  e.kind = FittedEstimator::Kind::v_matrix;
  e.dim = d;
  e.basis = std::make_shared<FeatureBasis>(basis);
  e.coef = reg.coef;
  e.residual_mse = reg.residual_mse;
  e.ridge_used = reg.ridge_used;
  e.n_samples = n_samples;
  // Realized error against the population minimizer grad^2 q/q + I/(1-abar).
  MarginalOracle oracle(target, abar);
  const long n_eval = std::min<long>(n_samples, 100000);
  const double srt = std::sqrt(abar);
  const double noise = std::sqrt(1.0 - abar);
  double mse = 0.0;
  for (long i = 0; i < n_eval; ++i) {
    auto eng = make_engine(derive_stream(seed ^ 0x5ca1ab1eULL,
                                         static_cast<std::uint64_t>(i)));
    VectorXd xt = srt * draw_origin(target, eng) +
                  noise * standard_normal_vector(eng, d);
    auto der = oracle.derivatives(xt);
    MatrixXd exact = der.hessian + der.score * der.score.transpose() +
                     MatrixXd::Identity(d, d) / (1.0 - abar);
    mse += (e.v_at(xt) - exact).squaredNorm();
  }
  e.realized_mse = mse / static_cast<double>(n_eval);
  return e;
}

std::function<MatrixXd(const VectorXd&)> assemble_H(const FittedEstimator& v,
                                                    const FittedEstimator& s,
                                                    const NoiseSchedule& sched,
                                                    int t) {
  if (v.kind != FittedEstimator::Kind::v_matrix ||
      s.kind != FittedEstimator::Kind::score)
    throw ContractError("assemble_H: estimator kinds mismatched");
  if (v.dim != s.dim) throw ContractError("assemble_H: dimension mismatch");
  const double abar = sched.abar(t);
  const int d = v.dim;
  return [v, s, abar, d](const VectorXd& x) {
    VectorXd sc = s.score_at(x);
    MatrixXd h = v.v_at(x) - MatrixXd::Identity(d, d) / (1.0 - abar) -
                 sc * sc.transpose();
    return MatrixXd(0.5 * (h + h.transpose()));
  };
}

namespace {

/// Bivariate polynomial in (x, w), dense coefficient grid.
struct PolyXW {
  static constexpr int kMax = 9;
  std::array<std::array<double, kMax>, kMax> c{};

  static PolyXW constant(double v) {
    PolyXW p;
    p.c[0][0] = v;
    return p;
  }
  static PolyXW x_pow(int a, double v = 1.0) {
    PolyXW p;
    p.c[a][0] = v;
    return p;
  }
  static PolyXW w_pow(int b, double v = 1.0) {
    PolyXW p;
    p.c[0][b] = v;
    return p;
  }
  PolyXW operator+(const PolyXW& o) const {
    PolyXW r;
    for (int a = 0; a < kMax; ++a)
      for (int b = 0; b < kMax; ++b) r.c[a][b] = c[a][b] + o.c[a][b];
    return r;
  }
  PolyXW operator-(const PolyXW& o) const {
    PolyXW r;
    for (int a = 0; a < kMax; ++a)
      for (int b = 0; b < kMax; ++b) r.c[a][b] = c[a][b] - o.c[a][b];
    return r;
  }
  PolyXW operator*(const PolyXW& o) const {
    PolyXW r;
    for (int a = 0; a < kMax; ++a)
      for (int b = 0; b < kMax; ++b) {
        if (c[a][b] == 0.0) continue;
        for (int a2 = 0; a2 + a < kMax; ++a2)
          for (int b2 = 0; b2 + b < kMax; ++b2)
            r.c[a + a2][b + b2] += c[a][b] * o.c[a2][b2];
      }
    return r;
  }
  PolyXW scaled(double v) const {
    PolyXW r;
    for (int a = 0; a < kMax; ++a)
      for (int b = 0; b < kMax; ++b) r.c[a][b] = c[a][b] * v;
    return r;
  }
};

/// E[x^a w^b] for jointly Gaussian (x, w), x mean mx, Cov = [[sxx, sxw],
/// [sxw, 1]], via the central-moment recursion plus a binomial mean shift.
double gaussian_xw_moment(int a, int b, double mx, double sxx, double sxw) {
  static thread_local double central[PolyXW::kMax][PolyXW::kMax];
  for (int i = 0; i < PolyXW::kMax; ++i)
    for (int j = 0; j < PolyXW::kMax; ++j) {
      if (i == 0 && j == 0) {
        central[0][0] = 1.0;
        continue;
      }
      double v = 0.0;
      if (i >= 1) {
        if (i >= 2) v += (i - 1) * sxx * central[i - 2][j];
        if (j >= 1) v += j * sxw * central[i - 1][j - 1];
      } else {
        if (j >= 2) v = (j - 1) * central[0][j - 2];
      }
      central[i][j] = v;
    }
  double total = 0.0;
  double binom = 1.0;
  for (int i = 0; i <= a; ++i) {
    total += binom * std::pow(mx, a - i) * central[i][b];
    binom = binom * (a - i) / (i + 1);
  }
  return total;
}

double expect_poly(const PolyXW& p, double mx, double sxx, double sxw) {
  double s = 0.0;
  for (int a = 0; a < PolyXW::kMax; ++a)
    for (int b = 0; b < PolyXW::kMax; ++b)
      if (p.c[a][b] != 0.0) s += p.c[a][b] * gaussian_xw_moment(a, b, mx, sxx, sxw);
  return s;
}

}  // namespace

MatchingReport matching_identity_check(const Target& target,
                                       const NoiseSchedule& s, int t,
                                       const FeatureBasis& basis, int n_thetas,
                                       std::uint64_t seed) {
  const int d = target_dim(target);
  if (d != 1)
    throw ContractError("matching_identity_check: d == 1 required");
  if (n_thetas < 2)
    throw ContractError("matching_identity_check: need n_thetas >= 2");
  const double abar = s.abar(t);
  const double srt = std::sqrt(abar);
  const double noise2 = 1.0 - abar;
  const int K = basis.size();
  MarginalOracle oracle(target, abar);

  const auto* gm = std::get_if<GaussianMixture>(&target);
  const bool closed = gm != nullptr && gm->component_count() == 1 && K == 3;

  auto eng = make_engine(derive_stream(seed, 7));
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> delta(n_thetas);

  for (int it = 0; it < n_thetas; ++it) {
    VectorXd theta(K);
    for (int k = 0; k < K; ++k) theta[k] = nd(eng);

    double l_match, l_direct;
    if (closed) {
      // theta over {1, x, x^2}: everything is a polynomial expectation over
      // the jointly Gaussian (x_t, w).
      const double mx = srt * gm->means[0][0];
      const double sxx = abar * gm->covs[0](0, 0) + noise2;
      const double sxw = std::sqrt(noise2);
      PolyXW v = PolyXW::constant(theta[0]) + PolyXW::x_pow(1, theta[1]) +
                 PolyXW::x_pow(2, theta[2]);
      PolyXW resid = v - PolyXW::w_pow(2, 1.0 / noise2);
      l_match = expect_poly(resid * resid, mx, sxx, sxw);
      // M(x) = q''/q + 1/(1-abar) = l2 + l1^2 + 1/(1-abar), quadratic here.
      const double l2 = -1.0 / sxx;
      // l1 = -(x - mx)/sxx as a polynomial in x.
      PolyXW l1 = PolyXW::x_pow(1, -1.0 / sxx) + PolyXW::constant(mx / sxx);
      PolyXW M = l1 * l1 + PolyXW::constant(l2 + 1.0 / noise2);
      PolyXW rd = v - M;
      l_direct = expect_poly(rd * rd, mx, sxx, 0.0);
    } else {
      auto v_of = [&](double x) {
        VectorXd xv(1);
        xv[0] = x;
        return theta.dot(basis.eval(xv));
      };
      // Matching objective: expectation over (x_0, w).
      auto match_inner = [&](double x0_val) {
        return integrate(
            [&](double w) {
              const double xt = srt * x0_val + std::sqrt(noise2) * w;
              const double r = v_of(xt) - w * w / noise2;
              const double pdf =
                  std::exp(-0.5 * w * w) / std::sqrt(2.0 * M_PI);
              return r * r * pdf;
            },
            -14.0, 14.0, 1e-12);
      };
      l_match = 0.0;
      if (const auto* cloud = std::get_if<AtomCloud>(&target)) {
        for (int m = 0; m < cloud->atom_count(); ++m)
          l_match += cloud->weights[m] * match_inner(cloud->atoms[m][0]);
      } else {
        for (int n = 0; n < gm->component_count(); ++n) {
          const double mu = gm->means[n][0];
          const double sd = std::sqrt(gm->covs[n](0, 0));
          l_match += gm->weights[n] *
                     integrate2d(
                         [&](double z, double w) {
                           const double xt = srt * (mu + sd * z) +
                                             std::sqrt(noise2) * w;
                           const double r = v_of(xt) - w * w / noise2;
                           const double pdf =
                               std::exp(-0.5 * (z * z + w * w)) /
                               (2.0 * M_PI);
                           return r * r * pdf;
                         },
                         -12.0, 12.0, -12.0, 12.0, 1e-11);
        }
      }
      // Direct objective: expectation over x_t ~ q_t.
      double lo = 1e300, hi = -1e300;
      for (int n = 0; n < oracle.component_count(); ++n) {
        const double m = oracle.component_mean(n)[0];
        const double sd = std::sqrt(oracle.component_cov(n)(0, 0));
        lo = std::min(lo, m - 14.0 * sd);
        hi = std::max(hi, m + 14.0 * sd);
      }
      l_direct = integrate(
          [&](double x) {
            VectorXd xv(1);
            xv[0] = x;
            auto l = oracle.log_density_derivatives_1d(x, 2);
            const double M = l[2] + l[1] * l[1] + 1.0 / noise2;
            const double r = v_of(x) - M;
            return r * r * std::exp(l[0]);
          },
          lo, hi, 1e-12);
    }
    delta[it] = l_match - l_direct;
  }

  MatchingReport rep;
  rep.closed_form = closed;
  rep.n_thetas = n_thetas;
  for (int i = 0; i < n_thetas; ++i)
    for (int j = i + 1; j < n_thetas; ++j)
      rep.max_discrepancy =
          std::max(rep.max_discrepancy, std::abs(delta[i] - delta[j]));
  return rep;
}

}  // namespace ddpm
