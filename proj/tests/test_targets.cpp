#include <doctest.h>

#include <cmath>

#include "ddpm/rng.hpp"
#include "ddpm/samplers.hpp"
#include "ddpm/targets.hpp"

using namespace ddpm;

namespace {

Target mixture2d() {
  VectorXd w(2);
  w << 0.4, 0.6;
  VectorXd m1(2), m2(2);
  m1 << -1.0, 0.5;
  m2 << 1.2, -0.7;
  MatrixXd c1(2, 2), c2(2, 2);
  c1 << 0.8, 0.2, 0.2, 0.5;
  c2 << 1.1, -0.3, -0.3, 0.9;
  return GaussianMixture::make(2, w, {m1, m2}, {c1, c2});
}

Target atoms2d() {
  VectorXd w(3);
  w << 0.2, 0.5, 0.3;
  VectorXd a1(2), a2(2), a3(2);
  a1 << 1.0, 0.5;
  a2 << -0.5, 1.0;
  a3 << 0.2, -1.1;
  return AtomCloud::make(2, {a1, a2, a3}, w);
}

Target mixture1d() {
  VectorXd w(2);
  w << 0.3, 0.7;
  VectorXd m1(1), m2(1);
  m1[0] = -1.0;
  m2[0] = 1.5;
  MatrixXd c1(1, 1), c2(1, 1);
  c1(0, 0) = 0.5;
  c2(0, 0) = 1.2;
  return GaussianMixture::make(1, w, {m1, m2}, {c1, c2});
}

// Direct log-sum-exp reference density of the marginal of
// sqrt(abar) X0 + sqrt(1-abar) N(0, I) for a Gaussian mixture.
double reference_log_density(const GaussianMixture& gm, double abar,
                             const VectorXd& x) {
  double acc = 0.0;
  for (int n = 0; n < gm.component_count(); ++n) {
    const VectorXd mean = std::sqrt(abar) * gm.means[n];
    const MatrixXd cov = abar * gm.covs[n] +
                         (1.0 - abar) * MatrixXd::Identity(gm.dim, gm.dim);
    const Eigen::LLT<MatrixXd> llt(cov);
    const VectorXd d = x - mean;
    double logdet = 0.0;
    for (int i = 0; i < gm.dim; ++i)
      logdet += 2.0 * std::log(llt.matrixL()(i, i));
    const double lg = -0.5 * (gm.dim * std::log(2 * M_PI) + logdet +
                              d.dot(llt.solve(d)));
    acc += gm.weights[n] * std::exp(lg);
  }
  return std::log(acc);
}

}  // namespace

TEST_CASE("construction contracts") {
  VectorXd w(2);
  w << 0.5, 0.6;  // not a simplex
  VectorXd m(1);
  m[0] = 0.0;
  MatrixXd c(1, 1);
  c(0, 0) = 1.0;
  CHECK_THROWS_AS(GaussianMixture::make(1, w, {m, m}, {c, c}), ContractError);

  VectorXd neg(1);
  neg[0] = 1.0;
  MatrixXd badcov(1, 1);
  badcov(0, 0) = -0.5;  // repaired up to the floor, not an error
  GaussianMixture repaired = GaussianMixture::make(1, neg, {m}, {badcov});
  CHECK(repaired.covs[0](0, 0) >= GaussianMixture::kEigenFloor);

  CHECK_THROWS_AS(MarginalOracle(atoms2d(), 1.0), ContractError);
  CHECK_NOTHROW(MarginalOracle(mixture2d(), 1.0));
  CHECK_THROWS_AS(MarginalOracle(mixture2d(), 0.0), ContractError);
}

TEST_CASE("log density matches direct mixture evaluation") {
  const Target t = mixture2d();
  const auto& gm = std::get<GaussianMixture>(t);
  for (double abar : {0.95, 0.5, 0.1}) {
    MarginalOracle oracle(t, abar);
    auto eng = make_engine(derive_stream(7, 1));
    for (int i = 0; i < 20; ++i) {
      VectorXd x = 2.5 * standard_normal_vector(eng, 2);
      CHECK(oracle.log_density(x) ==
            doctest::Approx(reference_log_density(gm, abar, x)).epsilon(1e-12));
    }
  }
}

TEST_CASE("derivatives against central finite differences") {
  const double h = 1e-4;
  for (const Target& t : {mixture2d(), atoms2d()}) {
    for (double abar : {0.9, 0.4, 0.05}) {
      MarginalOracle oracle(t, abar);
      auto eng = make_engine(derive_stream(7, 2));
      for (int p = 0; p < 10; ++p) {
        VectorXd x0 = draw_origin(t, eng);
        VectorXd x = std::sqrt(abar) * x0 +
                     std::sqrt(1 - abar) * standard_normal_vector(eng, 2);
        auto der = oracle.derivatives(x);
        for (int i = 0; i < 2; ++i) {
          VectorXd xp = x, xm = x;
          xp[i] += h;
          xm[i] -= h;
          const double fd =
              (oracle.log_density(xp) - oracle.log_density(xm)) / (2 * h);
          CHECK(std::abs(fd - der.score[i]) <=
                1e-5 * std::max(1.0, std::abs(der.score[i])));
          auto dp = oracle.derivatives(xp);
          auto dm = oracle.derivatives(xm);
          for (int j = 0; j < 2; ++j) {
            const double fdh = (dp.score[j] - dm.score[j]) / (2 * h);
            CHECK(std::abs(fdh - der.hessian(i, j)) <=
                  1e-5 * std::max(1.0, std::abs(der.hessian(i, j))));
            for (int k = j; k < 2; ++k) {
              const double fdt = (dp.hessian(j, k) - dm.hessian(j, k)) / (2 * h);
              CHECK(std::abs(fdt - der.third(i, j, k)) <=
                    1e-5 * std::max(1.0, std::abs(der.third(i, j, k))));
            }
          }
        }
      }
    }
  }
}

TEST_CASE("fourth derivative against finite differences of the third") {
  const double h = 1e-4;
  MarginalOracle oracle(mixture2d(), 0.5);
  auto eng = make_engine(derive_stream(7, 3));
  for (int p = 0; p < 5; ++p) {
    VectorXd x = 1.5 * standard_normal_vector(eng, 2);
    Tensor4 fourth = oracle.log_density_fourth(x);
    for (int l = 0; l < 2; ++l) {
      VectorXd xp = x, xm = x;
      xp[l] += h;
      xm[l] -= h;
      auto dp = oracle.derivatives(xp);
      auto dm = oracle.derivatives(xm);
      for (int i = 0; i < 2; ++i)
        for (int j = i; j < 2; ++j)
          for (int k = j; k < 2; ++k) {
            const double fd = (dp.third(i, j, k) - dm.third(i, j, k)) / (2 * h);
            CHECK(std::abs(fd - fourth(i, j, k, l)) <=
                  2e-4 * std::max(1.0, std::abs(fourth(i, j, k, l))));
          }
    }
  }
}

TEST_CASE("1d derivative ladder is self-consistent") {
  MarginalOracle oracle(mixture1d(), 0.4);
  const double h = 1e-4;
  for (double x : {-1.7, -0.2, 0.9, 2.3}) {
    auto l = oracle.log_density_derivatives_1d(x, 6);
    VectorXd xv(1);
    xv[0] = x;
    CHECK(l[0] == doctest::Approx(oracle.log_density(xv)).epsilon(1e-13));
    auto der = oracle.derivatives(xv);
    CHECK(l[1] == doctest::Approx(der.score[0]).epsilon(1e-12));
    CHECK(l[2] == doctest::Approx(der.hessian(0, 0)).epsilon(1e-12));
    CHECK(l[3] == doctest::Approx(der.third(0, 0, 0)).epsilon(1e-11));
    // Higher orders against finite differences of the previous order.
    for (int k = 4; k <= 6; ++k) {
      auto lp = oracle.log_density_derivatives_1d(x + h, k - 1);
      auto lm = oracle.log_density_derivatives_1d(x - h, k - 1);
      const double fd = (lp[k - 1] - lm[k - 1]) / (2 * h);
      CHECK(std::abs(fd - l[k]) <= 2e-5 * std::max(1.0, std::abs(l[k])));
    }
  }
}

TEST_CASE("posterior over origin: single-Gaussian closed form") {
  VectorXd m(2);
  m << 0.4, -0.7;
  MatrixXd S(2, 2);
  S << 1.3, 0.4, 0.4, 0.8;
  Target g = GaussianMixture::make(2, VectorXd::Ones(1), {m}, {S});
  const double abar = 0.37;
  MarginalOracle oracle(g, abar);
  VectorXd x(2);
  x << 0.9, 0.2;
  auto post = oracle.posterior_origin(x);
  // E[X0|x] = m + sqrt(abar) S C^{-1} (x - sqrt(abar) m), C = abar S + (1-a)I.
  const MatrixXd C = abar * S + (1 - abar) * MatrixXd::Identity(2, 2);
  const VectorXd mean_ref =
      m + std::sqrt(abar) * S * C.llt().solve(x - std::sqrt(abar) * m);
  const MatrixXd cov_ref = S - abar * S * C.llt().solve(S);
  CHECK((post.mean - mean_ref).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((post.central_cov - cov_ref).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(post.central_third.max_abs() <= 1e-12);  // Gaussian posterior
  CHECK(post.responsibilities[0] == doctest::Approx(1.0));
}

TEST_CASE("second moment helpers") {
  const Target t = mixture2d();
  const auto& gm = std::get<GaussianMixture>(t);
  MatrixXd m2 = MatrixXd::Zero(2, 2);
  for (int n = 0; n < gm.component_count(); ++n)
    m2 += gm.weights[n] *
          (gm.covs[n] + gm.means[n] * gm.means[n].transpose());
  CHECK((target_second_moment(t) - m2).cwiseAbs().maxCoeff() <= 1e-14);
  CHECK(target_second_moment_trace(t) == doctest::Approx(m2.trace()));
}
