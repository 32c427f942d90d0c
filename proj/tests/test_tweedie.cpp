#include <doctest.h>

#include <cmath>

#include "ddpm/tweedie.hpp"

using namespace ddpm;

namespace {

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

Target gauss1d() {
  VectorXd m(1);
  m[0] = 0.3;
  MatrixXd c(1, 1);
  c(0, 0) = 0.8;
  return GaussianMixture::make(1, VectorXd::Ones(1), {m}, {c});
}

Target atoms1d() {
  VectorXd w(2);
  w << 0.5, 0.5;
  VectorXd a1(1), a2(1);
  a1[0] = -1.0;
  a2[0] = 1.0;
  return AtomCloud::make(1, {a1, a2}, w);
}

}  // namespace

TEST_CASE("single Gaussian: posterior is Gaussian, cumulants collapse") {
  const Target g = gauss1d();
  NoiseSchedule s = make_constant(64, 2.0);
  const int t = 32;
  VectorXd x(1);
  x[0] = 0.9;
  PosteriorMoments f = posterior_moments_formula(g, s, t, x);
  // Gaussian posterior: odd central moments vanish, even ones follow the
  // variance: m4 = 3 v^2, m6 = 15 v^3.
  const double v = f.cov(0, 0);
  CHECK(std::abs(f.third(0, 0, 0)) <= 1e-12 * std::pow(v, 1.5));
  CHECK(f.fourth(0, 0, 0, 0) == doctest::Approx(3 * v * v).epsilon(1e-10));
  CHECK(std::abs(f.fifth) <= 1e-10 * std::pow(v, 2.5));
  CHECK(f.sixth == doctest::Approx(15 * v * v * v).epsilon(1e-9));

  PosteriorMoments q = posterior_moments_quadrature(g, s, t, x);
  CHECK(f.mean[0] == doctest::Approx(q.mean[0]).epsilon(1e-10));
  CHECK(f.cov(0, 0) == doctest::Approx(q.cov(0, 0)).epsilon(1e-9));
}

TEST_CASE("mixture: formula vs quadrature moments through order six") {
  const Target mix = mixture1d();
  NoiseSchedule s = make_constant(64, 2.0);
  const int t = 32;
  for (double xp : {-1.5, 0.2, 1.8}) {
    VectorXd x(1);
    x[0] = xp;
    PosteriorMoments f = posterior_moments_formula(mix, s, t, x);
    PosteriorMoments q = posterior_moments_quadrature(mix, s, t, x);
    CHECK(f.mean[0] == doctest::Approx(q.mean[0]).epsilon(1e-9));
    CHECK(f.cov(0, 0) == doctest::Approx(q.cov(0, 0)).epsilon(1e-8));
    CHECK(f.third(0, 0, 0) ==
          doctest::Approx(q.third(0, 0, 0)).epsilon(1e-7));
    CHECK(f.fourth(0, 0, 0, 0) ==
          doctest::Approx(q.fourth(0, 0, 0, 0)).epsilon(1e-6));
    CHECK(f.fifth == doctest::Approx(q.fifth).epsilon(1e-5));
    CHECK(f.sixth == doctest::Approx(q.sixth).epsilon(1e-5));
  }
}

TEST_CASE("2d formula moments match quadrature") {
  VectorXd w(2);
  w << 0.4, 0.6;
  VectorXd m1(2), m2(2);
  m1 << -0.8, 0.3;
  m2 << 1.0, -0.5;
  MatrixXd c1 = MatrixXd::Identity(2, 2) * 0.7;
  MatrixXd c2(2, 2);
  c2 << 1.1, -0.2, -0.2, 0.8;
  Target mix = GaussianMixture::make(2, w, {m1, m2}, {c1, c2});
  NoiseSchedule s = make_constant(64, 2.0);
  const int t = 32;
  VectorXd x(2);
  x << 0.4, -0.2;
  PosteriorMoments f = posterior_moments_formula(mix, s, t, x);
  PosteriorMoments q = posterior_moments_quadrature(mix, s, t, x);
  CHECK((f.mean - q.mean).cwiseAbs().maxCoeff() <= 1e-8);
  CHECK((f.cov - q.cov).cwiseAbs().maxCoeff() <= 1e-8);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k)
        CHECK(std::abs(f.third(i, j, k) - q.third(i, j, k)) <= 1e-7);
}

TEST_CASE("quadrature guards against too-narrow grids") {
  const Target mix = mixture1d();
  NoiseSchedule s = make_constant(64, 2.0);
  VectorXd x(1);
  x[0] = 0.2;
  QuadratureSpec narrow;
  narrow.half_width_sigmas = 0.5;
  CHECK_THROWS_AS(posterior_moments_quadrature(mix, s, 32, x, narrow),
                  ContractError);
}

TEST_CASE("zeta tilts the regular kernel into the true posterior") {
  const Target mix = mixture1d();
  NoiseSchedule s = make_constant(64, 2.0);
  const int t = 32;
  const double at = s.a(t);
  const double one_minus = 1.0 - at;
  const double sig2 = one_minus / at;
  MarginalOracle ot(mix, s.abar(t));
  MarginalOracle oprev(mix, s.abar(t - 1));
  VectorXd x(1);
  x[0] = 0.7;
  auto l = ot.log_density_derivatives_1d(x[0], 1);
  const double mu = (x[0] + one_minus * l[1]) / std::sqrt(at);
  VectorXd muv(1);
  muv[0] = mu;
  const double logC = oprev.log_density(muv) - 0.5 * one_minus * l[1] * l[1] -
                      l[0] - 0.5 * std::log(at);
  const double kLog2Pi = 1.8378770664093454836;
  for (int i = 0; i < 50; ++i) {
    const double y = mu + std::sqrt(sig2) * (-5.0 + 10.0 * i / 49.0);
    VectorXd yv(1);
    yv[0] = y;
    const double lpost =
        oprev.log_density(yv) - 0.5 * (kLog2Pi + std::log(one_minus)) -
        (x[0] - std::sqrt(at) * y) * (x[0] - std::sqrt(at) * y) /
            (2 * one_minus) -
        l[0];
    const double lp = -0.5 * (kLog2Pi + std::log(sig2)) -
                      (y - mu) * (y - mu) / (2 * sig2);
    CHECK(lpost == doctest::Approx(lp + zeta(mix, s, t, x, yv, false) + logC)
                       .epsilon(1e-10));
  }
}

TEST_CASE("expected zeta: leading terms dominate at large T") {
  const Target mix = mixture1d();
  VectorXd x(1);
  x[0] = 0.6;
  // Residuals must be an order smaller than the predictions themselves.
  // T is kept moderate so leading_diff (~(1-a)^3) stays well above the
  // quadrature noise floor that the residual bottoms out at (~1e-18).
  NoiseSchedule s = make_constant(256, 2.0);
  TiltingReport r = leading_order_report(mix, s, 128, x);
  CHECK(std::abs(r.residual_EP) <= 0.05 * std::abs(r.leading_EP));
  CHECK(std::abs(r.residual_EQ) <= 0.05 * std::abs(r.leading_EQ));
  CHECK(std::abs(r.residual_diff) <= 0.1 * std::abs(r.leading_diff));
  // E_P zeta^2 and zeta^3 are higher order than E_P zeta's leading term.
  CHECK(std::abs(r.E_P_zeta3) <= std::abs(r.E_P_zeta2));
}

TEST_CASE("leading G.4 term vanishes for Gaussian targets") {
  const Target g = gauss1d();
  NoiseSchedule s = make_constant(256, 2.0);
  VectorXd x(1);
  x[0] = 0.4;
  TiltingReport r = leading_order_report(g, s, 128, x);
  CHECK(std::abs(r.leading_diff) <= 1e-14);  // third derivatives vanish
}

TEST_CASE("smoothed atoms admit the tilting analysis") {
  const Target cloud = atoms1d();
  NoiseSchedule s = make_constant(256, 2.0);
  VectorXd x(1);
  x[0] = 0.35;
  TiltingReport r = leading_order_report(cloud, s, 2, x);
  CHECK(std::abs(r.residual_EP) <= 0.2 * std::abs(r.leading_EP));
}
