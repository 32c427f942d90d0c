#include <doctest.h>

#include <cmath>
#include <numeric>

#include "ddpm/metrics.hpp"

using namespace ddpm;

namespace {

Target gauss1d() {
  VectorXd m(1);
  m[0] = 0.3;
  MatrixXd c(1, 1);
  c(0, 0) = 0.8;
  return GaussianMixture::make(1, VectorXd::Ones(1), {m}, {c});
}

Target gauss2d() {
  MatrixXd cov = MatrixXd::Zero(2, 2);
  cov(0, 0) = 1.0;
  cov(1, 1) = 0.25;
  return GaussianMixture::make(2, VectorXd::Ones(1), {VectorXd::Zero(2)},
                               {cov});
}

Target point1d() {
  VectorXd a(1);
  a[0] = 1.2;
  return AtomCloud::make(1, {a}, VectorXd::Ones(1));
}

double rev_sum(const KLBreakdown& b) {
  return std::accumulate(b.rev_error_per_step.begin(),
                         b.rev_error_per_step.end(), 0.0);
}

}  // namespace

TEST_CASE("gaussian chain: decomposition bounds the exact KL") {
  const Target g = gauss2d();
  for (int T : {32, 128, 512}) {
    NoiseSchedule s = make_constant(T, 2.0);
    ReverseSamplerSpec spec;
    GaussianChainResult r = gaussian_chain(g, s, spec);
    CHECK(r.kl_exact >= 0.0);
    CHECK(r.kl_exact <= r.breakdown.total * (1 + 1e-12) + 1e-300);
    CHECK(r.breakdown.total <= r.breakdown.bound_total * (1 + 1e-12));
    for (double rev : r.breakdown.rev_error_per_step) CHECK(rev >= 0.0);
    // Ledger shape: T - stop_at + 1 marginals, last one at t = stop_at.
    CHECK(static_cast<int>(r.state.means.size()) == T + 1);
  }
}

TEST_CASE("gaussian chain: accelerated kernel removes the reverse term") {
  const Target g = gauss2d();
  NoiseSchedule s = make_constant(128, 3.0);
  ReverseSamplerSpec spec;
  spec.kind = SamplerKind::accelerated;
  GaussianChainResult r = gaussian_chain(g, s, spec);
  CHECK(rev_sum(r.breakdown) == 0.0);
  CHECK(r.breakdown.est_error == 0.0);
  // For a Gaussian target the accelerated kernel is the exact posterior, so
  // the only final-KL contribution is the initialization error.
  CHECK(r.kl_exact <= r.breakdown.init_error * (1 + 1e-9));
}

TEST_CASE("gaussian chain rejects non-affine estimators") {
  NoiseSchedule s = make_constant(32, 2.0);
  ReverseSamplerSpec spec;
  spec.estimator = EstimatorKind::perturbed;
  spec.perturb_mode = PerturbMode::additive_gaussian;
  spec.score_mse = 1e-3;
  CHECK_THROWS_WITH_AS(gaussian_chain(gauss2d(), s, spec),
                       doctest::Contains("Gaussian closure broken"),
                       ContractError);
}

TEST_CASE("quadrature decomposition matches the exact chain termwise") {
  // Spec invariant: for Gaussian targets with affine perturbations the two
  // decompositions agree within 1e-7.
  const Target g = gauss1d();
  NoiseSchedule s = make_constant(32, 2.0);
  ReverseSamplerSpec spec;
  SUBCASE("exact scores") {}
  SUBCASE("constant bias") {
    spec.estimator = EstimatorKind::perturbed;
    spec.perturb_mode = PerturbMode::systematic_bias;
    spec.score_mse = 1e-3;
    spec.score_bias = VectorXd::Constant(1, std::sqrt(1e-3));
  }
  GaussianChainResult exact = gaussian_chain(g, s, spec);
  KLBreakdown quad = kl_decomposition_quadrature(g, s, spec);
  CHECK(std::abs(quad.init_error - exact.breakdown.init_error) <= 1e-7);
  CHECK(std::abs(quad.est_error - exact.breakdown.est_error) <= 1e-7);
  REQUIRE(quad.rev_error_per_step.size() ==
          exact.breakdown.rev_error_per_step.size());
  for (size_t i = 0; i < quad.rev_error_per_step.size(); ++i)
    CHECK(std::abs(quad.rev_error_per_step[i] -
                   exact.breakdown.rev_error_per_step[i]) <= 1e-7);
  CHECK(std::abs(quad.total - exact.breakdown.total) <= 1e-6);
}

TEST_CASE("estimation term formula is exact for constant bias") {
  const Target g = gauss2d();
  NoiseSchedule s = make_constant(64, 2.0);
  ReverseSamplerSpec spec;
  spec.estimator = EstimatorKind::perturbed;
  spec.perturb_mode = PerturbMode::systematic_bias;
  const double eps2 = 1e-3;
  spec.score_mse = eps2;
  VectorXd u(2);
  u << 0.6, 0.8;
  spec.score_bias = std::sqrt(eps2) * u;
  GaussianChainResult r = gaussian_chain(g, s, spec);
  double analytic = 0.0;
  for (int t = 1; t <= 64; ++t) analytic += 0.5 * (1 - s.a(t)) * eps2;
  CHECK(r.breakdown.est_error ==
        doctest::Approx(analytic).epsilon(1e-13));
}

TEST_CASE("init error: closed forms agree with the quadrature route") {
  NoiseSchedule s = make_constant(64, 2.0);
  {
    InitError r = init_error(gauss1d(), s);
    // Force the 1D quadrature branch through a 2-component copy.
    const Target base = gauss1d();
    const auto& g = std::get<GaussianMixture>(base);
    VectorXd w(2);
    w << 0.5, 0.5;
    Target twice =
        GaussianMixture::make(1, w, {g.means[0], g.means[0]},
                              {g.covs[0], g.covs[0]});
    InitError rq = init_error(twice, s);
    CHECK(r.exact == doctest::Approx(rq.exact).epsilon(1e-9));
    CHECK(r.bound == doctest::Approx(rq.bound));
    CHECK(r.exact <= r.bound * (1 + 1e-12));
  }
  {
    InitError r = init_error(point1d(), s);
    const double abar = s.abar(64);
    const double expect =
        0.5 * (-abar - std::log1p(-abar)) + 0.5 * abar * 1.2 * 1.2;
    CHECK(r.exact == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("w2 coupling check") {
  SUBCASE("alpha_1 = 1 gives zero on both sides") {
    W2Check r = coupling_w2_check(gauss2d(), 1.0, 1000, 0);
    CHECK(r.mc_estimate == 0.0);
    CHECK(r.bound == 0.0);
  }
  SUBCASE("standard normal closed form") {
    const double a1 = 0.9;
    W2Check r =
        coupling_w2_check(GaussianMixture::standard_normal(2), a1, 200000, 4);
    const double expect = 2.0 * 2.0 * (1.0 - std::sqrt(a1));
    CHECK(r.mc_estimate == doctest::Approx(expect).epsilon(0.02));
    CHECK(r.bound == doctest::Approx((1 - a1) * 2.0 * 2.0));
    CHECK(r.mc_estimate <= r.bound);
  }
}

TEST_CASE("rate fitting") {
  std::vector<std::pair<double, double>> pts;
  for (double T : {64, 128, 256, 512}) pts.emplace_back(T, 3.0 * std::pow(T, -1.5));
  RateFit f = fit_rate(pts);
  CHECK(f.slope == doctest::Approx(-1.5).epsilon(1e-12));
  CHECK(f.intercept == doctest::Approx(std::log(3.0)).epsilon(1e-10));
  CHECK(f.r_squared == doctest::Approx(1.0));

  pts[2].second = 0.0;  // nonpositive value gets excluded with a warning
  RateFit g = fit_rate(pts);
  CHECK(g.warnings.size() == 1);
  CHECK(g.T_values.size() == 3);

  std::vector<std::pair<double, double>> degenerate = {
      {64, 1.0}, {64, 2.0}, {64, 3.0}, {64, 4.0}};
  CHECK_THROWS_AS(fit_rate(degenerate), ContractError);
  CHECK_THROWS_AS(fit_rate({{64, 1.0}, {128, 0.5}}), ContractError);
}

TEST_CASE("gaussian kl and pinsker") {
  VectorXd z = VectorXd::Zero(1), one = VectorXd::Ones(1);
  MatrixXd I = MatrixXd::Identity(1, 1);
  CHECK(gaussian_kl(z, I, z, I) == doctest::Approx(0.0));
  CHECK(gaussian_kl(z, I, one, I) == doctest::Approx(0.5));
  CHECK(pinsker_tv(0.0) == 0.0);
  CHECK(pinsker_tv(2.0) == 1.0);
  CHECK(pinsker_tv(0.02) == doctest::Approx(0.1));
  CHECK_THROWS_AS(pinsker_tv(-1.0), ContractError);
  MatrixXd bad(1, 1);
  bad(0, 0) = -1.0;
  CHECK_THROWS_AS(gaussian_kl(z, bad, z, I), ContractError);
}

TEST_CASE("atom pipeline: decomposition needs early stopping") {
  VectorXd w(2);
  w << 0.5, 0.5;
  VectorXd a1(1), a2(1);
  a1[0] = -1.0;
  a2[0] = 1.0;
  Target cloud = AtomCloud::make(1, {a1, a2}, w);
  NoiseSchedule s = make_li(32, 8.0, 0.5);
  ReverseSamplerSpec spec;
  CHECK_THROWS_AS(kl_decomposition_quadrature(cloud, s, spec), ContractError);
  spec.stop_at = 1;
  KLBreakdown b = kl_decomposition_quadrature(cloud, s, spec);
  CHECK(b.total >= 0.0);
  for (double r : b.rev_error_per_step) CHECK(r >= -1e-10);
}
