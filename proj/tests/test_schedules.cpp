#include <doctest.h>

#include <cmath>

#include "ddpm/schedules.hpp"
#include "ddpm/targets.hpp"

using namespace ddpm;

TEST_CASE("constant schedule values and aggregates") {
  const int T = 128;
  const double c = 2.0;
  NoiseSchedule s = make_constant(T, c);
  const double b = c * std::log(static_cast<double>(T)) / T;
  for (int t = 1; t <= T; ++t)
    CHECK(s.a(t) == doctest::Approx(1.0 - b).epsilon(1e-15));
  CHECK(s.abar(0) == 1.0);
  // Log-space accumulation keeps abar accurate at large t.
  CHECK(s.abar(T) ==
        doctest::Approx(std::pow(1.0 - b, T)).epsilon(1e-12));
  CHECK(s.sigma2(3) == doctest::Approx(b / (1.0 - b)));
}

TEST_CASE("constant schedule contracts") {
  // Step size reaching 1 is an error (alpha would be <= 0).
  CHECK_THROWS_AS(make_constant(4, 3.0), ContractError);  // 3 log4/4 > 1
  CHECK_THROWS_AS(make_constant(1, 2.0), ContractError);
  // Small c only warns: the regular theory wants c > 1, accelerated c > 2.
  NoiseSchedule weak = make_constant(64, 0.5);
  CHECK(!weak.warnings.empty());
  CHECK(make_constant(64, 2.5).warnings.empty());
}

TEST_CASE("li schedule matches Eq.(8) and first step is exactly delta") {
  const int T = 256;
  const double c = 3.0, delta = 0.05;
  NoiseSchedule s = make_li(T, c, delta);
  CHECK(s.a(1) == 1.0 - delta);  // stored alpha_1 is exactly fl(1 - delta)
  const double r = c * std::log(static_cast<double>(T)) / T;
  for (int t = 2; t <= T; ++t) {
    const double expected = r * std::min(delta * std::pow(1.0 + r, t), 1.0);
    CHECK(1.0 - s.a(t) == doctest::Approx(expected).epsilon(1e-14));
  }
  // abar strictly decreasing.
  for (int t = 1; t <= T; ++t) CHECK(s.abar(t) < s.abar(t - 1));
}

TEST_CASE("li schedule contracts") {
  CHECK_THROWS_AS(make_li(64, 2.0, 0.5), ContractError);   // needs c > 2
  CHECK_THROWS_AS(make_li(64, 3.0, 1.5), ContractError);   // delta >= 1
  CHECK_THROWS_AS(make_li(64, 3.0, 1e-3), ContractError);  // delta <= e^{-c}
  CHECK_NOTHROW(make_li(64, 3.0, 0.06));
}

TEST_CASE("diagnostics report the max ratio and step") {
  NoiseSchedule s = make_li(512, 3.0, 0.05);
  ScheduleDiagnostics d = diagnostics(s, 2);
  CHECK(d.abar_T == doctest::Approx(s.abar(s.T)));
  double want = 0.0, step = 0.0;
  for (int t = 2; t <= s.T; ++t) {
    const double prev = 1.0 - s.abar(t - 1);
    want = std::max(want, (1.0 - s.a(t)) / (prev * prev));
  }
  for (int t = 1; t <= s.T; ++t) step = std::max(step, 1.0 - s.a(t));
  CHECK(d.max_ratio == doctest::Approx(want).epsilon(1e-12));
  CHECK(d.max_step == doctest::Approx(step));
}
