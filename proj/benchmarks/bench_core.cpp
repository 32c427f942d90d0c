#include <benchmark/benchmark.h>

#include "ddpm/metrics.hpp"
#include "ddpm/tweedie.hpp"

namespace {

using namespace ddpm;

Target gauss2d() {
  MatrixXd cov = MatrixXd::Zero(2, 2);
  cov(0, 0) = 1.0;
  cov(1, 1) = 0.25;
  return GaussianMixture::make(2, VectorXd::Ones(1), {VectorXd::Zero(2)},
                               {cov});
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

void BM_GaussianChain(benchmark::State& state) {
  const Target g = gauss2d();
  const int T = static_cast<int>(state.range(0));
  NoiseSchedule s = make_constant(T, 2.0);
  ReverseSamplerSpec spec;
  for (auto _ : state)
    benchmark::DoNotOptimize(gaussian_chain(g, s, spec).kl_exact);
}
BENCHMARK(BM_GaussianChain)->Arg(256)->Arg(1024)->Arg(4096);

void BM_OracleDerivatives(benchmark::State& state) {
  MarginalOracle oracle(mixture1d(), 0.5);
  VectorXd x(1);
  x[0] = 0.7;
  for (auto _ : state) benchmark::DoNotOptimize(oracle.derivatives(x));
}
BENCHMARK(BM_OracleDerivatives);

void BM_PosteriorMomentsFormula(benchmark::State& state) {
  const Target mix = mixture1d();
  NoiseSchedule s = make_constant(64, 2.0);
  VectorXd x(1);
  x[0] = 0.7;
  for (auto _ : state)
    benchmark::DoNotOptimize(posterior_moments_formula(mix, s, 32, x).sixth);
}
BENCHMARK(BM_PosteriorMomentsFormula);

void BM_ReverseSampler(benchmark::State& state) {
  const Target g = gauss2d();
  NoiseSchedule s = make_constant(128, 2.0);
  ReverseSamplerSpec spec;
  for (auto _ : state)
    benchmark::DoNotOptimize(run_reverse(spec, g, s, 64, 1).samples.sum());
}
BENCHMARK(BM_ReverseSampler);

}  // namespace

BENCHMARK_MAIN();
