#include <benchmark/benchmark.h>

#include <random>

#include "causalma/heterogeneity.hpp"
#include "causalma/nuisance.hpp"
#include "causalma/prediction.hpp"
#include "causalma/simulation.hpp"
#include "causalma/transport_estimators.hpp"

using namespace causalma;

namespace {

IpdDataset dataset_with(int m) {
  Scenario s;
  s.m = m;
  return gen_dataset(s, 0).dataset;
}

BootstrapSettings settings_for(benchmark::State& state) {
  BootstrapSettings settings;
  settings.replicates = static_cast<int>(state.range(1));
  settings.seed = 1;
  settings.workers = 1;
  return settings;
}

void BM_SimpleBootstrap(benchmark::State& state) {
  const IpdDataset ds = dataset_with(static_cast<int>(state.range(0)));
  const BootstrapSettings settings = settings_for(state);
  for (auto _ : state) benchmark::DoNotOptimize(simple_bootstrap_predict(ds, kTreatedArm, Method::OM, settings));
}
BENCHMARK(BM_SimpleBootstrap)->Args({5, 1000})->Args({15, 1000})->Unit(benchmark::kMillisecond);

void BM_WildBootstrap(benchmark::State& state) {
  const IpdDataset ds = dataset_with(static_cast<int>(state.range(0)));
  const BootstrapSettings settings = settings_for(state);
  for (auto _ : state) benchmark::DoNotOptimize(wild_bootstrap_predict(ds, kTreatedArm, settings));
}
BENCHMARK(BM_WildBootstrap)->Args({5, 1000})->Args({15, 1000})->Unit(benchmark::kMillisecond);

void BM_PooledEstimate(benchmark::State& state) {
  const IpdDataset ds = dataset_with(5);
  const auto method = static_cast<Method>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(estimate_pooled(ds, kTreatedArm, method));
}
BENCHMARK(BM_PooledEstimate)->Arg(0)->Arg(1)->Arg(2)->Unit(benchmark::kMicrosecond);

void BM_GammaSquared(benchmark::State& state) {
  const auto m = static_cast<Eigen::Index>(state.range(0));
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal;
  Eigen::VectorXd mu(m);
  for (auto& v : mu) v = normal(rng);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Constant(m, m, 0.1);
  cov.diagonal().array() += 0.5;
  const auto estimates = CorrelatedEstimates::with_equal_weights(mu, cov);
  for (auto _ : state) benchmark::DoNotOptimize(estimate_gamma_squared(estimates));
}
BENCHMARK(BM_GammaSquared)->Arg(5)->Arg(50)->Arg(500);

void BM_OutcomeFit(benchmark::State& state) {
  const auto n = state.range(0);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd x(n, 3);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < 3; ++j) x(i, j) = normal(rng);
    y[i] = 0.5 + x.row(i).sum() * 0.5 + normal(rng);
  }
  for (auto _ : state) benchmark::DoNotOptimize(fit_outcome_model(x, y));
}
BENCHMARK(BM_OutcomeFit)->Arg(50)->Arg(10000);

}  // namespace

BENCHMARK_MAIN();
