/*
 * Copyright (c) 2026, The vencode Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <random>

#include <benchmark/benchmark.h>

#include "vencode/aggregate.hpp"
#include "vencode/metrics.hpp"
#include "vencode/ridge.hpp"
#include "vencode/synth.hpp"

using namespace vencode;

namespace {

Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = z(rng);
  return m;
}

void BM_ClosedFormFit(benchmark::State& state) {
  const auto n = state.range(0), d = state.range(1);
  const auto E = gaussian(n, d, 1), Y = gaussian(n, 50, 2);
  for (auto _ : state) benchmark::DoNotOptimize(ridge::fit_closed_form(E, Y, 0.01));
}
BENCHMARK(BM_ClosedFormFit)->Args({200, 64})->Args({1000, 128})->Args({2000, 256});

void BM_SelectLambda(benchmark::State& state) {
  const auto E = gaussian(state.range(0), 64, 3), Y = gaussian(state.range(0), 50, 4);
  for (auto _ : state) benchmark::DoNotOptimize(ridge::select_lambda(E, Y, ridge::kDefaultLambdaGrid, 5, 0));
}
BENCHMARK(BM_SelectLambda)->Arg(200)->Arg(1000);

void BM_GradientFit(benchmark::State& state) {
  const auto E = gaussian(200, 32, 5), Y = gaussian(200, 20, 6);
  ridge::LossConfig cfg;
  cfg.max_iterations = 200;
  for (auto _ : state) benchmark::DoNotOptimize(ridge::fit_gradient(E, Y, 0.01, cfg));
}
BENCHMARK(BM_GradientFit);

void BM_DesignMatrix(benchmark::State& state) {
  auto cfg = synth::preset_config(synth::Preset::averaging, 0);
  const auto bundle = synth::make_bundle(cfg, synth::Preset::averaging);
  const auto m = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(aggregate::build_design_matrix(*bundle.views, bundle.catalog, aggregate::Featurization::F,
                                                            m, aggregate::OrderingStrategy::random(0)));
  }
}
BENCHMARK(BM_DesignMatrix)->Arg(5)->Arg(100);

void BM_PearsonScores(benchmark::State& state) {
  const auto P = gaussian(state.range(0), 1000, 7), O = gaussian(state.range(0), 1000, 8);
  for (auto _ : state) benchmark::DoNotOptimize(metrics::pearson_scores(P, O));
}
BENCHMARK(BM_PearsonScores)->Arg(50)->Arg(500);

}  // namespace

BENCHMARK_MAIN();
