// Copyright 2026 The Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cstddef>
#include <random>
#include <vector>

#include "benchmark/benchmark.h"
#include "crust/coreset.h"
#include "crust/data.h"
#include "crust/linalg.h"
#include "crust/model.h"

namespace crust {
namespace {

linalg::DenseMatrix Gaussian(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  linalg::DenseMatrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) m(i, j) = z(rng);
  }
  return m;
}

void BM_PairwiseDissimilarity(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const linalg::DenseMatrix g = Gaussian(n, 10, 1);
  const auto metric = state.range(1) == 0 ? coreset::Metric::kEuclidean
                                          : coreset::Metric::kCosine;
  for (auto _ : state) {
    benchmark::DoNotOptimize(coreset::PairwiseDissimilarity(g, metric));
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_PairwiseDissimilarity)
    ->ArgsProduct({{250, 500, 1000}, {0, 1}})
    ->Unit(benchmark::kMillisecond);

void BM_GreedySelect(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const coreset::DissimilarityMatrix d =
      coreset::PairwiseDissimilarity(Gaussian(n, 10, 2), coreset::Metric::kEuclidean);
  const auto method =
      state.range(1) == 0 ? coreset::GreedyMethod::kPlain : coreset::GreedyMethod::kLazy;
  for (auto _ : state) {
    benchmark::DoNotOptimize(coreset::GreedySelect(d, 100, method));
  }
  state.SetLabel(state.range(1) == 0 ? "plain" : "lazy");
}
BENCHMARK(BM_GreedySelect)
    ->ArgsProduct({{250, 500, 1000}, {0, 1}})
    ->Unit(benchmark::kMillisecond);

void BM_SymEigen(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const linalg::DenseMatrix a = Gaussian(n, n, 3);
  linalg::DenseMatrix sym(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) sym(i, j) = a(i, j) + a(j, i);
  }
  for (auto _ : state) benchmark::DoNotOptimize(linalg::SymEigen(sym));
}
BENCHMARK(BM_SymEigen)->Arg(50)->Arg(100)->Arg(200)->Unit(benchmark::kMillisecond);

void BM_SpectralCluster(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const linalg::DenseMatrix g = Gaussian(n, 10, 4);
  const auto solver = state.range(1) == 0 ? coreset::SpectralSolver::kDense
                                          : coreset::SpectralSolver::kAuto;
  for (auto _ : state) benchmark::DoNotOptimize(coreset::SpectralCluster(g, 8, 0, solver));
  state.SetLabel(state.range(1) == 0 ? "dense" : "auto");
}
BENCHMARK(BM_SpectralCluster)
    ->ArgsProduct({{200, 500}, {0, 1}})
    ->Unit(benchmark::kMillisecond);

// One epoch of 784-128-10 training on 1000 random images, batch 32.
void BM_TrainEpoch(benchmark::State& state) {
  const linalg::DenseMatrix x = Gaussian(1000, 784, 5);
  std::vector<model::Example> examples;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    examples.push_back({x.row(i), static_cast<int>(i % 10), 1.0});
  }
  model::TrainConfig cfg;
  cfg.optimizer = model::OptimizerKind::kAdam;
  cfg.batch_size = 32;
  model::MlpClassifier net({784, 128, 10}, 6);
  model::Optimizer optimizer(net, cfg);
  std::uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(model::TrainEpoch(net, optimizer, examples, cfg, seed++));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(examples.size()));
}
BENCHMARK(BM_TrainEpoch)->Unit(benchmark::kMillisecond);

void BM_LastLayerGradients(benchmark::State& state) {
  const data::Dataset ds = data::GenerateGaussianBlobs(10, 100, 784, 1.0, 7);
  std::vector<std::size_t> idx(ds.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const model::MlpClassifier net({784, 128, 10}, 8);
  const auto mode = state.range(0) == 0 ? model::GradientMode::kLogits
                                        : model::GradientMode::kLastLayerWeights;
  for (auto _ : state) benchmark::DoNotOptimize(model::LastLayerGradients(net, ds, idx, mode));
  state.SetLabel(state.range(0) == 0 ? "logits" : "last_layer_weights");
}
BENCHMARK(BM_LastLayerGradients)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace crust

BENCHMARK_MAIN();
