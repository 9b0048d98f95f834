#include <benchmark/benchmark.h>

#include "xlenc/eval.hpp"
#include "xlenc/random.hpp"

namespace {

using namespace xlenc;

Matrix<float> random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix<float> m(rows, cols);
  for (auto& x : m.data) x = static_cast<float>(rng.uniform(-1, 1));
  return m;
}

void BM_MatchAccuracy(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto e = random_matrix(n, 32, 1);
  const auto t = random_matrix(n, 32, 2);
  for (auto _ : state) benchmark::DoNotOptimize(eval::match_report(e, t));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_MatchAccuracy)->RangeMultiplier(4)->Range(64, 4096)->Complexity(benchmark::oNSquared);

void BM_WeightedAvgCosine(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto m = random_matrix(n, 32, 3);
  std::vector<std::string> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = "c" + std::to_string(i % 8);
  for (auto _ : state) benchmark::DoNotOptimize(eval::weighted_avg_cosine(m, std::span<const std::string>(labels)));
}
BENCHMARK(BM_WeightedAvgCosine)->Arg(256)->Arg(2048);

}  // namespace
