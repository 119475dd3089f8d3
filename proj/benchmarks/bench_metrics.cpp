#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "stepconf/align.hpp"
#include "stepconf/metrics.hpp"
#include "stepconf/scorer.hpp"

using namespace stepconf;

namespace {

std::vector<ConfidencePair> random_pairs(int n) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> conf(0.0, 1.0);
  std::vector<ConfidencePair> pairs;
  pairs.reserve(n);
  for (int i = 0; i < n; ++i) {
    pairs.push_back({conf(rng), static_cast<int>(rng() % 2)});
  }
  pairs[0] = {0.9, 1};
  pairs[1] = {0.1, 0};
  return pairs;
}

void BM_ece(benchmark::State& state) {
  const auto pairs = random_pairs(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(ece(pairs, 10));
  }
}
BENCHMARK(BM_ece)->Arg(1000)->Arg(100000);

void BM_auroc(benchmark::State& state) {
  const auto pairs = random_pairs(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(auroc(pairs));
  }
}
BENCHMARK(BM_auroc)->Arg(1000)->Arg(100000);

void BM_align_bow(benchmark::State& state) {
  static const std::vector<std::string> bank = {
      "the image shows a red drum",      "the drum has a wooden shell",
      "players hold curved sticks",      "the field has painted white lines",
      "the tower is the eiffel tower",   "so the city is paris",
      "a small orange cat on the sofa",  "the bus in the image is yellow",
  };
  std::mt19937_64 rng(3);
  ReferenceChain chain;
  chain.id = "bench";
  for (int i = 0; i < static_cast<int>(state.range(0)); ++i) {
    chain.perception.push_back(bank[rng() % bank.size()]);
  }
  std::vector<std::string> predictions;
  for (int i = 0; i < static_cast<int>(state.range(0)); ++i) {
    predictions.push_back(bank[rng() % bank.size()]);
  }
  const BowScorer scorer;
  for (auto _ : state) {
    benchmark::DoNotOptimize(align(predictions, chain, scorer, 0.64));
  }
}
BENCHMARK(BM_align_bow)->Arg(8)->Arg(64);

}  // namespace

BENCHMARK_MAIN();
