#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "stepconf/scorer.hpp"
#include "stepconf/uncertainty.hpp"

using namespace stepconf;

namespace {

std::vector<SentenceSpan> synthetic_sentences(int count, int tokens_per_sentence) {
  static const std::vector<std::string> vocab = {"red",  "drum",  "sky",   "cat",
                                                 "tower", "river", "light", "cloud"};
  std::mt19937_64 rng(12345);
  std::uniform_real_distribution<double> logprob(-3.0, 0.0);
  std::uniform_real_distribution<double> entropy(0.0, 2.0);

  std::vector<SentenceSpan> sentences;
  sentences.reserve(count);
  for (int i = 0; i < count; ++i) {
    SentenceSpan sentence;
    sentence.index = 0;
    for (int t = 0; t < tokens_per_sentence; ++t) {
      TokenRecord token;
      token.text = vocab[rng() % vocab.size()];
      token.logprob = logprob(rng);
      token.entropy = entropy(rng);
      sentence.tokens.push_back(std::move(token));
      sentence.text += (t ? " " : "") + sentence.tokens.back().text;
    }
    sentences.push_back(std::move(sentence));
  }
  return sentences;
}

void BM_lnlp(benchmark::State& state) {
  const auto sentences = synthetic_sentences(256, static_cast<int>(state.range(0)));
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(u_lnlp(sentences[i++ % sentences.size()]));
  }
}
BENCHMARK(BM_lnlp)->Arg(8)->Arg(32);

void BM_mte(benchmark::State& state) {
  const auto sentences = synthetic_sentences(256, static_cast<int>(state.range(0)));
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(u_mte(sentences[i++ % sentences.size()]));
  }
}
BENCHMARK(BM_mte)->Arg(8)->Arg(32);

void BM_token_relevance_bow(benchmark::State& state) {
  const auto sentences = synthetic_sentences(64, static_cast<int>(state.range(0)));
  const BowScorer scorer;
  std::size_t i = 0;
  for (auto _ : state) {
    const auto& sentence = sentences[i++ % sentences.size()];
    benchmark::DoNotOptimize(token_relevance(sentence, "what is shown", scorer));
  }
}
BENCHMARK(BM_token_relevance_bow)->Arg(8)->Arg(32);

void BM_fit_normalizer(benchmark::State& state) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<ComponentScores> dataset(static_cast<std::size_t>(state.range(0)));
  for (auto& c : dataset) {
    c.lnlp = 1.0 + 10.0 * unit(rng);
    c.mte = 2.0 * unit(rng);
    c.token_sar = 3.0 * unit(rng);
    c.clip = unit(rng);
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(fit_normalizer(dataset, {0.25, 0.25, 0.25, 0.25}));
  }
}
BENCHMARK(BM_fit_normalizer)->Arg(1000)->Arg(10000);

}  // namespace

BENCHMARK_MAIN();
