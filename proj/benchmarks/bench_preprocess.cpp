#include <benchmark/benchmark.h>

#include "xlenc/normalize.hpp"
#include "xlenc/vocab.hpp"

namespace {

using namespace xlenc;

const std::string kTweet =
    "@redcross Flooding near the river!!! Need help http://t.co/abc123 &amp; water \xf0\x9f\x94\xa5 #help\n\n"
    "Stay safe \xe2\x9d\xa4\xef\xb8\x8f";

void BM_Normalize(benchmark::State& state) {
  const preprocess::Normalizer normalize;
  for (auto _ : state) benchmark::DoNotOptimize(normalize(kTweet));
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(kTweet.size()));
}
BENCHMARK(BM_Normalize);

void BM_Tokenize(benchmark::State& state) {
  const std::string text = preprocess::Normalizer()(kTweet);
  const preprocess::Vocabulary vocab({"flooding", "near", "the", "river", "need", "help", "water"});
  for (auto _ : state) benchmark::DoNotOptimize(preprocess::tokenize(text, vocab, 128));
}
BENCHMARK(BM_Tokenize);

}  // namespace
