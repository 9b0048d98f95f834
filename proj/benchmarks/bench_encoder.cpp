#include <benchmark/benchmark.h>

#include "xlenc/encoder.hpp"
#include "xlenc/random.hpp"

namespace {

using namespace xlenc;

std::vector<preprocess::TokenizedSequence> random_batch(const encoder::EncoderConfig& c, std::size_t n) {
  Rng rng(1);
  std::vector<preprocess::TokenizedSequence> batch(n);
  for (auto& s : batch) {
    const std::size_t len = 1 + rng.below(c.max_len);
    s.ids.assign(c.max_len, 0);
    s.mask.assign(c.max_len, 0);
    for (std::size_t t = 0; t < len; ++t) {
      s.ids[t] = static_cast<std::int32_t>(1 + rng.below(c.vocab_size - 1));
      s.mask[t] = 1;
    }
  }
  return batch;
}

encoder::EncoderConfig config(std::int64_t d_model, std::int64_t blocks) {
  encoder::EncoderConfig c;
  c.vocab_size = 2000;
  c.d_model = static_cast<std::size_t>(d_model);
  c.n_blocks = static_cast<std::size_t>(blocks);
  c.n_heads = 4;
  c.d_teacher = 32;
  c.max_len = 32;
  return c;
}

void BM_Forward(benchmark::State& state) {
  const auto c = config(state.range(0), state.range(1));
  const auto params = encoder::init_params<float>(c, 1);
  const auto batch = random_batch(c, 64);
  for (auto _ : state) {
    auto r = encoder::forward(params, std::span<const preprocess::TokenizedSequence>(batch), encoder::Mode::kInfer);
    benchmark::DoNotOptimize(r.embeddings.data.data());
  }
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_Forward)->Args({32, 0})->Args({32, 1})->Args({64, 2});

void BM_ForwardBackward(benchmark::State& state) {
  const auto c = config(state.range(0), state.range(1));
  const auto params = encoder::init_params<float>(c, 1);
  const auto batch = random_batch(c, 64);
  const Matrix<float> grad(64, c.d_teacher, 1e-3f);
  for (auto _ : state) {
    auto r = encoder::forward(params, std::span<const preprocess::TokenizedSequence>(batch), encoder::Mode::kTrain);
    auto g = encoder::backward(params, *r.trace, grad);
    benchmark::DoNotOptimize(g.head.data.data());
  }
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_ForwardBackward)->Args({32, 1})->Args({64, 2});

}  // namespace
