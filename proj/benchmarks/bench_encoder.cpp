#include <benchmark/benchmark.h>

#include "logfid/encoder.hpp"

using namespace logfid;

namespace {

struct Fixture {
  TokenVocab vocab;
  TrainingConfig config;
  EncoderParams params;
  MaskedSample sample;

  explicit Fixture(int d) {
    vocab = compute_token_weights(std::vector<long>(60, 3));
    config.d = d;
    config.n_layers = 2;
    config.n_heads = 4;
    config.max_length = 16;
    params = EncoderParams::random(make_shape(config, vocab), 1);
    std::vector<int> window;
    for (int i = 0; i < config.max_length; ++i) window.push_back((i * 7) % 60);
    sample = generate_masked_set(pad_and_prepend(window, config.max_length, vocab), vocab, {0, 0}).front();
  }
};

void BM_Forward(benchmark::State& state) {
  Fixture f(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(forward(f.params, f.sample.tokens).logits.data());
}
BENCHMARK(BM_Forward)->Arg(16)->Arg(64)->Arg(128);

void BM_ForwardBackward(benchmark::State& state) {
  Fixture f(static_cast<int>(state.range(0)));
  auto grad = EncoderParams::zeros(make_shape(f.config, f.vocab));
  for (auto _ : state) {
    benchmark::DoNotOptimize(accumulate_gradient(f.params, f.sample, f.vocab, grad, 1.0).masked);
  }
}
BENCHMARK(BM_ForwardBackward)->Arg(16)->Arg(64)->Arg(128);

}  // namespace

BENCHMARK_MAIN();
