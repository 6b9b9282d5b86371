#include <benchmark/benchmark.h>

#include <random>

#include "logfid/detector.hpp"

using namespace logfid;

namespace {

std::vector<std::vector<int>> sequences(int symbols, int count, int length) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> sym(0, symbols - 1);
  std::vector<std::vector<int>> out(static_cast<std::size_t>(count));
  for (auto& s : out) {
    for (int i = 0; i < length; ++i) s.push_back(sym(rng));
  }
  return out;
}

void BM_LogLikelihood(benchmark::State& state) {
  const int length = static_cast<int>(state.range(0));
  const auto data = sequences(10, 50, 40);
  const auto model = fit_hmm(data, 2, 10, 1);
  const auto obs = sequences(10, 1, length).front();
  for (auto _ : state) benchmark::DoNotOptimize(log_likelihood(model, obs));
  state.SetItemsProcessed(state.iterations() * length);
}
BENCHMARK(BM_LogLikelihood)->Arg(10)->Arg(100)->Arg(1000);

void BM_BaumWelch(benchmark::State& state) {
  const auto data = sequences(10, static_cast<int>(state.range(0)), 40);
  for (auto _ : state) benchmark::DoNotOptimize(fit_hmm(data, 2, 10, 1).pi.data());
}
BENCHMARK(BM_BaumWelch)->Arg(100)->Arg(400)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
