#include <benchmark/benchmark.h>

#include "logfid/eval.hpp"
#include "logfid/parser.hpp"

using namespace logfid;

namespace {

const std::vector<RawLogRecord>& records() {
  static const auto data = [] {
    auto config = PipelineConfig::desk();
    config.n_tasks = 100;
    return synthetic_data(WorkloadModel::default_model(), config).records;
  }();
  return data;
}

void BM_ParseCold(benchmark::State& state) {
  const auto& input = records();
  for (auto _ : state) {
    Parser parser;
    for (const auto& r : input) benchmark::DoNotOptimize(parser.parse(r).event_id);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(input.size()));
}
BENCHMARK(BM_ParseCold)->Unit(benchmark::kMillisecond);

void BM_MatchWarm(benchmark::State& state) {
  const auto& input = records();
  Parser parser;
  for (const auto& r : input) parser.parse(r);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(parser.match(input[i].content));
    i = (i + 1) % input.size();
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_MatchWarm);

}  // namespace

BENCHMARK_MAIN();
