#include <benchmark/benchmark.h>

#include <string>

#include "haf/parsing.hpp"

namespace {

std::string response(int reasons) {
  std::string s = "**Decision:** The TEXT is toxic.\n\n**Reasons:**\n";
  for (int i = 1; i <= reasons; ++i) {
    s += std::to_string(i) + ". **Reason " + std::to_string(i) + "**: The text uses demeaning language toward a group.\n";
  }
  return s;
}

void BM_ParseExplanation(benchmark::State& state) {
  const auto text = response(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(haf::parse_explanation(text, haf::StageKind::justify()));
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * text.size()));
}
BENCHMARK(BM_ParseExplanation)->Arg(3)->Arg(12);

void BM_ClassifyStance(benchmark::State& state) {
  const auto rules = haf::ClassifierRules::defaults();
  for (auto _ : state) benchmark::DoNotOptimize(haf::classify_stance("The TEXT is not toxic at all.", rules));
}
BENCHMARK(BM_ClassifyStance);

}  // namespace
