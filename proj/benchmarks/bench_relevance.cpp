#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "haf/similarity.hpp"

namespace {

void BM_TokenRelevance(benchmark::State& state) {
  std::vector<std::string> tokens;
  std::string span;
  for (int i = 0; i < state.range(0); ++i) {
    tokens.push_back(" word" + std::to_string(i % 7));
    span += tokens.back();
  }
  haf::LexicalProvider sim;
  for (auto _ : state) benchmark::DoNotOptimize(haf::token_relevance(sim, span, tokens).normalized.data());
}
BENCHMARK(BM_TokenRelevance)->Arg(8)->Arg(32)->Arg(128);

}  // namespace
