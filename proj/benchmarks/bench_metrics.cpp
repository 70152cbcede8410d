#include <benchmark/benchmark.h>

#include <random>

#include "haf/metrics.hpp"

namespace {

std::vector<double> draw(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

void BM_Sos(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto c = draw(rng, n), g = draw(rng, n);
  std::vector<haf::ReasonSupport> r;
  for (std::size_t i = 0; i < n; ++i) r.push_back({c[i], g[i]});
  haf::MetricWeights w;
  for (auto _ : state) benchmark::DoNotOptimize(haf::sos(r, w));
}
BENCHMARK(BM_Sos)->Arg(4)->Arg(16)->Arg(64);

void BM_Dis(benchmark::State& state) {
  std::mt19937_64 rng(2);
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto c = draw(rng, n);
  std::vector<std::vector<double>> h(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) h[i][j] = h[j][i] = draw(rng, 1)[0];
  for (auto _ : state) benchmark::DoNotOptimize(haf::dis(c, h));
}
BENCHMARK(BM_Dis)->Arg(4)->Arg(16)->Arg(64);

void BM_Rn(benchmark::State& state) {
  std::mt19937_64 rng(3);
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<haf::NecessityEvidence> ev;
  for (std::size_t i = 0; i < n; ++i) ev.push_back({draw(rng, 1)[0], draw(rng, 1)[0], draw(rng, 1)[0]});
  haf::MetricWeights w;
  for (auto _ : state) benchmark::DoNotOptimize(haf::rn(haf::DecisionKind::Insufficient, 0.7, ev, w).value);
}
BENCHMARK(BM_Rn)->Arg(1)->Arg(8);

}  // namespace

BENCHMARK_MAIN();
