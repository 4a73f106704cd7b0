#include <benchmark/benchmark.h>

#include "pdatt/simulation.hpp"

using namespace pdatt;

namespace {

// small truth budget: the benchmark times replications, not the truth pass
constexpr long kBenchTruthDraws = 200'000;

void run_mc(benchmark::State& state, bool serial) {
  DgpConfig cfg;
  cfg.n = static_cast<int>(state.range(0));
  McOptions opt;
  opt.serial = serial;
  opt.truth_draws = kBenchTruthDraws;
  true_pdatt(cfg, kBenchTruthDraws);  // warm the truth cache
  for (auto _ : state) {
    McResult r = run_monte_carlo(cfg, 8, opt);
    benchmark::DoNotOptimize(r.cells.front().mean_estimate);
  }
  state.SetItemsProcessed(state.iterations() * 8);
}

void BM_MonteCarloSerial(benchmark::State& state) { run_mc(state, true); }
void BM_MonteCarloParallel(benchmark::State& state) { run_mc(state, false); }

void BM_RobustEstimate(benchmark::State& state) {
  DgpConfig cfg;
  cfg.n = static_cast<int>(state.range(0));
  Rng rng = make_stream(cfg.seed, 0);
  PanelSample s = generate_sample(cfg, rng);
  for (auto _ : state) {
    EstimateResult r = estimate_robust(s, EstimandSpec{});
    benchmark::DoNotOptimize(r.tau_hat);
  }
}

void BM_Truth(benchmark::State& state) {
  DgpConfig cfg;
  long draws = state.range(0);
  for (auto _ : state) {
    cfg.params.gamma1(0) += 1e-12;  // defeat the truth cache
    auto t = true_pdatt(cfg, draws);
    benchmark::DoNotOptimize(t[0]);
  }
}

}  // namespace

BENCHMARK(BM_MonteCarloSerial)->Arg(2000)->Arg(10000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MonteCarloParallel)->Arg(2000)->Arg(10000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RobustEstimate)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Truth)->Arg(1 << 20)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
