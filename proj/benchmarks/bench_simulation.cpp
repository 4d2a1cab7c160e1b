#include <benchmark/benchmark.h>

#include "mbbsim/scenario.hpp"
#include "mbbsim/simulation.hpp"

namespace {

using namespace mbbsim;

void BM_CaseBOneSimulatedSecond(benchmark::State& state) {
  const Scenario sc = build_case_b();
  const NetworkModel model = materialize_model(sc);
  SimulationConfig cfg;
  cfg.t_end_s = 1.0;
  for (auto _ : state) {
    const RunResult r = run(model, sc, cfg);
    benchmark::DoNotOptimize(r.records.size());
  }
}
BENCHMARK(BM_CaseBOneSimulatedSecond)->Unit(benchmark::kMillisecond);

void BM_CaseAInitialization(benchmark::State& state) {
  const Scenario sc = build_case_a();
  const NetworkModel model = materialize_model(sc);
  SimulationConfig cfg;
  cfg.t_end_s = 0.002;
  for (auto _ : state) {
    const RunResult r = run(model, sc, cfg);
    benchmark::DoNotOptimize(r.records.size());
  }
}
BENCHMARK(BM_CaseAInitialization)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
