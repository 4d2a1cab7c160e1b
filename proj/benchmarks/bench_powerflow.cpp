#include <benchmark/benchmark.h>

#include "mbbsim/builtin_system.hpp"
#include "mbbsim/powerflow.hpp"

namespace {

using namespace mbbsim;

struct Fixture {
  NetworkModel model;
  SwitchState switches;
  Island island;
  InjectionSpec injections;
  SolveOptions options;

  Fixture() {
    SystemDescription d = builtin_twin_feeder();
    for (DeviceSpec& dev : d.devices) {
      if (dev.kind == DeviceKind::bess) dev.grid_forming = false;
    }
    model = build_network(d);
    switches = model.default_switch_state();
    const auto islands = find_islands(model, switches);
    for (const Island& i : islands) {
      if (i.grid_forming_device) island = i;
    }
    const double z_base = 4160.0 * 4160.0 / 1e6;
    injections.slack.device_id = "grid-source";
    injections.slack.bus = "grid";
    injections.slack.emf_ln_v = 4160.0 / kSqrt3;
    injections.slack.z1_ohm = Complex{0.001, 0.01} * z_base;
    injections.slack.z2_ohm = injections.slack.z1_ohm;
    injections.slack.z0_ohm = injections.slack.z1_ohm;
    for (const Load& l : model.loads()) {
      PhasorSet& slot = injections.load_s_va[l.bus];
      for (int i = 0; i < 3; ++i) slot[i] += l.s_va[i];
    }
    options.switches = switches;
  }
};

void BM_SolveTwinFeederColdStart(benchmark::State& state) {
  const Fixture f;
  for (auto _ : state) {
    const PowerFlowSolution sol = solve_island(f.model, f.island, f.injections, f.options);
    benchmark::DoNotOptimize(sol.iterations);
  }
}
BENCHMARK(BM_SolveTwinFeederColdStart);

void BM_SolveTwinFeederWarmStart(benchmark::State& state) {
  Fixture f;
  const PowerFlowSolution seed = solve_island(f.model, f.island, f.injections, f.options);
  f.options.warm_start_v = seed.bus_voltage_v;
  for (auto _ : state) {
    const PowerFlowSolution sol = solve_island(f.model, f.island, f.injections, f.options);
    benchmark::DoNotOptimize(sol.iterations);
  }
}
BENCHMARK(BM_SolveTwinFeederWarmStart);

}  // namespace
