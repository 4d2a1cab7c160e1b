#pragma once

#include <map>
#include <string>
#include <vector>

#include "mbbsim/metrics.hpp"
#include "mbbsim/network.hpp"
#include "mbbsim/scenario.hpp"

namespace mbbsim {

struct SimulationConfig {
  double dt_s = 0.001;
  double t_end_s = 0.0;  // 0 = use the scenario's horizon
  double pf_tolerance_va = 1.0;
  int pf_max_iterations = 50;
  int record_decimation = 10;

  void validate() const;  // throws ValidationError; 0 < dt <= 0.01, t_end > 0
};

struct DeviceRecord {
  double p_kw = 0.0;       // + = injection into the network
  double q_kvar = 0.0;
  double frequency_hz = 0.0;  // grid-forming units only, else 0
  double energy_kwh = 0.0;
  double s_over_rating = 0.0;
  bool grid_forming = false;
};

struct IslandRecord {
  std::string head_bus;  // smallest member bus id
  bool energized = false;
  double frequency_hz = 0.0;
  double gen_p_kw = 0.0;
  double load_p_kw = 0.0;
  double loss_p_kw = 0.0;
  double gen_q_kvar = 0.0;
  double load_q_kvar = 0.0;
  double loss_q_kvar = 0.0;
  int pf_iterations = 0;
  double pf_mismatch_va = 0.0;
};

struct BtbRecord {
  double p_local_kw = 0.0;   // injected into the local-side bus
  double p_remote_kw = 0.0;  // injected into the remote-side bus
  double vdc_pu = 1.0;
  double energy_in_j = 0.0;  // exact accumulated DC-link input energy
};

/// One (decimated) snapshot of the simulation.
struct TimeSeriesRecord {
  double t = 0.0;
  std::map<std::string, PhasorSet> bus_voltage_v;
  std::map<std::string, DeviceRecord> devices;
  std::vector<IslandRecord> islands;
  std::map<std::string, UnbalanceMetrics> vuf;  // monitored buses
  std::map<std::string, BtbRecord> btb;
  /// Per-phase complex power entering each closed switch branch at its from
  /// side (VA). Switch branches are the interconnection ties, so this is
  /// where exchanged per-phase power is read off.
  std::map<std::string, PhasorSet> tie_flow_va;
};

enum class RunStatus {
  ok,
  initial_condition_failure,
  mid_run_divergence,
  device_abort,
};

std::string to_string(RunStatus s);

struct RunStatistics {
  long total_steps = 0;
  long total_pf_iterations = 0;
  int max_step_iterations = 0;
  double max_mismatch_va = 0.0;
  double max_s_over_rating = 0.0;
};

struct RunResult {
  RunStatus status = RunStatus::ok;
  std::string diagnostic;
  std::vector<TimeSeriesRecord> records;
  RunStatistics stats;

  bool ok() const { return status == RunStatus::ok; }
};

/// Runs the scenario on the materialized model: fixed-step integration of
/// the device states interleaved with per-island algebraic power-flow
/// solutions and the timed event script. On mid-run failure the records up
/// to the failure are returned together with a diagnostic.
RunResult run(const NetworkModel& model, const Scenario& scenario, const SimulationConfig& config);

/// Convenience: materialize the scenario's own base system first.
RunResult run(const Scenario& scenario, const SimulationConfig& config);

}  // namespace mbbsim
