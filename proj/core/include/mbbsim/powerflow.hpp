#pragma once

#include <map>
#include <string>
#include <vector>

#include "mbbsim/network.hpp"
#include "mbbsim/phasor.hpp"

namespace mbbsim {

/// Balanced internal EMF behind sequence impedances; the voltage and angle
/// reference of an island. The stiff positive-sequence branch makes the
/// terminal track the EMF magnitude while negative/zero-sequence current is
/// met by the configured source impedance.
struct SlackSource {
  std::string device_id;
  std::string bus;              // terminal bus (must carry all three phases)
  double emf_ln_v = 0.0;        // balanced EMF magnitude, line-neutral volts
  double angle_rad = 0.0;       // phase-A reference angle
  Complex z1_ohm{0.0, 0.0};
  Complex z2_ohm{0.0, 0.0};
  Complex z0_ohm{0.0, 0.0};
};

/// Per-island injection set for one algebraic solve.
///   device_s_va: constant-power injections, + = into the network.
///   load_s_va:   constant-power demands, + = consumption; these switch to
///                constant-impedance continuation below the voltage floor.
struct InjectionSpec {
  std::map<std::string, PhasorSet> device_s_va;
  std::map<std::string, PhasorSet> load_s_va;
  SlackSource slack;
};

enum class SolveStatus {
  ok,
  not_converged,
  no_grid_forming_device,
  multiple_grid_forming_devices,
};

struct PowerFlowSolution {
  SolveStatus status = SolveStatus::ok;
  bool converged = false;
  int iterations = 0;
  double max_mismatch_va = 0.0;
  /// True when any constant-power load ran in the low-voltage
  /// constant-impedance continuation in the final iterate.
  bool low_voltage_load_model = false;

  /// Line-to-neutral phasors per island bus.
  std::map<std::string, PhasorSet> bus_voltage_v;
  /// Current into each branch at its from side.
  std::map<std::string, PhasorSet> branch_current_a;
  /// Current delivered out of each branch at its to side (differs from the
  /// from-side current across transformers and regulators).
  std::map<std::string, PhasorSet> branch_current_to_a;
  /// Power injected into the network at the slack terminal bus (per phase).
  PhasorSet slack_terminal_s_va{};
};

struct SolveOptions {
  double tolerance_va = 1.0;
  int max_iterations = 50;
  /// Newton updates to take before the tolerance check may accept the
  /// iterate (keeps warm starts consistent with moved boundary values).
  int min_iterations = 0;
  /// Fraction of nominal below which constant-power loads continue as
  /// constant impedance.
  double load_voltage_floor_pu = 0.5;
  SwitchState switches;
  /// Current regulator taps by branch id; falls back to the model's values.
  std::map<std::string, std::array<int, 3>> regulator_taps;
  /// Optional warm start (line-to-neutral volts per bus).
  std::map<std::string, PhasorSet> warm_start_v;
};

/// Newton current-injection solve in phase coordinates of one island.
/// Non-convergence is reported in the solution (best iterate, converged
/// false), not thrown. Missing or ambiguous slack is reported as a status.
PowerFlowSolution solve_island(const NetworkModel& model, const Island& island,
                               const InjectionSpec& injections, const SolveOptions& options);

struct BranchFlow {
  PhasorSet s_from_va{};  // + = into the branch at the from side
  PhasorSet s_to_va{};    // + = delivered out of the branch at the to side
};

/// Per-phase complex power at both ends of every branch with a recorded
/// current. sending - receiving = branch loss.
std::map<std::string, BranchFlow> branch_flows(const NetworkModel& model,
                                               const PowerFlowSolution& solution);

/// Sum of (s_from - s_to) over the given flows.
Complex total_loss_va(const std::map<std::string, BranchFlow>& flows);

}  // namespace mbbsim
