#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mbbsim/errors.hpp"
#include "mbbsim/phasor.hpp"

namespace mbbsim {

/// 3x3 complex phase-impedance (or admittance) matrix. Rows/columns follow
/// Phase ordering A,B,C; entries for absent phases are zero.
using Mat3 = std::array<std::array<Complex, 3>, 3>;

Mat3 mat3_zero();

/// Replaces self and mutual terms by their averages, the impedance matrix of
/// an ideally transposed line. Only meaningful for three-phase configs.
Mat3 transpose_line_config(const Mat3& z);

struct Bus {
  std::string id;
  double nominal_v_ll = 0.0;  // line-to-line volts
  PhaseMask phases = PhaseMask::abc();

  double nominal_v_ln() const { return nominal_v_ll / kSqrt3; }
};

enum class BranchKind { line, transformer, regulator, sw };

std::string to_string(BranchKind k);

/// Step-voltage regulator: per-phase taps, remote voltage sensing.
/// Tap ratio on the regulated (to) side is 1 + tap * range / (tap_count/2).
struct RegulatorSettings {
  std::string controlled_bus;       // remote sensing bus
  int tap_count = 32;               // total steps; taps live in [-16, +16]
  double range = 0.10;              // +/- fraction of nominal
  double bandwidth_v = 2.0;         // on the 120 V base
  double setpoint_v = 120.0;        // on the 120 V base
  double control_interval_s = 0.1;  // one tap movement per interval at most
  double controlled_bus_ln_v = 2401.7771;  // volts corresponding to 120 V
  std::array<int, 3> taps{0, 0, 0};

  int max_tap() const { return tap_count / 2; }
  double ratio(Phase p) const {
    return 1.0 + taps[index_of(p)] * range / static_cast<double>(max_tap());
  }
};

/// Moves each phase tap at most one step toward bringing the measured
/// magnitude into [setpoint - bandwidth/2, setpoint + bandwidth/2].
RegulatorSettings regulator_step(const RegulatorSettings& settings,
                                 const PhasorSet& measured_voltage);

struct Branch {
  std::string id;
  std::string from_bus;
  std::string to_bus;
  BranchKind kind = BranchKind::line;
  PhaseMask phases = PhaseMask::abc();

  // line | sw: total series impedance in ohms (already scaled by length).
  Mat3 z_ohm = mat3_zero();
  double length_ft = 0.0;

  // transformer: per-phase series impedance in per unit on the rating base.
  double rating_kva = 0.0;
  double primary_ll_v = 0.0;
  double secondary_ll_v = 0.0;
  Complex z_pu{0.0, 0.0};

  // regulator only
  RegulatorSettings regulator;
};

struct Load {
  std::string id;
  std::string bus;
  /// Per-phase complex power demand in VA (positive = consumption).
  PhasorSet s_va{};
  bool in_service = true;

  int phase_count() const;
  Complex total_va() const { return s_va[0] + s_va[1] + s_va[2]; }
};

struct ShuntCapacitor {
  std::string id;
  std::string bus;
  double rating_kvar = 0.0;  // three-phase total at nominal voltage
  PhaseMask phases = PhaseMask::abc();
  bool in_service = true;
};

enum class DeviceKind { grid_source, bess, pv, diesel, v2g, btb };

std::string to_string(DeviceKind k);

/// Frequency/voltage droop and source-impedance parameters of a
/// grid-forming unit. Impedances are per unit on the 1 MVA system base.
struct GridFormingParams {
  double droop_hz_per_kw = 2.597e-4;   // m_p
  double p_nominal_kw = 0.0;
  bool p_nominal_from_initial = true;  // baseline taken from the t=0 solution
  double freq_filter_tau_s = 0.2;
  double voltage_setpoint_pu = 1.0;
  double q_droop_pu = 0.05;            // dV (pu) per Q (pu of device rating)
  Complex z1_pu{0.0, 1e-4};            // positive-sequence source impedance
  Complex z2_pu{0.0, 0.05};            // negative-sequence
  Complex z0_pu{0.0, 0.05};            // zero-sequence
};

struct GridFollowingParams {
  double response_tau_s = 0.1;
};

enum class BtbMode { fixed_transfer, frequency_support };

/// Back-to-back converter: two AC/DC converters joined by a DC-link
/// capacitor. One converter regulates the DC voltage, the other follows the
/// power command (fixed transfer) or a frequency-support droop.
struct BtbParams {
  double converter_rating_kva = 3500.0;
  double vdc_nominal_v = 8000.0;
  double capacitance_f = 0.1;
  double dc_kp_kw_per_v = 10.0;
  double dc_ki_kw_per_vs = 200.0;
  BtbMode mode = BtbMode::fixed_transfer;
  double k_f_kw_per_hz = 1000.0;        // frequency-support gain
  double support_threshold_hz = 59.2;   // support engages below this
  double converter_tau_s = 0.05;        // power-command tracking constant
};

/// Static description of a power-conversion device: placement, rating and
/// control parameters. Dynamic state lives in devices.hpp.
struct DeviceSpec {
  std::string id;
  DeviceKind kind = DeviceKind::bess;
  std::string bus;         // terminal bus (BTB: local/MG0-side terminal)
  std::string remote_bus;  // BTB only: remote-side terminal
  PhaseMask phases = PhaseMask::abc();
  double rating_kva = 0.0;
  double energy_capacity_kwh = 0.0;
  double initial_energy_kwh = 0.0;
  bool in_service = true;
  bool grid_forming = false;

  double p_setpoint_kw = 0.0;
  double q_setpoint_kvar = 0.0;
  double available_kw = 0.0;  // PV: irradiance-limited available power
  double p_transfer_setpoint_kw = 0.0;  // BTB: + = local -> remote

  GridFormingParams gfm;
  GridFollowingParams gfl;
  BtbParams btb;
};

/// Plain structured description of a system, as read from a JSON file or
/// produced by the built-in builders. Validated by build_network.
struct SystemDescription {
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  std::vector<Load> loads;
  std::vector<ShuntCapacitor> capacitors;
  std::vector<DeviceSpec> devices;
  std::map<std::string, bool> initial_switch_closed;  // branch id -> closed
};

/// Open/closed state for every switch-kind branch.
struct SwitchState {
  std::map<std::string, bool> closed;

  bool is_closed(const std::string& branch_id) const;
};

/// A maximal set of buses connected through closed branches. Energized means
/// at least one in-service grid-forming device is a member; the solver
/// additionally requires exactly one.
struct Island {
  std::vector<std::string> member_buses;  // sorted
  std::vector<std::string> grid_forming_devices;
  std::optional<std::string> grid_forming_device;  // set iff exactly one

  bool energized() const { return !grid_forming_devices.empty(); }
  bool contains(const std::string& bus) const;
};

/// Validated, indexed, immutable electrical model.
class NetworkModel {
 public:
  NetworkModel() = default;

  const std::vector<Bus>& buses() const { return buses_; }
  const std::vector<Branch>& branches() const { return branches_; }
  const std::vector<Load>& loads() const { return loads_; }
  const std::vector<ShuntCapacitor>& capacitors() const { return capacitors_; }
  const std::vector<DeviceSpec>& devices() const { return devices_; }

  const Bus& bus(const std::string& id) const;
  const Branch& branch(const std::string& id) const;
  const Load& load(const std::string& id) const;
  const DeviceSpec& device(const std::string& id) const;

  bool has_bus(const std::string& id) const;
  bool has_branch(const std::string& id) const;
  bool has_load(const std::string& id) const;
  bool has_device(const std::string& id) const;

  /// Switch state with every switch at its description default.
  SwitchState default_switch_state() const;

  friend NetworkModel build_network(const SystemDescription& description);

 private:
  std::vector<Bus> buses_;
  std::vector<Branch> branches_;
  std::vector<Load> loads_;
  std::vector<ShuntCapacitor> capacitors_;
  std::vector<DeviceSpec> devices_;
  std::map<std::string, std::size_t> bus_index_;
  std::map<std::string, std::size_t> branch_index_;
  std::map<std::string, std::size_t> load_index_;
  std::map<std::string, std::size_t> device_index_;
  std::map<std::string, bool> initial_switch_closed_;
};

/// Validates the description and returns the indexed model.
/// Throws ValidationError / UnknownTargetError on bad references, duplicate
/// ids, or impedance entries on absent phases.
NetworkModel build_network(const SystemDescription& description);

/// Partitions all buses by closed-branch connectivity. Every component is
/// reported; de-energized components simply carry no grid-forming device.
/// `switches` must cover every switch-kind branch.
std::vector<Island> find_islands(const NetworkModel& model, const SwitchState& switches);

}  // namespace mbbsim
