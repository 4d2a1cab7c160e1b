#pragma once

#include <string>

#include "mbbsim/network.hpp"

namespace mbbsim {

/// Dynamic state of a grid-forming unit (droop-controlled voltage source).
/// Carries its own control parameters so the stepper is a pure function.
struct GridFormingState {
  double frequency_hz = 60.0;
  double voltage_setpoint_pu = 1.0;  // terminal target before q-droop
  double active_power_kw = 0.0;      // measured output, + = discharge
  double reactive_power_kvar = 0.0;
  double droop_hz_per_kw = 2.597e-4;
  double p_nominal_kw = 0.0;
  double freq_filter_tau_s = 0.2;
  double nominal_frequency_hz = 60.0;
  double rating_kva = 0.0;
  double energy_kwh = 0.0;
  bool rating_exceeded = false;
};

/// Droop update: the frequency target f_nom - m_p (P - P_nom) is tracked
/// through a first-order filter; stored energy decrements by P dt.
/// Power beyond the rating raises the flag and is clamped in the droop
/// evaluation.
GridFormingState grid_forming_step(GridFormingState state, double measured_p_kw, double dt_s);

/// Steady-state droop frequency for a sustained power level.
double droop_frequency_hz(const GridFormingState& state, double measured_p_kw);

/// Dynamic state of a grid-following (current-source) converter.
struct GridFollowingState {
  double p_setpoint_kw = 0.0;
  double q_setpoint_kvar = 0.0;
  double p_kw = 0.0;
  double q_kvar = 0.0;
  double response_tau_s = 0.1;
  double rating_kva = 0.0;
  bool saturated = false;
};

/// First-order tracking of both setpoints (exact exponential update for the
/// step interval), then projection onto the rating circle.
GridFollowingState grid_following_step(GridFollowingState state, double dt_s);

/// V2G discharge command, + = inject into the grid. Throws
/// RatingExceededError when the command exceeds the unit rating.
GridFollowingState v2g_dispatch(double command_kw, GridFollowingState state);

/// Back-to-back converter state: two AC terminals joined by a DC-link
/// capacitor. converter1 faces the local (microgrid) bus, converter2 the
/// remote (grid or neighbor) bus; p_kw of each is the power injected into
/// its AC bus. In fixed-transfer mode converter2 delivers the transfer
/// setpoint and converter1 regulates the DC voltage; in frequency-support
/// mode converter1 injects droop support into the local bus and converter2
/// takes over DC regulation from the remote side.
struct BtbState {
  double vdc_v = 8000.0;
  double vdc_nominal_v = 8000.0;
  double capacitance_f = 0.1;
  double p_transfer_setpoint_kw = 0.0;  // + = local -> remote
  GridFollowingState converter1;        // local-side terminal
  GridFollowingState converter2;        // remote-side terminal
  double dc_pi_integrator_vs = 0.0;     // volt-seconds
  BtbMode mode = BtbMode::fixed_transfer;
  double dc_kp_kw_per_v = 10.0;
  double dc_ki_kw_per_vs = 200.0;
  double k_f_kw_per_hz = 1000.0;
  double support_threshold_hz = 59.2;
  double nominal_frequency_hz = 60.0;
  /// Exact accumulated DC-link input energy, J (for bookkeeping checks).
  double energy_in_j = 0.0;
  bool dc_fault = false;
  std::string fault_kind;  // "overvoltage" | "undervoltage" when faulted

  double vdc_pu() const { return vdc_v / vdc_nominal_v; }
};

/// Advances the DC link by one step. p_in_kw is the power entering the DC
/// link from the converter-1 side over the step, p_out_kw the power leaving
/// toward converter 2 (both signed). The capacitor integrates
/// C vdc dvdc/dt = p_in - p_out exactly in energy form. Controller commands
/// (PI on the DC voltage, transfer or frequency-support target) are then
/// refreshed and the converter power tracking states advanced.
/// DC voltage outside [0.8, 1.2] pu raises dc_fault.
BtbState btb_step(BtbState state, double p_in_kw, double p_out_kw, double local_frequency_hz,
                  double dt_s);

struct PvState {
  double available_kw = 0.0;  // irradiance-driven schedule value
  double rating_kw = 1600.0;
  GridFollowingState inverter;
};

/// Tracks min(available, rating) at unity power factor.
PvState pv_step(PvState state, double dt_s);

struct DieselState {
  double p_setpoint_kw = 0.0;
  double p_out_kw = 0.0;
  double governor_tau_s = 0.5;
  double rating_kva = 3000.0;
};

/// First-order governor response toward the dispatch setpoint, clamped to
/// [0, rating].
DieselState diesel_step(DieselState state, double dt_s);

}  // namespace mbbsim
