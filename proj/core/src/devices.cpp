#include "mbbsim/devices.hpp"

#include <algorithm>
#include <cmath>

#include "mbbsim/errors.hpp"

namespace mbbsim {

namespace {

/// Exact first-order relaxation of `value` toward `target` over dt.
double relax(double value, double target, double tau_s, double dt_s) {
  if (tau_s <= 0.0) return target;
  return target + (value - target) * std::exp(-dt_s / tau_s);
}

}  // namespace

double droop_frequency_hz(const GridFormingState& state, double measured_p_kw) {
  return state.nominal_frequency_hz -
         state.droop_hz_per_kw * (measured_p_kw - state.p_nominal_kw);
}

GridFormingState grid_forming_step(GridFormingState state, double measured_p_kw, double dt_s) {
  if (dt_s <= 0.0) throw ValidationError("grid_forming_step: dt must be positive");

  double effective_p = measured_p_kw;
  state.rating_exceeded = false;
  if (state.rating_kva > 0.0 && std::abs(measured_p_kw) > state.rating_kva) {
    state.rating_exceeded = true;
    effective_p = std::copysign(state.rating_kva, measured_p_kw);
  }

  state.active_power_kw = measured_p_kw;
  const double target = droop_frequency_hz(state, effective_p);
  state.frequency_hz = relax(state.frequency_hz, target, state.freq_filter_tau_s, dt_s);
  state.energy_kwh -= measured_p_kw * dt_s / 3600.0;
  return state;
}

GridFollowingState grid_following_step(GridFollowingState state, double dt_s) {
  if (dt_s <= 0.0) throw ValidationError("grid_following_step: dt must be positive");

  state.p_kw = relax(state.p_kw, state.p_setpoint_kw, state.response_tau_s, dt_s);
  state.q_kvar = relax(state.q_kvar, state.q_setpoint_kvar, state.response_tau_s, dt_s);

  state.saturated = false;
  if (state.rating_kva > 0.0) {
    const double s = std::hypot(state.p_kw, state.q_kvar);
    if (s > state.rating_kva) {
      const double k = state.rating_kva / s;
      state.p_kw *= k;
      state.q_kvar *= k;
      state.saturated = true;
    }
  }
  return state;
}

GridFollowingState v2g_dispatch(double command_kw, GridFollowingState state) {
  if (state.rating_kva > 0.0 && std::abs(command_kw) > state.rating_kva) {
    throw RatingExceededError("V2G command of " + std::to_string(command_kw) +
                              " kW exceeds the " + std::to_string(state.rating_kva) +
                              " kVA unit rating");
  }
  state.p_setpoint_kw = command_kw;
  return state;
}

BtbState btb_step(BtbState state, double p_in_kw, double p_out_kw, double local_frequency_hz,
                  double dt_s) {
  if (dt_s <= 0.0) throw ValidationError("btb_step: dt must be positive");
  if (state.vdc_v <= 0.0) throw ValidationError("btb_step: vdc must be positive");

  // Capacitor update in energy form: d(C v^2 / 2)/dt = p_in - p_out, exact
  // for powers held over the step.
  const double dw_j = (p_in_kw - p_out_kw) * 1000.0 * dt_s;
  state.energy_in_j += dw_j;
  const double w_j = 0.5 * state.capacitance_f * state.vdc_v * state.vdc_v + dw_j;
  state.vdc_v = (w_j > 0.0) ? std::sqrt(2.0 * w_j / state.capacitance_f) : 0.0;

  const double vdc_pu = state.vdc_pu();
  if (vdc_pu > 1.2 || vdc_pu < 0.8) {
    state.dc_fault = true;
    state.fault_kind = vdc_pu > 1.2 ? "overvoltage" : "undervoltage";
  }

  // PI on the DC-link voltage gives the regulating converter's draw from
  // its AC bus. Integrator state is in volt-seconds. The regulating side is
  // converter 1 in fixed-transfer mode, converter 2 in frequency support.
  const double err_v = state.vdc_nominal_v - state.vdc_v;
  state.dc_pi_integrator_vs += err_v * dt_s;
  const double rating = state.mode == BtbMode::fixed_transfer ? state.converter1.rating_kva
                                                              : state.converter2.rating_kva;
  if (rating > 0.0 && state.dc_ki_kw_per_vs > 0.0) {
    const double lim = rating / state.dc_ki_kw_per_vs;
    state.dc_pi_integrator_vs = std::clamp(state.dc_pi_integrator_vs, -lim, lim);
  }
  double pi_draw_kw =
      state.dc_kp_kw_per_v * err_v + state.dc_ki_kw_per_vs * state.dc_pi_integrator_vs;
  if (rating > 0.0) pi_draw_kw = std::clamp(pi_draw_kw, -rating, rating);

  // The DC-regulating converter applies its command within the step (its
  // inner current loop is far faster than the simulation step); the
  // power-commanded converter ramps with its tracking constant.
  GridFollowingState* regulating = &state.converter1;
  GridFollowingState* commanded = &state.converter2;
  if (state.mode == BtbMode::fixed_transfer) {
    // Converter 2 delivers the transfer command to the remote bus,
    // converter 1 balances the DC link from the local bus.
    commanded->p_setpoint_kw = state.p_transfer_setpoint_kw;
  } else {
    // Frequency support: converter 1 injects droop support into the local
    // island, converter 2 refills the DC link from the remote side.
    regulating = &state.converter2;
    commanded = &state.converter1;
    const double dip_hz = state.support_threshold_hz - local_frequency_hz;
    double support_kw = state.k_f_kw_per_hz * std::max(0.0, dip_hz);
    if (commanded->rating_kva > 0.0) {
      support_kw = std::min(support_kw, commanded->rating_kva);
    }
    commanded->p_setpoint_kw = support_kw;
  }
  regulating->p_setpoint_kw = -pi_draw_kw;
  regulating->p_kw = regulating->p_setpoint_kw;
  if (regulating->rating_kva > 0.0) {
    regulating->p_kw =
        std::clamp(regulating->p_kw, -regulating->rating_kva, regulating->rating_kva);
  }
  *commanded = grid_following_step(*commanded, dt_s);
  return state;
}

PvState pv_step(PvState state, double dt_s) {
  state.inverter.p_setpoint_kw = std::clamp(state.available_kw, 0.0, state.rating_kw);
  state.inverter.q_setpoint_kvar = 0.0;
  state.inverter = grid_following_step(state.inverter, dt_s);
  // Unity power factor, never below zero output.
  state.inverter.p_kw = std::max(0.0, state.inverter.p_kw);
  return state;
}

DieselState diesel_step(DieselState state, double dt_s) {
  if (dt_s <= 0.0) throw ValidationError("diesel_step: dt must be positive");
  const double target = std::clamp(state.p_setpoint_kw, 0.0, state.rating_kva);
  state.p_out_kw = relax(state.p_out_kw, target, state.governor_tau_s, dt_s);
  state.p_out_kw = std::clamp(state.p_out_kw, 0.0, state.rating_kva);
  return state;
}

}  // namespace mbbsim
