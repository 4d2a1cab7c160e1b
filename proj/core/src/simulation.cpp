#include "mbbsim/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mbbsim/devices.hpp"
#include "mbbsim/log.hpp"
#include "mbbsim/powerflow.hpp"

namespace mbbsim {

void SimulationConfig::validate() const {
  if (!(dt_s > 0.0) || dt_s > 0.01) {
    throw ValidationError("dt must lie in (0, 0.01] s");
  }
  if (!(t_end_s > 0.0)) throw ValidationError("t_end must be positive");
  if (record_decimation < 1) throw ValidationError("record_decimation must be >= 1");
  if (pf_max_iterations < 1) throw ValidationError("pf_max_iterations must be >= 1");
}

std::string to_string(RunStatus s) {
  switch (s) {
    case RunStatus::ok: return "ok";
    case RunStatus::initial_condition_failure: return "initial_condition_failure";
    case RunStatus::mid_run_divergence: return "mid_run_divergence";
    case RunStatus::device_abort: return "device_abort";
  }
  return "?";
}

namespace {

constexpr double kSystemBaseVa = 1e6;

struct RuntimeDevice {
  DeviceSpec spec;
  GridFormingState gfm;
  GridFollowingState gfl;     // bess in following mode, v2g
  PvState pv;
  DieselState diesel;
  BtbState btb;
  double measured_p_kw = 0.0;
  double measured_q_kvar = 0.0;
  double measured_p_remote_kw = 0.0;  // BTB remote terminal
  double measured_q_remote_kvar = 0.0;
  double max_s_over_rating = 0.0;
};

class Engine {
 public:
  Engine(const NetworkModel& model, const Scenario& scenario, const SimulationConfig& config)
      : model_(model), scenario_(scenario), cfg_(config) {}

  RunResult run();

 private:
  void init_devices();
  void rebuild_islands();
  bool island_is_solvable(const Island& island, std::string* error) const;
  InjectionSpec make_injections(int island_idx) const;
  SlackSource make_slack(const RuntimeDevice& dev) const;
  bool solve_all(bool initial, std::string* error);
  void apply_due_events(double t);
  void apply_event(const Event& e);
  void advance_devices(double dt, std::string* abort_reason);
  void regulator_check();
  void feedback_measurements();
  void record(double t);
  int island_of(const std::string& bus) const;
  double island_frequency(int island_idx) const;
  RuntimeDevice* find_device(const std::string& id);

  const NetworkModel& model_;
  const Scenario& scenario_;
  SimulationConfig cfg_;

  SwitchState switches_;
  std::map<std::string, bool> load_status_;
  std::map<std::string, std::array<int, 3>> reg_taps_;
  std::vector<RuntimeDevice> devices_;
  std::vector<Event> events_;
  std::size_t next_event_ = 0;

  std::vector<Island> islands_;
  std::map<std::string, int> island_of_bus_;
  std::vector<PowerFlowSolution> solutions_;
  std::vector<InjectionSpec> last_injections_;  // inputs of the cached solutions
  std::vector<bool> solution_valid_;
  std::map<std::string, PhasorSet> voltages_;  // latest solved (warm start)
  double init_tolerance_va_ = 0.0;             // >0 during initialization

  RunResult result_;
};

int Engine::island_of(const std::string& bus) const {
  auto it = island_of_bus_.find(bus);
  return it == island_of_bus_.end() ? -1 : it->second;
}

RuntimeDevice* Engine::find_device(const std::string& id) {
  for (RuntimeDevice& d : devices_) {
    if (d.spec.id == id) return &d;
  }
  return nullptr;
}

void Engine::init_devices() {
  devices_.clear();
  for (const DeviceSpec& spec : model_.devices()) {
    RuntimeDevice d;
    d.spec = spec;
    if (spec.grid_forming) {
      d.gfm.voltage_setpoint_pu = spec.gfm.voltage_setpoint_pu;
      d.gfm.droop_hz_per_kw = spec.gfm.droop_hz_per_kw;
      d.gfm.p_nominal_kw = spec.gfm.p_nominal_kw;
      d.gfm.freq_filter_tau_s = spec.gfm.freq_filter_tau_s;
      d.gfm.rating_kva = spec.rating_kva;
      d.gfm.energy_kwh = spec.initial_energy_kwh;
    }
    d.gfl.p_setpoint_kw = spec.p_setpoint_kw;
    d.gfl.q_setpoint_kvar = spec.q_setpoint_kvar;
    d.gfl.p_kw = spec.p_setpoint_kw;  // start settled
    d.gfl.q_kvar = spec.q_setpoint_kvar;
    d.gfl.response_tau_s = spec.gfl.response_tau_s;
    d.gfl.rating_kva = spec.rating_kva;

    if (spec.kind == DeviceKind::pv) {
      d.pv.available_kw = spec.available_kw;
      d.pv.rating_kw = spec.rating_kva;
      d.pv.inverter.response_tau_s = spec.gfl.response_tau_s;
      d.pv.inverter.rating_kva = spec.rating_kva;
      d.pv.inverter.p_setpoint_kw = std::min(spec.available_kw, spec.rating_kva);
      d.pv.inverter.p_kw = d.pv.inverter.p_setpoint_kw;
    }
    if (spec.kind == DeviceKind::diesel) {
      d.diesel.p_setpoint_kw = spec.p_setpoint_kw;
      d.diesel.p_out_kw = std::clamp(spec.p_setpoint_kw, 0.0, spec.rating_kva);
      d.diesel.rating_kva = spec.rating_kva;
    }
    if (spec.kind == DeviceKind::btb) {
      d.btb.vdc_nominal_v = spec.btb.vdc_nominal_v;
      d.btb.vdc_v = spec.btb.vdc_nominal_v;
      d.btb.capacitance_f = spec.btb.capacitance_f;
      d.btb.p_transfer_setpoint_kw = spec.p_transfer_setpoint_kw;
      d.btb.mode = spec.btb.mode;
      d.btb.dc_kp_kw_per_v = spec.btb.dc_kp_kw_per_v;
      d.btb.dc_ki_kw_per_vs = spec.btb.dc_ki_kw_per_vs;
      d.btb.k_f_kw_per_hz = spec.btb.k_f_kw_per_hz;
      d.btb.support_threshold_hz = spec.btb.support_threshold_hz;
      for (GridFollowingState* c : {&d.btb.converter1, &d.btb.converter2}) {
        c->response_tau_s = spec.btb.converter_tau_s;
        c->rating_kva = spec.btb.converter_rating_kva;
      }
      if (spec.btb.mode == BtbMode::fixed_transfer) {
        // Start in DC steady state at the initial transfer command.
        const double p = spec.p_transfer_setpoint_kw;
        d.btb.converter2.p_setpoint_kw = p;
        d.btb.converter2.p_kw = p;
        d.btb.converter1.p_setpoint_kw = -p;
        d.btb.converter1.p_kw = -p;
        if (spec.btb.dc_ki_kw_per_vs > 0.0) {
          d.btb.dc_pi_integrator_vs = p / spec.btb.dc_ki_kw_per_vs;
        }
      }
    }
    devices_.push_back(d);
  }
}

void Engine::rebuild_islands() {
  islands_ = find_islands(model_, switches_);
  island_of_bus_.clear();
  for (std::size_t i = 0; i < islands_.size(); ++i) {
    for (const std::string& bus : islands_[i].member_buses) {
      island_of_bus_[bus] = static_cast<int>(i);
    }
  }
  solutions_.assign(islands_.size(), PowerFlowSolution{});
  last_injections_.assign(islands_.size(), InjectionSpec{});
  solution_valid_.assign(islands_.size(), false);
}

namespace {

bool same_phasors(const PhasorSet& a, const PhasorSet& b) {
  for (int i = 0; i < 3; ++i) {
    if (a[i] != b[i]) return false;
  }
  return true;
}

bool same_injections(const InjectionSpec& a, const InjectionSpec& b) {
  if (a.slack.bus != b.slack.bus || a.slack.emf_ln_v != b.slack.emf_ln_v ||
      a.slack.angle_rad != b.slack.angle_rad || a.slack.z1_ohm != b.slack.z1_ohm ||
      a.slack.z2_ohm != b.slack.z2_ohm || a.slack.z0_ohm != b.slack.z0_ohm) {
    return false;
  }
  auto same_map = [](const std::map<std::string, PhasorSet>& x,
                     const std::map<std::string, PhasorSet>& y) {
    if (x.size() != y.size()) return false;
    auto ix = x.begin();
    auto iy = y.begin();
    for (; ix != x.end(); ++ix, ++iy) {
      if (ix->first != iy->first || !same_phasors(ix->second, iy->second)) return false;
    }
    return true;
  };
  return same_map(a.device_s_va, b.device_s_va) && same_map(a.load_s_va, b.load_s_va);
}

}  // namespace

bool Engine::island_is_solvable(const Island& island, std::string* error) const {
  if (island.grid_forming_devices.size() > 1) {
    if (error) {
      *error = "island headed by '" + island.member_buses.front() +
               "' has multiple grid-forming devices";
    }
    return false;
  }
  if (island.grid_forming_devices.empty()) {
    if (!scenario_.allow_dead_islands) {
      if (error) {
        *error = "island headed by '" + island.member_buses.front() +
                 "' has no grid-forming device";
      }
      return false;
    }
    return true;  // intentionally dead
  }
  return true;
}

double Engine::island_frequency(int island_idx) const {
  if (island_idx < 0) return 0.0;
  const Island& island = islands_[island_idx];
  if (!island.grid_forming_device) return 0.0;
  for (const RuntimeDevice& d : devices_) {
    if (d.spec.id == *island.grid_forming_device) return d.gfm.frequency_hz;
  }
  return 0.0;
}

SlackSource Engine::make_slack(const RuntimeDevice& dev) const {
  const Bus& bus = model_.bus(dev.spec.bus);
  SlackSource s;
  s.device_id = dev.spec.id;
  s.bus = dev.spec.bus;
  const double q_pu_of_rating =
      dev.spec.rating_kva > 0.0 ? dev.measured_q_kvar / dev.spec.rating_kva : 0.0;
  const double e_pu = dev.gfm.voltage_setpoint_pu - dev.spec.gfm.q_droop_pu * q_pu_of_rating;
  s.emf_ln_v = e_pu * bus.nominal_v_ln();
  s.angle_rad = 0.0;
  const double z_base = bus.nominal_v_ll * bus.nominal_v_ll / kSystemBaseVa;
  s.z1_ohm = dev.spec.gfm.z1_pu * z_base;
  s.z2_ohm = dev.spec.gfm.z2_pu * z_base;
  s.z0_ohm = dev.spec.gfm.z0_pu * z_base;
  return s;
}

InjectionSpec Engine::make_injections(int island_idx) const {
  const Island& island = islands_[island_idx];
  InjectionSpec inj;

  for (const Load& l : model_.loads()) {
    if (!load_status_.at(l.id)) continue;
    if (island_of(l.bus) != island_idx) continue;
    PhasorSet& slot = inj.load_s_va[l.bus];
    for (int i = 0; i < 3; ++i) slot[i] += l.s_va[i];
  }

  auto add_device_injection = [&inj](const std::string& bus, PhaseMask phases, double p_kw,
                                     double q_kvar) {
    if (p_kw == 0.0 && q_kvar == 0.0) return;
    const int n = phases.count();
    if (n == 0) return;
    const Complex s{p_kw * 1000.0 / n, q_kvar * 1000.0 / n};
    PhasorSet& slot = inj.device_s_va[bus];
    for (Phase p : kAllPhases) {
      if (phases.has(p)) slot[index_of(p)] += s;
    }
  };

  for (const RuntimeDevice& d : devices_) {
    const DeviceSpec& spec = d.spec;
    if (!spec.in_service) continue;
    if (spec.kind == DeviceKind::btb) {
      if (island_of(spec.bus) == island_idx) {
        add_device_injection(spec.bus, PhaseMask::abc(), d.btb.converter1.p_kw,
                             d.btb.converter1.q_kvar);
      }
      if (island_of(spec.remote_bus) == island_idx) {
        add_device_injection(spec.remote_bus, PhaseMask::abc(), d.btb.converter2.p_kw,
                             d.btb.converter2.q_kvar);
      }
      continue;
    }
    if (island_of(spec.bus) != island_idx) continue;
    if (spec.grid_forming) continue;  // slack, not an injection
    switch (spec.kind) {
      case DeviceKind::pv:
        add_device_injection(spec.bus, spec.phases, d.pv.inverter.p_kw, 0.0);
        break;
      case DeviceKind::diesel:
        add_device_injection(spec.bus, spec.phases, d.diesel.p_out_kw, 0.0);
        break;
      case DeviceKind::bess:
      case DeviceKind::v2g:
        add_device_injection(spec.bus, spec.phases, d.gfl.p_kw, d.gfl.q_kvar);
        break;
      default:
        break;
    }
  }

  if (island.grid_forming_device) {
    for (const RuntimeDevice& d : devices_) {
      if (d.spec.id == *island.grid_forming_device) {
        inj.slack = make_slack(d);
        break;
      }
    }
  }
  return inj;
}

bool Engine::solve_all(bool initial, std::string* error) {
  for (std::size_t i = 0; i < islands_.size(); ++i) {
    const Island& island = islands_[i];
    if (!island_is_solvable(island, error)) return false;

    if (!island.grid_forming_device) {
      // Intentionally dead: all voltages zero.
      PowerFlowSolution dead;
      dead.status = SolveStatus::no_grid_forming_device;
      for (const std::string& bus : island.member_buses) {
        dead.bus_voltage_v[bus] = PhasorSet{};
        voltages_[bus] = PhasorSet{};
      }
      solutions_[i] = std::move(dead);
      continue;
    }

    InjectionSpec inj = make_injections(static_cast<int>(i));
    // Identical inputs reproduce the cached solution exactly; anything else
    // gets at least one Newton update so the solution tracks moved boundary
    // values instead of coasting inside the tolerance deadband.
    if (solution_valid_[i] && solutions_[i].converged &&
        same_injections(inj, last_injections_[i])) {
      continue;
    }

    SolveOptions opts;
    opts.tolerance_va = init_tolerance_va_ > 0.0 ? init_tolerance_va_ : cfg_.pf_tolerance_va;
    opts.max_iterations = cfg_.pf_max_iterations;
    opts.min_iterations = initial ? 0 : 1;
    opts.switches = switches_;
    opts.regulator_taps = reg_taps_;
    if (!initial) {
      for (const std::string& bus : island.member_buses) {
        auto it = voltages_.find(bus);
        if (it != voltages_.end()) opts.warm_start_v[bus] = it->second;
      }
    }

    PowerFlowSolution sol = solve_island(model_, island, inj, opts);
    result_.stats.total_pf_iterations += sol.iterations;
    result_.stats.max_step_iterations = std::max(result_.stats.max_step_iterations, sol.iterations);
    result_.stats.max_mismatch_va = std::max(result_.stats.max_mismatch_va, sol.max_mismatch_va);

    if (!sol.converged) {
      if (error) {
        std::ostringstream os;
        os << "power flow failed to converge on island '" << island.member_buses.front()
           << "' (mismatch " << sol.max_mismatch_va << " VA after " << sol.iterations
           << " iterations)";
        *error = os.str();
      }
      solutions_[i] = std::move(sol);
      return false;
    }
    for (const auto& [bus, v] : sol.bus_voltage_v) voltages_[bus] = v;
    solutions_[i] = std::move(sol);
    last_injections_[i] = std::move(inj);
    solution_valid_[i] = true;
  }
  return true;
}

void Engine::apply_event(const Event& e) {
  switch (e.kind) {
    case EventKind::load_on:
      load_status_[e.target] = true;
      break;
    case EventKind::load_off:
      load_status_[e.target] = false;
      break;
    case EventKind::switch_open:
    case EventKind::switch_close: {
      switches_.closed[e.target] = (e.kind == EventKind::switch_close);
      rebuild_islands();
      break;
    }
    case EventKind::btb_transfer: {
      RuntimeDevice* d = find_device(e.target);
      d->spec.p_transfer_setpoint_kw = e.value;
      d->btb.p_transfer_setpoint_kw = e.value;
      break;
    }
    case EventKind::v2g_command: {
      RuntimeDevice* d = find_device(e.target);
      d->gfl = v2g_dispatch(e.value, d->gfl);
      break;
    }
    case EventKind::device_setpoint: {
      RuntimeDevice* d = find_device(e.target);
      DeviceOverride o;
      o.device_id = e.target;
      o.numeric[e.field] = e.value;
      apply_device_override(d->spec, o);
      // Propagate setpoint-like fields into the dynamic states.
      d->gfl.p_setpoint_kw = d->spec.p_setpoint_kw;
      d->gfl.q_setpoint_kvar = d->spec.q_setpoint_kvar;
      d->pv.available_kw = d->spec.available_kw;
      d->diesel.p_setpoint_kw = d->spec.p_setpoint_kw;
      d->btb.p_transfer_setpoint_kw = d->spec.p_transfer_setpoint_kw;
      d->gfm.voltage_setpoint_pu = d->spec.gfm.voltage_setpoint_pu;
      d->gfm.droop_hz_per_kw = d->spec.gfm.droop_hz_per_kw;
      if (!d->spec.gfm.p_nominal_from_initial) {
        d->gfm.p_nominal_kw = d->spec.gfm.p_nominal_kw;
      }
      break;
    }
  }
}

void Engine::apply_due_events(double t) {
  const double eps = cfg_.dt_s * 1e-9;
  while (next_event_ < events_.size() && events_[next_event_].time_s <= t + eps) {
    apply_event(events_[next_event_]);
    ++next_event_;
  }
}

void Engine::advance_devices(double dt, std::string* abort_reason) {
  // Island frequencies snapshotted so the update order cannot matter.
  std::map<std::string, double> freq_of_bus;
  for (const RuntimeDevice& d : devices_) {
    if (d.spec.kind == DeviceKind::btb) {
      freq_of_bus[d.spec.bus] = island_frequency(island_of(d.spec.bus));
    }
  }

  for (RuntimeDevice& d : devices_) {
    if (!d.spec.in_service) continue;
    switch (d.spec.kind) {
      case DeviceKind::grid_source:
        d.gfm = grid_forming_step(d.gfm, d.measured_p_kw, dt);
        break;
      case DeviceKind::bess:
        if (d.spec.grid_forming) {
          d.gfm = grid_forming_step(d.gfm, d.measured_p_kw, dt);
          if (d.gfm.frequency_hz < 55.0 || d.gfm.frequency_hz > 65.0) {
            *abort_reason = "grid-forming frequency of '" + d.spec.id + "' left [55, 65] Hz";
          }
        } else {
          d.gfl = grid_following_step(d.gfl, dt);
        }
        break;
      case DeviceKind::v2g:
        d.gfl = grid_following_step(d.gfl, dt);
        break;
      case DeviceKind::pv:
        d.pv = pv_step(d.pv, dt);
        break;
      case DeviceKind::diesel:
        d.diesel = diesel_step(d.diesel, dt);
        break;
      case DeviceKind::btb: {
        const double f_local = freq_of_bus[d.spec.bus];
        const double p_in = -d.measured_p_kw;          // converter 1 drawing from local
        const double p_out = d.measured_p_remote_kw;   // converter 2 delivering to remote
        const double f = f_local > 0.0 ? f_local : d.btb.nominal_frequency_hz;
        d.btb = btb_step(d.btb, p_in, p_out, f, dt);
        if (d.btb.dc_fault) {
          *abort_reason = "BTB '" + d.spec.id + "' DC-link " + d.btb.fault_kind + " (" +
                          std::to_string(d.btb.vdc_pu()) + " pu)";
        }
        break;
      }
    }
  }
}

void Engine::regulator_check() {
  for (const Branch& b : model_.branches()) {
    if (b.kind != BranchKind::regulator) continue;
    auto vit = voltages_.find(b.regulator.controlled_bus);
    if (vit == voltages_.end()) continue;
    RegulatorSettings current = b.regulator;
    current.taps = reg_taps_.at(b.id);
    const RegulatorSettings next = regulator_step(current, vit->second);
    if (next.taps != reg_taps_.at(b.id)) {
      reg_taps_[b.id] = next.taps;
      const int idx = island_of(b.from_bus);
      if (idx >= 0) solution_valid_[idx] = false;
    }
  }
}

void Engine::feedback_measurements() {
  for (RuntimeDevice& d : devices_) {
    if (!d.spec.in_service) continue;
    const DeviceSpec& spec = d.spec;
    if (spec.kind == DeviceKind::btb) {
      const int li = island_of(spec.bus);
      const int ri = island_of(spec.remote_bus);
      const bool local_live = li >= 0 && islands_[li].grid_forming_device.has_value();
      const bool remote_live = ri >= 0 && islands_[ri].grid_forming_device.has_value();
      d.measured_p_kw = local_live ? d.btb.converter1.p_kw : 0.0;
      d.measured_q_kvar = local_live ? d.btb.converter1.q_kvar : 0.0;
      d.measured_p_remote_kw = remote_live ? d.btb.converter2.p_kw : 0.0;
      d.measured_q_remote_kvar = remote_live ? d.btb.converter2.q_kvar : 0.0;
      const double s1 = std::hypot(d.measured_p_kw, d.measured_q_kvar);
      const double s2 = std::hypot(d.measured_p_remote_kw, d.measured_q_remote_kvar);
      if (spec.btb.converter_rating_kva > 0.0) {
        d.max_s_over_rating = std::max(
            d.max_s_over_rating, std::max(s1, s2) / spec.btb.converter_rating_kva);
      }
      continue;
    }

    const int island_idx = island_of(spec.bus);
    const bool live = island_idx >= 0 && islands_[island_idx].grid_forming_device.has_value();
    if (!live) {
      d.measured_p_kw = 0.0;
      d.measured_q_kvar = 0.0;
      continue;
    }

    if (spec.grid_forming &&
        islands_[island_idx].grid_forming_device == spec.id) {
      const PowerFlowSolution& sol = solutions_[island_idx];
      Complex s{0.0, 0.0};
      for (int i = 0; i < 3; ++i) s += sol.slack_terminal_s_va[i];
      d.measured_p_kw = s.real() / 1000.0;
      d.measured_q_kvar = s.imag() / 1000.0;
    } else {
      switch (spec.kind) {
        case DeviceKind::pv:
          d.measured_p_kw = d.pv.inverter.p_kw;
          d.measured_q_kvar = 0.0;
          break;
        case DeviceKind::diesel:
          d.measured_p_kw = d.diesel.p_out_kw;
          d.measured_q_kvar = 0.0;
          break;
        default:
          d.measured_p_kw = d.gfl.p_kw;
          d.measured_q_kvar = d.gfl.q_kvar;
          break;
      }
    }
    if (spec.rating_kva > 0.0) {
      const double s = std::hypot(d.measured_p_kw, d.measured_q_kvar);
      d.max_s_over_rating = std::max(d.max_s_over_rating, s / spec.rating_kva);
    }
  }

  for (const RuntimeDevice& d : devices_) {
    result_.stats.max_s_over_rating =
        std::max(result_.stats.max_s_over_rating, d.max_s_over_rating);
  }
}

void Engine::record(double t) {
  TimeSeriesRecord rec;
  rec.t = t;
  for (const Bus& bus : model_.buses()) {
    auto it = voltages_.find(bus.id);
    rec.bus_voltage_v[bus.id] = it != voltages_.end() ? it->second : PhasorSet{};
  }

  for (const RuntimeDevice& d : devices_) {
    if (!d.spec.in_service) continue;
    DeviceRecord dr;
    dr.grid_forming = d.spec.grid_forming;
    dr.p_kw = d.measured_p_kw;
    dr.q_kvar = d.measured_q_kvar;
    if (d.spec.grid_forming) {
      dr.frequency_hz = d.gfm.frequency_hz;
      dr.energy_kwh = d.gfm.energy_kwh;
    }
    dr.s_over_rating = d.max_s_over_rating;
    rec.devices[d.spec.id] = dr;

    if (d.spec.kind == DeviceKind::btb) {
      BtbRecord br;
      br.p_local_kw = d.measured_p_kw;
      br.p_remote_kw = d.measured_p_remote_kw;
      br.vdc_pu = d.btb.vdc_pu();
      br.energy_in_j = d.btb.energy_in_j;
      rec.btb[d.spec.id] = br;
    }
  }

  for (std::size_t i = 0; i < islands_.size(); ++i) {
    const Island& island = islands_[i];
    IslandRecord ir;
    ir.head_bus = island.member_buses.front();
    ir.energized = island.grid_forming_device.has_value();
    if (ir.energized) {
      ir.frequency_hz = island_frequency(static_cast<int>(i));
      const PowerFlowSolution& sol = solutions_[i];
      ir.pf_iterations = sol.iterations;
      ir.pf_mismatch_va = sol.max_mismatch_va;

      Complex gen{0.0, 0.0};
      for (int p = 0; p < 3; ++p) gen += sol.slack_terminal_s_va[p];
      const InjectionSpec inj = make_injections(static_cast<int>(i));
      for (const auto& [bus, s_set] : inj.device_s_va) {
        (void)bus;
        for (int p = 0; p < 3; ++p) gen += s_set[p];
      }

      // Served load at the solved voltages (continuation-aware) plus shunt
      // capacitor absorption.
      Complex load{0.0, 0.0};
      for (const auto& [bus, s_set] : inj.load_s_va) {
        const Bus& b = model_.bus(bus);
        const auto& v = voltages_.at(bus);
        const double v_floor = 0.5 * b.nominal_v_ln();
        for (int p = 0; p < 3; ++p) {
          if (std::abs(s_set[p]) == 0.0) continue;
          const double vm = std::abs(v[p]);
          if (vm >= v_floor) {
            load += s_set[p];
          } else {
            load += s_set[p] * (vm * vm) / (v_floor * v_floor);
          }
        }
      }
      for (const ShuntCapacitor& c : model_.capacitors()) {
        if (!c.in_service || island_of(c.bus) != static_cast<int>(i)) continue;
        const Bus& b = model_.bus(c.bus);
        const double b_s = c.rating_kvar * 1000.0 / c.phases.count() /
                           (b.nominal_v_ln() * b.nominal_v_ln());
        const auto& v = voltages_.at(c.bus);
        for (Phase p : kAllPhases) {
          if (!c.phases.has(p)) continue;
          const double vm = std::abs(v[index_of(p)]);
          load += Complex{0.0, -b_s * vm * vm};  // injection counts against load
        }
      }

      const auto flows = branch_flows(model_, sol);
      const Complex loss = total_loss_va(flows);

      ir.gen_p_kw = gen.real() / 1000.0;
      ir.gen_q_kvar = gen.imag() / 1000.0;
      ir.load_p_kw = load.real() / 1000.0;
      ir.load_q_kvar = load.imag() / 1000.0;
      ir.loss_p_kw = loss.real() / 1000.0;
      ir.loss_q_kvar = loss.imag() / 1000.0;
    }
    rec.islands.push_back(ir);
  }

  for (const std::string& bus : scenario_.monitored_buses) {
    const Bus& b = model_.bus(bus);
    auto it = voltages_.find(bus);
    if (it == voltages_.end()) continue;
    rec.vuf[bus] = vuf(it->second, 1e-9 * b.nominal_v_ln());
  }

  // Per-phase tie flows through closed switches.
  for (std::size_t i = 0; i < islands_.size(); ++i) {
    if (!islands_[i].grid_forming_device) continue;
    const PowerFlowSolution& sol = solutions_[i];
    for (const auto& [branch_id, i_from] : sol.branch_current_a) {
      const Branch& b = model_.branch(branch_id);
      if (b.kind != BranchKind::sw) continue;
      const auto vit = sol.bus_voltage_v.find(b.from_bus);
      if (vit == sol.bus_voltage_v.end()) continue;
      PhasorSet s{};
      for (int p = 0; p < 3; ++p) s[p] = vit->second[p] * std::conj(i_from[p]);
      rec.tie_flow_va[branch_id] = s;
    }
  }

  result_.records.push_back(std::move(rec));
}

RunResult Engine::run() {
  cfg_.validate();

  switches_ = initial_switch_state(model_, scenario_);
  for (const Load& l : model_.loads()) load_status_[l.id] = l.in_service;
  for (const Branch& b : model_.branches()) {
    if (b.kind == BranchKind::regulator) reg_taps_[b.id] = b.regulator.taps;
  }
  events_ = scenario_.events;
  std::stable_sort(events_.begin(), events_.end(),
                   [](const Event& a, const Event& b) { return a.time_s < b.time_s; });
  next_event_ = 0;

  init_devices();
  apply_due_events(0.0);
  rebuild_islands();

  // Initial condition: iterate the EMF/measurement fixed point until the
  // grid-forming sources are self-consistent, so the run starts settled and
  // nothing drifts inside the solver's convergence deadband afterwards.
  std::string error;
  init_tolerance_va_ = std::min(1e-3, cfg_.pf_tolerance_va);
  bool settled = false;
  std::map<std::string, std::pair<double, double>> prev_pq;
  for (int pass = 0; pass < 60 && !settled; ++pass) {
    if (!solve_all(pass == 0, &error)) {
      result_.status = RunStatus::initial_condition_failure;
      result_.diagnostic = error;
      return std::move(result_);
    }
    feedback_measurements();
    settled = pass > 1;
    for (const RuntimeDevice& d : devices_) {
      if (!d.spec.grid_forming || !d.spec.in_service) continue;
      auto& [p, q] = prev_pq[d.spec.id];
      if (std::abs(d.measured_p_kw - p) > 1e-7 || std::abs(d.measured_q_kvar - q) > 1e-7) {
        settled = false;
      }
      p = d.measured_p_kw;
      q = d.measured_q_kvar;
    }
  }
  init_tolerance_va_ = 0.0;
  if (!settled) {
    result_.status = RunStatus::initial_condition_failure;
    result_.diagnostic = "initial operating point did not settle";
    return std::move(result_);
  }
  for (RuntimeDevice& d : devices_) {
    if (!d.spec.grid_forming || !d.spec.in_service) continue;
    if (d.spec.gfm.p_nominal_from_initial) {
      d.gfm.p_nominal_kw = d.measured_p_kw;
    }
    d.gfm.frequency_hz = droop_frequency_hz(d.gfm, d.measured_p_kw);
  }
  record(0.0);

  const long n_steps = static_cast<long>(std::llround(cfg_.t_end_s / cfg_.dt_s));
  double reg_interval_s = 0.1;
  for (const Branch& b : model_.branches()) {
    if (b.kind == BranchKind::regulator) {
      reg_interval_s = b.regulator.control_interval_s;
      break;
    }
  }
  const long reg_every =
      std::max<long>(1, static_cast<long>(std::llround(reg_interval_s / cfg_.dt_s)));

  for (long k = 1; k <= n_steps; ++k) {
    const double t = static_cast<double>(k) * cfg_.dt_s;
    ++result_.stats.total_steps;

    apply_due_events(t);

    std::string abort_reason;
    advance_devices(cfg_.dt_s, &abort_reason);
    if (!abort_reason.empty()) {
      result_.status = RunStatus::device_abort;
      result_.diagnostic = abort_reason + " at t=" + std::to_string(t);
      return std::move(result_);
    }

    if (k % reg_every == 0) regulator_check();

    if (!solve_all(false, &error)) {
      result_.status = RunStatus::mid_run_divergence;
      result_.diagnostic = error + " at t=" + std::to_string(t);
      return std::move(result_);
    }

    feedback_measurements();

    if (k % cfg_.record_decimation == 0 || k == n_steps) {
      record(t);
    }
  }

  result_.status = RunStatus::ok;
  return std::move(result_);
}

}  // namespace

RunResult run(const NetworkModel& model, const Scenario& scenario,
              const SimulationConfig& config) {
  SimulationConfig cfg = config;
  if (cfg.t_end_s <= 0.0) cfg.t_end_s = scenario.t_end_s;
  Engine engine(model, scenario, cfg);
  return engine.run();
}

RunResult run(const Scenario& scenario, const SimulationConfig& config) {
  const NetworkModel model = materialize_model(scenario);
  return run(model, scenario, config);
}

}  // namespace mbbsim
