#include "mbbsim/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mbbsim/builtin_system.hpp"

namespace mbbsim {

using nlohmann::json;

std::string to_string(EventKind k) {
  switch (k) {
    case EventKind::load_on: return "load_on";
    case EventKind::load_off: return "load_off";
    case EventKind::switch_open: return "switch_open";
    case EventKind::switch_close: return "switch_close";
    case EventKind::device_setpoint: return "device_setpoint";
    case EventKind::btb_transfer: return "btb_transfer";
    case EventKind::v2g_command: return "v2g_command";
  }
  return "?";
}

EventKind event_kind_from_string(const std::string& s) {
  if (s == "load_on") return EventKind::load_on;
  if (s == "load_off") return EventKind::load_off;
  if (s == "switch_open") return EventKind::switch_open;
  if (s == "switch_close") return EventKind::switch_close;
  if (s == "device_setpoint") return EventKind::device_setpoint;
  if (s == "btb_transfer") return EventKind::btb_transfer;
  if (s == "v2g_command") return EventKind::v2g_command;
  throw ParseError("unknown event kind '" + s + "'");
}

namespace {

Event make_event(double t, EventKind kind, const std::string& target, double value = 0.0,
                 const std::string& field = "") {
  Event e;
  e.time_s = t;
  e.kind = kind;
  e.target = target;
  e.value = value;
  e.field = field;
  return e;
}

DeviceOverride device_off(const std::string& id) {
  DeviceOverride o;
  o.device_id = id;
  o.flags["in_service"] = false;
  return o;
}

LoadOverride load_off(const std::string& id) {
  LoadOverride o;
  o.load_id = id;
  o.in_service = false;
  return o;
}

PhasorSet balanced_va(double p_kw, double q_kvar) {
  const Complex s{p_kw * 1000.0 / 3.0, q_kvar * 1000.0 / 3.0};
  return {s, s, s};
}

}  // namespace

Scenario build_case_a() {
  Scenario sc;
  sc.name = "case-a";
  sc.description =
      "Networked microgrids without the grid: balanced data-center feeder (MG0) "
      "coupled to the unbalanced neighbor (MG1) only through the BTB converter; "
      "staged single-phase load pickup in MG1.";
  sc.t_end_s = 14.0;
  sc.monitored_buses = {"650", "680", "6501", "6801"};
  sc.allow_dead_islands = true;

  // Both feeders leave the grid; the BTB remote terminal is switched onto
  // MG1's head bus. The unbalanced V2G lateral of MG0 is sectionalized out.
  sc.switch_overrides["grid-650"] = false;
  sc.switch_overrides["grid-6501"] = false;
  sc.switch_overrides["grid-pcc0"] = false;
  sc.switch_overrides["pcc0-6501"] = true;
  sc.switch_overrides["632-645"] = false;

  // Data-center demand at node 634 (reactive demand unchanged).
  {
    LoadOverride o;
    o.load_id = "load-634";
    o.total_p_kw = 1236.0;
    sc.load_overrides.push_back(o);
  }
  sc.load_overrides.push_back(load_off("load-645"));
  sc.load_overrides.push_back(load_off("load-646"));
  // MG1 starts with only the three-phase loads at 6751 and 6801 served.
  sc.load_overrides.push_back(load_off("load-6341"));
  sc.load_overrides.push_back(load_off("load-6701"));
  sc.load_overrides.push_back(load_off("load-6451"));
  sc.load_overrides.push_back(load_off("load-6461"));
  sc.load_overrides.push_back(load_off("load-6111"));
  sc.load_overrides.push_back(load_off("load-6521"));

  sc.device_overrides.push_back(device_off("grid-source"));
  sc.device_overrides.push_back(device_off("dg-6331"));
  sc.device_overrides.push_back(device_off("pv-6751"));
  sc.device_overrides.push_back(device_off("v2g-645"));
  sc.device_overrides.push_back(device_off("v2g-646"));

  {  // MG0: diesel at 60 % of rating, PV at full availability, BESS slack.
    DeviceOverride dg;
    dg.device_id = "dg-633";
    dg.numeric["p_setpoint_kw"] = 1800.0;
    sc.device_overrides.push_back(dg);

    DeviceOverride bess;
    bess.device_id = "bess-680";
    bess.numeric["q_droop_pu"] = 0.02;
    sc.device_overrides.push_back(bess);
  }
  {  // MG1 BESS carries the whole feeder by the end of the run.
    DeviceOverride bess;
    bess.device_id = "bess-6801";
    bess.numeric["rating_kva"] = 4500.0;
    bess.numeric["energy_capacity_kwh"] = 4000.0;
    bess.numeric["q_droop_pu"] = 0.01;
    bess.numeric["z2_pu_x"] = 0.044;
    bess.numeric["z0_pu_x"] = 0.057;
    sc.device_overrides.push_back(bess);
  }

  sc.events.push_back(make_event(2.0, EventKind::load_on, "load-6701"));
  sc.events.push_back(make_event(4.0, EventKind::load_on, "load-6341"));
  sc.events.push_back(make_event(6.0, EventKind::load_on, "load-6111"));
  sc.events.push_back(make_event(8.0, EventKind::load_on, "load-6521"));
  sc.events.push_back(make_event(10.0, EventKind::load_on, "load-6461"));
  sc.events.push_back(make_event(12.0, EventKind::load_on, "load-6451"));
  return sc;
}

Scenario build_case_b() {
  Scenario sc;
  sc.name = "case-b";
  sc.description =
      "Unbalanced V2G export: MG0 ties to the grid through the BTB and exports "
      "50/100/200 kW generated by single-phase V2G units while the grid sees "
      "balanced power.";
  sc.t_end_s = 10.0;
  sc.monitored_buses = {"650", "680", "grid"};
  sc.allow_dead_islands = true;

  sc.switch_overrides["grid-650"] = false;
  sc.switch_overrides["grid-6501"] = false;
  sc.switch_overrides["632-633"] = false;
  sc.switch_overrides["671-692"] = false;

  sc.load_overrides.push_back(load_off("load-670"));
  sc.load_overrides.push_back(load_off("load-634"));  // behind the open 632-633
  sc.load_overrides.push_back(load_off("load-675"));  // behind the open 671-692
  // MG1 is out of this study entirely.
  for (const char* id : {"load-6341", "load-6701", "load-6751", "load-6801", "load-6451",
                         "load-6461", "load-6111", "load-6521"}) {
    sc.load_overrides.push_back(load_off(id));
  }

  sc.device_overrides.push_back(device_off("dg-633"));
  sc.device_overrides.push_back(device_off("pv-675"));
  sc.device_overrides.push_back(device_off("bess-6801"));
  sc.device_overrides.push_back(device_off("dg-6331"));
  sc.device_overrides.push_back(device_off("pv-6751"));

  {  // Grid-forming BESS sized for the full residential-lateral demand.
    DeviceOverride bess;
    bess.device_id = "bess-680";
    bess.numeric["rating_kva"] = 3500.0;
    bess.numeric["energy_capacity_kwh"] = 2000.0;
    bess.numeric["z2_pu_x"] = 0.045;
    bess.numeric["z0_pu_x"] = 0.063;
    sc.device_overrides.push_back(bess);
  }

  sc.events.push_back(make_event(4.0, EventKind::btb_transfer, "btb-pcc", 50.0));
  sc.events.push_back(make_event(4.0, EventKind::v2g_command, "v2g-645", 50.0));
  sc.events.push_back(make_event(6.0, EventKind::btb_transfer, "btb-pcc", 100.0));
  sc.events.push_back(make_event(6.0, EventKind::v2g_command, "v2g-646", 50.0));
  sc.events.push_back(make_event(8.0, EventKind::btb_transfer, "btb-pcc", 200.0));
  sc.events.push_back(make_event(8.0, EventKind::v2g_command, "v2g-645", 100.0));
  sc.events.push_back(make_event(8.0, EventKind::v2g_command, "v2g-646", 100.0));
  return sc;
}

Scenario build_case_c() {
  Scenario sc;
  sc.name = "case-c";
  sc.description =
      "Emergency EV charging: MG0 serves a stepped DC fast-charging load from "
      "BESS and PV, drawing grid support through the BTB in frequency-support "
      "mode once its own generation saturates.";
  sc.t_end_s = 20.0;
  sc.monitored_buses = {"650", "680", "grid"};
  sc.allow_dead_islands = true;

  sc.switch_overrides["grid-650"] = false;
  sc.switch_overrides["grid-6501"] = false;
  sc.switch_overrides["632-633"] = false;
  sc.switch_overrides["632-645"] = false;

  sc.load_overrides.push_back(load_off("load-670"));
  sc.load_overrides.push_back(load_off("load-675"));
  sc.load_overrides.push_back(load_off("load-680"));
  sc.load_overrides.push_back(load_off("load-634"));
  sc.load_overrides.push_back(load_off("load-645"));
  sc.load_overrides.push_back(load_off("load-646"));
  for (const char* id : {"load-6341", "load-6701", "load-6751", "load-6801", "load-6451",
                         "load-6461", "load-6111", "load-6521"}) {
    sc.load_overrides.push_back(load_off(id));
  }

  sc.device_overrides.push_back(device_off("dg-633"));
  sc.device_overrides.push_back(device_off("v2g-645"));
  sc.device_overrides.push_back(device_off("v2g-646"));
  sc.device_overrides.push_back(device_off("bess-6801"));
  sc.device_overrides.push_back(device_off("dg-6331"));
  sc.device_overrides.push_back(device_off("pv-6751"));

  {  // Droop calibration: 3465 kW above the charging baseline lands at 59.1 Hz.
    DeviceOverride bess;
    bess.device_id = "bess-680";
    bess.numeric["rating_kva"] = 4000.0;
    bess.numeric["energy_capacity_kwh"] = 4000.0;
    bess.numeric["droop_hz_per_kw"] = 2.597e-4;
    bess.numeric["q_droop_pu"] = 0.2;
    sc.device_overrides.push_back(bess);
  }
  {  // Daylight PV; sized below the first charging block so the BESS swings
     // from charging to discharging at t=5 s.
    DeviceOverride pv;
    pv.device_id = "pv-675";
    pv.numeric["available_kw"] = 1000.0;
    sc.device_overrides.push_back(pv);
  }
  {
    DeviceOverride btb;
    btb.device_id = "btb-pcc";
    btb.mode = "frequency_support";
    btb.numeric["k_f_kw_per_hz"] = 1000.0;
    btb.numeric["support_threshold_hz"] = 59.2;
    sc.device_overrides.push_back(btb);
  }

  // Three blocks of 23 EVs on 50 kW DC chargers, 0.95 power factor.
  const double block_kw = 1155.0;
  const double block_kvar = block_kw * std::tan(std::acos(0.95));
  for (int i = 1; i <= 3; ++i) {
    Load ev;
    ev.id = "ev-680-" + std::to_string(i);
    ev.bus = "680";
    ev.s_va = balanced_va(block_kw, block_kvar);
    ev.in_service = false;
    sc.extra_loads.push_back(ev);
  }
  sc.events.push_back(make_event(5.0, EventKind::load_on, "ev-680-1"));
  sc.events.push_back(make_event(10.0, EventKind::load_on, "ev-680-2"));
  sc.events.push_back(make_event(15.0, EventKind::load_on, "ev-680-3"));
  return sc;
}

std::vector<std::string> builtin_scenario_names() { return {"case-a", "case-b", "case-c"}; }

std::optional<Scenario> builtin_scenario(const std::string& name) {
  if (name == "case-a") return build_case_a();
  if (name == "case-b") return build_case_b();
  if (name == "case-c") return build_case_c();
  return std::nullopt;
}

std::string builtin_scenario_summary(const std::string& name) {
  auto sc = builtin_scenario(name);
  return sc ? sc->description : "";
}

void apply_device_override(DeviceSpec& d, const DeviceOverride& o) {
  for (const auto& [key, value] : o.flags) {
    if (key == "in_service") {
      d.in_service = value;
    } else if (key == "grid_forming") {
      d.grid_forming = value;
    } else if (key == "p_nominal_from_initial") {
      d.gfm.p_nominal_from_initial = value;
    } else {
      throw ValidationError("unknown device flag '" + key + "' for '" + d.id + "'");
    }
  }
  if (o.mode) {
    if (*o.mode == "fixed_transfer") {
      d.btb.mode = BtbMode::fixed_transfer;
    } else if (*o.mode == "frequency_support") {
      d.btb.mode = BtbMode::frequency_support;
    } else {
      throw ValidationError("unknown BTB mode '" + *o.mode + "'");
    }
  }
  for (const auto& [key, value] : o.numeric) {
    if (key == "rating_kva") d.rating_kva = value;
    else if (key == "energy_capacity_kwh") d.energy_capacity_kwh = value;
    else if (key == "initial_energy_kwh") d.initial_energy_kwh = value;
    else if (key == "p_setpoint_kw") d.p_setpoint_kw = value;
    else if (key == "q_setpoint_kvar") d.q_setpoint_kvar = value;
    else if (key == "available_kw") d.available_kw = value;
    else if (key == "p_transfer_setpoint_kw") d.p_transfer_setpoint_kw = value;
    else if (key == "droop_hz_per_kw") d.gfm.droop_hz_per_kw = value;
    else if (key == "p_nominal_kw") {
      d.gfm.p_nominal_kw = value;
      d.gfm.p_nominal_from_initial = false;
    } else if (key == "freq_filter_tau_s") d.gfm.freq_filter_tau_s = value;
    else if (key == "voltage_setpoint_pu") d.gfm.voltage_setpoint_pu = value;
    else if (key == "q_droop_pu") d.gfm.q_droop_pu = value;
    else if (key == "z1_pu_r") d.gfm.z1_pu.real(value);
    else if (key == "z1_pu_x") d.gfm.z1_pu.imag(value);
    else if (key == "z2_pu_r") d.gfm.z2_pu.real(value);
    else if (key == "z2_pu_x") d.gfm.z2_pu.imag(value);
    else if (key == "z0_pu_r") d.gfm.z0_pu.real(value);
    else if (key == "z0_pu_x") d.gfm.z0_pu.imag(value);
    else if (key == "response_tau_s") d.gfl.response_tau_s = value;
    else if (key == "converter_rating_kva") d.btb.converter_rating_kva = value;
    else if (key == "vdc_nominal_v") d.btb.vdc_nominal_v = value;
    else if (key == "capacitance_f") d.btb.capacitance_f = value;
    else if (key == "dc_kp_kw_per_v") d.btb.dc_kp_kw_per_v = value;
    else if (key == "dc_ki_kw_per_vs") d.btb.dc_ki_kw_per_vs = value;
    else if (key == "k_f_kw_per_hz") d.btb.k_f_kw_per_hz = value;
    else if (key == "support_threshold_hz") d.btb.support_threshold_hz = value;
    else if (key == "converter_tau_s") d.btb.converter_tau_s = value;
    else {
      throw ValidationError("unknown device parameter '" + key + "' for '" + d.id + "'");
    }
  }
}

namespace {

void apply_load_override(Load& l, const LoadOverride& o) {
  if (o.in_service) l.in_service = *o.in_service;
  // Redistribute new totals over the load's existing phase pattern.
  std::vector<int> active;
  for (int i = 0; i < 3; ++i) {
    if (std::abs(l.s_va[i]) > 0.0) active.push_back(i);
  }
  if (active.empty()) active = {0, 1, 2};
  if (o.total_p_kw) {
    const double per = *o.total_p_kw * 1000.0 / static_cast<double>(active.size());
    for (int i : active) l.s_va[i].real(per);
  }
  if (o.total_q_kvar) {
    const double per = *o.total_q_kvar * 1000.0 / static_cast<double>(active.size());
    for (int i : active) l.s_va[i].imag(per);
  }
}

SystemDescription base_description(const Scenario& sc) {
  if (sc.inline_system) return *sc.inline_system;
  if (sc.base_system == "builtin-twin-feeder" || sc.base_system.empty()) {
    return builtin_twin_feeder();
  }
  throw UnknownTargetError("unknown base system '" + sc.base_system + "'");
}

}  // namespace

NetworkModel materialize_model(const Scenario& scenario) {
  SystemDescription d = base_description(scenario);

  for (const DeviceOverride& o : scenario.device_overrides) {
    auto it = std::find_if(d.devices.begin(), d.devices.end(),
                           [&](const DeviceSpec& dev) { return dev.id == o.device_id; });
    if (it == d.devices.end()) {
      throw UnknownTargetError("device override targets unknown device '" + o.device_id + "'");
    }
    apply_device_override(*it, o);
  }
  for (const LoadOverride& o : scenario.load_overrides) {
    auto it = std::find_if(d.loads.begin(), d.loads.end(),
                           [&](const Load& l) { return l.id == o.load_id; });
    if (it == d.loads.end()) {
      throw UnknownTargetError("load override targets unknown load '" + o.load_id + "'");
    }
    apply_load_override(*it, o);
  }
  for (const Load& extra : scenario.extra_loads) {
    d.loads.push_back(extra);
  }

  NetworkModel model = build_network(d);
  validate_scenario(scenario, model);
  return model;
}

SwitchState initial_switch_state(const NetworkModel& model, const Scenario& scenario) {
  SwitchState st = model.default_switch_state();
  for (const auto& [id, closed] : scenario.switch_overrides) {
    if (st.closed.find(id) == st.closed.end()) {
      throw UnknownTargetError("switch override targets unknown switch '" + id + "'");
    }
    st.closed[id] = closed;
  }
  return st;
}

void validate_scenario(const Scenario& scenario, const NetworkModel& model) {
  if (scenario.t_end_s <= 0.0) throw ValidationError("scenario t_end must be positive");

  for (const auto& [id, closed] : scenario.switch_overrides) {
    (void)closed;
    if (!model.has_branch(id) || model.branch(id).kind != BranchKind::sw) {
      throw UnknownTargetError("switch override targets non-switch '" + id + "'");
    }
  }
  for (const std::string& bus : scenario.monitored_buses) {
    if (!model.has_bus(bus)) {
      throw UnknownTargetError("monitored bus '" + bus + "' does not exist");
    }
  }
  for (const Event& e : scenario.events) {
    if (e.time_s < 0.0 || e.time_s > scenario.t_end_s) {
      throw ValidationError("event at t=" + std::to_string(e.time_s) +
                            " lies outside [0, t_end]");
    }
    switch (e.kind) {
      case EventKind::load_on:
      case EventKind::load_off:
        if (!model.has_load(e.target)) {
          throw UnknownTargetError("event targets unknown load '" + e.target + "'");
        }
        break;
      case EventKind::switch_open:
      case EventKind::switch_close:
        if (!model.has_branch(e.target) || model.branch(e.target).kind != BranchKind::sw) {
          throw UnknownTargetError("event targets non-switch '" + e.target + "'");
        }
        break;
      case EventKind::btb_transfer: {
        if (!model.has_device(e.target) || model.device(e.target).kind != DeviceKind::btb) {
          throw UnknownTargetError("event targets non-BTB device '" + e.target + "'");
        }
        const DeviceSpec& d = model.device(e.target);
        if (std::abs(e.value) > d.btb.converter_rating_kva) {
          throw ValidationError("BTB transfer command exceeds the converter rating");
        }
        break;
      }
      case EventKind::v2g_command: {
        if (!model.has_device(e.target) || model.device(e.target).kind != DeviceKind::v2g) {
          throw UnknownTargetError("event targets non-V2G device '" + e.target + "'");
        }
        const DeviceSpec& d = model.device(e.target);
        if (std::abs(e.value) > d.rating_kva) {
          throw ValidationError("V2G command of " + std::to_string(e.value) +
                                " kW exceeds the " + std::to_string(d.rating_kva) +
                                " kVA rating of '" + e.target + "'");
        }
        break;
      }
      case EventKind::device_setpoint: {
        if (!model.has_device(e.target)) {
          throw UnknownTargetError("event targets unknown device '" + e.target + "'");
        }
        DeviceSpec probe = model.device(e.target);
        DeviceOverride o;
        o.device_id = e.target;
        o.numeric[e.field] = e.value;
        apply_device_override(probe, o);  // throws on unknown field
        break;
      }
    }
  }
}

// ---------------------------------------------------------------------------
// JSON serialization
// ---------------------------------------------------------------------------

namespace {

json complex_to_json(const Complex& c) { return json::array({c.real(), c.imag()}); }

Complex complex_from_json(const json& j) {
  return Complex{j.at(0).get<double>(), j.at(1).get<double>()};
}

json phasor_set_to_json(const PhasorSet& s) {
  return json::array({complex_to_json(s[0]), complex_to_json(s[1]), complex_to_json(s[2])});
}

PhasorSet phasor_set_from_json(const json& j) {
  return {complex_from_json(j.at(0)), complex_from_json(j.at(1)), complex_from_json(j.at(2))};
}

json mat3_to_json(const Mat3& m) {
  json rows = json::array();
  for (const auto& row : m) {
    json r = json::array();
    for (const Complex& v : row) r.push_back(complex_to_json(v));
    rows.push_back(r);
  }
  return rows;
}

Mat3 mat3_from_json(const json& j) {
  Mat3 m = mat3_zero();
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) m[i][k] = complex_from_json(j.at(i).at(k));
  }
  return m;
}

json system_to_json(const SystemDescription& d) {
  json j;
  j["buses"] = json::array();
  for (const Bus& b : d.buses) {
    j["buses"].push_back(
        {{"id", b.id}, {"nominal_v_ll", b.nominal_v_ll}, {"phases", b.phases.to_string()}});
  }
  j["branches"] = json::array();
  for (const Branch& b : d.branches) {
    json jb = {{"id", b.id},
               {"from", b.from_bus},
               {"to", b.to_bus},
               {"kind", to_string(b.kind)},
               {"phases", b.phases.to_string()}};
    if (b.kind == BranchKind::line || b.kind == BranchKind::sw) {
      jb["z_ohm"] = mat3_to_json(b.z_ohm);
      if (b.length_ft > 0.0) jb["length_ft"] = b.length_ft;
    } else if (b.kind == BranchKind::transformer) {
      jb["rating_kva"] = b.rating_kva;
      jb["primary_ll_v"] = b.primary_ll_v;
      jb["secondary_ll_v"] = b.secondary_ll_v;
      jb["z_pu"] = complex_to_json(b.z_pu);
    } else {
      const RegulatorSettings& r = b.regulator;
      jb["regulator"] = {{"controlled_bus", r.controlled_bus},
                         {"tap_count", r.tap_count},
                         {"range", r.range},
                         {"bandwidth_v", r.bandwidth_v},
                         {"setpoint_v", r.setpoint_v},
                         {"control_interval_s", r.control_interval_s},
                         {"controlled_bus_ln_v", r.controlled_bus_ln_v},
                         {"taps", r.taps}};
    }
    j["branches"].push_back(jb);
  }
  j["loads"] = json::array();
  for (const Load& l : d.loads) {
    j["loads"].push_back(
        {{"id", l.id}, {"bus", l.bus}, {"s_va", phasor_set_to_json(l.s_va)},
         {"in_service", l.in_service}});
  }
  j["capacitors"] = json::array();
  for (const ShuntCapacitor& c : d.capacitors) {
    j["capacitors"].push_back({{"id", c.id},
                               {"bus", c.bus},
                               {"rating_kvar", c.rating_kvar},
                               {"phases", c.phases.to_string()},
                               {"in_service", c.in_service}});
  }
  j["devices"] = json::array();
  for (const DeviceSpec& dev : d.devices) {
    json jd = {{"id", dev.id},
               {"kind", to_string(dev.kind)},
               {"bus", dev.bus},
               {"phases", dev.phases.to_string()},
               {"rating_kva", dev.rating_kva},
               {"in_service", dev.in_service},
               {"grid_forming", dev.grid_forming},
               {"energy_capacity_kwh", dev.energy_capacity_kwh},
               {"initial_energy_kwh", dev.initial_energy_kwh},
               {"p_setpoint_kw", dev.p_setpoint_kw},
               {"q_setpoint_kvar", dev.q_setpoint_kvar},
               {"available_kw", dev.available_kw},
               {"p_transfer_setpoint_kw", dev.p_transfer_setpoint_kw}};
    if (!dev.remote_bus.empty()) jd["remote_bus"] = dev.remote_bus;
    jd["gfm"] = {{"droop_hz_per_kw", dev.gfm.droop_hz_per_kw},
                 {"p_nominal_kw", dev.gfm.p_nominal_kw},
                 {"p_nominal_from_initial", dev.gfm.p_nominal_from_initial},
                 {"freq_filter_tau_s", dev.gfm.freq_filter_tau_s},
                 {"voltage_setpoint_pu", dev.gfm.voltage_setpoint_pu},
                 {"q_droop_pu", dev.gfm.q_droop_pu},
                 {"z1_pu", complex_to_json(dev.gfm.z1_pu)},
                 {"z2_pu", complex_to_json(dev.gfm.z2_pu)},
                 {"z0_pu", complex_to_json(dev.gfm.z0_pu)}};
    jd["gfl"] = {{"response_tau_s", dev.gfl.response_tau_s}};
    jd["btb"] = {{"converter_rating_kva", dev.btb.converter_rating_kva},
                 {"vdc_nominal_v", dev.btb.vdc_nominal_v},
                 {"capacitance_f", dev.btb.capacitance_f},
                 {"dc_kp_kw_per_v", dev.btb.dc_kp_kw_per_v},
                 {"dc_ki_kw_per_vs", dev.btb.dc_ki_kw_per_vs},
                 {"mode", dev.btb.mode == BtbMode::fixed_transfer ? "fixed_transfer"
                                                                  : "frequency_support"},
                 {"k_f_kw_per_hz", dev.btb.k_f_kw_per_hz},
                 {"support_threshold_hz", dev.btb.support_threshold_hz},
                 {"converter_tau_s", dev.btb.converter_tau_s}};
    j["devices"].push_back(jd);
  }
  j["switches"] = d.initial_switch_closed;
  return j;
}

DeviceKind device_kind_from_string(const std::string& s) {
  if (s == "grid_source") return DeviceKind::grid_source;
  if (s == "bess") return DeviceKind::bess;
  if (s == "pv") return DeviceKind::pv;
  if (s == "diesel") return DeviceKind::diesel;
  if (s == "v2g") return DeviceKind::v2g;
  if (s == "btb") return DeviceKind::btb;
  throw ParseError("unknown device kind '" + s + "'");
}

BranchKind branch_kind_from_string(const std::string& s) {
  if (s == "line") return BranchKind::line;
  if (s == "transformer") return BranchKind::transformer;
  if (s == "regulator") return BranchKind::regulator;
  if (s == "switch") return BranchKind::sw;
  throw ParseError("unknown branch kind '" + s + "'");
}

SystemDescription system_from_json(const json& j) {
  SystemDescription d;
  for (const json& jb : j.at("buses")) {
    Bus b;
    b.id = jb.at("id").get<std::string>();
    b.nominal_v_ll = jb.at("nominal_v_ll").get<double>();
    b.phases = PhaseMask::parse(jb.at("phases").get<std::string>());
    d.buses.push_back(b);
  }
  for (const json& jb : j.at("branches")) {
    Branch b;
    b.id = jb.at("id").get<std::string>();
    b.from_bus = jb.at("from").get<std::string>();
    b.to_bus = jb.at("to").get<std::string>();
    b.kind = branch_kind_from_string(jb.at("kind").get<std::string>());
    b.phases = PhaseMask::parse(jb.at("phases").get<std::string>());
    if (b.kind == BranchKind::line || b.kind == BranchKind::sw) {
      b.z_ohm = mat3_from_json(jb.at("z_ohm"));
      b.length_ft = jb.value("length_ft", 0.0);
    } else if (b.kind == BranchKind::transformer) {
      b.rating_kva = jb.at("rating_kva").get<double>();
      b.primary_ll_v = jb.at("primary_ll_v").get<double>();
      b.secondary_ll_v = jb.at("secondary_ll_v").get<double>();
      b.z_pu = complex_from_json(jb.at("z_pu"));
    } else {
      const json& jr = jb.at("regulator");
      RegulatorSettings& r = b.regulator;
      r.controlled_bus = jr.at("controlled_bus").get<std::string>();
      r.tap_count = jr.at("tap_count").get<int>();
      r.range = jr.at("range").get<double>();
      r.bandwidth_v = jr.at("bandwidth_v").get<double>();
      r.setpoint_v = jr.at("setpoint_v").get<double>();
      r.control_interval_s = jr.at("control_interval_s").get<double>();
      r.controlled_bus_ln_v = jr.at("controlled_bus_ln_v").get<double>();
      r.taps = jr.at("taps").get<std::array<int, 3>>();
    }
    d.branches.push_back(b);
  }
  for (const json& jl : j.at("loads")) {
    Load l;
    l.id = jl.at("id").get<std::string>();
    l.bus = jl.at("bus").get<std::string>();
    l.s_va = phasor_set_from_json(jl.at("s_va"));
    l.in_service = jl.value("in_service", true);
    d.loads.push_back(l);
  }
  for (const json& jc : j.value("capacitors", json::array())) {
    ShuntCapacitor c;
    c.id = jc.at("id").get<std::string>();
    c.bus = jc.at("bus").get<std::string>();
    c.rating_kvar = jc.at("rating_kvar").get<double>();
    c.phases = PhaseMask::parse(jc.at("phases").get<std::string>());
    c.in_service = jc.value("in_service", true);
    d.capacitors.push_back(c);
  }
  for (const json& jd : j.value("devices", json::array())) {
    DeviceSpec dev;
    dev.id = jd.at("id").get<std::string>();
    dev.kind = device_kind_from_string(jd.at("kind").get<std::string>());
    dev.bus = jd.at("bus").get<std::string>();
    dev.remote_bus = jd.value("remote_bus", std::string{});
    dev.phases = PhaseMask::parse(jd.at("phases").get<std::string>());
    dev.rating_kva = jd.at("rating_kva").get<double>();
    dev.in_service = jd.value("in_service", true);
    dev.grid_forming = jd.value("grid_forming", false);
    dev.energy_capacity_kwh = jd.value("energy_capacity_kwh", 0.0);
    dev.initial_energy_kwh = jd.value("initial_energy_kwh", 0.0);
    dev.p_setpoint_kw = jd.value("p_setpoint_kw", 0.0);
    dev.q_setpoint_kvar = jd.value("q_setpoint_kvar", 0.0);
    dev.available_kw = jd.value("available_kw", 0.0);
    dev.p_transfer_setpoint_kw = jd.value("p_transfer_setpoint_kw", 0.0);
    if (jd.contains("gfm")) {
      const json& jg = jd["gfm"];
      dev.gfm.droop_hz_per_kw = jg.value("droop_hz_per_kw", dev.gfm.droop_hz_per_kw);
      dev.gfm.p_nominal_kw = jg.value("p_nominal_kw", 0.0);
      dev.gfm.p_nominal_from_initial = jg.value("p_nominal_from_initial", true);
      dev.gfm.freq_filter_tau_s = jg.value("freq_filter_tau_s", 0.2);
      dev.gfm.voltage_setpoint_pu = jg.value("voltage_setpoint_pu", 1.0);
      dev.gfm.q_droop_pu = jg.value("q_droop_pu", 0.05);
      if (jg.contains("z1_pu")) dev.gfm.z1_pu = complex_from_json(jg["z1_pu"]);
      if (jg.contains("z2_pu")) dev.gfm.z2_pu = complex_from_json(jg["z2_pu"]);
      if (jg.contains("z0_pu")) dev.gfm.z0_pu = complex_from_json(jg["z0_pu"]);
    }
    if (jd.contains("gfl")) {
      dev.gfl.response_tau_s = jd["gfl"].value("response_tau_s", 0.1);
    }
    if (jd.contains("btb")) {
      const json& jbt = jd["btb"];
      dev.btb.converter_rating_kva = jbt.value("converter_rating_kva", 3500.0);
      dev.btb.vdc_nominal_v = jbt.value("vdc_nominal_v", 8000.0);
      dev.btb.capacitance_f = jbt.value("capacitance_f", 0.1);
      dev.btb.dc_kp_kw_per_v = jbt.value("dc_kp_kw_per_v", 10.0);
      dev.btb.dc_ki_kw_per_vs = jbt.value("dc_ki_kw_per_vs", 200.0);
      const std::string mode = jbt.value("mode", "fixed_transfer");
      dev.btb.mode =
          mode == "frequency_support" ? BtbMode::frequency_support : BtbMode::fixed_transfer;
      dev.btb.k_f_kw_per_hz = jbt.value("k_f_kw_per_hz", 1000.0);
      dev.btb.support_threshold_hz = jbt.value("support_threshold_hz", 59.2);
      dev.btb.converter_tau_s = jbt.value("converter_tau_s", 0.05);
    }
    d.devices.push_back(dev);
  }
  const json switches = j.value("switches", json::object());
  for (const auto& [id, closed] : switches.items()) {
    d.initial_switch_closed[id] = closed.get<bool>();
  }
  return d;
}

json scenario_to_json(const Scenario& sc) {
  json j;
  j["format_version"] = sc.format_version;
  j["name"] = sc.name;
  j["description"] = sc.description;
  if (sc.inline_system) {
    j["system"] = system_to_json(*sc.inline_system);
  } else {
    j["base_system"] = sc.base_system;
  }
  j["switch_overrides"] = sc.switch_overrides;
  j["load_overrides"] = json::array();
  for (const LoadOverride& o : sc.load_overrides) {
    json jo = {{"load", o.load_id}};
    if (o.in_service) jo["in_service"] = *o.in_service;
    if (o.total_p_kw) jo["total_p_kw"] = *o.total_p_kw;
    if (o.total_q_kvar) jo["total_q_kvar"] = *o.total_q_kvar;
    j["load_overrides"].push_back(jo);
  }
  j["device_overrides"] = json::array();
  for (const DeviceOverride& o : sc.device_overrides) {
    json jo = {{"device", o.device_id}};
    if (!o.numeric.empty()) jo["set"] = o.numeric;
    if (!o.flags.empty()) jo["flags"] = o.flags;
    if (o.mode) jo["mode"] = *o.mode;
    j["device_overrides"].push_back(jo);
  }
  j["extra_loads"] = json::array();
  for (const Load& l : sc.extra_loads) {
    j["extra_loads"].push_back({{"id", l.id},
                                {"bus", l.bus},
                                {"s_va", phasor_set_to_json(l.s_va)},
                                {"in_service", l.in_service}});
  }
  j["events"] = json::array();
  for (const Event& e : sc.events) {
    json je = {{"t", e.time_s}, {"kind", to_string(e.kind)}, {"target", e.target}};
    if (!e.field.empty()) je["field"] = e.field;
    if (e.kind != EventKind::load_on && e.kind != EventKind::load_off &&
        e.kind != EventKind::switch_open && e.kind != EventKind::switch_close) {
      je["value"] = e.value;
    }
    j["events"].push_back(je);
  }
  j["t_end_s"] = sc.t_end_s;
  j["monitored_buses"] = sc.monitored_buses;
  j["allow_dead_islands"] = sc.allow_dead_islands;
  return j;
}

Scenario scenario_from_json(const json& j) {
  Scenario sc;
  sc.format_version = j.value("format_version", 1);
  if (sc.format_version != 1) {
    throw ParseError("unsupported scenario format_version " +
                     std::to_string(sc.format_version));
  }
  sc.name = j.value("name", "unnamed");
  sc.description = j.value("description", "");
  if (j.contains("system")) {
    sc.inline_system = system_from_json(j["system"]);
    sc.base_system.clear();
  } else {
    sc.base_system = j.value("base_system", "builtin-twin-feeder");
  }
  const json sw_overrides = j.value("switch_overrides", json::object());
  for (const auto& [id, closed] : sw_overrides.items()) {
    sc.switch_overrides[id] = closed.get<bool>();
  }
  for (const json& jo : j.value("load_overrides", json::array())) {
    LoadOverride o;
    o.load_id = jo.at("load").get<std::string>();
    if (jo.contains("in_service")) o.in_service = jo["in_service"].get<bool>();
    if (jo.contains("total_p_kw")) o.total_p_kw = jo["total_p_kw"].get<double>();
    if (jo.contains("total_q_kvar")) o.total_q_kvar = jo["total_q_kvar"].get<double>();
    sc.load_overrides.push_back(o);
  }
  for (const json& jo : j.value("device_overrides", json::array())) {
    DeviceOverride o;
    o.device_id = jo.at("device").get<std::string>();
    const json numeric = jo.value("set", json::object());
    for (const auto& [key, value] : numeric.items()) {
      o.numeric[key] = value.get<double>();
    }
    const json flags = jo.value("flags", json::object());
    for (const auto& [key, value] : flags.items()) {
      o.flags[key] = value.get<bool>();
    }
    if (jo.contains("mode")) o.mode = jo["mode"].get<std::string>();
    sc.device_overrides.push_back(o);
  }
  for (const json& jl : j.value("extra_loads", json::array())) {
    Load l;
    l.id = jl.at("id").get<std::string>();
    l.bus = jl.at("bus").get<std::string>();
    l.s_va = phasor_set_from_json(jl.at("s_va"));
    l.in_service = jl.value("in_service", true);
    sc.extra_loads.push_back(l);
  }
  for (const json& je : j.value("events", json::array())) {
    Event e;
    e.time_s = je.at("t").get<double>();
    e.kind = event_kind_from_string(je.at("kind").get<std::string>());
    e.target = je.at("target").get<std::string>();
    e.field = je.value("field", "");
    e.value = je.value("value", 0.0);
    sc.events.push_back(e);
  }
  sc.t_end_s = j.at("t_end_s").get<double>();
  sc.monitored_buses = j.value("monitored_buses", std::vector<std::string>{});
  sc.allow_dead_islands = j.value("allow_dead_islands", false);
  return sc;
}

}  // namespace

std::string scenario_to_json_string(const Scenario& scenario) {
  return scenario_to_json(scenario).dump(2);
}

Scenario scenario_from_json_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string{"scenario JSON: "} + e.what());
  }
  try {
    return scenario_from_json(j);
  } catch (const json::exception& e) {
    throw ParseError(std::string{"scenario JSON: "} + e.what());
  }
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open scenario file '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  Scenario sc = scenario_from_json_string(buffer.str());
  // Referential validation against the materialized base system.
  materialize_model(sc);
  return sc;
}

void save_scenario(const Scenario& scenario, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write scenario file '" + path + "'");
  out << scenario_to_json_string(scenario) << "\n";
}

SystemDescription load_system_description(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open system file '" + path + "'");
  json j;
  try {
    in >> j;
    return system_from_json(j);
  } catch (const json::exception& e) {
    throw ParseError(std::string{"system JSON: "} + e.what());
  }
}

void save_system_description(const SystemDescription& description, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write system file '" + path + "'");
  out << system_to_json(description).dump(2) << "\n";
}

}  // namespace mbbsim
