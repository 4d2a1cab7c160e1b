#include "mbbsim/network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mbbsim {

Mat3 mat3_zero() {
  Mat3 m{};
  for (auto& row : m) row.fill(Complex{0.0, 0.0});
  return m;
}

Mat3 transpose_line_config(const Mat3& z) {
  Complex self{0.0, 0.0};
  Complex mutual{0.0, 0.0};
  for (int i = 0; i < 3; ++i) self += z[i][i];
  self /= 3.0;
  mutual = (z[0][1] + z[0][2] + z[1][2]) / 3.0;
  Mat3 out = mat3_zero();
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) out[i][j] = (i == j) ? self : mutual;
  }
  return out;
}

std::string to_string(BranchKind k) {
  switch (k) {
    case BranchKind::line: return "line";
    case BranchKind::transformer: return "transformer";
    case BranchKind::regulator: return "regulator";
    case BranchKind::sw: return "switch";
  }
  return "?";
}

std::string to_string(DeviceKind k) {
  switch (k) {
    case DeviceKind::grid_source: return "grid_source";
    case DeviceKind::bess: return "bess";
    case DeviceKind::pv: return "pv";
    case DeviceKind::diesel: return "diesel";
    case DeviceKind::v2g: return "v2g";
    case DeviceKind::btb: return "btb";
  }
  return "?";
}

int Load::phase_count() const {
  int n = 0;
  for (const Complex& s : s_va) {
    if (std::abs(s) > 0.0) ++n;
  }
  return n;
}

RegulatorSettings regulator_step(const RegulatorSettings& settings,
                                 const PhasorSet& measured_voltage) {
  RegulatorSettings next = settings;
  const double scale = 120.0 / settings.controlled_bus_ln_v;
  const double lo = settings.setpoint_v - settings.bandwidth_v / 2.0;
  const double hi = settings.setpoint_v + settings.bandwidth_v / 2.0;
  for (Phase p : kAllPhases) {
    const int i = index_of(p);
    const double v120 = std::abs(measured_voltage[i]) * scale;
    if (v120 <= 0.0) continue;  // absent phase: leave the tap alone
    int& tap = next.taps[i];
    if (v120 < lo) {
      tap = std::min(tap + 1, settings.max_tap());
    } else if (v120 > hi) {
      tap = std::max(tap - 1, -settings.max_tap());
    }
  }
  return next;
}

bool SwitchState::is_closed(const std::string& branch_id) const {
  auto it = closed.find(branch_id);
  if (it == closed.end()) {
    throw ValidationError("switch state does not cover branch '" + branch_id + "'");
  }
  return it->second;
}

bool Island::contains(const std::string& bus) const {
  return std::binary_search(member_buses.begin(), member_buses.end(), bus);
}

const Bus& NetworkModel::bus(const std::string& id) const {
  auto it = bus_index_.find(id);
  if (it == bus_index_.end()) throw UnknownTargetError("unknown bus '" + id + "'");
  return buses_[it->second];
}

const Branch& NetworkModel::branch(const std::string& id) const {
  auto it = branch_index_.find(id);
  if (it == branch_index_.end()) throw UnknownTargetError("unknown branch '" + id + "'");
  return branches_[it->second];
}

const Load& NetworkModel::load(const std::string& id) const {
  auto it = load_index_.find(id);
  if (it == load_index_.end()) throw UnknownTargetError("unknown load '" + id + "'");
  return loads_[it->second];
}

const DeviceSpec& NetworkModel::device(const std::string& id) const {
  auto it = device_index_.find(id);
  if (it == device_index_.end()) throw UnknownTargetError("unknown device '" + id + "'");
  return devices_[it->second];
}

bool NetworkModel::has_bus(const std::string& id) const { return bus_index_.count(id) > 0; }
bool NetworkModel::has_branch(const std::string& id) const { return branch_index_.count(id) > 0; }
bool NetworkModel::has_load(const std::string& id) const { return load_index_.count(id) > 0; }
bool NetworkModel::has_device(const std::string& id) const { return device_index_.count(id) > 0; }

SwitchState NetworkModel::default_switch_state() const {
  SwitchState st;
  for (const Branch& b : branches_) {
    if (b.kind != BranchKind::sw) continue;
    auto it = initial_switch_closed_.find(b.id);
    st.closed[b.id] = (it != initial_switch_closed_.end()) ? it->second : true;
  }
  return st;
}

NetworkModel build_network(const SystemDescription& description) {
  NetworkModel m;
  m.buses_ = description.buses;
  m.branches_ = description.branches;
  m.loads_ = description.loads;
  m.capacitors_ = description.capacitors;
  m.devices_ = description.devices;
  m.initial_switch_closed_ = description.initial_switch_closed;

  for (std::size_t i = 0; i < m.buses_.size(); ++i) {
    const Bus& b = m.buses_[i];
    if (b.id.empty()) throw ValidationError("bus with empty id");
    if (b.nominal_v_ll <= 0.0) throw ValidationError("bus '" + b.id + "' has no nominal voltage");
    if (b.phases.empty()) throw ValidationError("bus '" + b.id + "' has no phases");
    if (!m.bus_index_.emplace(b.id, i).second) {
      throw ValidationError("duplicate bus id '" + b.id + "'");
    }
  }

  auto require_bus = [&m](const std::string& id, const std::string& context) -> const Bus& {
    auto it = m.bus_index_.find(id);
    if (it == m.bus_index_.end()) {
      throw UnknownTargetError(context + " references undefined bus '" + id + "'");
    }
    return m.buses_[it->second];
  };

  for (std::size_t i = 0; i < m.branches_.size(); ++i) {
    const Branch& b = m.branches_[i];
    if (!m.branch_index_.emplace(b.id, i).second) {
      throw ValidationError("duplicate branch id '" + b.id + "'");
    }
    if (b.from_bus == b.to_bus) {
      throw ValidationError("branch '" + b.id + "' connects a bus to itself");
    }
    const Bus& from = require_bus(b.from_bus, "branch '" + b.id + "'");
    const Bus& to = require_bus(b.to_bus, "branch '" + b.id + "'");
    if (!from.phases.contains(b.phases) || !to.phases.contains(b.phases)) {
      throw ValidationError("branch '" + b.id + "' carries phases " + b.phases.to_string() +
                            " not present on both end buses");
    }
    if (b.kind == BranchKind::line || b.kind == BranchKind::sw) {
      for (Phase pi : kAllPhases) {
        for (Phase pj : kAllPhases) {
          const bool carried = b.phases.has(pi) && b.phases.has(pj);
          if (!carried && std::abs(b.z_ohm[index_of(pi)][index_of(pj)]) != 0.0) {
            throw ValidationError("branch '" + b.id + "' has impedance entries on absent phases");
          }
        }
      }
      for (Phase p : kAllPhases) {
        if (b.phases.has(p) && std::abs(b.z_ohm[index_of(p)][index_of(p)]) == 0.0) {
          throw ValidationError("branch '" + b.id + "' has zero series impedance on phase " +
                                std::string(1, phase_letter(p)));
        }
      }
    }
    if (b.kind == BranchKind::transformer) {
      if (b.rating_kva <= 0.0 || b.primary_ll_v <= 0.0 || b.secondary_ll_v <= 0.0 ||
          std::abs(b.z_pu) == 0.0) {
        throw ValidationError("transformer '" + b.id + "' missing rating/voltages/impedance");
      }
    }
    if (b.kind == BranchKind::regulator) {
      const RegulatorSettings& r = b.regulator;
      require_bus(r.controlled_bus, "regulator '" + b.id + "'");
      for (int tap : r.taps) {
        if (std::abs(tap) > r.max_tap()) {
          throw ValidationError("regulator '" + b.id + "' tap outside range");
        }
      }
    }
  }

  for (std::size_t i = 0; i < m.loads_.size(); ++i) {
    const Load& l = m.loads_[i];
    if (!m.load_index_.emplace(l.id, i).second) {
      throw ValidationError("duplicate load id '" + l.id + "'");
    }
    const Bus& bus = require_bus(l.bus, "load '" + l.id + "'");
    for (Phase p : kAllPhases) {
      if (std::abs(l.s_va[index_of(p)]) > 0.0 && !bus.phases.has(p)) {
        throw ValidationError("load '" + l.id + "' demands power on absent phase " +
                              std::string(1, phase_letter(p)));
      }
    }
  }

  for (const ShuntCapacitor& c : m.capacitors_) {
    if (c.rating_kvar <= 0.0) {
      throw ValidationError("capacitor '" + c.id + "' has non-positive rating");
    }
    require_bus(c.bus, "capacitor '" + c.id + "'");
  }

  for (std::size_t i = 0; i < m.devices_.size(); ++i) {
    const DeviceSpec& d = m.devices_[i];
    if (!m.device_index_.emplace(d.id, i).second) {
      throw ValidationError("duplicate device id '" + d.id + "'");
    }
    const Bus& bus = require_bus(d.bus, "device '" + d.id + "'");
    if (!bus.phases.contains(d.phases)) {
      throw ValidationError("device '" + d.id + "' injects on phases absent at its bus");
    }
    if (d.kind == DeviceKind::btb) {
      require_bus(d.remote_bus, "device '" + d.id + "'");
    }
    if (d.grid_forming && !bus.phases.contains(PhaseMask::abc())) {
      throw ValidationError("grid-forming device '" + d.id + "' needs a three-phase bus");
    }
    if (d.rating_kva <= 0.0) {
      throw ValidationError("device '" + d.id + "' has non-positive rating");
    }
  }

  for (const auto& [branch_id, closed] : m.initial_switch_closed_) {
    (void)closed;
    auto it = m.branch_index_.find(branch_id);
    if (it == m.branch_index_.end() || m.branches_[it->second].kind != BranchKind::sw) {
      throw ValidationError("initial switch state names non-switch branch '" + branch_id + "'");
    }
  }

  return m;
}

std::vector<Island> find_islands(const NetworkModel& model, const SwitchState& switches) {
  const auto& buses = model.buses();
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < buses.size(); ++i) index[buses[i].id] = i;

  // Union-find over bus indices.
  std::vector<std::size_t> parent(buses.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&parent](std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  auto unite = [&](std::size_t a, std::size_t b) { parent[find(a)] = find(b); };

  for (const Branch& b : model.branches()) {
    const bool connects = (b.kind != BranchKind::sw) || switches.is_closed(b.id);
    if (connects) unite(index.at(b.from_bus), index.at(b.to_bus));
  }

  std::map<std::size_t, Island> groups;
  for (std::size_t i = 0; i < buses.size(); ++i) {
    groups[find(i)].member_buses.push_back(buses[i].id);
  }

  std::vector<Island> islands;
  islands.reserve(groups.size());
  for (auto& [root, island] : groups) {
    (void)root;
    std::sort(island.member_buses.begin(), island.member_buses.end());
    islands.push_back(std::move(island));
  }
  // Deterministic order by smallest member bus.
  std::sort(islands.begin(), islands.end(),
            [](const Island& a, const Island& b) { return a.member_buses[0] < b.member_buses[0]; });

  for (Island& island : islands) {
    for (const DeviceSpec& d : model.devices()) {
      if (d.grid_forming && d.in_service && island.contains(d.bus)) {
        island.grid_forming_devices.push_back(d.id);
      }
    }
    if (island.grid_forming_devices.size() == 1) {
      island.grid_forming_device = island.grid_forming_devices.front();
    }
  }
  return islands;
}

}  // namespace mbbsim
