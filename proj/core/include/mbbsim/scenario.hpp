#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mbbsim/events.hpp"
#include "mbbsim/network.hpp"

namespace mbbsim {

struct LoadOverride {
  std::string load_id;
  std::optional<bool> in_service;
  /// New three-phase totals, redistributed over the load's phases.
  std::optional<double> total_p_kw;
  std::optional<double> total_q_kvar;

  friend bool operator==(const LoadOverride&, const LoadOverride&) = default;
};

/// Key/value parameter overrides for one device. Numeric keys mirror the
/// DeviceSpec field names (e.g. "rating_kva", "droop_hz_per_kw", "z2_pu_x");
/// flags cover booleans ("in_service", "grid_forming",
/// "p_nominal_from_initial"); `mode` switches the BTB control mode.
struct DeviceOverride {
  std::string device_id;
  std::map<std::string, double> numeric;
  std::map<std::string, bool> flags;
  std::optional<std::string> mode;

  friend bool operator==(const DeviceOverride&, const DeviceOverride&) = default;
};

/// A simulation case: base system plus topology/parameter deltas and a
/// time-ordered event script. Pure data; building one twice yields
/// identical structures.
struct Scenario {
  std::string name;
  std::string description;
  int format_version = 1;

  /// "builtin-twin-feeder" or empty when `inline_system` is set.
  std::string base_system = "builtin-twin-feeder";
  std::optional<SystemDescription> inline_system;

  std::map<std::string, bool> switch_overrides;  // branch id -> closed
  std::vector<LoadOverride> load_overrides;
  std::vector<DeviceOverride> device_overrides;
  /// Additional loads not present in the base system (e.g. staged EV
  /// charging blocks).
  std::vector<Load> extra_loads;

  std::vector<Event> events;
  double t_end_s = 10.0;
  std::vector<std::string> monitored_buses;
  /// Islands without a grid-forming source are intentionally dead (zero
  /// voltage) rather than an error.
  bool allow_dead_islands = false;
};

/// Case builders reproducing the three studies on the built-in twin-feeder
/// system: power-quality isolation of a balanced (data-center) microgrid
/// next to an unbalanced neighbor, unbalanced V2G export through the BTB,
/// and emergency EV-charging import with frequency support.
Scenario build_case_a();
Scenario build_case_b();
Scenario build_case_c();

/// Name -> builder lookup for the CLI ("case-a", "case-b", "case-c").
std::vector<std::string> builtin_scenario_names();
std::optional<Scenario> builtin_scenario(const std::string& name);
std::string builtin_scenario_summary(const std::string& name);

/// Applies the scenario's overrides to its base description and validates
/// the result. Also checks that every override/event target exists.
NetworkModel materialize_model(const Scenario& scenario);

/// Initial switch state: description defaults plus scenario overrides.
SwitchState initial_switch_state(const NetworkModel& model, const Scenario& scenario);

/// Structural validation against the materialized model: targets exist,
/// events lie in [0, t_end], commands respect ratings.
void validate_scenario(const Scenario& scenario, const NetworkModel& model);

/// Applies one override in place. Throws ValidationError on unknown keys.
/// Also used for device_setpoint events.
void apply_device_override(DeviceSpec& spec, const DeviceOverride& override_spec);

/// JSON round-trip. load_scenario throws ParseError with location context
/// on malformed files and UnknownTargetError on bad references.
Scenario load_scenario(const std::string& path);
void save_scenario(const Scenario& scenario, const std::string& path);

std::string scenario_to_json_string(const Scenario& scenario);
Scenario scenario_from_json_string(const std::string& text);

/// System description JSON round-trip (the "buses/branches/loads/devices/
/// switches" document described in docs/file-formats.md).
SystemDescription load_system_description(const std::string& path);
void save_system_description(const SystemDescription& description, const std::string& path);

}  // namespace mbbsim
