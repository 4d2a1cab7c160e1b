#pragma once

#include <string>

namespace mbbsim {

enum class EventKind {
  load_on,
  load_off,
  switch_open,
  switch_close,
  device_setpoint,  // generic parameter change, field names as in overrides
  btb_transfer,     // new transfer setpoint, + = local -> remote
  v2g_command,      // discharge command for a V2G unit, + = inject
};

std::string to_string(EventKind k);
EventKind event_kind_from_string(const std::string& s);

/// A timed action on a load, switch or device. Applied at the first
/// simulation step whose time is >= `time_s`.
struct Event {
  double time_s = 0.0;
  EventKind kind = EventKind::load_on;
  std::string target;   // load / branch / device id
  std::string field;    // device_setpoint only
  double value = 0.0;   // kW for power-ish events, field units otherwise

  friend bool operator==(const Event&, const Event&) = default;
};

}  // namespace mbbsim
