#pragma once

#include <array>
#include <string>
#include <vector>

#include "mbbsim/phasor.hpp"

namespace mbbsim {

/// Zero / positive / negative sequence phasors of a three-phase set.
struct SequenceComponents {
  Complex v0;
  Complex v1;
  Complex v2;
};

/// Voltage unbalance factors in percent. `degenerate` is set when the
/// positive-sequence reference is too small to divide by; the percentages
/// are then meaningless and must not be consumed.
struct UnbalanceMetrics {
  double vuf2_percent = 0.0;
  double vuf0_percent = 0.0;
  bool degenerate = false;
};

/// Fortescue decomposition:
///   v0 = (Va + Vb + Vc)/3
///   v1 = (Va + a*Vb + a^2*Vc)/3
///   v2 = (Va + a^2*Vb + a*Vc)/3
SequenceComponents sequence_components(const PhasorSet& v);

/// Inverse transform; round-trips sequence_components to ~1e-16 relative.
PhasorSet from_sequence(const SequenceComponents& s);

/// VUF2 = |V2|/|V1| * 100%, VUF0 = |V0|/|V1| * 100%.
/// `v1_floor` is the absolute magnitude below which the reference is treated
/// as degenerate (pass ~1e-9 of nominal).
UnbalanceMetrics vuf(const PhasorSet& v, double v1_floor = 1e-9);

/// Per-phase voltage magnitudes in per unit of (base_ll / sqrt(3)).
/// `base_ll` is the line-to-line base in volts.
std::array<double, 3> rms_pu(const PhasorSet& v, double base_ll);

/// One sample of the unbalance trace at a monitored bus.
struct VufSample {
  double t = 0.0;
  std::string bus;
  double vuf2_percent = 0.0;
  double vuf0_percent = 0.0;
};

/// A contiguous interval during which vuf2 or vuf0 exceeded the limit.
struct LimitCrossing {
  std::string bus;
  std::string metric;  // "vuf2" or "vuf0"
  double t_begin = 0.0;
  double t_end = 0.0;
  double peak_percent = 0.0;
};

/// Scans a time-ordered series of unbalance samples and reports the
/// intervals where either factor exceeds `limit_percent`, per bus.
std::vector<LimitCrossing> threshold_report(const std::vector<VufSample>& series,
                                            double limit_percent);

}  // namespace mbbsim
