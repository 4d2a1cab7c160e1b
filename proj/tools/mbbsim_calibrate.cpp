// Calibration driver for the case-study unbalance and droop targets.
//
// The feeder data fixes most of each case; what the source papers leave
// open are the grid-forming converters' negative/zero-sequence impedances
// and the bus at which the unbalance traces are metered. This tool sweeps
// those, fits the (mildly nonlinear) VUF response, solves for the
// impedances that land the reported operating points, and verifies the
// result, printing a ready-to-paste summary:
//
//   case A: VUF2 -> 1.8 %, VUF0 -> 1.48 % after t=12 s, both dipping when
//           the phase-A load picks up at t=8 s;
//   case B: VUF2 -> 7 %, VUF0 -> 9.8 % at the microgrid side;
//   case C: droop gain such that the final EV block lands at 59.1 Hz.
//
// Usage: mbbsim_calibrate [case-a|case-b|case-c|all]

#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "mbbsim/scenario.hpp"
#include "mbbsim/simulation.hpp"

using namespace mbbsim;

namespace {

struct VufStats {
  double v2_late = 0.0;   // mean after the last event window
  double v0_late = 0.0;
  double dv2_step = 0.0;  // change across the phase-A pickup (case A)
  double dv0_step = 0.0;
  double v2_min = 1e9;
  double v0_min = 1e9;
};

double window_mean(const RunResult& r, const std::string& bus, bool vuf2, double t0, double t1) {
  double sum = 0.0;
  int n = 0;
  for (const TimeSeriesRecord& rec : r.records) {
    if (rec.t < t0 || rec.t > t1) continue;
    auto it = rec.vuf.find(bus);
    if (it == rec.vuf.end() || it->second.degenerate) continue;
    sum += vuf2 ? it->second.vuf2_percent : it->second.vuf0_percent;
    ++n;
  }
  return n ? sum / n : std::nan("");
}

RunResult run_with(Scenario sc, const std::vector<std::string>& monitor, double z2, double z0,
                   const std::string& bess_id) {
  sc.monitored_buses = monitor;
  DeviceOverride o;
  o.device_id = bess_id;
  o.numeric["z2_pu_x"] = z2;
  o.numeric["z0_pu_x"] = z0;
  sc.device_overrides.push_back(o);
  SimulationConfig cfg;
  return run(sc, cfg);
}

VufStats stats_for(const RunResult& r, const std::string& bus, double late0, double late1,
                   bool with_step) {
  VufStats s;
  s.v2_late = window_mean(r, bus, true, late0, late1);
  s.v0_late = window_mean(r, bus, false, late0, late1);
  if (with_step) {
    s.dv2_step = window_mean(r, bus, true, 8.5, 9.9) - window_mean(r, bus, true, 6.5, 7.9);
    s.dv0_step = window_mean(r, bus, false, 8.5, 9.9) - window_mean(r, bus, false, 6.5, 7.9);
  }
  for (const TimeSeriesRecord& rec : r.records) {
    if (rec.t < 0.5) continue;
    auto it = rec.vuf.find(bus);
    if (it == rec.vuf.end() || it->second.degenerate) continue;
    s.v2_min = std::min(s.v2_min, it->second.vuf2_percent);
    s.v0_min = std::min(s.v0_min, it->second.vuf0_percent);
  }
  return s;
}

/// Secant solve of z such that metric(z) = target, starting from two probes.
double secant(const std::function<double(double)>& metric, double target, double z_lo,
              double z_hi, int iters = 4) {
  double x0 = z_lo, f0 = metric(z_lo) - target;
  double x1 = z_hi, f1 = metric(z_hi) - target;
  for (int i = 0; i < iters; ++i) {
    if (std::abs(f1 - f0) < 1e-12) break;
    double x2 = x1 - f1 * (x1 - x0) / (f1 - f0);
    x2 = std::max(1e-4, std::min(x2, 0.25));  // zero impedance is singular
    x0 = x1;
    f0 = f1;
    x1 = x2;
    f1 = metric(x2) - target;
    if (std::abs(f1) < 0.01) break;
  }
  return x1;
}

void calibrate_case_a() {
  std::cout << "=== case A: MG1 unbalance (targets VUF2 1.8 %, VUF0 1.48 % after t=12, both "
               "dipping at t=8) ===\n";
  const std::vector<std::string> candidates = {"6801", "6711", "6701", "6321", "6501"};
  for (const std::string& bus : candidates) {
    // Solve z2 for the VUF2 target, then z0 for the VUF0 target at the
    // solved z2 (coupling is weak in that direction).
    auto v2_of = [&](double z2) {
      const RunResult r = run_with(build_case_a(), candidates, z2, 0.03, "bess-6801");
      return stats_for(r, bus, 12.5, 14.0, true).v2_late;
    };
    const double z2 = secant(v2_of, 1.8, 0.005, 0.05);
    auto v0_of = [&](double z0) {
      const RunResult r = run_with(build_case_a(), candidates, z2, z0, "bess-6801");
      return stats_for(r, bus, 12.5, 14.0, true).v0_late;
    };
    const double z0 = secant(v0_of, 1.48, 0.005, 0.05);
    const RunResult verify = run_with(build_case_a(), candidates, z2, z0, "bess-6801");
    const VufStats s = stats_for(verify, bus, 12.5, 14.0, true);
    const bool in_band = std::abs(s.v2_late - 1.8) <= 0.5 && std::abs(s.v0_late - 1.48) <= 0.5;
    const bool dips = s.dv2_step < 0.0 && s.dv0_step < 0.0;
    std::cout << "  bus " << bus << ": z2=" << z2 << " z0=" << z0 << " -> VUF2 " << s.v2_late
              << " VUF0 " << s.v0_late << "  step(8s) dVUF2 " << s.dv2_step << " dVUF0 "
              << s.dv0_step << (in_band && dips ? "  [OK]" : "") << "\n";
  }
}

void calibrate_case_b() {
  std::cout << "=== case B: MG0 unbalance (targets VUF2 7 %, VUF0 9.8 %) ===\n";
  const std::vector<std::string> candidates = {"680", "671", "632", "650"};
  for (const std::string& bus : candidates) {
    auto v2_of = [&](double z2) {
      const RunResult r = run_with(build_case_b(), candidates, z2, 0.02, "bess-680");
      return stats_for(r, bus, 1.0, 10.0, false).v2_late;
    };
    const double z2 = secant(v2_of, 7.0, 0.005, 0.04);
    auto v0_of = [&](double z0) {
      const RunResult r = run_with(build_case_b(), candidates, z2, z0, "bess-680");
      return stats_for(r, bus, 1.0, 10.0, false).v0_late;
    };
    const double z0 = secant(v0_of, 9.8, 0.005, 0.04);
    const RunResult verify = run_with(build_case_b(), candidates, z2, z0, "bess-680");
    const VufStats s = stats_for(verify, bus, 1.0, 10.0, false);
    const bool in_band = std::abs(s.v2_late - 7.0) <= 2.0 && std::abs(s.v0_late - 9.8) <= 2.0 &&
                         s.v2_min > 5.0 && s.v0_min > 7.0;
    std::cout << "  bus " << bus << ": z2=" << z2 << " z0=" << z0 << " -> VUF2 " << s.v2_late
              << " (min " << s.v2_min << ") VUF0 " << s.v0_late << " (min " << s.v0_min << ")"
              << (in_band ? "  [OK]" : "") << "\n";
  }
}

void calibrate_case_c() {
  std::cout << "=== case C: droop calibration (target 59.1 Hz at the 3465 kW block) ===\n";
  // The droop law is exact, so this is the closed-form inversion, verified
  // against the simulated operating point.
  const double target_dip = 60.0 - 59.1;
  const double m_p = target_dip / 3465.0;
  std::cout << "  m_p = 0.9 Hz / 3465 kW = " << m_p << " Hz/kW\n";
  const RunResult r = run(build_case_c(), SimulationConfig{});
  double f_final = std::nan("");
  for (const TimeSeriesRecord& rec : r.records) {
    if (rec.t < 17.0) continue;
    for (const IslandRecord& ir : rec.islands) {
      if (ir.head_bus == "611") f_final = ir.frequency_hz;
    }
  }
  std::cout << "  simulated final frequency: " << f_final << " Hz (shipped config)\n";
}

}  // namespace

int main(int argc, char** argv) {
  const std::string which = argc > 1 ? argv[1] : "all";
  if (which == "case-a" || which == "all") calibrate_case_a();
  if (which == "case-b" || which == "all") calibrate_case_b();
  if (which == "case-c" || which == "all") calibrate_case_c();
  return 0;
}
