// Acceptance suite: runs the three case studies and the oracle/property
// suites, checking each requirement at its pinned tolerance. Prints one
// PASS/FAIL line per criterion; the exit status is the number of failures.

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mbbsim/builtin_system.hpp"
#include "mbbsim/devices.hpp"
#include "mbbsim/metrics.hpp"
#include "mbbsim/powerflow.hpp"
#include "mbbsim/scenario.hpp"
#include "mbbsim/simulation.hpp"
#include "mbbsim/sweep_solver.hpp"

using namespace mbbsim;

namespace {

struct Check {
  bool ok = true;
  std::ostringstream detail;

  void expect(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      detail << (detail.str().empty() ? "" : "; ") << what;
    }
  }
};

struct CaseRun {
  RunResult result;
  double wall_s = 0.0;
};

CaseRun run_case(const Scenario& sc, double dt = 0.001) {
  SimulationConfig cfg;
  cfg.dt_s = dt;
  cfg.record_decimation = 10;
  const auto t0 = std::chrono::steady_clock::now();
  CaseRun cr;
  cr.result = run(sc, cfg);
  cr.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return cr;
}

double vuf2_at(const TimeSeriesRecord& rec, const std::string& bus) {
  return rec.vuf.at(bus).vuf2_percent;
}
double vuf0_at(const TimeSeriesRecord& rec, const std::string& bus) {
  return rec.vuf.at(bus).vuf0_percent;
}

double island_freq(const TimeSeriesRecord& rec, const std::string& head) {
  for (const IslandRecord& ir : rec.islands) {
    if (ir.head_bus == head) return ir.frequency_hz;
  }
  return 0.0;
}

double mean_in_window(const RunResult& r, double t0, double t1,
                      const std::function<double(const TimeSeriesRecord&)>& f) {
  double sum = 0.0;
  int n = 0;
  for (const TimeSeriesRecord& rec : r.records) {
    if (rec.t < t0 || rec.t > t1) continue;
    sum += f(rec);
    ++n;
  }
  return n > 0 ? sum / n : std::nan("");
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

// --------------------------------------------------------------------------
// Criterion 1: case A isolation
// --------------------------------------------------------------------------
bool criterion_1(const CaseRun& a, std::string& detail) {
  Check c;
  const RunResult& r = a.result;
  c.expect(r.ok(), "run status " + to_string(r.status) + " (" + r.diagnostic + ")");
  if (!r.ok()) {
    detail = c.detail.str();
    return false;
  }
  c.expect(a.wall_s < 60.0, "wall clock " + fmt(a.wall_s) + " s >= 60 s");

  double worst_mg0_vuf = 0.0;
  double worst_btb = 0.0;
  double worst_vdc = 0.0;
  double worst_mg0_freq = 0.0;
  for (const TimeSeriesRecord& rec : r.records) {
    worst_mg0_vuf = std::max({worst_mg0_vuf, vuf2_at(rec, "650"), vuf0_at(rec, "650"),
                              vuf2_at(rec, "680"), vuf0_at(rec, "680")});
    const BtbRecord& b = rec.btb.at("btb-pcc");
    worst_btb = std::max({worst_btb, std::abs(b.p_local_kw), std::abs(b.p_remote_kw)});
    worst_vdc = std::max(worst_vdc, std::abs(b.vdc_pu - 1.0));
    worst_mg0_freq = std::max(worst_mg0_freq, std::abs(island_freq(rec, "611") - 60.0));
  }
  c.expect(worst_mg0_vuf < 0.1, "MG0 VUF reached " + fmt(worst_mg0_vuf) + " % (limit 0.1)");
  c.expect(worst_btb < 1.0, "BTB exchanged " + fmt(worst_btb) + " kW (limit 1)");
  c.expect(worst_vdc < 0.02, "vdc deviated " + fmt(worst_vdc) + " pu (limit 0.02)");
  c.expect(worst_mg0_freq < 0.01,
           "MG0 frequency deviated " + fmt(worst_mg0_freq) + " Hz (limit 0.01)");

  // MG1 unbalance after the last single-phase pickup.
  const double v2 = mean_in_window(r, 12.5, 14.0,
                                   [](const TimeSeriesRecord& rec) { return vuf2_at(rec, "6801"); });
  const double v0 = mean_in_window(r, 12.5, 14.0,
                                   [](const TimeSeriesRecord& rec) { return vuf0_at(rec, "6801"); });
  c.expect(std::abs(v2 - 1.8) <= 0.5, "MG1 VUF2 after t=12 is " + fmt(v2) + " % (want 1.8 +- 0.5)");
  c.expect(std::abs(v0 - 1.48) <= 0.5,
           "MG1 VUF0 after t=12 is " + fmt(v0) + " % (want 1.48 +- 0.5)");

  // MG1 frequency moves at every event.
  for (double te : {2.0, 4.0, 6.0, 8.0, 10.0, 12.0}) {
    const double before = mean_in_window(r, te - 0.15, te - 0.01, [](const TimeSeriesRecord& rec) {
      return island_freq(rec, "6111");
    });
    const double after = mean_in_window(r, te + 0.8, te + 1.4, [](const TimeSeriesRecord& rec) {
      return island_freq(rec, "6111");
    });
    c.expect(std::abs(after - before) > 0.01,
             "MG1 frequency unchanged at t=" + fmt(te) + " (" + fmt(before) + " -> " + fmt(after) +
                 ")");
  }
  detail = c.detail.str();
  return c.ok;
}

// --------------------------------------------------------------------------
// Criterion 2: case A non-monotone VUF
// --------------------------------------------------------------------------
bool criterion_2(const CaseRun& a, std::string& detail) {
  Check c;
  const RunResult& r = a.result;
  if (!r.ok()) {
    detail = "case A run failed";
    return false;
  }
  const double v2_67 = mean_in_window(r, 6.5, 7.9, [](const TimeSeriesRecord& rec) {
    return vuf2_at(rec, "6801");
  });
  const double v2_89 = mean_in_window(r, 8.5, 9.9, [](const TimeSeriesRecord& rec) {
    return vuf2_at(rec, "6801");
  });
  const double v0_67 = mean_in_window(r, 6.5, 7.9, [](const TimeSeriesRecord& rec) {
    return vuf0_at(rec, "6801");
  });
  const double v0_89 = mean_in_window(r, 8.5, 9.9, [](const TimeSeriesRecord& rec) {
    return vuf0_at(rec, "6801");
  });
  c.expect(v2_89 < v2_67, "VUF2 did not decrease after the phase-A pickup (" + fmt(v2_67) +
                              " -> " + fmt(v2_89) + ")");
  c.expect(v0_89 < v0_67, "VUF0 did not decrease after the phase-A pickup (" + fmt(v0_67) +
                              " -> " + fmt(v0_89) + ")");
  detail = c.detail.str();
  return c.ok;
}

// --------------------------------------------------------------------------
// Criterion 3: case B export
// --------------------------------------------------------------------------
bool criterion_3(const CaseRun& b, std::string& detail) {
  Check c;
  const RunResult& r = b.result;
  c.expect(r.ok(), "run status " + to_string(r.status) + " (" + r.diagnostic + ")");
  if (!r.ok()) {
    detail = c.detail.str();
    return false;
  }

  struct Step {
    double t, target, until;
  };
  const Step steps[] = {{4.0, 50.0, 6.0}, {6.0, 100.0, 8.0}, {8.0, 200.0, 10.0}};
  for (const Step& s : steps) {
    const double settled = mean_in_window(r, s.t + 0.5, s.until - 0.05,
                                          [](const TimeSeriesRecord& rec) {
                                            return rec.btb.at("btb-pcc").p_remote_kw;
                                          });
    c.expect(std::abs(settled - s.target) <= 0.01 * s.target,
             "transfer after t=" + fmt(s.t) + " is " + fmt(settled) + " kW (want " +
                 fmt(s.target) + " +- 1%)");
    // DC link back to nominal just before the next event.
    const double vdc = mean_in_window(r, s.until - 0.2, s.until - 0.01,
                                      [](const TimeSeriesRecord& rec) {
                                        return rec.btb.at("btb-pcc").vdc_pu;
                                      });
    c.expect(std::abs(vdc - 1.0) <= 0.01,
             "vdc before t=" + fmt(s.until) + " is " + fmt(vdc) + " pu (want 1 +- 0.01)");
  }

  double min_v2 = 1e9, min_v0 = 1e9, worst_grid = 0.0;
  for (const TimeSeriesRecord& rec : r.records) {
    if (rec.t < 0.5) continue;
    min_v2 = std::min(min_v2, vuf2_at(rec, "680"));
    min_v0 = std::min(min_v0, vuf0_at(rec, "680"));
    worst_grid = std::max({worst_grid, vuf2_at(rec, "grid"), vuf0_at(rec, "grid")});
  }
  c.expect(min_v2 > 5.0, "MG0 VUF2 fell to " + fmt(min_v2) + " % (must stay > 5)");
  c.expect(min_v0 > 7.0, "MG0 VUF0 fell to " + fmt(min_v0) + " % (must stay > 7)");
  c.expect(worst_grid < 0.1, "grid VUF reached " + fmt(worst_grid) + " % (limit 0.1)");

  // Calibration config reproduces the reported operating point within 2 pp.
  const double v2_mean = mean_in_window(r, 1.0, 10.0, [](const TimeSeriesRecord& rec) {
    return vuf2_at(rec, "680");
  });
  const double v0_mean = mean_in_window(r, 1.0, 10.0, [](const TimeSeriesRecord& rec) {
    return vuf0_at(rec, "680");
  });
  c.expect(std::abs(v2_mean - 7.0) <= 2.0,
           "MG0 VUF2 is " + fmt(v2_mean) + " % (calibration target 7 +- 2)");
  c.expect(std::abs(v0_mean - 9.8) <= 2.0,
           "MG0 VUF0 is " + fmt(v0_mean) + " % (calibration target 9.8 +- 2)");

  // Balanced per-phase export at the grid tie while the BTB transfers 200 kW.
  double worst_spread = 0.0;
  for (const TimeSeriesRecord& rec : r.records) {
    if (rec.t < 9.0) continue;
    const auto it = rec.tie_flow_va.find("grid-pcc0");
    if (it == rec.tie_flow_va.end()) continue;
    double lo = 1e30, hi = -1e30;
    for (int p = 0; p < 3; ++p) {
      const double kw = std::abs(it->second[p].real()) / 1000.0;
      lo = std::min(lo, kw);
      hi = std::max(hi, kw);
    }
    worst_spread = std::max(worst_spread, (hi - lo) / std::max(hi, 1e-9));
  }
  c.expect(worst_spread < 0.01,
           "per-phase grid powers spread by " + fmt(100.0 * worst_spread) + " % (limit 1%)");
  detail = c.detail.str();
  return c.ok;
}

// --------------------------------------------------------------------------
// Criterion 4: case C import
// --------------------------------------------------------------------------
bool criterion_4(const CaseRun& cc, std::string& detail) {
  Check c;
  const RunResult& r = cc.result;
  c.expect(r.ok(), "run status " + to_string(r.status) + " (" + r.diagnostic + ")");
  if (!r.ok()) {
    detail = c.detail.str();
    return false;
  }

  double import_before = 0.0;
  for (const TimeSeriesRecord& rec : r.records) {
    if (rec.t < 15.0) {
      import_before = std::max(import_before, std::abs(rec.btb.at("btb-pcc").p_local_kw));
    }
  }
  c.expect(import_before <= 1.0,
           "BTB moved " + fmt(import_before) + " kW before t=15 (limit 1)");
  const double import_after = mean_in_window(r, 17.0, 20.0, [](const TimeSeriesRecord& rec) {
    return rec.btb.at("btb-pcc").p_local_kw;
  });
  c.expect(import_after > 0.0, "no import after t=15 (" + fmt(import_after) + " kW)");

  const double f_mg0 = mean_in_window(r, 17.0, 20.0, [](const TimeSeriesRecord& rec) {
    return island_freq(rec, "611");
  });
  c.expect(std::abs(f_mg0 - 59.1) <= 0.1,
           "MG0 settles at " + fmt(f_mg0) + " Hz (want 59.1 +- 0.1)");

  const double v650 = mean_in_window(r, 17.0, 20.0, [](const TimeSeriesRecord& rec) {
    return std::abs(rec.bus_voltage_v.at("650")[0]) / (4160.0 / kSqrt3);
  });
  c.expect(std::abs(v650 - 0.946) <= 0.015,
           "node 650 phase A is " + fmt(v650) + " pu (want 0.946 +- 0.015)");

  double worst_grid_freq = 0.0;
  for (const TimeSeriesRecord& rec : r.records) {
    worst_grid_freq = std::max(worst_grid_freq, std::abs(island_freq(rec, "grid") - 60.0));
  }
  c.expect(worst_grid_freq <= 0.001,
           "grid frequency deviated " + fmt(worst_grid_freq) + " Hz (limit 0.001)");

  bool charges_before = true, discharges_after = true;
  for (const TimeSeriesRecord& rec : r.records) {
    const double p = rec.devices.at("bess-680").p_kw;
    if (rec.t > 0.1 && rec.t < 4.99 && p >= 0.0) charges_before = false;
    if (rec.t > 5.5 && p <= 0.0) discharges_after = false;
  }
  c.expect(charges_before, "BESS not charging before t=5");
  c.expect(discharges_after, "BESS not discharging after t=5");
  detail = c.detail.str();
  return c.ok;
}

// --------------------------------------------------------------------------
// Criterion 5: metrics oracle suite
// --------------------------------------------------------------------------
bool criterion_5(std::string& detail) {
  Check c;
  std::mt19937 rng(424243);
  std::uniform_real_distribution<double> mag(0.1, 2.0);
  std::uniform_real_distribution<double> ang(-kPi, kPi);

  const Complex a_op = std::polar(1.0, 2.0 * kPi / 3.0);
  int bad_roundtrip = 0, bad_oracle = 0, bad_invariance = 0, bad_balanced = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    PhasorSet v;
    for (int i = 0; i < 3; ++i) v[i] = std::polar(mag(rng), ang(rng));

    const SequenceComponents s = sequence_components(v);
    const PhasorSet back = from_sequence(s);
    for (int i = 0; i < 3; ++i) {
      if (std::abs(back[i] - v[i]) > 1e-12 * std::max(1.0, std::abs(v[i]))) ++bad_roundtrip;
    }

    // Direct-arithmetic oracle.
    const Complex o0 = (v[0] + v[1] + v[2]) / 3.0;
    const Complex o1 = (v[0] + a_op * v[1] + a_op * a_op * v[2]) / 3.0;
    const Complex o2 = (v[0] + a_op * a_op * v[1] + a_op * v[2]) / 3.0;
    if (std::abs(o1) > 1e-6) {
      const UnbalanceMetrics m = vuf(v);
      if (std::abs(m.vuf2_percent - std::abs(o2) / std::abs(o1) * 100.0) > 1e-9) ++bad_oracle;
      if (std::abs(m.vuf0_percent - std::abs(o0) / std::abs(o1) * 100.0) > 1e-9) ++bad_oracle;

      const double k = 0.1 + mag(rng);
      const Complex rot = std::polar(1.0, ang(rng));
      PhasorSet scaled, rotated;
      for (int i = 0; i < 3; ++i) {
        scaled[i] = k * v[i];
        rotated[i] = rot * v[i];
      }
      const UnbalanceMetrics ms = vuf(scaled);
      const UnbalanceMetrics mr = vuf(rotated);
      if (std::abs(ms.vuf2_percent - m.vuf2_percent) > 1e-12 * (1.0 + m.vuf2_percent) ||
          std::abs(ms.vuf0_percent - m.vuf0_percent) > 1e-12 * (1.0 + m.vuf0_percent)) {
        ++bad_invariance;
      }
      if (std::abs(mr.vuf2_percent - m.vuf2_percent) > 1e-10 * (1.0 + m.vuf2_percent) ||
          std::abs(mr.vuf0_percent - m.vuf0_percent) > 1e-10 * (1.0 + m.vuf0_percent)) {
        ++bad_invariance;
      }
    }

    const UnbalanceMetrics mb = vuf(balanced_set(mag(rng), ang(rng)));
    if (mb.vuf2_percent > 1e-12 || mb.vuf0_percent > 1e-12) ++bad_balanced;
  }
  c.expect(bad_roundtrip == 0, std::to_string(bad_roundtrip) + " round-trip failures");
  c.expect(bad_oracle == 0, std::to_string(bad_oracle) + " oracle mismatches");
  c.expect(bad_invariance == 0, std::to_string(bad_invariance) + " invariance failures");
  c.expect(bad_balanced == 0, std::to_string(bad_balanced) + " balanced-set failures");
  detail = c.detail.str();
  return c.ok;
}

// --------------------------------------------------------------------------
// Criterion 6: power-flow oracle suite
// --------------------------------------------------------------------------
bool criterion_6(const CaseRun& a, const CaseRun& b, const CaseRun& cc, std::string& detail) {
  Check c;
  constexpr double kVll = 4160.0;
  constexpr double kVln = kVll / kSqrt3;
  constexpr double kZbase = kVll * kVll / 1e6;

  {  // two-bus closed form
    SystemDescription d;
    d.buses.push_back(Bus{"1", kVll, PhaseMask::abc()});
    d.buses.push_back(Bus{"2", kVll, PhaseMask::abc()});
    Branch br;
    br.id = "1-2";
    br.from_bus = "1";
    br.to_bus = "2";
    br.kind = BranchKind::line;
    br.z_ohm = mat3_zero();
    const Complex z_pu{0.01, 0.02};
    for (int i = 0; i < 3; ++i) br.z_ohm[i][i] = z_pu * kZbase;
    d.branches.push_back(br);
    DeviceSpec src;
    src.id = "src";
    src.kind = DeviceKind::bess;
    src.bus = "1";
    src.rating_kva = 1e5;
    src.grid_forming = true;
    d.devices.push_back(src);
    const NetworkModel m = build_network(d);
    const auto islands = find_islands(m, m.default_switch_state());

    InjectionSpec inj;
    inj.slack.device_id = "src";
    inj.slack.bus = "1";
    inj.slack.emf_ln_v = kVln;
    inj.slack.z1_ohm = inj.slack.z2_ohm = inj.slack.z0_ohm = Complex{0.0, 3e-7};
    const Complex s_ph{100e3 / 3.0, 50e3 / 3.0};
    inj.load_s_va["2"] = {s_ph, s_ph, s_ph};
    SolveOptions opts;
    opts.switches = m.default_switch_state();
    opts.tolerance_va = 5e-3;
    const PowerFlowSolution sol = solve_island(m, islands[0], inj, opts);

    const Complex cc2 = z_pu * std::conj(Complex{0.1, 0.05});
    const double bq = 2.0 * cc2.real() - 1.0;
    const double u = (-bq + std::sqrt(bq * bq - 4.0 * std::norm(cc2))) / 2.0;
    const Complex want = u + std::conj(cc2);
    const Complex got = sol.bus_voltage_v.at("2")[0] / kVln;
    c.expect(sol.converged && std::abs(got - want) < 1e-8,
             "two-bus closed form off by " + fmt(std::abs(got - want)) + " pu");
  }

  {  // Newton vs sweep on 50 randomized radial configurations
    std::mt19937 rng(99);
    std::uniform_real_distribution<double> scale(0.2, 1.2);
    std::uniform_int_distribution<int> coin(0, 1);
    std::uniform_int_distribution<int> tap(-16, 16);
    int comparisons = 0;
    double worst = 0.0;
    int attempts = 0;
    while (comparisons < 50 && attempts < 400) {
      ++attempts;
      SystemDescription d = builtin_twin_feeder();
      for (DeviceSpec& dev : d.devices) {
        if (dev.kind == DeviceKind::bess) dev.grid_forming = false;
      }
      for (Load& l : d.loads) {
        const double k = scale(rng);
        for (int i = 0; i < 3; ++i) l.s_va[i] *= k;
        l.in_service = coin(rng) == 1;
      }
      const NetworkModel m = build_network(d);
      SwitchState sw = m.default_switch_state();
      for (auto& [id, closed] : sw.closed) {
        if (id == "grid-650" || id == "grid-6501") continue;
        closed = coin(rng) == 1;
      }
      if (sw.closed["grid-pcc0"] && sw.closed["pcc0-6501"] && sw.closed["grid-6501"]) {
        sw.closed["pcc0-6501"] = false;
      }
      const auto islands = find_islands(m, sw);
      const Island* main_island = nullptr;
      for (const Island& i : islands) {
        if (i.grid_forming_device == std::optional<std::string>{"grid-source"}) main_island = &i;
      }
      if (main_island == nullptr) continue;

      InjectionSpec inj;
      inj.slack.device_id = "grid-source";
      inj.slack.bus = "grid";
      inj.slack.emf_ln_v = kVln;
      inj.slack.z1_ohm = Complex{0.001, 0.01} * kZbase;
      inj.slack.z2_ohm = inj.slack.z1_ohm;
      inj.slack.z0_ohm = inj.slack.z1_ohm;
      for (const Load& l : m.loads()) {
        if (!l.in_service || !main_island->contains(l.bus)) continue;
        PhasorSet& slot = inj.load_s_va[l.bus];
        for (int i = 0; i < 3; ++i) slot[i] += l.s_va[i];
      }
      SolveOptions opts;
      opts.switches = sw;
      opts.regulator_taps["6501-6301"] = {tap(rng), tap(rng), tap(rng)};
      opts.tolerance_va = 1e-2;
      const PowerFlowSolution newton = solve_island(m, *main_island, inj, opts);
      PowerFlowSolution sweep;
      try {
        sweep = sweep_solve(m, *main_island, inj, opts);
      } catch (const ValidationError&) {
        continue;
      }
      if (!newton.converged || !sweep.converged) {
        c.expect(false, "solver failed on random config " + std::to_string(attempts));
        break;
      }
      for (const auto& [bus, v] : newton.bus_voltage_v) {
        const auto& w = sweep.bus_voltage_v.at(bus);
        const double base = m.bus(bus).nominal_v_ln();
        for (int i = 0; i < 3; ++i) worst = std::max(worst, std::abs(v[i] - w[i]) / base);
      }
      ++comparisons;
    }
    c.expect(comparisons == 50, "only " + std::to_string(comparisons) + " comparisons completed");
    c.expect(worst < 1e-6, "Newton/sweep deviate by " + fmt(worst) + " pu (limit 1e-6)");
  }

  {  // per-island power balance at every recorded step of all three cases
    double worst_va = 0.0;
    for (const CaseRun* cr : {&a, &b, &cc}) {
      for (const TimeSeriesRecord& rec : cr->result.records) {
        for (const IslandRecord& ir : rec.islands) {
          if (!ir.energized) continue;
          worst_va = std::max(worst_va, 1000.0 * std::abs(ir.gen_p_kw - ir.load_p_kw -
                                                          ir.loss_p_kw));
          worst_va = std::max(worst_va, 1000.0 * std::abs(ir.gen_q_kvar - ir.load_q_kvar -
                                                          ir.loss_q_kvar));
        }
      }
    }
    c.expect(worst_va < 10.0, "power imbalance " + fmt(worst_va) + " VA (limit 10x tolerance)");
  }
  detail = c.detail.str();
  return c.ok;
}

// --------------------------------------------------------------------------
// Criterion 7: dynamics properties
// --------------------------------------------------------------------------
bool criterion_7(const CaseRun& a, const CaseRun& b, const CaseRun& cc, std::string& detail) {
  Check c;

  {  // bit-identical rerun (case B)
    const CaseRun again = run_case(build_case_b());
    bool identical = again.result.records.size() == b.result.records.size();
    if (identical) {
      for (std::size_t i = 0; i < again.result.records.size() && identical; ++i) {
        const TimeSeriesRecord& x = b.result.records[i];
        const TimeSeriesRecord& y = again.result.records[i];
        if (x.t != y.t) identical = false;
        for (const auto& [bus, v] : x.bus_voltage_v) {
          const auto& w = y.bus_voltage_v.at(bus);
          for (int k = 0; k < 3; ++k) {
            if (v[k] != w[k]) identical = false;
          }
        }
        for (const auto& [id, d] : x.devices) {
          const DeviceRecord& e = y.devices.at(id);
          if (d.p_kw != e.p_kw || d.q_kvar != e.q_kvar || d.frequency_hz != e.frequency_hz) {
            identical = false;
          }
        }
      }
    }
    c.expect(identical, "rerun of case B is not bit-identical");
  }

  {  // dt-halving on case B: steady-state values and transient peaks
    const CaseRun half = run_case(build_case_b(), 0.0005);
    c.expect(half.result.ok(), "case B at dt/2 failed: " + half.result.diagnostic);
    if (half.result.ok()) {
      const TimeSeriesRecord& x = b.result.records.back();
      const TimeSeriesRecord& y = half.result.records.back();
      double worst_rel = 0.0;
      for (const auto& [bus, v] : x.bus_voltage_v) {
        const auto& w = y.bus_voltage_v.at(bus);
        for (int k = 0; k < 3; ++k) {
          const double denom = std::max(std::abs(v[k]), 1.0);
          worst_rel = std::max(worst_rel, std::abs(v[k] - w[k]) / denom);
        }
      }
      for (const auto& [id, d] : x.devices) {
        const DeviceRecord& e = y.devices.at(id);
        const double denom = std::max({std::abs(d.p_kw), std::abs(e.p_kw), 10.0});
        worst_rel = std::max(worst_rel, std::abs(d.p_kw - e.p_kw) / denom);
        if (d.grid_forming) {
          worst_rel = std::max(worst_rel, std::abs(d.frequency_hz - e.frequency_hz) / 60.0);
        }
      }
      c.expect(worst_rel < 1e-4,
               "dt-halving moved steady-state values by " + fmt(worst_rel) + " (limit 1e-4)");

      auto vdc_peak = [](const RunResult& r) {
        double peak = 0.0;
        for (const TimeSeriesRecord& rec : r.records) {
          peak = std::max(peak, std::abs(rec.btb.at("btb-pcc").vdc_pu - 1.0));
        }
        return peak;
      };
      const double p1 = vdc_peak(b.result);
      const double p2 = vdc_peak(half.result);
      c.expect(std::abs(p1 - p2) <= 0.01 * std::max(p1, 1e-9),
               "vdc transient peak moved " + fmt(p1) + " -> " + fmt(p2) + " (limit 1%)");
    }
  }

  {  // DC-link energy bookkeeping on all three case runs
    for (const CaseRun* cr : {&a, &b, &cc}) {
      const auto& records = cr->result.records;
      if (records.empty()) continue;
      const BtbRecord& first = records.front().btb.at("btb-pcc");
      const BtbRecord& last = records.back().btb.at("btb-pcc");
      const double capacitance = 0.1;
      const double vnom = 8000.0;
      const double w_cap = 0.5 * capacitance * vnom * vnom *
                           (last.vdc_pu * last.vdc_pu - first.vdc_pu * first.vdc_pu);
      const double w_in = last.energy_in_j - first.energy_in_j;
      double gross = 1.0;
      for (std::size_t i = 1; i < records.size(); ++i) {
        const double dt = records[i].t - records[i - 1].t;
        gross += 1000.0 * dt *
                 (std::abs(records[i].btb.at("btb-pcc").p_remote_kw) +
                  std::abs(records[i].btb.at("btb-pcc").p_local_kw));
      }
      c.expect(std::abs(w_cap - w_in) < 1e-6 * gross,
               "DC energy bookkeeping off by " + fmt(std::abs(w_cap - w_in)) + " J");
    }
  }

  {  // droop steady state on a single-step-load test
    GridFormingState g;
    g.droop_hz_per_kw = 2.597e-4;
    g.p_nominal_kw = 100.0;
    g.rating_kva = 1e6;
    const double p = 1350.0;
    for (int i = 0; i < 30000; ++i) g = grid_forming_step(g, p, 0.001);
    c.expect(std::abs(g.frequency_hz - droop_frequency_hz(g, p)) < 1e-6,
             "droop steady state off by " + fmt(std::abs(g.frequency_hz - droop_frequency_hz(g, p))) +
                 " Hz");
  }
  detail = c.detail.str();
  return c.ok;
}

// --------------------------------------------------------------------------
// Criterion 8: device unit checks
// --------------------------------------------------------------------------
bool criterion_8(const CaseRun& a, const CaseRun& b, const CaseRun& cc, std::string& detail) {
  Check c;

  {  // first-order tracking vs the analytic exponential
    GridFollowingState s;
    s.p_setpoint_kw = 500.0;
    s.response_tau_s = 0.1;
    s.rating_kva = 1e6;
    double worst = 0.0;
    double t = 0.0;
    for (int i = 0; i < 1000; ++i) {
      s = grid_following_step(s, 0.001);
      t += 0.001;
      const double analytic = 500.0 * (1.0 - std::exp(-t / 0.1));
      worst = std::max(worst, std::abs(s.p_kw - analytic) / 500.0);
    }
    c.expect(worst < 1e-4, "first-order tracking error " + fmt(worst) + " (limit 1e-4)");
  }

  {  // rating saturation across all case runs
    for (const CaseRun* cr : {&a, &b, &cc}) {
      c.expect(cr->result.stats.max_s_over_rating <= 1.0 + 1e-9,
               "max |S|/rating = " + fmt(cr->result.stats.max_s_over_rating));
    }
  }
  detail = c.detail.str();
  return c.ok;
}

}  // namespace

int main() {
  std::cout << "acceptance: running case studies (dt = 1 ms)\n";
  const CaseRun a = run_case(build_case_a());
  std::cout << "  case-a: " << to_string(a.result.status) << " in " << a.wall_s << " s\n";
  const CaseRun b = run_case(build_case_b());
  std::cout << "  case-b: " << to_string(b.result.status) << " in " << b.wall_s << " s\n";
  const CaseRun cc = run_case(build_case_c());
  std::cout << "  case-c: " << to_string(cc.result.status) << " in " << cc.wall_s << " s\n";

  struct Entry {
    int number;
    std::string name;
    std::function<bool(std::string&)> fn;
  };
  const std::vector<Entry> criteria = {
      {1, "case A isolation", [&](std::string& d) { return criterion_1(a, d); }},
      {2, "case A non-monotone VUF", [&](std::string& d) { return criterion_2(a, d); }},
      {3, "case B export", [&](std::string& d) { return criterion_3(b, d); }},
      {4, "case C import", [&](std::string& d) { return criterion_4(cc, d); }},
      {5, "metrics oracle suite", [&](std::string& d) { return criterion_5(d); }},
      {6, "power-flow oracle suite",
       [&](std::string& d) { return criterion_6(a, b, cc, d); }},
      {7, "dynamics properties", [&](std::string& d) { return criterion_7(a, b, cc, d); }},
      {8, "device unit checks", [&](std::string& d) { return criterion_8(a, b, cc, d); }},
  };

  int failures = 0;
  for (const Entry& e : criteria) {
    std::string detail;
    const bool ok = e.fn(detail);
    if (ok) {
      std::cout << "PASS criterion " << e.number << ": " << e.name << "\n";
    } else {
      ++failures;
      std::cout << "FAIL criterion " << e.number << ": " << e.name << " -- " << detail << "\n";
    }
  }
  std::cout << (failures == 0 ? "acceptance: all criteria passed\n"
                              : "acceptance: " + std::to_string(failures) + " criteria failed\n");
  return failures;
}
