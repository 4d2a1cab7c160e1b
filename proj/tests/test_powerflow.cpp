#include <doctest.h>

#include <cmath>
#include <random>

#include "mbbsim/builtin_system.hpp"
#include "mbbsim/metrics.hpp"
#include "mbbsim/powerflow.hpp"
#include "mbbsim/sweep_solver.hpp"

using namespace mbbsim;

namespace {

constexpr double kVll = 4160.0;
constexpr double kVln = kVll / kSqrt3;
constexpr double kZbase = kVll * kVll / 1e6;  // ohms on 1 MVA

/// Two buses joined by a per-phase diagonal line; grid-forming source with a
/// near-ideal internal impedance on bus 1.
SystemDescription two_bus_system(Complex z_pu) {
  SystemDescription d;
  d.buses.push_back(Bus{"1", kVll, PhaseMask::abc()});
  d.buses.push_back(Bus{"2", kVll, PhaseMask::abc()});
  Branch b;
  b.id = "1-2";
  b.from_bus = "1";
  b.to_bus = "2";
  b.kind = BranchKind::line;
  b.z_ohm = mat3_zero();
  for (int i = 0; i < 3; ++i) b.z_ohm[i][i] = z_pu * kZbase;
  d.branches.push_back(b);

  DeviceSpec src;
  src.id = "src";
  src.kind = DeviceKind::bess;
  src.bus = "1";
  src.rating_kva = 100000.0;
  src.grid_forming = true;
  d.devices.push_back(src);
  return d;
}

// Near-ideal source. The impedance is kept just large enough that the
// source-branch admittance does not amplify double rounding into the
// mismatch metric (drop at test currents ~2e-9 pu).
SlackSource ideal_slack(const std::string& bus, double emf_ln = kVln) {
  SlackSource s;
  s.device_id = "src";
  s.bus = bus;
  s.emf_ln_v = emf_ln;
  s.z1_ohm = Complex{0.0, 3e-7};
  s.z2_ohm = Complex{0.0, 3e-7};
  s.z0_ohm = Complex{0.0, 3e-7};
  return s;
}

/// Closed-form receiving-end voltage of the balanced two-bus case in per
/// unit: u^2 + u (2 Re(z conj(S)) - |Vs|^2) + |z S|^2 = 0 with u = |Vr|^2.
Complex two_bus_closed_form(Complex z_pu, Complex s_pu, double vs_pu = 1.0) {
  const Complex c = z_pu * std::conj(s_pu);
  const double b = 2.0 * c.real() - vs_pu * vs_pu;
  const double cc = std::norm(c);
  const double disc = b * b - 4.0 * cc;
  REQUIRE(disc > 0.0);
  const double u = (-b + std::sqrt(disc)) / 2.0;
  return (u + std::conj(c)) / vs_pu;
}

PhasorSet balanced_power_va(double p_w, double q_var) {
  const Complex s{p_w / 3.0, q_var / 3.0};
  return {s, s, s};
}

SolveOptions default_options(const NetworkModel& m) {
  SolveOptions o;
  o.switches = m.default_switch_state();
  return o;
}

double max_pu_diff(const PowerFlowSolution& a, const PowerFlowSolution& b,
                   const NetworkModel& m) {
  double worst = 0.0;
  for (const auto& [bus, va] : a.bus_voltage_v) {
    const auto& vb = b.bus_voltage_v.at(bus);
    const double base = m.bus(bus).nominal_v_ln();
    for (int i = 0; i < 3; ++i) {
      worst = std::max(worst, std::abs(va[i] - vb[i]) / base);
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("two-bus case matches the closed-form quadratic to 1e-8 pu") {
  const Complex z_pu{0.01, 0.02};
  const NetworkModel m = build_network(two_bus_system(z_pu));
  const auto islands = find_islands(m, m.default_switch_state());
  REQUIRE(islands.size() == 1);

  InjectionSpec inj;
  inj.slack = ideal_slack("1");
  inj.load_s_va["2"] = balanced_power_va(100e3, 50e3);  // 0.1 + j0.05 pu

  SolveOptions opts = default_options(m);
  opts.tolerance_va = 5e-3;
  const PowerFlowSolution sol = solve_island(m, islands[0], inj, opts);
  REQUIRE(sol.converged);

  const Complex want = two_bus_closed_form(z_pu, Complex{0.1, 0.05});
  for (int i = 0; i < 3; ++i) {
    // Rotate each phase back to the phase-A reference before comparing.
    const Complex rot = std::polar(1.0, (i == 0 ? 0.0 : i == 1 ? 2.0 : -2.0) * kPi / 3.0);
    const Complex got = sol.bus_voltage_v.at("2")[i] * rot / kVln;
    CHECK(std::abs(got - want) < 1e-8);
  }
}

TEST_CASE("no load means slack voltage everywhere and zero currents") {
  const NetworkModel m = build_network(two_bus_system(Complex{0.01, 0.02}));
  const auto islands = find_islands(m, m.default_switch_state());
  InjectionSpec inj;
  inj.slack = ideal_slack("1");
  const PowerFlowSolution sol = solve_island(m, islands[0], inj, default_options(m));
  REQUIRE(sol.converged);
  for (const auto& [bus, v] : sol.bus_voltage_v) {
    for (int i = 0; i < 3; ++i) {
      CHECK(std::abs(std::abs(v[i]) - kVln) < 1e-6);
    }
  }
  for (const auto& [id, i_from] : sol.branch_current_a) {
    for (int i = 0; i < 3; ++i) CHECK(std::abs(i_from[i]) < 1e-5);
  }
  const auto flows = branch_flows(m, sol);
  for (const auto& [id, f] : flows) {
    for (int i = 0; i < 3; ++i) CHECK(std::abs(f.s_from_va[i]) < 0.1);
  }
}

TEST_CASE("two-bus sending power equals load plus I^2 z loss") {
  const Complex z_pu{0.01, 0.02};
  const NetworkModel m = build_network(two_bus_system(z_pu));
  const auto islands = find_islands(m, m.default_switch_state());
  InjectionSpec inj;
  inj.slack = ideal_slack("1");
  inj.load_s_va["2"] = balanced_power_va(100e3, 50e3);
  SolveOptions opts = default_options(m);
  opts.tolerance_va = 5e-3;
  const PowerFlowSolution sol = solve_island(m, islands[0], inj, opts);
  REQUIRE(sol.converged);

  const auto flows = branch_flows(m, sol);
  const BranchFlow& f = flows.at("1-2");
  for (int i = 0; i < 3; ++i) {
    const Complex i_ph = sol.branch_current_a.at("1-2")[i];
    const Complex loss = z_pu * kZbase * std::norm(i_ph);
    const Complex s_load = Complex{100e3, 50e3} / 3.0;
    CHECK(std::abs(f.s_to_va[i] - s_load) < 0.05);
    CHECK(std::abs(f.s_from_va[i] - (s_load + loss)) < 0.05);
    CHECK(f.s_from_va[i].real() >= f.s_to_va[i].real());
  }
}

TEST_CASE("receiving voltage drops strictly with load") {
  const Complex z_pu{0.01, 0.02};
  const NetworkModel m = build_network(two_bus_system(z_pu));
  const auto islands = find_islands(m, m.default_switch_state());
  double prev = 1e9;
  for (double p_kw : {50.0, 150.0, 400.0, 900.0, 2000.0}) {
    InjectionSpec inj;
    inj.slack = ideal_slack("1");
    inj.load_s_va["2"] = balanced_power_va(p_kw * 1e3, p_kw * 0.5e3);
    const PowerFlowSolution sol = solve_island(m, islands[0], inj, default_options(m));
    REQUIRE(sol.converged);
    const double v = std::abs(sol.bus_voltage_v.at("2")[0]);
    CHECK(v < prev);
    prev = v;
  }
}

TEST_CASE("rotating the slack angle rotates everything and changes nothing else") {
  SystemDescription d = builtin_twin_feeder();
  for (DeviceSpec& dev : d.devices) {
    if (dev.kind == DeviceKind::bess) dev.grid_forming = false;
  }
  const NetworkModel m = build_network(d);
  SwitchState sw = m.default_switch_state();
  const auto islands = find_islands(m, sw);
  REQUIRE(islands.size() == 1);

  InjectionSpec inj;
  inj.slack = ideal_slack("grid");
  inj.slack.device_id = "grid-source";
  inj.slack.z1_ohm = Complex{0.001, 0.01} * kZbase;
  inj.slack.z2_ohm = inj.slack.z1_ohm;
  inj.slack.z0_ohm = inj.slack.z1_ohm;
  for (const Load& l : m.loads()) {
    PhasorSet& slot = inj.load_s_va[l.bus];
    for (int i = 0; i < 3; ++i) slot[i] += l.s_va[i];
  }

  SolveOptions opts;
  opts.switches = sw;
  opts.tolerance_va = 1e-3;
  const PowerFlowSolution base = solve_island(m, islands[0], inj, opts);
  REQUIRE(base.converged);

  const double theta = 0.7;
  InjectionSpec rotated = inj;
  rotated.slack.angle_rad = theta;
  const PowerFlowSolution rot = solve_island(m, islands[0], rotated, opts);
  REQUIRE(rot.converged);

  const Complex expect_rot = std::polar(1.0, theta);
  for (const auto& [bus, v] : base.bus_voltage_v) {
    const auto& vr = rot.bus_voltage_v.at(bus);
    const double base_ln = m.bus(bus).nominal_v_ln();
    for (int i = 0; i < 3; ++i) {
      CHECK(std::abs(vr[i] - v[i] * expect_rot) / base_ln < 1e-9);
      CHECK(std::abs(std::abs(vr[i]) - std::abs(v[i])) / base_ln < 1e-9);
    }
    const UnbalanceMetrics mu_base = vuf(v, 1e-9 * base_ln);
    const UnbalanceMetrics mu_rot = vuf(vr, 1e-9 * base_ln);
    if (!mu_base.degenerate) {
      CHECK(std::abs(mu_base.vuf2_percent - mu_rot.vuf2_percent) < 1e-9);
      CHECK(std::abs(mu_base.vuf0_percent - mu_rot.vuf0_percent) < 1e-9);
    }
  }
}

TEST_CASE("MG1 islanded on its BESS with two loads converges quickly from flat start") {
  SystemDescription d = builtin_twin_feeder();
  const NetworkModel m = build_network(d);
  SwitchState sw = m.default_switch_state();
  sw.closed["grid-6501"] = false;
  sw.closed["pcc0-6501"] = false;

  const auto islands = find_islands(m, sw);
  const Island* mg1 = nullptr;
  for (const Island& i : islands) {
    if (i.contains("6501")) mg1 = &i;
  }
  REQUIRE(mg1 != nullptr);
  REQUIRE(mg1->grid_forming_device == std::optional<std::string>{"bess-6801"});

  InjectionSpec inj;
  inj.slack = ideal_slack("6801");
  inj.slack.device_id = "bess-6801";
  inj.slack.z1_ohm = Complex{0.0, 1e-4} * kZbase;
  inj.slack.z2_ohm = Complex{0.0, 0.05} * kZbase;
  inj.slack.z0_ohm = Complex{0.0, 0.05} * kZbase;
  inj.load_s_va["6751"] = m.load("load-6751").s_va;
  inj.load_s_va["6801"] = m.load("load-6801").s_va;

  SolveOptions opts;
  opts.switches = sw;
  opts.tolerance_va = 1.0;  // 1e-6 pu on the 1 MVA base
  const PowerFlowSolution sol = solve_island(m, *mg1, inj, opts);
  CHECK(sol.converged);
  CHECK(sol.iterations <= 20);
}

TEST_CASE("power balance holds per island on the grid-tied builtin system") {
  SystemDescription d = builtin_twin_feeder();
  for (DeviceSpec& dev : d.devices) {
    if (dev.kind == DeviceKind::bess) dev.grid_forming = false;
  }
  const NetworkModel m = build_network(d);
  SwitchState sw = m.default_switch_state();
  const auto islands = find_islands(m, sw);
  REQUIRE(islands.size() == 1);

  InjectionSpec inj;
  inj.slack = ideal_slack("grid");
  inj.slack.device_id = "grid-source";
  inj.slack.z1_ohm = Complex{0.001, 0.01} * kZbase;
  inj.slack.z2_ohm = inj.slack.z1_ohm;
  inj.slack.z0_ohm = inj.slack.z1_ohm;
  for (const Load& l : m.loads()) {
    PhasorSet& slot = inj.load_s_va[l.bus];
    for (int i = 0; i < 3; ++i) slot[i] += l.s_va[i];
  }
  inj.device_s_va["675"] = balanced_power_va(1600e3, 0.0);
  inj.device_s_va["633"] = balanced_power_va(1800e3, 0.0);

  SolveOptions opts;
  opts.switches = sw;
  opts.tolerance_va = 1.0;
  const PowerFlowSolution sol = solve_island(m, islands[0], inj, opts);
  REQUIRE(sol.converged);

  // Generation (slack + injections) = served load + capacitor charging +
  // branch losses, to 10x tolerance.
  Complex gen{0.0, 0.0};
  for (int i = 0; i < 3; ++i) gen += sol.slack_terminal_s_va[i];
  for (const auto& [bus, s] : inj.device_s_va) {
    (void)bus;
    for (int i = 0; i < 3; ++i) gen += s[i];
  }
  Complex load{0.0, 0.0};
  for (const auto& [bus, s] : inj.load_s_va) {
    (void)bus;
    for (int i = 0; i < 3; ++i) load += s[i];
  }
  for (const ShuntCapacitor& c : m.capacitors()) {
    const Bus& b = m.bus(c.bus);
    const double b_s =
        c.rating_kvar * 1000.0 / c.phases.count() / (b.nominal_v_ln() * b.nominal_v_ln());
    const auto& v = sol.bus_voltage_v.at(c.bus);
    for (Phase p : kAllPhases) {
      const double vm = std::abs(v[index_of(p)]);
      load += Complex{0.0, -b_s * vm * vm};
    }
  }
  const Complex loss = total_loss_va(branch_flows(m, sol));
  CHECK(std::abs(gen - load - loss) < 10.0 * opts.tolerance_va);
}

TEST_CASE("Newton matches the backward/forward sweep on randomized radial systems") {
  std::mt19937 rng(2024);
  std::uniform_real_distribution<double> scale(0.2, 1.2);
  std::uniform_int_distribution<int> coin(0, 1);

  int comparisons = 0;
  int attempts = 0;
  while (comparisons < 50 && attempts < 300) {
    ++attempts;
    SystemDescription d = builtin_twin_feeder();
    // Only the external grid forms islands in this exercise.
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
      if (id == "grid-650" || id == "grid-6501") continue;  // keep feeders tied
      closed = coin(rng) == 1;
    }
    // Forbid the one possible loop.
    if (sw.closed["grid-pcc0"] && sw.closed["pcc0-6501"] && sw.closed["grid-6501"]) {
      sw.closed["pcc0-6501"] = false;
    }
    // Random regulator taps.
    std::map<std::string, std::array<int, 3>> taps;
    std::uniform_int_distribution<int> tap(-16, 16);
    taps["6501-6301"] = {tap(rng), tap(rng), tap(rng)};

    const auto islands = find_islands(m, sw);
    const Island* main_island = nullptr;
    for (const Island& i : islands) {
      if (i.grid_forming_device == std::optional<std::string>{"grid-source"}) main_island = &i;
    }
    REQUIRE(main_island != nullptr);

    InjectionSpec inj;
    inj.slack = ideal_slack("grid");
    inj.slack.device_id = "grid-source";
    inj.slack.z1_ohm = Complex{0.001, 0.01} * kZbase;
    inj.slack.z2_ohm = inj.slack.z1_ohm;
    inj.slack.z0_ohm = inj.slack.z1_ohm;
    for (const Load& l : m.loads()) {
      if (!l.in_service || !main_island->contains(l.bus)) continue;
      PhasorSet& slot = inj.load_s_va[l.bus];
      for (int i = 0; i < 3; ++i) slot[i] += l.s_va[i];
    }
    if (main_island->contains("675")) {
      inj.device_s_va["675"] = balanced_power_va(scale(rng) * 1600e3, 0.0);
    }
    if (main_island->contains("645")) {
      PhasorSet s{};
      s[index_of(Phase::B)] = Complex{scale(rng) * 400e3, 0.0};
      inj.device_s_va["645"] = s;
    }

    SolveOptions opts;
    opts.switches = sw;
    opts.regulator_taps = taps;
    opts.tolerance_va = 1e-2;

    const PowerFlowSolution newton = solve_island(m, *main_island, inj, opts);
    PowerFlowSolution sweep;
    try {
      sweep = sweep_solve(m, *main_island, inj, opts);
    } catch (const ValidationError&) {
      continue;  // non-radial arrangement; not part of this comparison
    }
    REQUIRE(newton.converged);
    REQUIRE(sweep.converged);
    CHECK(max_pu_diff(newton, sweep, m) < 1e-6);
    ++comparisons;
  }
  CHECK(comparisons == 50);
}

TEST_CASE("missing and ambiguous slack are reported as statuses") {
  const NetworkModel m = build_network(two_bus_system(Complex{0.01, 0.02}));
  const auto islands = find_islands(m, m.default_switch_state());

  Island dead = islands[0];
  dead.grid_forming_devices.clear();
  dead.grid_forming_device.reset();
  InjectionSpec inj;  // empty slack bus
  const PowerFlowSolution s1 = solve_island(m, dead, inj, default_options(m));
  CHECK(s1.status == SolveStatus::no_grid_forming_device);

  Island multi = islands[0];
  multi.grid_forming_devices = {"a", "b"};
  const PowerFlowSolution s2 = solve_island(m, multi, inj, default_options(m));
  CHECK(s2.status == SolveStatus::multiple_grid_forming_devices);
}

TEST_CASE("non-convergence returns the best iterate with converged false") {
  const NetworkModel m = build_network(two_bus_system(Complex{0.01, 0.02}));
  const auto islands = find_islands(m, m.default_switch_state());
  InjectionSpec inj;
  inj.slack = ideal_slack("1");
  // Far beyond the static transfer limit; continuation disabled so the
  // constant-power model is kept all the way down.
  inj.load_s_va["2"] = balanced_power_va(60e6, 30e6);
  SolveOptions opts = default_options(m);
  opts.max_iterations = 30;
  opts.load_voltage_floor_pu = 0.0;
  const PowerFlowSolution sol = solve_island(m, islands[0], inj, opts);
  CHECK(!sol.converged);
  CHECK(sol.status == SolveStatus::not_converged);
  CHECK(!sol.bus_voltage_v.empty());
}
