#include "mbbsim/builtin_system.hpp"

#include <cmath>

namespace mbbsim {

namespace {

constexpr double kFeetPerMile = 5280.0;

Mat3 scale(const Mat3& z, double factor) {
  Mat3 out = z;
  for (auto& row : out) {
    for (Complex& v : row) v *= factor;
  }
  return out;
}

// Closed switches are stamped with a small series impedance so branch
// currents stay well defined; drop at feeder currents is sub-millivolt.
Mat3 switch_impedance(PhaseMask phases) {
  Mat3 z = mat3_zero();
  for (Phase p : kAllPhases) {
    if (phases.has(p)) z[index_of(p)][index_of(p)] = Complex{1e-4, 1e-4};
  }
  return z;
}

PhasorSet balanced_load_va(double p_kw, double q_kvar) {
  const Complex s{p_kw * 1000.0 / 3.0, q_kvar * 1000.0 / 3.0};
  return {s, s, s};
}

PhasorSet single_phase_load_va(Phase phase, double p_kw, double q_kvar) {
  PhasorSet s{};
  s[index_of(phase)] = Complex{p_kw * 1000.0, q_kvar * 1000.0};
  return s;
}

}  // namespace

Mat3 line_config_z_per_mile(int config) {
  Mat3 z = mat3_zero();
  auto set = [&z](int i, int j, double r, double x) {
    z[i][j] = Complex{r, x};
    z[j][i] = Complex{r, x};
  };
  switch (config) {
    case 601:  // B A C N, 556,500 26/7 ACSR
      set(0, 0, 0.3465, 1.0179);
      set(0, 1, 0.1560, 0.5017);
      set(0, 2, 0.1580, 0.4236);
      set(1, 1, 0.3375, 1.0478);
      set(1, 2, 0.1535, 0.3849);
      set(2, 2, 0.3414, 1.0348);
      break;
    case 602:  // C A B N, 4/0 6/1 ACSR
      set(0, 0, 0.7526, 1.1814);
      set(0, 1, 0.1580, 0.4236);
      set(0, 2, 0.1560, 0.5017);
      set(1, 1, 0.7475, 1.1983);
      set(1, 2, 0.1535, 0.3849);
      set(2, 2, 0.7436, 1.2112);
      break;
    case 603:  // C B N, 1/0 ACSR
      set(1, 1, 1.3294, 1.3471);
      set(1, 2, 0.2066, 0.4591);
      set(2, 2, 1.3238, 1.3569);
      break;
    case 604:  // A C N, 1/0 ACSR
      set(0, 0, 1.3238, 1.3569);
      set(0, 2, 0.2066, 0.4591);
      set(2, 2, 1.3294, 1.3471);
      break;
    case 605:  // C N, 1/0 ACSR
      set(2, 2, 1.3292, 1.3475);
      break;
    case 606:  // A B C underground, 250,000 AA concentric neutral
      set(0, 0, 0.7982, 0.4463);
      set(0, 1, 0.3192, 0.0328);
      set(0, 2, 0.2849, -0.0143);
      set(1, 1, 0.7891, 0.4041);
      set(1, 2, 0.3192, 0.0328);
      set(2, 2, 0.7982, 0.4463);
      break;
    case 607:  // A N underground, 1/0 AA tape shield
      set(0, 0, 1.3425, 0.5124);
      break;
    default:
      throw ValidationError("unknown line config " + std::to_string(config));
  }
  return z;
}

PhaseMask line_config_phases(int config) {
  switch (config) {
    case 601:
    case 602:
    case 606:
      return PhaseMask::abc();
    case 603:
      return PhaseMask::parse("BC");
    case 604:
      return PhaseMask::parse("AC");
    case 605:
      return PhaseMask::parse("C");
    case 607:
      return PhaseMask::parse("A");
    default:
      throw ValidationError("unknown line config " + std::to_string(config));
  }
}

Mat3 line_impedance(int config, double length_ft, bool transposed) {
  Mat3 z = line_config_z_per_mile(config);
  if (transposed) z = transpose_line_config(z);
  return scale(z, length_ft / kFeetPerMile);
}

SystemDescription builtin_twin_feeder() {
  SystemDescription d;

  const double kV = 4160.0;
  const double kLv = 480.0;

  auto add_bus = [&d](const std::string& id, double v_ll, const std::string& phases) {
    d.buses.push_back(Bus{id, v_ll, PhaseMask::parse(phases)});
  };

  // External grid and the BTB remote terminal.
  add_bus("grid", kV, "ABC");
  add_bus("pcc0", kV, "ABC");

  // MG0 feeder (balanced data-center / V2G microgrid, no head regulator).
  add_bus("650", kV, "ABC");
  add_bus("632", kV, "ABC");
  add_bus("633", kV, "ABC");
  add_bus("634", kLv, "ABC");
  add_bus("645", kV, "BC");
  add_bus("646", kV, "BC");
  add_bus("670", kV, "ABC");
  add_bus("671", kV, "ABC");
  add_bus("692", kV, "ABC");
  add_bus("675", kV, "ABC");
  add_bus("684", kV, "AC");
  add_bus("611", kV, "C");
  add_bus("652", kV, "A");
  add_bus("680", kV, "ABC");

  // MG1 feeder (original unbalanced pattern, head regulator 6501-6301).
  add_bus("6501", kV, "ABC");
  add_bus("6301", kV, "ABC");
  add_bus("6321", kV, "ABC");
  add_bus("6331", kV, "ABC");
  add_bus("6341", kLv, "ABC");
  add_bus("6451", kV, "BC");
  add_bus("6461", kV, "BC");
  add_bus("6701", kV, "ABC");
  add_bus("6711", kV, "ABC");
  add_bus("6921", kV, "ABC");
  add_bus("6751", kV, "ABC");
  add_bus("6841", kV, "AC");
  add_bus("6111", kV, "C");
  add_bus("6521", kV, "A");
  add_bus("6801", kV, "ABC");

  auto add_line = [&d](const std::string& from, const std::string& to, int config,
                       double length_ft, bool transposed) {
    Branch b;
    b.id = from + "-" + to;
    b.from_bus = from;
    b.to_bus = to;
    b.kind = BranchKind::line;
    b.phases = line_config_phases(config);
    b.z_ohm = line_impedance(config, length_ft, transposed);
    b.length_ft = length_ft;
    d.branches.push_back(b);
  };

  auto add_switch = [&d](const std::string& from, const std::string& to,
                         const std::string& phases, bool closed) {
    Branch b;
    b.id = from + "-" + to;
    b.from_bus = from;
    b.to_bus = to;
    b.kind = BranchKind::sw;
    b.phases = PhaseMask::parse(phases);
    b.z_ohm = switch_impedance(b.phases);
    d.branches.push_back(b);
    d.initial_switch_closed[b.id] = closed;
  };

  auto add_transformer = [&d](const std::string& from, const std::string& to) {
    Branch b;
    b.id = from + "-" + to;
    b.from_bus = from;
    b.to_bus = to;
    b.kind = BranchKind::transformer;
    b.phases = PhaseMask::abc();
    b.rating_kva = 1000.0;  // 1 MVA, 4.16 kV / 480 V
    b.primary_ll_v = 4160.0;
    b.secondary_ll_v = 480.0;
    b.z_pu = Complex{0.011, 0.02};
    d.branches.push_back(b);
  };

  // Interconnection switches. The normal state ties both feeders and the
  // BTB remote terminal to the grid; pcc0-6501 re-targets the BTB remote
  // side onto MG1 for networked-microgrid configurations.
  add_switch("grid", "650", "ABC", true);
  add_switch("grid", "6501", "ABC", true);
  add_switch("grid", "pcc0", "ABC", true);
  add_switch("pcc0", "6501", "ABC", false);

  // MG0: three-phase trunk segments are transposed (balanced feeder build);
  // 632-633 and 632-645 are the sectionalizing switches of the studies.
  add_line("650", "632", 601, 2000.0, true);
  add_line("632", "670", 601, 667.0, true);
  add_line("670", "671", 601, 1333.0, true);
  add_line("671", "680", 601, 1000.0, true);
  add_switch("632", "633", "ABC", true);
  add_transformer("633", "634");
  add_switch("632", "645", "BC", true);
  add_line("645", "646", 603, 300.0, false);
  add_switch("671", "692", "ABC", true);
  add_line("692", "675", 606, 500.0, true);
  add_line("671", "684", 604, 300.0, false);
  add_line("684", "611", 605, 300.0, false);
  add_line("684", "652", 607, 800.0, false);

  // MG1: canonical asymmetric configs throughout.
  {
    Branch reg;
    reg.id = "6501-6301";
    reg.from_bus = "6501";
    reg.to_bus = "6301";
    reg.kind = BranchKind::regulator;
    reg.phases = PhaseMask::abc();
    reg.regulator.controlled_bus = "6801";
    reg.regulator.controlled_bus_ln_v = kV / kSqrt3;
    d.branches.push_back(reg);
  }
  add_line("6301", "6321", 601, 2000.0, false);
  add_line("6321", "6701", 601, 667.0, false);
  add_line("6701", "6711", 601, 1333.0, false);
  add_line("6711", "6801", 601, 1000.0, false);
  add_line("6321", "6331", 602, 500.0, false);
  add_transformer("6331", "6341");
  add_line("6321", "6451", 603, 500.0, false);
  add_line("6451", "6461", 603, 300.0, false);
  add_switch("6711", "6921", "ABC", true);
  add_line("6921", "6751", 606, 500.0, false);
  add_line("6711", "6841", 604, 300.0, false);
  add_line("6841", "6111", 605, 300.0, false);
  add_line("6841", "6521", 607, 800.0, false);

  auto add_load = [&d](const std::string& bus, PhasorSet s_va, bool on = true) {
    d.loads.push_back(Load{"load-" + bus, bus, s_va, on});
  };

  // Balanced three-phase loads (kW / kVAR per the twin placement).
  add_load("634", balanced_load_va(400.0, 290.0));
  add_load("670", balanced_load_va(200.0, 116.0));
  add_load("675", balanced_load_va(843.0, 462.0));
  add_load("680", balanced_load_va(1155.0, 660.0));
  add_load("6341", balanced_load_va(400.0, 290.0));
  add_load("6701", balanced_load_va(200.0, 116.0));
  add_load("6751", balanced_load_va(843.0, 462.0));
  add_load("6801", balanced_load_va(1155.0, 660.0));

  // Single-phase loads: residential V2G lateral in MG0, distributed
  // unbalanced loads in MG1.
  add_load("645", single_phase_load_va(Phase::B, 680.0, 500.0));
  add_load("646", single_phase_load_va(Phase::B, 690.0, 396.0));
  add_load("6451", single_phase_load_va(Phase::B, 170.0, 125.0));
  add_load("6461", single_phase_load_va(Phase::B, 230.0, 132.0));
  add_load("6111", single_phase_load_va(Phase::C, 170.0, 80.0));
  add_load("6521", single_phase_load_va(Phase::A, 128.0, 86.0));

  d.capacitors.push_back(ShuntCapacitor{"cap-675", "675", 86.52, PhaseMask::abc(), true});
  d.capacitors.push_back(ShuntCapacitor{"cap-6751", "6751", 86.52, PhaseMask::abc(), true});

  // External grid: stiff 60 Hz source behind a short-circuit impedance.
  {
    DeviceSpec g;
    g.id = "grid-source";
    g.kind = DeviceKind::grid_source;
    g.bus = "grid";
    g.rating_kva = 100000.0;
    g.grid_forming = true;
    g.gfm.droop_hz_per_kw = 0.0;
    g.gfm.p_nominal_from_initial = false;
    g.gfm.q_droop_pu = 0.0;
    g.gfm.z1_pu = Complex{0.001, 0.01};
    g.gfm.z2_pu = Complex{0.001, 0.01};
    g.gfm.z0_pu = Complex{0.001, 0.01};
    d.devices.push_back(g);
  }

  auto add_bess = [&d](const std::string& bus, double rating_kva, double energy_kwh) {
    DeviceSpec b;
    b.id = "bess-" + bus;
    b.kind = DeviceKind::bess;
    b.bus = bus;
    b.rating_kva = rating_kva;
    b.energy_capacity_kwh = energy_kwh;
    b.initial_energy_kwh = energy_kwh / 2.0;
    b.grid_forming = true;
    d.devices.push_back(b);
  };
  add_bess("680", 3000.0, 4000.0);
  add_bess("6801", 3000.0, 4000.0);

  auto add_pv = [&d](const std::string& bus) {
    DeviceSpec p;
    p.id = "pv-" + bus;
    p.kind = DeviceKind::pv;
    p.bus = bus;
    p.rating_kva = 1600.0;
    p.available_kw = 1600.0;
    d.devices.push_back(p);
  };
  add_pv("675");
  add_pv("6751");

  auto add_diesel = [&d](const std::string& bus) {
    DeviceSpec g;
    g.id = "dg-" + bus;
    g.kind = DeviceKind::diesel;
    g.bus = bus;
    g.rating_kva = 3000.0;
    d.devices.push_back(g);
  };
  add_diesel("633");
  add_diesel("6331");

  auto add_v2g = [&d](const std::string& bus) {
    DeviceSpec v;
    v.id = "v2g-" + bus;
    v.kind = DeviceKind::v2g;
    v.bus = bus;
    v.phases = PhaseMask::single(Phase::B);
    v.rating_kva = 500.0;
    v.energy_capacity_kwh = 500.0;
    v.initial_energy_kwh = 400.0;
    d.devices.push_back(v);
  };
  add_v2g("645");
  add_v2g("646");

  {
    DeviceSpec btb;
    btb.id = "btb-pcc";
    btb.kind = DeviceKind::btb;
    btb.bus = "650";         // local terminal at the MG0 head
    btb.remote_bus = "pcc0";
    btb.rating_kva = 3500.0;
    d.devices.push_back(btb);
  }

  return d;
}

}  // namespace mbbsim
