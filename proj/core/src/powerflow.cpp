#include "mbbsim/powerflow.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

#include "mbbsim/log.hpp"

namespace mbbsim {

namespace {

using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

/// Phase-domain impedance matrix of a source given its sequence impedances:
/// Z_abc = A diag(Z0, Z1, Z2) A^-1 with A = [1 1 1; 1 a^2 a; 1 a a^2].
Mat3 sequence_to_phase(Complex z0, Complex z1, Complex z2) {
  const Complex a = kAlpha;
  const Complex a2 = kAlphaSq;
  const Complex one{1.0, 0.0};
  const Complex A[3][3] = {{one, one, one}, {one, a2, a}, {one, a, a2}};
  const Complex Ai[3][3] = {{one / 3.0, one / 3.0, one / 3.0},
                            {one / 3.0, a / 3.0, a2 / 3.0},
                            {one / 3.0, a2 / 3.0, a / 3.0}};
  const Complex zs[3] = {z0, z1, z2};
  Mat3 out = mat3_zero();
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      Complex sum{0.0, 0.0};
      for (int k = 0; k < 3; ++k) sum += A[i][k] * zs[k] * Ai[k][j];
      out[i][j] = sum;
    }
  }
  return out;
}

/// Inverts the branch impedance matrix restricted to the carried phases.
Mat3 invert_on_phases(const Mat3& z, PhaseMask phases) {
  std::vector<int> idx;
  for (Phase p : kAllPhases) {
    if (phases.has(p)) idx.push_back(index_of(p));
  }
  const int k = static_cast<int>(idx.size());
  MatrixXcd zm(k, k);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) zm(i, j) = z[idx[i]][idx[j]];
  }
  const MatrixXcd ym = zm.inverse();
  Mat3 out = mat3_zero();
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) out[idx[i]][idx[j]] = ym(i, j);
  }
  return out;
}

struct SolveContext {
  const NetworkModel* model = nullptr;
  const Island* island = nullptr;
  const InjectionSpec* injections = nullptr;
  const SolveOptions* options = nullptr;

  std::vector<std::string> bus_ids;                  // island buses, sorted
  std::map<std::string, std::array<int, 3>> nodes;   // bus -> node per phase (-1 absent)
  int n_bus_nodes = 0;                               // unknown count
  int slack_base = 0;                                // first EMF node index
  std::vector<const Branch*> active_branches;        // stamped branches
  Mat3 slack_y = mat3_zero();                        // EMF->terminal admittance

  MatrixXcd Y;         // (n+3) x (n+3)
  VectorXcd s_device;  // per node, VA injections (+ into network)
  VectorXcd s_load;    // per node, VA demand (+)
  std::vector<double> v_nominal_ln;  // per node
};

double regulator_ratio(const Branch& b, const SolveOptions& options, Phase p) {
  auto it = options.regulator_taps.find(b.id);
  const std::array<int, 3>& taps = (it != options.regulator_taps.end()) ? it->second
                                                                        : b.regulator.taps;
  RegulatorSettings r = b.regulator;
  r.taps = taps;
  return r.ratio(p);
}

/// Per-phase two-port stamp with to-side no-load ratio r and series
/// admittance y on the to side: Yff += r^2 y, Yft = Ytf -= r y, Ytt += y.
void stamp_ratio_branch(MatrixXcd& Y, int nf, int nt, Complex y, double r) {
  Y(nf, nf) += r * r * y;
  Y(nf, nt) -= r * y;
  Y(nt, nf) -= r * y;
  Y(nt, nt) += y;
}

void build_context(SolveContext& ctx) {
  const NetworkModel& model = *ctx.model;
  const Island& island = *ctx.island;
  const SolveOptions& options = *ctx.options;

  ctx.bus_ids = island.member_buses;  // already sorted
  int next = 0;
  for (const std::string& id : ctx.bus_ids) {
    const Bus& bus = model.bus(id);
    std::array<int, 3> per_phase{-1, -1, -1};
    for (Phase p : kAllPhases) {
      if (bus.phases.has(p)) per_phase[index_of(p)] = next++;
    }
    ctx.nodes[id] = per_phase;
  }
  ctx.n_bus_nodes = next;
  ctx.slack_base = next;
  const int n_total = next + 3;

  ctx.Y = MatrixXcd::Zero(n_total, n_total);
  ctx.s_device = VectorXcd::Zero(n_total);
  ctx.s_load = VectorXcd::Zero(n_total);
  ctx.v_nominal_ln.assign(n_total, 0.0);

  for (const std::string& id : ctx.bus_ids) {
    const Bus& bus = model.bus(id);
    for (Phase p : kAllPhases) {
      const int node = ctx.nodes[id][index_of(p)];
      if (node >= 0) ctx.v_nominal_ln[node] = bus.nominal_v_ln();
    }
  }

  // Branch stamps.
  for (const Branch& b : model.branches()) {
    if (!island.contains(b.from_bus) || !island.contains(b.to_bus)) continue;
    if (b.kind == BranchKind::sw && !options.switches.is_closed(b.id)) continue;
    ctx.active_branches.push_back(&b);

    const auto& nf = ctx.nodes[b.from_bus];
    const auto& nt = ctx.nodes[b.to_bus];

    if (b.kind == BranchKind::line || b.kind == BranchKind::sw) {
      const Mat3 y = invert_on_phases(b.z_ohm, b.phases);
      for (Phase pi : kAllPhases) {
        if (!b.phases.has(pi)) continue;
        for (Phase pj : kAllPhases) {
          if (!b.phases.has(pj)) continue;
          const Complex yv = y[index_of(pi)][index_of(pj)];
          const int fi = nf[index_of(pi)];
          const int fj = nf[index_of(pj)];
          const int ti = nt[index_of(pi)];
          const int tj = nt[index_of(pj)];
          ctx.Y(fi, fj) += yv;
          ctx.Y(ti, tj) += yv;
          ctx.Y(fi, tj) -= yv;
          ctx.Y(ti, fj) -= yv;
        }
      }
    } else if (b.kind == BranchKind::transformer) {
      const double z_base = b.secondary_ll_v * b.secondary_ll_v / (b.rating_kva * 1000.0);
      const Complex z_ohm = b.z_pu * z_base;
      const Complex y = 1.0 / z_ohm;
      const double r = b.secondary_ll_v / b.primary_ll_v;
      for (Phase p : kAllPhases) {
        if (!b.phases.has(p)) continue;
        stamp_ratio_branch(ctx.Y, nf[index_of(p)], nt[index_of(p)], y, r);
      }
    } else {  // regulator
      const Complex y = 1.0 / Complex{1e-4, 1e-3};
      for (Phase p : kAllPhases) {
        if (!b.phases.has(p)) continue;
        stamp_ratio_branch(ctx.Y, nf[index_of(p)], nt[index_of(p)], y,
                           regulator_ratio(b, options, p));
      }
    }
  }

  // Shunt capacitors: constant susceptance sized at nominal voltage.
  for (const ShuntCapacitor& c : model.capacitors()) {
    if (!c.in_service || !island.contains(c.bus)) continue;
    const Bus& bus = model.bus(c.bus);
    const double v_ln = bus.nominal_v_ln();
    const double q_per_phase = c.rating_kvar * 1000.0 / c.phases.count();
    const double b_s = q_per_phase / (v_ln * v_ln);
    for (Phase p : kAllPhases) {
      if (!c.phases.has(p) || !bus.phases.has(p)) continue;
      const int node = ctx.nodes[c.bus][index_of(p)];
      if (node >= 0) ctx.Y(node, node) += Complex{0.0, b_s};
    }
  }

  // Slack source branch between the EMF trio and the terminal bus.
  const SlackSource& slack = ctx.injections->slack;
  const Mat3 z_src = sequence_to_phase(slack.z0_ohm, slack.z1_ohm, slack.z2_ohm);
  ctx.slack_y = invert_on_phases(z_src, PhaseMask::abc());
  const auto& nt = ctx.nodes.at(slack.bus);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      const Complex yv = ctx.slack_y[i][j];
      ctx.Y(ctx.slack_base + i, ctx.slack_base + j) += yv;
      ctx.Y(nt[i], nt[j]) += yv;
      ctx.Y(ctx.slack_base + i, nt[j]) -= yv;
      ctx.Y(nt[i], ctx.slack_base + j) -= yv;
    }
  }

  // Injections.
  for (const auto& [bus_id, s_set] : ctx.injections->device_s_va) {
    auto it = ctx.nodes.find(bus_id);
    if (it == ctx.nodes.end()) continue;
    for (Phase p : kAllPhases) {
      const int node = it->second[index_of(p)];
      if (node >= 0) ctx.s_device(node) += s_set[index_of(p)];
    }
  }
  for (const auto& [bus_id, s_set] : ctx.injections->load_s_va) {
    auto it = ctx.nodes.find(bus_id);
    if (it == ctx.nodes.end()) continue;
    for (Phase p : kAllPhases) {
      const int node = it->second[index_of(p)];
      if (node >= 0) ctx.s_load(node) += s_set[index_of(p)];
    }
  }
}

VectorXcd initial_voltage(const SolveContext& ctx) {
  const int n_total = ctx.n_bus_nodes + 3;
  VectorXcd v = VectorXcd::Zero(n_total);
  const SlackSource& slack = ctx.injections->slack;
  const PhasorSet emf = balanced_set(slack.emf_ln_v, slack.angle_rad);
  for (int i = 0; i < 3; ++i) v(ctx.slack_base + i) = emf[i];

  for (const std::string& id : ctx.bus_ids) {
    const auto& nodes = ctx.nodes.at(id);
    const auto warm = ctx.options->warm_start_v.find(id);
    for (Phase p : kAllPhases) {
      const int node = nodes[index_of(p)];
      if (node < 0) continue;
      if (warm != ctx.options->warm_start_v.end() &&
          std::abs(warm->second[index_of(p)]) > 0.0) {
        v(node) = warm->second[index_of(p)];
      } else {
        const double ang = slack.angle_rad + (index_of(p) == 0   ? 0.0
                                              : index_of(p) == 1 ? -2.0 * kPi / 3.0
                                                                 : 2.0 * kPi / 3.0);
        v(node) = std::polar(ctx.v_nominal_ln[node], ang);
      }
    }
  }
  return v;
}

struct Residual {
  VectorXcd g;           // bus-node current mismatch
  double max_mismatch_va = 0.0;
  bool low_voltage_model = false;
};

Residual evaluate(const SolveContext& ctx, const VectorXcd& v) {
  const int n = ctx.n_bus_nodes;
  Residual r;
  r.g = VectorXcd::Zero(n);

  // Network currents, including the fixed slack columns.
  const VectorXcd yv = ctx.Y.topRows(n) * v;

  const double floor_pu = ctx.options->load_voltage_floor_pu;
  for (int k = 0; k < n; ++k) {
    Complex i_inj{0.0, 0.0};
    const Complex vk = v(k);
    const double vmag = std::abs(vk);
    const double v_floor = floor_pu * ctx.v_nominal_ln[k];

    if (std::abs(ctx.s_device(k)) > 0.0 && vmag > 1e-3 * ctx.v_nominal_ln[k]) {
      i_inj += std::conj(ctx.s_device(k) / vk);
    }
    if (std::abs(ctx.s_load(k)) > 0.0) {
      if (vmag >= v_floor) {
        i_inj -= std::conj(ctx.s_load(k) / vk);
      } else {
        // Constant-impedance continuation matched to S at the floor voltage.
        i_inj -= std::conj(ctx.s_load(k)) * vk / (v_floor * v_floor);
        r.low_voltage_model = true;
      }
    }
    r.g(k) = yv(k) - i_inj;
    r.max_mismatch_va = std::max(r.max_mismatch_va, std::abs(vk * std::conj(r.g(k))));
  }
  return r;
}

void newton_update(const SolveContext& ctx, VectorXcd& v, const Residual& res) {
  const int n = ctx.n_bus_nodes;
  MatrixXd jac(2 * n, 2 * n);
  const auto ybus = ctx.Y.topLeftCorner(n, n);
  jac.topLeftCorner(n, n) = ybus.real();
  jac.topRightCorner(n, n) = -ybus.imag();
  jac.bottomLeftCorner(n, n) = ybus.imag();
  jac.bottomRightCorner(n, n) = ybus.real();

  const double floor_pu = ctx.options->load_voltage_floor_pu;
  for (int k = 0; k < n; ++k) {
    const Complex vk = v(k);
    const double vmag = std::abs(vk);
    const double v_floor = floor_pu * ctx.v_nominal_ln[k];
    const Complex u = std::conj(vk);

    // d(i_inj)/dVr and d(i_inj)/dVi accumulate here; G -= i_inj.
    Complex di_dvr{0.0, 0.0};
    Complex di_dvi{0.0, 0.0};
    if (std::abs(ctx.s_device(k)) > 0.0 && vmag > 1e-3 * ctx.v_nominal_ln[k]) {
      const Complex w = std::conj(ctx.s_device(k)) / (u * u);
      di_dvr += -w;
      di_dvi += Complex{0.0, 1.0} * w;
    }
    if (std::abs(ctx.s_load(k)) > 0.0) {
      if (vmag >= v_floor) {
        const Complex w = std::conj(ctx.s_load(k)) / (u * u);
        di_dvr -= -w;
        di_dvi -= Complex{0.0, 1.0} * w;
      } else {
        const Complex c = std::conj(ctx.s_load(k)) / (v_floor * v_floor);
        di_dvr -= c;
        di_dvi -= Complex{0.0, 1.0} * c;
      }
    }
    jac(k, k) -= di_dvr.real();
    jac(n + k, k) -= di_dvr.imag();
    jac(k, n + k) -= di_dvi.real();
    jac(n + k, n + k) -= di_dvi.imag();
  }

  VectorXd rhs(2 * n);
  rhs.head(n) = -res.g.real();
  rhs.tail(n) = -res.g.imag();
  const VectorXd dx = jac.partialPivLu().solve(rhs);
  for (int k = 0; k < n; ++k) {
    v(k) += Complex{dx(k), dx(n + k)};
  }
}

void fill_solution(const SolveContext& ctx, const VectorXcd& v, PowerFlowSolution& sol) {
  for (const std::string& id : ctx.bus_ids) {
    PhasorSet vs{};
    const auto& nodes = ctx.nodes.at(id);
    for (Phase p : kAllPhases) {
      const int node = nodes[index_of(p)];
      if (node >= 0) vs[index_of(p)] = v(node);
    }
    sol.bus_voltage_v[id] = vs;
  }

  for (const Branch* bp : ctx.active_branches) {
    const Branch& b = *bp;
    const auto& nf = ctx.nodes.at(b.from_bus);
    const auto& nt = ctx.nodes.at(b.to_bus);
    PhasorSet i_from{};
    PhasorSet i_to{};
    if (b.kind == BranchKind::line || b.kind == BranchKind::sw) {
      const Mat3 y = invert_on_phases(b.z_ohm, b.phases);
      for (Phase pi : kAllPhases) {
        if (!b.phases.has(pi)) continue;
        Complex sum{0.0, 0.0};
        for (Phase pj : kAllPhases) {
          if (!b.phases.has(pj)) continue;
          const Complex dv = v(nf[index_of(pj)]) - v(nt[index_of(pj)]);
          sum += y[index_of(pi)][index_of(pj)] * dv;
        }
        i_from[index_of(pi)] = sum;
        i_to[index_of(pi)] = sum;  // pure series branch
      }
    } else {
      const bool is_xfmr = b.kind == BranchKind::transformer;
      const double z_base =
          is_xfmr ? b.secondary_ll_v * b.secondary_ll_v / (b.rating_kva * 1000.0) : 0.0;
      const Complex y = is_xfmr ? 1.0 / (b.z_pu * z_base) : 1.0 / Complex{1e-4, 1e-3};
      for (Phase p : kAllPhases) {
        if (!b.phases.has(p)) continue;
        const double r = is_xfmr ? b.secondary_ll_v / b.primary_ll_v
                                 : regulator_ratio(b, *ctx.options, p);
        // to-side series current; from-side scales by the ratio
        const Complex i_out = y * (r * v(nf[index_of(p)]) - v(nt[index_of(p)]));
        i_from[index_of(p)] = r * i_out;
        i_to[index_of(p)] = i_out;
      }
    }
    sol.branch_current_a[b.id] = i_from;
    sol.branch_current_to_a[b.id] = i_to;
  }

  // Slack terminal injection.
  const SlackSource& slack = ctx.injections->slack;
  const auto& nt = ctx.nodes.at(slack.bus);
  for (int i = 0; i < 3; ++i) {
    Complex current{0.0, 0.0};
    for (int j = 0; j < 3; ++j) {
      current += ctx.slack_y[i][j] * (v(ctx.slack_base + j) - v(nt[j]));
    }
    sol.slack_terminal_s_va[i] = v(nt[i]) * std::conj(current);
  }
}

}  // namespace

PowerFlowSolution solve_island(const NetworkModel& model, const Island& island,
                               const InjectionSpec& injections, const SolveOptions& options) {
  PowerFlowSolution sol;
  if (island.grid_forming_devices.empty() && injections.slack.bus.empty()) {
    sol.status = SolveStatus::no_grid_forming_device;
    return sol;
  }
  if (island.grid_forming_devices.size() > 1) {
    sol.status = SolveStatus::multiple_grid_forming_devices;
    return sol;
  }
  if (!island.contains(injections.slack.bus)) {
    throw ValidationError("slack bus '" + injections.slack.bus + "' is not an island member");
  }

  SolveContext ctx;
  ctx.model = &model;
  ctx.island = &island;
  ctx.injections = &injections;
  ctx.options = &options;
  build_context(ctx);

  VectorXcd v = initial_voltage(ctx);
  VectorXcd best_v = v;
  double best_mismatch = std::numeric_limits<double>::infinity();

  for (int iter = 0; iter <= options.max_iterations; ++iter) {
    const Residual res = evaluate(ctx, v);
    if (res.max_mismatch_va < best_mismatch) {
      best_mismatch = res.max_mismatch_va;
      best_v = v;
      sol.low_voltage_load_model = res.low_voltage_model;
    }
    if (res.max_mismatch_va <= options.tolerance_va && iter >= options.min_iterations) {
      sol.converged = true;
      sol.iterations = iter;
      break;
    }
    if (iter == options.max_iterations) {
      sol.iterations = iter;
      break;
    }
    newton_update(ctx, v, res);
  }

  sol.status = sol.converged ? SolveStatus::ok : SolveStatus::not_converged;
  sol.max_mismatch_va = best_mismatch;
  if (!sol.converged) {
    v = best_v;
    MBBSIM_LOG_WARN("power flow did not converge; best mismatch ", best_mismatch, " VA");
  }
  fill_solution(ctx, v, sol);
  return sol;
}

std::map<std::string, BranchFlow> branch_flows(const NetworkModel& model,
                                               const PowerFlowSolution& solution) {
  std::map<std::string, BranchFlow> flows;
  for (const auto& [id, i_from] : solution.branch_current_a) {
    const Branch& b = model.branch(id);
    const auto vf_it = solution.bus_voltage_v.find(b.from_bus);
    const auto vt_it = solution.bus_voltage_v.find(b.to_bus);
    const auto it_it = solution.branch_current_to_a.find(id);
    if (vf_it == solution.bus_voltage_v.end() || vt_it == solution.bus_voltage_v.end() ||
        it_it == solution.branch_current_to_a.end()) {
      continue;
    }
    BranchFlow flow;
    for (Phase p : kAllPhases) {
      const int i = index_of(p);
      if (!b.phases.has(p)) continue;
      flow.s_from_va[i] = vf_it->second[i] * std::conj(i_from[i]);
      flow.s_to_va[i] = vt_it->second[i] * std::conj(it_it->second[i]);
    }
    flows[id] = flow;
  }
  return flows;
}

Complex total_loss_va(const std::map<std::string, BranchFlow>& flows) {
  Complex loss{0.0, 0.0};
  for (const auto& [id, f] : flows) {
    (void)id;
    for (int i = 0; i < 3; ++i) loss += f.s_from_va[i] - f.s_to_va[i];
  }
  return loss;
}

}  // namespace mbbsim
