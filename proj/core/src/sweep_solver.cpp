#include "mbbsim/sweep_solver.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

namespace mbbsim {

namespace {

/// Phase-domain source impedance (same construction as the Newton solver).
Mat3 slack_z_phase(const SlackSource& s) {
  const Complex a = kAlpha;
  const Complex a2 = kAlphaSq;
  const Complex one{1.0, 0.0};
  const Complex A[3][3] = {{one, one, one}, {one, a2, a}, {one, a, a2}};
  const Complex Ai[3][3] = {{one / 3.0, one / 3.0, one / 3.0},
                            {one / 3.0, a / 3.0, a2 / 3.0},
                            {one / 3.0, a2 / 3.0, a / 3.0}};
  const Complex zs[3] = {s.z0_ohm, s.z1_ohm, s.z2_ohm};
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

struct TreeEdge {
  const Branch* branch = nullptr;  // nullptr for the slack source edge
  bool forward = true;             // parent == branch->from_bus
};

struct SweepNode {
  std::string bus;
  int parent = -1;
  TreeEdge edge;                 // edge toward the parent
  std::vector<int> children;
  PhasorSet v{};
  PhasorSet i_node{};            // shunt/load/device current demand at the bus
  PhasorSet i_acc{};             // current delivered into this subtree
};

Complex ratio_of(const Branch& b, const SolveOptions& options, Phase p) {
  if (b.kind == BranchKind::transformer) {
    return Complex{b.secondary_ll_v / b.primary_ll_v, 0.0};
  }
  auto it = options.regulator_taps.find(b.id);
  RegulatorSettings r = b.regulator;
  if (it != options.regulator_taps.end()) r.taps = it->second;
  return Complex{r.ratio(p), 0.0};
}

Complex series_z_of(const Branch& b) {
  if (b.kind == BranchKind::transformer) {
    const double z_base = b.secondary_ll_v * b.secondary_ll_v / (b.rating_kva * 1000.0);
    return b.z_pu * z_base;
  }
  return Complex{1e-4, 1e-3};  // regulator numerical series impedance
}

}  // namespace

PowerFlowSolution sweep_solve(const NetworkModel& model, const Island& island,
                              const InjectionSpec& injections, const SolveOptions& options) {
  PowerFlowSolution sol;
  if (island.grid_forming_devices.size() > 1) {
    sol.status = SolveStatus::multiple_grid_forming_devices;
    return sol;
  }
  const SlackSource& slack = injections.slack;
  if (!island.contains(slack.bus)) {
    throw ValidationError("slack bus '" + slack.bus + "' is not an island member");
  }

  // Active branches and adjacency.
  std::vector<const Branch*> active;
  std::map<std::string, std::vector<std::pair<int, std::string>>> adj;
  for (const Branch& b : model.branches()) {
    if (!island.contains(b.from_bus) || !island.contains(b.to_bus)) continue;
    if (b.kind == BranchKind::sw && !options.switches.is_closed(b.id)) continue;
    const int idx = static_cast<int>(active.size());
    active.push_back(&b);
    adj[b.from_bus].push_back({idx, b.to_bus});
    adj[b.to_bus].push_back({idx, b.from_bus});
  }
  if (active.size() + 1 != island.member_buses.size()) {
    throw ValidationError("sweep_solve: island is not radial");
  }

  // BFS tree rooted at the slack terminal.
  std::vector<SweepNode> nodes;
  std::map<std::string, int> node_of;
  auto add_node = [&](const std::string& bus) {
    node_of[bus] = static_cast<int>(nodes.size());
    SweepNode n;
    n.bus = bus;
    nodes.push_back(n);
    return node_of[bus];
  };
  const int root = add_node(slack.bus);
  std::vector<bool> branch_used(active.size(), false);
  std::queue<int> frontier;
  frontier.push(root);
  while (!frontier.empty()) {
    const int cur = frontier.front();
    frontier.pop();
    for (const auto& [bidx, other] : adj[nodes[cur].bus]) {
      if (branch_used[bidx]) continue;
      if (node_of.count(other)) {
        throw ValidationError("sweep_solve: island is not radial (loop through branch '" +
                              active[bidx]->id + "')");
      }
      branch_used[bidx] = true;
      const int child = add_node(other);
      nodes[child].parent = cur;
      nodes[child].edge.branch = active[bidx];
      nodes[child].edge.forward = (active[bidx]->from_bus == nodes[cur].bus);
      nodes[cur].children.push_back(child);
      frontier.push(child);
    }
  }
  if (nodes.size() != island.member_buses.size()) {
    throw ValidationError("sweep_solve: island is not fully connected");
  }

  const Mat3 z_src = slack_z_phase(slack);
  const PhasorSet emf = balanced_set(slack.emf_ln_v, slack.angle_rad);

  // Flat initial voltages at nominal.
  for (SweepNode& n : nodes) {
    const Bus& bus = model.bus(n.bus);
    for (Phase p : kAllPhases) {
      if (!bus.phases.has(p)) continue;
      const double ang = slack.angle_rad + (index_of(p) == 0   ? 0.0
                                            : index_of(p) == 1 ? -2.0 * kPi / 3.0
                                                               : 2.0 * kPi / 3.0);
      n.v[index_of(p)] = std::polar(bus.nominal_v_ln(), ang);
    }
  }

  // Aggregated per-bus demands.
  std::map<std::string, PhasorSet> dev = injections.device_s_va;
  std::map<std::string, PhasorSet> lod = injections.load_s_va;
  const double floor_pu = options.load_voltage_floor_pu;

  auto node_current = [&](SweepNode& n) {
    const Bus& bus = model.bus(n.bus);
    PhasorSet i{};
    for (Phase p : kAllPhases) {
      const int k = index_of(p);
      if (!bus.phases.has(p)) continue;
      const Complex vk = n.v[k];
      const double vmag = std::abs(vk);
      if (auto it = lod.find(n.bus); it != lod.end() && std::abs(it->second[k]) > 0.0) {
        const double v_floor = floor_pu * bus.nominal_v_ln();
        if (vmag >= v_floor) {
          i[k] += std::conj(it->second[k] / vk);
        } else {
          i[k] += std::conj(it->second[k]) * vk / (v_floor * v_floor);
          sol.low_voltage_load_model = true;
        }
      }
      if (auto it = dev.find(n.bus); it != dev.end() && std::abs(it->second[k]) > 0.0) {
        if (vmag > 1e-3 * bus.nominal_v_ln()) i[k] -= std::conj(it->second[k] / vk);
      }
    }
    for (const ShuntCapacitor& c : model.capacitors()) {
      if (!c.in_service || c.bus != n.bus) continue;
      const double v_ln = bus.nominal_v_ln();
      const double b_s = c.rating_kvar * 1000.0 / c.phases.count() / (v_ln * v_ln);
      for (Phase p : kAllPhases) {
        if (!c.phases.has(p) || !bus.phases.has(p)) continue;
        i[index_of(p)] += Complex{0.0, b_s} * n.v[index_of(p)];
      }
    }
    return i;
  };

  // Nodes were appended in BFS order, so iterating backward visits children
  // before parents.
  int iterations = 0;
  for (; iterations < options.max_iterations * 4; ++iterations) {
    // Backward: accumulate currents.
    for (int ni = static_cast<int>(nodes.size()) - 1; ni >= 0; --ni) {
      SweepNode& n = nodes[ni];
      n.i_node = node_current(n);
      n.i_acc = n.i_node;
      for (int ci : n.children) {
        const SweepNode& c = nodes[ci];
        const TreeEdge& e = c.edge;
        const Branch& b = *e.branch;
        if (b.kind == BranchKind::line || b.kind == BranchKind::sw) {
          for (Phase p : kAllPhases) {
            if (b.phases.has(p)) n.i_acc[index_of(p)] += c.i_acc[index_of(p)];
          }
        } else {
          for (Phase p : kAllPhases) {
            if (!b.phases.has(p)) continue;
            const Complex r = ratio_of(b, options, p);
            const int k = index_of(p);
            // forward: parent draw = r * I_acc(child); reversed: I_acc / r
            n.i_acc[k] += e.forward ? r * c.i_acc[k] : c.i_acc[k] / r;
          }
        }
      }
    }

    // Forward: update voltages from the EMF down.
    double max_dv = 0.0;
    {
      PhasorSet v_new{};
      for (int i = 0; i < 3; ++i) {
        Complex drop{0.0, 0.0};
        for (int j = 0; j < 3; ++j) drop += z_src[i][j] * nodes[root].i_acc[j];
        v_new[i] = emf[i] - drop;
        max_dv = std::max(max_dv, std::abs(v_new[i] - nodes[root].v[i]));
      }
      nodes[root].v = v_new;
    }
    for (std::size_t ni = 1; ni < nodes.size(); ++ni) {
      SweepNode& n = nodes[ni];
      const SweepNode& parent = nodes[n.parent];
      const Branch& b = *n.edge.branch;
      if (b.kind == BranchKind::line || b.kind == BranchKind::sw) {
        for (Phase p : kAllPhases) {
          if (!b.phases.has(p)) continue;
          const int k = index_of(p);
          Complex drop{0.0, 0.0};
          for (Phase pj : kAllPhases) {
            if (!b.phases.has(pj)) continue;
            drop += b.z_ohm[k][index_of(pj)] * n.i_acc[index_of(pj)];
          }
          const Complex v_new = parent.v[k] - drop;
          max_dv = std::max(max_dv, std::abs(v_new - n.v[k]));
          n.v[k] = v_new;
        }
      } else {
        const Complex z = series_z_of(b);
        for (Phase p : kAllPhases) {
          if (!b.phases.has(p)) continue;
          const int k = index_of(p);
          const Complex r = ratio_of(b, options, p);
          Complex v_new;
          if (n.edge.forward) {
            // child on the to side: V_t = r V_f - z I_acc
            v_new = r * parent.v[k] - z * n.i_acc[k];
          } else {
            // child on the from side: V_f = (V_t + z I_out)/r, I_out = -I_acc/r
            v_new = (parent.v[k] - z * n.i_acc[k] / r) / r;
          }
          max_dv = std::max(max_dv, std::abs(v_new - n.v[k]));
          n.v[k] = v_new;
        }
      }
    }

    if (max_dv < 1e-9) {
      sol.converged = true;
      break;
    }
  }
  sol.iterations = iterations + 1;
  sol.status = sol.converged ? SolveStatus::ok : SolveStatus::not_converged;

  // Fill the solution. Branch from/to currents follow the tree orientation
  // mapped back onto the branch's own from/to definition.
  for (const SweepNode& n : nodes) {
    sol.bus_voltage_v[n.bus] = n.v;
  }
  for (std::size_t ni = 1; ni < nodes.size(); ++ni) {
    const SweepNode& n = nodes[ni];
    const Branch& b = *n.edge.branch;
    PhasorSet i_from{};
    PhasorSet i_to{};
    for (Phase p : kAllPhases) {
      if (!b.phases.has(p)) continue;
      const int k = index_of(p);
      if (b.kind == BranchKind::line || b.kind == BranchKind::sw) {
        i_from[k] = n.edge.forward ? n.i_acc[k] : -n.i_acc[k];
        i_to[k] = i_from[k];
      } else {
        const Complex r = ratio_of(b, options, p);
        if (n.edge.forward) {
          i_to[k] = n.i_acc[k];        // delivered out at the to side
          i_from[k] = r * n.i_acc[k];  // drawn at the from side
        } else {
          i_to[k] = -n.i_acc[k] / r;
          i_from[k] = -n.i_acc[k];
        }
      }
    }
    sol.branch_current_a[b.id] = i_from;
    sol.branch_current_to_a[b.id] = i_to;
  }

  for (int i = 0; i < 3; ++i) {
    sol.slack_terminal_s_va[i] = nodes[root].v[i] * std::conj(nodes[root].i_acc[i]);
  }

  // Residual current balance in power terms, for parity with the Newton
  // solver's mismatch report.
  double mismatch = 0.0;
  for (SweepNode& n : nodes) {
    PhasorSet residual = node_current(n);
    for (Phase p : kAllPhases) residual[index_of(p)] = -residual[index_of(p)];
    // subtract branch draws: toward parent (supply) and toward children.
    // Supply into this node through the parent edge:
    if (&n != &nodes[root]) {
      const Branch& b = *n.edge.branch;
      for (Phase p : kAllPhases) {
        if (!b.phases.has(p)) continue;
        residual[index_of(p)] += n.i_acc[index_of(p)];
      }
    } else {
      for (int i = 0; i < 3; ++i) residual[i] += n.i_acc[i];
    }
    for (int ci : n.children) {
      const SweepNode& c = nodes[ci];
      const Branch& b = *c.edge.branch;
      for (Phase p : kAllPhases) {
        if (!b.phases.has(p)) continue;
        const int k = index_of(p);
        const Complex r = ratio_of(b, options, p);
        const Complex draw = (b.kind == BranchKind::line || b.kind == BranchKind::sw)
                                 ? c.i_acc[k]
                                 : (c.edge.forward ? r * c.i_acc[k] : c.i_acc[k] / r);
        residual[k] -= draw;
      }
    }
    for (Phase p : kAllPhases) {
      const int k = index_of(p);
      mismatch = std::max(mismatch, std::abs(n.v[k] * std::conj(residual[k])));
    }
  }
  sol.max_mismatch_va = mismatch;
  return sol;
}

}  // namespace mbbsim
