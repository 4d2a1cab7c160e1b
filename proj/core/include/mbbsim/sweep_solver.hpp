#pragma once

#include "mbbsim/powerflow.hpp"

namespace mbbsim {

/// Backward/forward-sweep solve of a radial island. Reference
/// implementation kept as an independent cross-check for the Newton solver;
/// not used on the simulation path. Throws ValidationError if the island
/// (plus the slack source branch) is not a tree.
PowerFlowSolution sweep_solve(const NetworkModel& model, const Island& island,
                              const InjectionSpec& injections, const SolveOptions& options);

}  // namespace mbbsim
