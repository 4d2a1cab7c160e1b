#pragma once

#include "mbbsim/network.hpp"

namespace mbbsim {

/// Standard overhead/underground line phase-impedance matrices in
/// ohms per mile (configs 601..607 of the 13-node distribution test feeder).
Mat3 line_config_z_per_mile(int config);

/// Phase set carried by a standard line config.
PhaseMask line_config_phases(int config);

/// Total series impedance of `length_ft` of the given config.
/// `transposed` symmetrizes the matrix (three-phase configs only).
Mat3 line_impedance(int config, double length_ft, bool transposed = false);

/// The built-in twin-feeder test system: two modified 13-node feeders (MG0
/// with balanced three-phase loads and the V2G lateral, MG1 with the
/// original unbalanced load pattern plus a head regulator), an external
/// grid source, interconnection switches, and a back-to-back converter
/// between bus 650 and the pcc0 terminal bus.
///
/// Bus naming: MG0 keeps the standard node numbers (650, 632, ...); MG1
/// appends a trailing "1" (6501, 6321, ...). "grid" is the external source
/// bus and "pcc0" the remote terminal of the BTB converter.
SystemDescription builtin_twin_feeder();

}  // namespace mbbsim
