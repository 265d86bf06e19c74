#pragma once

#include <cstdint>
#include <vector>

#include "cfisac/common.hpp"
#include "cfisac/config.hpp"

namespace cfisac {

/// @brief One sampled deployment: AP/CU/target/clutter geometry plus the
/// per-link path-loss exponents drawn for this scenario.
///
/// Positions are uniform over the coordinate box, velocities uniform over
/// [-v_max, v_max] per axis. Reflection variances default to 1 for both
/// targets and clutter. Immutable after sampling.
struct Placement {
  std::vector<Vec2> ap_pos;       // J
  std::vector<Vec2> cu_pos;       // K
  std::vector<Vec2> tgt_pos;      // Q
  std::vector<Vec2> tgt_vel;      // Q
  std::vector<Vec2> clutter_pos;  // U
  std::vector<double> tgt_rcs;      // Q reflection variances
  std::vector<double> clutter_rcs;  // U reflection variances

  // Path-loss exponents, one draw per link and per scenario.
  std::vector<double> alpha_cu;   // [J x K]
  std::vector<double> alpha_ap;   // [J x J], diagonal unused
  std::vector<double> alpha_tgt;  // [J x Q]
  std::vector<double> alpha_clu;  // [J x U]
};

/// Draw a placement for `config`; identical output for identical seeds.
Placement sample_scenario(const ScenarioConfig& config, std::uint64_t seed);

/// Bounds/shape checks from the Placement contract; throws on violation.
void check_placement(const Placement& p, const ScenarioConfig& config);

}  // namespace cfisac
