// SPDX-License-Identifier: Apache-2.0
//
// Closed-loop check of the difficulty schedule: one weakness thread against
// a boundary agent, every model role on the reference mock. The agent
// answers well below its boundary and badly above it, so a working schedule
// drives the difficulty towards the boundary.
#pragma once

#include <cstdint>
#include <vector>

#include "ata/difficulty.hpp"
#include "ata/types.hpp"

namespace ata {

struct HomingOptions {
  double boundary = 5.5;
  double noise = 0.5;  // standard deviation of the agent's quality noise
  int rounds = 3;
  double epsilon = kDefaultEpsilon;  // 0 runs every round
  std::uint64_t seed = 0;
  DifficultyParams params;
};

struct HomingResult {
  std::uint64_t seed = 0;
  std::vector<double> difficulties;  // d_k of each scored scenario
  std::vector<double> scores;        // s_k
  double final_difficulty = kInitialDifficulty;  // posterior after the last round
  bool converged = false;
};

/// Throws invalid_config unless rounds >= 1 and noise >= 0.
HomingResult simulate_homing(const HomingOptions& options);

void to_json(json& j, const HomingResult& v);

}  // namespace ata
