#pragma once

#include <random>

#include "noir/scenario.hpp"

namespace toy {

// Inlet 1 -> road 2 -> exit, no junctions, p = (0.5, 0.5).
noir::Scenario chain2();

// Corridor of m junctions. Junction j takes main road c_j and side inlet
// s_j and feeds c_{j+1} and exit road e_j. Inlets are c_1 and s_1..s_m
// (m + 1 inlets), N = 3m + 1. With three phases the third serves one
// movement from each approach.
//
// Ratios and outflow probabilities are drawn from `rng` when given and are
// otherwise fixed.
noir::Scenario corridor(int m, int phases = 2, std::mt19937_64 *rng = nullptr);

}  // namespace toy
