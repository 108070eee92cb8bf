#pragma once

#include <cstdint>
#include <vector>

#include "crisk/oracle.hpp"

namespace crisk::oracle::detail {

/// Either a value fixed by the model's constraints or interventions, or a
/// probability that the variable is 1.
struct Step {
  bool forced = false;
  int value = 0;
  double p = 0.0;
};

/// Structural step for code position `pos` (0 = L0, 1 = A, then the interval
/// blocks of Layout) given U and the already generated prefix of `code`.
/// `source` is the code of the world named by intervention.competing_from.
Step structural_step(const DiscreteDGP& dgp, const InterventionSpec& intervention, int pos, int u,
                     const std::vector<std::int8_t>& code, const std::vector<std::int8_t>* source);

/// Per-arm truths from the mutilated models; NaN where a hazard is undefined.
struct TruthTables {
  // [a][k]
  std::vector<double> risk1[2], risk2[2], risk3[2], composite[2];
  std::vector<double> hazard1[2], hazard2[2], hazard3[2], hazard4[2];
};

TruthTables compute_truth(const DiscreteDGP& dgp);

}  // namespace crisk::oracle::detail
