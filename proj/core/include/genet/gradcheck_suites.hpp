#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "genet/gradcheck.hpp"

namespace genet {

struct GradSuiteReport {
  std::vector<GradCheckResult> checks;

  bool passed() const;
  void print(std::ostream& out) const;
};

// Randomised float64 checks of every differentiable op (at least 20).
GradSuiteReport run_ops_gradcheck(std::uint64_t seed = 0, const GradCheckOptions& options = {
                                      1e-6, 1e-4, 1e-6, 0, 0});

// Tiny two-head GENet split at Conv3 in float64: sampled coordinates of every
// parameter tensor and of the input, plus the shared-base additivity check
// (the shared gradient of the summed loss equals the sum of per-head
// gradients).
GradSuiteReport run_model_gradcheck(std::uint64_t seed = 0);

}  // namespace genet
