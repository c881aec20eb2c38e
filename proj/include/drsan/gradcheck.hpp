#pragma once

#include <functional>
#include <string>
#include <vector>

#include "drsan/tensor.hpp"

namespace drsan {

struct FdResult {
  std::string name;
  double max_rel_err = 0;
  int checked = 0;
  int skipped = 0;    // negligible derivative on both sides
  int nonsmooth = 0;  // probe straddled a kink, excluded from the comparison
  double tolerance = 0;
  bool pass() const { return max_rel_err <= tolerance; }
};

// Central-difference check of d(loss)/d(leaf) against the recorded gradients.
// make_loss() must rebuild the forward pass from the current leaf values; it
// runs once under a tape for the analytic gradients and twice per probed
// coordinate without one. Coordinates where both the analytic and numeric
// derivative are below `floor` only need to agree absolutely.
FdResult fd_check(const std::string& name,
                  const std::function<Tensor()>& make_loss,
                  std::vector<Tensor> leaves, double tolerance,
                  SplitMix64& rng, int max_coords_per_leaf = 24,
                  double step = 1e-5, double floor = 1e-6);

// The full gradient suite: every primitive plus a 3-step refinement graph on a
// 32x32 input.
std::vector<FdResult> run_gradient_suite(std::uint64_t seed);

bool suite_passed(const std::vector<FdResult>& results);

}  // namespace drsan
