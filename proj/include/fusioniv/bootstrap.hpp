#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "fusioniv/sample.hpp"

namespace fusioniv {

struct BootstrapOptions {
  int replicates = 500;
  std::uint64_t seed = 0;
  double ci_level = 0.95;
  bool stratified = false;  // resample within r=1 and r=0 separately
  int parallelism = 1;
  double max_failure_share = 0.05;
};

struct BootstrapResult {
  int replicates = 0;
  std::vector<double> estimates;  // successful replicates, replicate order
  double se_boot = 0.0;
  double ci_lo = 0.0, ci_hi = 0.0, level = 0.95;
  int failures = 0;
  bool reliable = true;
};

// Nonparametric bootstrap over fused rows (the i.i.d. unit). The recipe
// re-fits everything on the resample and returns its point estimate.
// Replicate b draws from stream (seed, b); results are deterministic for any
// parallelism degree. Throws TooManyFailures past max_failure_share.
BootstrapResult bootstrap(const FusedSample& sample,
                          const std::function<double(const FusedSample&)>& recipe,
                          const BootstrapOptions& options);

}  // namespace fusioniv
