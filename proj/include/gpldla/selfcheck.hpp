#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "gpldla/gpldla_head.hpp"

namespace gpldla {

struct InvariantResult {
  std::string name;
  bool passed = true;
  std::size_t instances = 0;
  double worst = 0.0;  // worst observed error (or statistic) for the check
  std::uint64_t failing_seed = 0;
  std::string detail;
};

struct SelfcheckOptions {
  std::uint64_t seed = 0;
  // Runs the suites against a deliberately broken plugin (mutation test).
  PluginFault fault = PluginFault::none;
};

// Randomized invariant suites: gradient and Hessian oracles, plugin
// identities, variance bounds, predictive validity and MC convergence, and
// the GP-regression solve. Deterministic for a given seed.
std::vector<InvariantResult> run_selfcheck(const SelfcheckOptions& options);

void print_selfcheck_table(std::ostream& out, const std::vector<InvariantResult>& results);

}  // namespace gpldla
