#pragma once

// Self-check suite behind `umwfl validate`: structured vs. dense solves,
// closed-form stationarity by finite differences, monotone inner and outer
// loops, the transmit solver against a grid, analytic vs. sampled MSE and
// the noiseless single-user round.

#include <cstdint>
#include <string>
#include <vector>

#include "umwfl/config.hpp"

namespace umwfl {

struct CheckResult {
  std::string name;
  bool passed = false;
  int instances = 0;
  double worst = 0;  // worst observed statistic, compared against `limit`
  double limit = 0;
  std::string detail;
};

struct ValidationReport {
  std::vector<CheckResult> checks;
  bool passed() const;
};

/// Runs every check with instance counts scaled down for interactive use.
/// Random instances come from substreams of `seed`; the block-monotonicity
/// check uses the radio settings of `cfg`.
ValidationReport run_validation(const ExperimentConfig& cfg, std::uint64_t seed);

}  // namespace umwfl
