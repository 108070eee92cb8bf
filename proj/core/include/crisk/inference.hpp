#pragma once

// Nonparametric subject-level bootstrap with percentile intervals.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "crisk/cohort.hpp"

namespace crisk {

struct BootstrapPlan {
  int replicates = 500;
  std::uint64_t seed = 1;
  double lower_percentile = 2.5;
  double upper_percentile = 97.5;
  /// Error out when more than this share of replicates fail.
  double max_failure_share = 0.20;

  /// Throws ConfigError unless replicates >= 2 and 0 < lower < upper < 100.
  void validate() const;
};

struct IntervalEstimate {
  double point = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  std::size_t n_failed_replicates = 0;
  /// Replicates where this quantity was undefined (NaN) but the run succeeded.
  std::size_t n_undefined = 0;
};

/// The full estimation recipe: maps a cohort to a fixed-length vector of
/// quantities (NaN for undefined). Must be safe to call concurrently.
using Statistic = std::function<std::vector<double>(const Cohort&)>;

struct BootstrapResult {
  std::vector<IntervalEstimate> intervals;
  std::size_t replicates = 0;
  std::size_t failed = 0;
  /// First few failure messages, in replicate order.
  std::vector<std::string> failure_messages;
  /// Replicate values, one row per replicate (empty row if failed).
  std::vector<std::vector<double>> draws;
};

/// Type-7 (linear interpolation) percentile of sorted data, pct in [0,100].
double percentile_sorted(std::span<const double> sorted, double pct);

/// Subject indices of replicate `replicate`: n draws with replacement.
std::vector<std::size_t> resample_indices(std::size_t n, std::uint64_t seed,
                                          std::uint64_t replicate);

/// Reruns `statistic` on `plan.replicates` subject resamples. Replicates that
/// throw a data or numerical error are counted and excluded. Results do not
/// depend on `jobs`. Throws NumericalError when the failure share exceeds
/// plan.max_failure_share.
BootstrapResult bootstrap_percentile_ci(const Cohort& data, const Statistic& statistic,
                                        const BootstrapPlan& plan, int jobs = 1);

/// Worker count from the CRISK_JOBS environment variable, else 1.
int default_jobs();

}  // namespace crisk
