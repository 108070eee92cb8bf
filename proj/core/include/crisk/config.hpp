#pragma once

// JSON run configuration for the batch pipeline.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "crisk/cohort.hpp"
#include "crisk/estimators.hpp"
#include "crisk/hazards.hpp"
#include "crisk/inference.hpp"

namespace crisk {

struct EstimandRequest {
  Target target = Target::total_risk;
  Method method = Method::gformula;

  bool operator==(const EstimandRequest&) const = default;
};

struct RunConfig {
  /// Resolved against the config file's directory when relative.
  std::filesystem::path data_path;
  CovariateSchema schema;
  /// Overrides the K inferred from the data.
  std::optional<int> k_max;
  DesignSpec event_model;
  DesignSpec competing_model;
  DesignSpec censoring_model;
  std::vector<EstimandRequest> estimands;
  std::vector<Scale> scales{Scale::difference, Scale::ratio};
  /// K+1: number of intervals reported.
  int horizon = 1;
  std::optional<BootstrapPlan> bootstrap;
  std::filesystem::path output_dir = "crisk_out";
  std::uint64_t seed = 1;
  IpwOptions ipw;
  /// Banded covariates defining positivity strata; defaults to the censoring
  /// model's terms.
  std::vector<CovariateTerm> positivity_strata;

  /// Checks that does not need the data: admissible estimand pairs, model
  /// covariates present in the schema, horizon >= 1. Throws ConfigError.
  void validate() const;
};

/// `base_dir` resolves relative paths.
RunConfig parse_run_config(std::string_view json_text,
                           const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& file);

/// Canonical JSON with every default spelled out; parsing it gives back an
/// equal configuration.
std::string run_config_to_json(const RunConfig& config);

/// Models needed by the requested estimands.
struct ModelNeeds {
  bool event = false;
  bool competing = false;
  bool censoring = false;
};

ModelNeeds model_needs(const RunConfig& config);

}  // namespace crisk
