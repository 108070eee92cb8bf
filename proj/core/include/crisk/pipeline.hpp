#pragma once

// Batch run: validate, fit, estimate, contrast, bootstrap, write artifacts.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "crisk/config.hpp"
#include "crisk/error.hpp"
#include "crisk/estimators.hpp"
#include "crisk/hazards.hpp"
#include "crisk/inference.hpp"

namespace crisk {

enum class Stage { config, load, validate, fit, estimate, bootstrap, write };
std::string_view to_string(Stage s);

/// Loads and validates the configured cohort. Throws DataError with the
/// validation summary, or ConfigError when the horizon exceeds K+1.
Cohort load_configured_cohort(const RunConfig& config);

struct FittedModels {
  std::optional<FittedHazardModel> event, competing, censoring;
  std::vector<std::string> warnings;

  HazardModels view() const;
};

/// Fits the models the estimands need with their standard risk sets. A risk
/// set with no events gets a hazard fixed at 0 plus a warning.
FittedModels fit_models(const Cohort& data, const RunConfig& config);

struct EffectRow {
  EstimandRequest request;
  EffectEstimate effect;
  std::optional<IntervalEstimate> interval;
};

struct Analysis {
  FittedModels models;
  /// Per request: arm 1 then arm 0.
  std::vector<RiskCurve> curves;
  std::vector<EffectRow> effects;
};

/// Point estimates only.
Analysis analyze(const Cohort& data, const RunConfig& config);

/// Quantities carried through the bootstrap, in a fixed order: for each
/// request the two horizon risks (arm 1, arm 0) and then each scale's
/// horizon contrast. Undefined ratios are NaN.
std::vector<double> summary_vector(const Analysis& analysis, const RunConfig& config);
std::vector<std::string> summary_labels(const RunConfig& config);

struct PipelineOptions {
  int jobs = 1;
  /// Progress lines (stage names, timings). Null for silence.
  std::ostream* log = nullptr;
  /// Stop after fitting (the `fit` subcommand).
  bool fit_only = false;
};

struct PipelineResult {
  Analysis analysis;
  std::optional<BootstrapResult> bootstrap;
  std::vector<std::filesystem::path> artifacts;
};

/// Error raised by run_pipeline; the message starts with "[stage] ".
class StageError : public Error {
 public:
  StageError(Stage stage, ErrorKind kind, const std::string& what)
      : Error(kind, "[" + std::string(to_string(stage)) + "] " + what), stage_(stage) {}
  Stage stage() const noexcept { return stage_; }

 private:
  Stage stage_;
};

/// Runs every stage and writes the artifacts into config.output_dir. Files
/// are staged and only moved into place once every stage has succeeded.
PipelineResult run_pipeline(const RunConfig& config, const PipelineOptions& options = {});

/// 64-bit FNV-1a, hex encoded.
std::string fnv1a_hex(std::string_view bytes);

}  // namespace crisk
