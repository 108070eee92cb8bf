#pragma once

// Counterfactual risk curves under baseline-covariate adjustment: parametric
// g-formula and inverse-probability-weighted product-limit estimators.

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crisk/cohort.hpp"
#include "crisk/hazards.hpp"

namespace crisk {

enum class Target { direct_risk, total_risk, competing_risk, composite_risk };
enum class Method { gformula, ipw_cause_specific, ipw_subdistribution };

std::string_view to_string(Target t);
std::string_view to_string(Method m);
Target target_from_string(std::string_view s);
Method method_from_string(std::string_view s);

/// Throws ConfigError for pairs with no estimator (direct risk by
/// subdistribution weighting).
void check_admissible(Target target, Method method);

struct EstimandSpec {
  Target target = Target::total_risk;
  Method method = Method::gformula;
  int arm = 1;
  /// Number of intervals K+1; the curve has values at k+1 = 1..horizon.
  int horizon = 1;

  bool operator==(const EstimandSpec&) const = default;
};

struct RiskCurve {
  EstimandSpec estimand;
  /// values[k] is the risk by k+1.
  std::vector<double> values;
  std::vector<std::string> warnings;

  int arm() const { return estimand.arm; }
  double at_horizon() const { return values.empty() ? 0.0 : values.back(); }
};

/// Non-owning bundle; each estimator checks that what it needs is present.
struct HazardModels {
  const FittedHazardModel* event = nullptr;
  const FittedHazardModel* competing = nullptr;
  const FittedHazardModel* censoring = nullptr;
};

struct IpwOptions {
  /// Cap weights at this percentile (0, 100] of the arm's positive weights.
  std::optional<double> truncate_percentile;
};

/// Standardizes over the baseline covariates of all subjects in `data`.
RiskCurve estimate_risk_gformula(const Cohort& data, const HazardModels& models,
                                 const EstimandSpec& spec);

/// Person-time data (data set 1 shape). Subdistribution estimands expand the
/// risk sets internally and reuse `models.censoring` on the expanded tables.
RiskCurve estimate_risk_ipw(const Cohort& data, const HazardModels& models,
                            const EstimandSpec& spec, const IpwOptions& options = {});

/// Subdistribution weighting on an already expanded table. The table's role
/// must match the target: event_of_interest for total risk, competing_event
/// for competing risk.
RiskCurve estimate_risk_ipw(const ExpandedCohort& data, const FittedHazardModel& censoring,
                            const EstimandSpec& spec, const IpwOptions& options = {});

/// Share of the arm with the event (y_next or d_next) by each k+1. Throws
/// DataError for an empty arm.
RiskCurve nonparametric_cumulative(const Cohort& data, int arm, Outcome event, int horizon);

/// Pointwise sum of the total and competing curves of one method and arm.
RiskCurve composite_of(const RiskCurve& total, const RiskCurve& competing);

enum class Scale { difference, ratio };
std::string_view to_string(Scale s);
Scale scale_from_string(std::string_view s);

struct EffectEstimate {
  Scale scale = Scale::difference;
  EstimandSpec estimand;  // arm field is meaningless here
  /// Undefined ratio where the reference risk is 0.
  std::vector<std::optional<double>> per_interval;
  std::optional<double> horizon_value;
  std::string description;
};

/// r1 (arm 1) against r0 (arm 0). Throws ConfigError on mismatched curves.
EffectEstimate effect_contrast(const RiskCurve& r1, const RiskCurve& r0, Scale scale);

/// Tidy CSV with columns estimand,method,arm,k_plus_1,risk.
void write_risk_curves_csv(std::ostream& out, std::span<const RiskCurve> curves);

}  // namespace crisk
