#pragma once

// Pooled-over-time logistic models for the three observed discrete-time
// hazards: event of interest, competing event, loss to follow-up.

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crisk/cohort.hpp"

namespace crisk {

enum class HazardKind { event, competing, censoring };

std::string_view to_string(HazardKind kind);
HazardKind hazard_kind_from_string(std::string_view s);

struct CovariateTerm {
  std::string name;
  /// Strictly increasing cut points c1 < ... < cm give m indicator columns
  /// I(c1 <= x < c2), ..., I(x >= cm); x < c1 is the reference. Empty means
  /// the raw value enters as a single column.
  std::vector<double> cuts;
};

struct DesignSpec {
  HazardKind kind = HazardKind::event;
  int time_degree = 0;
  bool include_treatment = true;
  bool treatment_time_interaction = false;
  std::vector<CovariateTerm> covariates;
  /// Intervals k < structural_zero_before have hazard exactly 0.
  int structural_zero_before = 0;

  std::size_t width() const;
  std::vector<std::string> column_names() const;
};

/// Throws ConfigError for negative degree, unsorted cuts, interaction without
/// treatment, or covariates missing from the schema.
void validate_spec(const DesignSpec& spec, const CovariateSchema& schema);

/// A DesignSpec bound to a schema and horizon K, with covariate positions
/// resolved once.
class Design {
 public:
  Design() = default;
  Design(DesignSpec spec, const CovariateSchema& schema, int k_max);

  const DesignSpec& spec() const { return spec_; }
  int k_max() const { return k_max_; }
  std::size_t width() const { return width_; }
  bool structural_zero(int k) const { return k < spec_.structural_zero_before; }

  /// Writes width() values to out. Throws DataError for a non-finite
  /// covariate value or one outside the schema's declared levels.
  void row(int a, std::span<const double> l0, int k, double* out) const;
  std::vector<double> row(int a, std::span<const double> l0, int k) const;

 private:
  DesignSpec spec_;
  std::vector<std::size_t> cov_index_;
  std::vector<std::vector<double>> cov_levels_;
  int k_max_ = 0;
  std::size_t width_ = 0;
};

std::vector<double> build_design_row(const DesignSpec& spec, const CovariateSchema& schema,
                                     int k_max, int a, std::span<const double> l0, int k);

enum class Outcome { y_next, d_next, c_next };

/// Which records enter the likelihood.
struct RiskSet {
  std::string description;
  std::function<bool(const PersonTimeRecord&, const RecordState&)> include;

  /// Every record (data set 1: at risk of loss to follow-up).
  static RiskSet all_records();
  /// Records with c_next = 0 (competing-event hazard).
  static RiskSet uncensored();
  /// Records with c_next = 0 and d_next = 0 (event-of-interest hazard).
  static RiskSet uncensored_event_free();
  /// Records not preceded by a competing event (censoring model on an
  /// expanded table).
  static RiskSet before_competing_event();
  /// The filter matching a hazard kind on person-time data.
  static RiskSet standard(HazardKind kind);
};

/// Rows of the pooled likelihood, row-major.
struct PooledData {
  std::size_t width = 0;
  std::vector<double> x;
  std::vector<double> y;

  std::size_t rows() const { return y.size(); }
};

PooledData assemble_pooled_data(const Cohort& data, const Design& design, Outcome outcome,
                                const RiskSet& risk_set);

double log_likelihood(const PooledData& data, std::span<const double> beta);
std::vector<double> score(const PooledData& data, std::span<const double> beta);

struct FitOptions {
  double score_tolerance = 1e-8;
  int max_iterations = 100;
  /// Separation is declared once some |linear predictor| passes this while
  /// still growing and the likelihood has stalled.
  double separation_threshold = 15.0;
};

struct FittedHazardModel {
  Design design;
  Outcome outcome = Outcome::y_next;
  std::vector<std::string> columns;
  std::vector<double> coefficients;
  bool converged = false;
  int iterations = 0;
  double log_likelihood = 0.0;
  double max_abs_score = 0.0;
  std::size_t records_used = 0;
  std::size_t events = 0;
  std::string fit_filter;
  /// Log-likelihood after each accepted step, starting from beta = 0.
  std::vector<double> trace;

  const DesignSpec& spec() const { return design.spec(); }
};

/// Damped Newton maximization of the Bernoulli log-likelihood over records
/// that pass `risk_set` and lie outside the structural-zero region.
/// Throws DataError for an empty risk set, SeparationError for divergence.
FittedHazardModel fit_pooled_logistic(const Cohort& data, const DesignSpec& spec, Outcome outcome,
                                      const RiskSet& risk_set, const FitOptions& options = {});
FittedHazardModel fit_pooled_logistic(const ExpandedCohort& data, const DesignSpec& spec,
                                      Outcome outcome, const RiskSet& risk_set,
                                      const FitOptions& options = {});
FittedHazardModel fit_pooled_logistic(const PooledData& rows, const Design& design,
                                      Outcome outcome, const FitOptions& options = {});

/// 0 inside the structural-zero region, else the inverse logit of the linear
/// predictor. Throws NumericalError for a non-converged model.
double predict_hazard(const FittedHazardModel& m, int a, std::span<const double> l0, int k);

/// Model whose hazard is 0 everywhere (no events of that kind can occur).
FittedHazardModel zero_hazard_model(const DesignSpec& spec, const CovariateSchema& schema,
                                    int k_max);

enum class PositivityTarget { treatment, censoring, competing };

struct PositivityCell {
  std::string stratum;
  int arm = 0;
  int k = 0;
  std::size_t at_risk = 0;
  bool zero_cell = false;
};

/// Counts, per stratum x interval x arm, the records that keep the relevant
/// conditional probability estimable: at-risk records (treatment), records
/// remaining uncensored (censoring), or remaining uncensored and free of the
/// competing event (competing). Strata are the observed combinations of the
/// banded covariates.
std::vector<PositivityCell> positivity_report(const Cohort& data,
                                              std::span<const CovariateTerm> strata,
                                              PositivityTarget which);

}  // namespace crisk
