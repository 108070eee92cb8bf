#pragma once

// Long-format ("person-time") cohort data: one record per subject per interval
// at risk, carrying next-interval indicators in the within-interval order
// censoring, competing event, event of interest.

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace crisk {

struct CovariateDecl {
  std::string name;
  /// Admissible values; empty means any finite number.
  std::vector<double> levels;
};

struct CovariateSchema {
  std::vector<CovariateDecl> covariates;

  std::size_t size() const { return covariates.size(); }
  /// Position of `name` in l0, or nullopt when undeclared.
  std::optional<std::size_t> index_of(std::string_view name) const;
};

struct PersonTimeRecord {
  std::string subject_id;
  int k = 0;
  int a = 0;
  std::vector<double> l0;
  int c_next = 0;
  int d_next = 0;
  int y_next = 0;

  bool terminal() const { return c_next == 1 || d_next == 1 || y_next == 1; }
  bool operator==(const PersonTimeRecord&) const = default;
};

/// Immutable person-time table grouped by subject.
///
/// Subjects keep the order of their first appearance and records keep their
/// input order within a subject, so validation can see malformed sequences.
/// Construction does not validate; see validate_cohort().
class Cohort {
 public:
  Cohort() = default;
  Cohort(std::vector<PersonTimeRecord> records, CovariateSchema schema,
         std::optional<int> k_max = std::nullopt);

  std::span<const PersonTimeRecord> records() const { return records_; }
  std::size_t record_count() const { return records_.size(); }
  std::size_t subject_count() const { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  std::span<const PersonTimeRecord> subject_records(std::size_t i) const;
  /// Administrative horizon K: intervals run k = 0..K.
  int k_max() const { return k_max_; }
  const CovariateSchema& schema() const { return schema_; }

  /// Subject-level view of a valid cohort (treatment and baseline covariates
  /// from the first record).
  int treatment(std::size_t subject) const { return subject_records(subject).front().a; }
  const std::vector<double>& baseline(std::size_t subject) const {
    return subject_records(subject).front().l0;
  }

  /// New cohort made of whole copies of the listed subjects, renamed so that
  /// repeated picks stay distinct.
  Cohort resample(std::span<const std::size_t> subjects) const;

 private:
  std::vector<PersonTimeRecord> records_;
  std::vector<std::size_t> offsets_;
  CovariateSchema schema_;
  int k_max_ = 0;
};

enum class ViolationKind {
  missing_baseline_record,
  non_contiguous_intervals,
  interval_out_of_range,
  inconsistent_baseline,
  non_binary_indicator,
  simultaneous_indicators,
  record_after_terminal,
  censoring_after_competing,
  truncated_follow_up,
  covariate_schema,
};

std::string_view to_string(ViolationKind kind);

struct Violation {
  std::string subject_id;
  int k = 0;
  ViolationKind kind{};
  std::string message;
};

struct ArmCounts {
  std::size_t subjects = 0;
  std::size_t records = 0;
  std::size_t events = 0;
  std::size_t competing_events = 0;
  std::size_t censored = 0;
};

struct ValidationReport {
  std::vector<Violation> violations;
  ArmCounts arm[2];

  bool ok() const { return violations.empty(); }
  std::string summary(std::size_t max_items = 10) const;
};

/// Parses a delimited person-time file. Header: subject_id,k,a,<covariates in
/// schema order>,c_next,d_next,y_next. Throws DataError on parse failure (with
/// row and column) or when validation reports any violation.
Cohort load_person_time(std::istream& in, const CovariateSchema& schema,
                        std::optional<int> k_max = std::nullopt);
Cohort load_person_time_file(const std::string& path, const CovariateSchema& schema,
                             std::optional<int> k_max = std::nullopt);

/// Canonical serialization readable by load_person_time().
void write_person_time(std::ostream& out, const Cohort& cohort);

ValidationReport validate_cohort(const Cohort& cohort);

enum class EventRole { event_of_interest, competing_event };

/// Data set where subjects failing from the non-primary event stay in the
/// risk set through K. With role competing_event the y/d columns are swapped
/// first, so y_next always carries the primary event.
class ExpandedCohort {
 public:
  ExpandedCohort(Cohort table, EventRole role) : table_(std::move(table)), role_(role) {}

  const Cohort& table() const { return table_; }
  EventRole role() const { return role_; }

 private:
  Cohort table_;
  EventRole role_;
};

/// Throws DataError if `cohort` is invalid.
ExpandedCohort expand_risk_sets(const Cohort& cohort, EventRole role);
/// Re-expands an already expanded table (idempotent).
ExpandedCohort expand_risk_sets(const ExpandedCohort& expanded);

/// State carried into interval k by the cumulative indicators of the previous
/// record of the same subject (all zero at k = 0).
struct RecordState {
  bool prior_c = false;
  bool prior_d = false;
  bool prior_y = false;
};

/// Prior state for the j-th record of a subject's sequence.
RecordState prior_state(std::span<const PersonTimeRecord> subject, std::size_t j);

}  // namespace crisk
