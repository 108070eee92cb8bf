#include "crisk/cohort.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "crisk/error.hpp"
#include "csv.hpp"

namespace crisk {

std::optional<std::size_t> CovariateSchema::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < covariates.size(); ++i)
    if (covariates[i].name == name) return i;
  return std::nullopt;
}

Cohort::Cohort(std::vector<PersonTimeRecord> records, CovariateSchema schema,
               std::optional<int> k_max)
    : schema_(std::move(schema)) {
  std::unordered_map<std::string, std::size_t> group_of;
  std::vector<std::vector<PersonTimeRecord>> groups;
  int max_k = 0;
  for (auto& r : records) {
    max_k = std::max(max_k, r.k);
    auto [it, inserted] = group_of.try_emplace(r.subject_id, groups.size());
    if (inserted) groups.emplace_back();
    groups[it->second].push_back(std::move(r));
  }
  k_max_ = k_max.value_or(max_k);
  offsets_.reserve(groups.size() + 1);
  offsets_.push_back(0);
  records_.reserve(records.size());
  for (auto& g : groups) {
    for (auto& r : g) records_.push_back(std::move(r));
    offsets_.push_back(records_.size());
  }
}

std::span<const PersonTimeRecord> Cohort::subject_records(std::size_t i) const {
  return std::span<const PersonTimeRecord>(records_).subspan(offsets_[i],
                                                            offsets_[i + 1] - offsets_[i]);
}

Cohort Cohort::resample(std::span<const std::size_t> subjects) const {
  std::vector<PersonTimeRecord> out;
  out.reserve(subjects.size() * (records_.size() / std::max<std::size_t>(1, subject_count()) + 1));
  for (std::size_t pos = 0; pos < subjects.size(); ++pos) {
    const std::string suffix = "#" + std::to_string(pos);
    for (const auto& r : subject_records(subjects[pos])) {
      out.push_back(r);
      out.back().subject_id += suffix;
    }
  }
  return Cohort(std::move(out), schema_, k_max_);
}

std::string_view to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::missing_baseline_record: return "missing baseline record";
    case ViolationKind::non_contiguous_intervals: return "non-contiguous intervals";
    case ViolationKind::interval_out_of_range: return "interval out of range";
    case ViolationKind::inconsistent_baseline: return "inconsistent baseline";
    case ViolationKind::non_binary_indicator: return "non-binary indicator";
    case ViolationKind::simultaneous_indicators: return "simultaneous indicators";
    case ViolationKind::record_after_terminal: return "record after terminal event";
    case ViolationKind::censoring_after_competing: return "censoring after competing event";
    case ViolationKind::truncated_follow_up: return "truncated follow-up";
    case ViolationKind::covariate_schema: return "covariate schema";
  }
  return "unknown";
}

std::string ValidationReport::summary(std::size_t max_items) const {
  std::ostringstream os;
  os << violations.size() << " violation(s)";
  for (std::size_t i = 0; i < violations.size() && i < max_items; ++i) {
    const auto& v = violations[i];
    os << "\n  subject " << v.subject_id << ", k=" << v.k << ": " << to_string(v.kind);
    if (!v.message.empty()) os << " (" << v.message << ")";
  }
  if (violations.size() > max_items) os << "\n  ...";
  return os.str();
}

namespace {

bool binary(int v) { return v == 0 || v == 1; }

void validate_subject(const Cohort& cohort, std::span<const PersonTimeRecord> rs,
                      ValidationReport& report) {
  const auto& schema = cohort.schema();
  const int K = cohort.k_max();
  const auto& first = rs.front();
  auto add = [&](int k, ViolationKind kind, std::string msg = {}) {
    report.violations.push_back({first.subject_id, k, kind, std::move(msg)});
  };

  if (std::none_of(rs.begin(), rs.end(), [](const auto& r) { return r.k == 0; }))
    add(first.k, ViolationKind::missing_baseline_record);

  bool contiguous_reported = false;
  std::optional<std::size_t> terminal_at;
  for (std::size_t j = 0; j < rs.size(); ++j) {
    const auto& r = rs[j];
    if (r.k != static_cast<int>(j) && !contiguous_reported) {
      add(r.k, ViolationKind::non_contiguous_intervals,
          "expected k=" + std::to_string(j));
      contiguous_reported = true;
    }
    if (r.k < 0 || r.k > K)
      add(r.k, ViolationKind::interval_out_of_range, "K=" + std::to_string(K));
    if (!binary(r.a) || !binary(r.c_next) || !binary(r.d_next) || !binary(r.y_next))
      add(r.k, ViolationKind::non_binary_indicator);
    if (r.a != first.a || r.l0 != first.l0) add(r.k, ViolationKind::inconsistent_baseline);
    if ((r.c_next == 1 && (r.d_next != 0 || r.y_next != 0)) ||
        (r.d_next == 1 && r.y_next != 0))
      add(r.k, ViolationKind::simultaneous_indicators);
    if (r.l0.size() != schema.size()) {
      add(r.k, ViolationKind::covariate_schema,
          "expected " + std::to_string(schema.size()) + " covariates");
    } else if (j == 0) {
      for (std::size_t c = 0; c < schema.size(); ++c) {
        const auto& levels = schema.covariates[c].levels;
        if (!levels.empty() && std::find(levels.begin(), levels.end(), r.l0[c]) == levels.end())
          add(r.k, ViolationKind::covariate_schema,
              schema.covariates[c].name + "=" + csv::format_double(r.l0[c]) +
                  " not an admissible level");
      }
    }

    if (terminal_at) {
      const auto& t = rs[*terminal_at];
      if (j == *terminal_at + 1)
        add(r.k, ViolationKind::record_after_terminal,
            "terminal event at k=" + std::to_string(t.k));
      if (t.d_next == 1 && r.c_next == 1) add(r.k, ViolationKind::censoring_after_competing);
    } else if (r.terminal()) {
      terminal_at = j;
    }
  }
  const auto& last = rs.back();
  if (!last.terminal() && last.k != K)
    add(last.k, ViolationKind::truncated_follow_up,
        "follow-up ends before K=" + std::to_string(K) + " without an event");
}

}  // namespace

ValidationReport validate_cohort(const Cohort& cohort) {
  ValidationReport report;
  for (std::size_t s = 0; s < cohort.subject_count(); ++s) {
    const auto rs = cohort.subject_records(s);
    validate_subject(cohort, rs, report);
    const int a = rs.front().a;
    if (a != 0 && a != 1) continue;
    auto& counts = report.arm[a];
    ++counts.subjects;
    counts.records += rs.size();
    for (const auto& r : rs) {
      counts.events += r.y_next == 1;
      counts.competing_events += r.d_next == 1;
      counts.censored += r.c_next == 1;
    }
  }
  return report;
}

Cohort load_person_time(std::istream& in, const CovariateSchema& schema,
                        std::optional<int> k_max) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("person-time input is empty (no header row)");
  const auto header = csv::split(line);

  std::vector<std::string> expected = {"subject_id", "k", "a"};
  for (const auto& c : schema.covariates) expected.push_back(c.name);
  expected.insert(expected.end(), {"c_next", "d_next", "y_next"});

  std::vector<std::size_t> col(expected.size(), header.size());
  for (std::size_t h = 0; h < header.size(); ++h) {
    auto it = std::find(expected.begin(), expected.end(), header[h]);
    if (it == expected.end())
      throw DataError("header column " + std::to_string(h + 1) + " '" + std::string(header[h]) +
                      "' is not declared in the covariate schema");
    col[static_cast<std::size_t>(it - expected.begin())] = h;
  }
  for (std::size_t e = 0; e < expected.size(); ++e)
    if (col[e] == header.size()) throw DataError("header is missing column '" + expected[e] + "'");

  std::vector<PersonTimeRecord> records;
  std::size_t row = 1;
  const std::size_t ncov = schema.size();
  while (std::getline(in, line)) {
    ++row;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fields = csv::split(line);
    if (fields.size() != header.size())
      throw DataError("row " + std::to_string(row) + ": expected " +
                      std::to_string(header.size()) + " fields, found " +
                      std::to_string(fields.size()));
    auto fail = [&](std::size_t e, std::string_view why) {
      return DataError("row " + std::to_string(row) + ", column '" + expected[e] + "': " +
                       std::string(why) + " '" + std::string(fields[col[e]]) + "'");
    };
    auto integer = [&](std::size_t e) {
      auto v = csv::parse_int(fields[col[e]]);
      if (!v) throw fail(e, "cannot parse integer");
      return static_cast<int>(*v);
    };
    PersonTimeRecord r;
    r.subject_id = std::string(fields[col[0]]);
    if (r.subject_id.empty()) throw fail(0, "empty subject identifier");
    r.k = integer(1);
    r.a = integer(2);
    r.l0.resize(ncov);
    for (std::size_t c = 0; c < ncov; ++c) {
      const auto field = fields[col[3 + c]];
      if (field.empty() || field == "NA" || field == "NaN" || field == ".")
        throw fail(3 + c, "missing covariate value");
      auto v = csv::parse_double(field);
      if (!v) throw fail(3 + c, "cannot parse number");
      r.l0[c] = *v;
    }
    r.c_next = integer(3 + ncov);
    r.d_next = integer(4 + ncov);
    r.y_next = integer(5 + ncov);
    records.push_back(std::move(r));
  }

  Cohort cohort(std::move(records), schema, k_max);
  const auto report = validate_cohort(cohort);
  if (!report.ok()) throw DataError("invalid person-time data: " + report.summary());
  return cohort;
}

Cohort load_person_time_file(const std::string& path, const CovariateSchema& schema,
                             std::optional<int> k_max) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open person-time file '" + path + "'");
  return load_person_time(in, schema, k_max);
}

void write_person_time(std::ostream& out, const Cohort& cohort) {
  out << "subject_id,k,a";
  for (const auto& c : cohort.schema().covariates) out << ',' << c.name;
  out << ",c_next,d_next,y_next\n";
  for (const auto& r : cohort.records()) {
    out << r.subject_id << ',' << r.k << ',' << r.a;
    for (double v : r.l0) out << ',' << csv::format_double(v);
    out << ',' << r.c_next << ',' << r.d_next << ',' << r.y_next << '\n';
  }
}

namespace {

ExpandedCohort expand_table(const Cohort& table, EventRole role, bool swap) {
  const int K = table.k_max();
  std::vector<PersonTimeRecord> out;
  out.reserve(table.record_count());
  for (std::size_t s = 0; s < table.subject_count(); ++s) {
    const auto rs = table.subject_records(s);
    for (const auto& r : rs) {
      out.push_back(r);
      if (swap) std::swap(out.back().d_next, out.back().y_next);
    }
    const PersonTimeRecord last = out.back();
    if (last.d_next == 1 && last.y_next == 0 && last.c_next == 0) {
      for (int k = last.k + 1; k <= K; ++k) {
        PersonTimeRecord extra = last;
        extra.k = k;
        extra.c_next = 0;
        extra.d_next = 1;
        extra.y_next = 0;
        out.push_back(std::move(extra));
      }
    }
  }
  return ExpandedCohort(Cohort(std::move(out), table.schema(), K), role);
}

}  // namespace

ExpandedCohort expand_risk_sets(const Cohort& cohort, EventRole role) {
  const auto report = validate_cohort(cohort);
  if (!report.ok()) throw DataError("cannot expand risk sets of invalid cohort: " + report.summary());
  return expand_table(cohort, role, role == EventRole::competing_event);
}

ExpandedCohort expand_risk_sets(const ExpandedCohort& expanded) {
  return expand_table(expanded.table(), expanded.role(), false);
}

RecordState prior_state(std::span<const PersonTimeRecord> subject, std::size_t j) {
  if (j == 0) return {};
  const auto& p = subject[j - 1];
  return {p.c_next == 1, p.d_next == 1, p.y_next == 1};
}

}  // namespace crisk
