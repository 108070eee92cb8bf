#pragma once

// Small builders shared by the unit tests.

#include <string>
#include <vector>

#include "crisk/cohort.hpp"

namespace crisk::test {

/// One subject followed from k = 0 through `last`; `end` is the terminal
/// indicator on the last record: 'y', 'd', 'c', or 'n' (administrative end).
struct Subject {
  std::string id;
  int a = 0;
  std::vector<double> l0;
  int last = 0;
  char end = 'n';
};

inline std::vector<PersonTimeRecord> records_of(const Subject& s) {
  std::vector<PersonTimeRecord> out;
  for (int k = 0; k <= s.last; ++k) {
    PersonTimeRecord r{s.id, k, s.a, s.l0, 0, 0, 0};
    if (k == s.last) {
      r.c_next = s.end == 'c';
      r.d_next = s.end == 'd';
      r.y_next = s.end == 'y';
    }
    out.push_back(r);
  }
  return out;
}

inline Cohort cohort_of(const std::vector<Subject>& subjects, int k_max,
                        CovariateSchema schema = {}) {
  std::vector<PersonTimeRecord> recs;
  for (const auto& s : subjects) {
    auto r = records_of(s);
    recs.insert(recs.end(), r.begin(), r.end());
  }
  return Cohort(std::move(recs), std::move(schema), k_max);
}

/// Copies of one subject pattern with distinct ids.
inline void add_copies(std::vector<Subject>& out, int n, int a, int last, char end,
                       std::vector<double> l0 = {}) {
  for (int i = 0; i < n; ++i)
    out.push_back({"s" + std::to_string(out.size()), a, l0, last, end});
}

}  // namespace crisk::test
