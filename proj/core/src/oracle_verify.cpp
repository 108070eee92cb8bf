#include <algorithm>
#include <cmath>

#include "crisk/error.hpp"
#include "crisk/oracle.hpp"
#include "oracle_internal.hpp"

namespace crisk::oracle {

bool IdentityReport::ok() const { return count_failed_expectations() == 0; }

std::size_t IdentityReport::count_failed_expectations() const {
  return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [](const auto& e) {
    return e.applicable && e.expected_to_hold && !e.pass;
  }));
}

namespace {

struct Builder {
  IdentityReport& rep;

  IdentityEntry& equal(std::string name, double left, double right, bool expected = true) {
    IdentityEntry e;
    e.name = std::move(name);
    e.left = left;
    e.right = right;
    e.delta = left - right;
    e.pass = std::abs(e.delta) <= rep.tolerance;
    e.expected_to_hold = expected;
    rep.entries.push_back(std::move(e));
    return rep.entries.back();
  }

  IdentityEntry& differ(std::string name, double left, double right) {
    auto& e = equal(std::move(name), left, right);
    e.asserts_difference = true;
    e.pass = std::abs(e.delta) > rep.tolerance;
    return e;
  }

  void not_applicable(std::string name, const std::string& why, bool expected = true) {
    IdentityEntry e;
    e.name = std::move(name);
    e.applicable = false;
    e.expected_to_hold = expected;
    e.left = e.right = e.delta = std::nan("");
    e.note = why;
    rep.entries.push_back(std::move(e));
  }

  /// Evaluates both sides; a positivity failure on either marks the entry
  /// not applicable.
  template <class L, class R>
  void try_equal(const std::string& name, L left, R right, bool expected = true) {
    try {
      const double l = left();
      const double r = right();
      equal(name, l, r, expected);
    } catch (const PositivityError& e) {
      not_applicable(name, e.what(), expected);
    }
  }
};

std::string at(const std::string& what, int a, int k) {
  return what + " [a=" + std::to_string(a) + ", k+1=" + std::to_string(k + 1) + "]";
}

bool positivity_holds(const ObservedLaw& law, Formula f, int a, std::string* why) {
  try {
    check_positivity(law, f, a);
    return true;
  } catch (const PositivityError& e) {
    *why = e.what();
    return false;
  }
}

double truth_or_fail(const std::vector<double>& v, int k, const char* what) {
  const double x = v[static_cast<std::size_t>(k)];
  if (std::isnan(x)) throw PositivityError(std::string(what) + " undefined (empty risk set)");
  return x;
}

}  // namespace

IdentityReport verify_identities(const DiscreteDGP& dgp, double tol) {
  dgp.validate();
  IdentityReport rep;
  rep.dgp = dgp.name;
  rep.tolerance = tol;
  Builder b{rep};

  const auto law = enumerate_observed_law(dgp);
  const auto truth = detail::compute_truth(dgp);
  const bool c1 = satisfies_exchangeability_c1(dgp);
  const bool c2 = satisfies_exchangeability_c2(dgp);
  b.equal("observed law sums to 1", law.total(), 1.0);

  auto F = [&](Formula f, int a, int k) { return [&law, f, a, k] { return exact_identifying_functional(law, f, a, k); }; };

  for (int a = 0; a <= 1; ++a) {
    for (int k = 0; k <= dgp.k_max; ++k) {
      // Algebraically equivalent representations.
      b.try_equal(at("gform1 = ipw1", a, k), F(Formula::gform1, a, k), F(Formula::ipw1, a, k));
      b.try_equal(at("gform2 = gform2taub", a, k), F(Formula::gform2, a, k),
                  F(Formula::gform2taub, a, k));
      b.try_equal(at("gform2 = ipw2first", a, k), F(Formula::gform2, a, k),
                  F(Formula::ipw2first, a, k));
      b.try_equal(at("gform2 = ipw2", a, k), F(Formula::gform2, a, k), F(Formula::ipw2, a, k));
      b.try_equal(at("gform_competing = ipw_competing", a, k), F(Formula::gform_competing, a, k),
                  F(Formula::ipw_competing, a, k));
    }

    // Telescoping moment identities.
    std::string why1, why2;
    const bool pos1 = positivity_holds(law, Formula::gform1, a, &why1);
    const bool pos2 = positivity_holds(law, Formula::gform2, a, &why2);
    WeightedMoments m;
    bool have_m = true;
    try {
      m = weighted_moments(law, a);
    } catch (const PositivityError& e) {
      have_m = false;
      why1 = why2 = e.what();
    }
    for (int k = 0; k <= dgp.k_max; ++k) {
      const auto j = static_cast<std::size_t>(k);
      const auto name_w = at("E[(1-Y)W] telescopes", a, k);
      const auto name_sub = at("E[(1-Y)Wsub] telescopes", a, k);
      const auto name_l5a = at("cs1 denominator = cs2 denominator - cs2 numerator", a, k);
      const auto name_l5b = at("cs2 denominator = previous cs1 denominator - numerator", a, k);
      if (have_m && pos1)
        b.equal(name_w, m.surv_w[j], k == 0 ? 1.0 : m.surv_w[j - 1] - m.y_w[j - 1]);
      else
        b.not_applicable(name_w, why1);
      if (have_m && pos2) {
        b.equal(name_sub, m.surv_wsub[j], k == 0 ? 1.0 : m.surv_wsub[j - 1] - m.y_wsub[j - 1]);
        b.equal(name_l5a, m.cs1_den[j], m.cs2_den[j] - m.cs2_num[j]);
        b.equal(name_l5b, m.cs2_den[j], k == 0 ? 1.0 : m.cs1_den[j - 1] - m.cs1_num[j - 1]);
      } else {
        b.not_applicable(name_sub, why2);
        b.not_applicable(name_l5a, why2);
        b.not_applicable(name_l5b, why2);
      }
    }

    // Identification of counterfactual quantities.
    const auto au = static_cast<std::size_t>(a);
    for (int k = 0; k <= dgp.k_max; ++k) {
      auto T = [&](const std::vector<double>* v, const char* what) {
        return [v, au, k, what] { return truth_or_fail(v[au], k, what); };
      };
      b.try_equal(at("gform1 identifies risk1", a, k), F(Formula::gform1, a, k),
                  T(truth.risk1, "risk1"), c1);
      b.try_equal(at("h1 identifies hazard1", a, k), F(Formula::hazard_h1, a, k),
                  T(truth.hazard1, "hazard1"), c1);
      b.try_equal(at("gform2taub identifies risk2", a, k), F(Formula::gform2taub, a, k),
                  T(truth.risk2, "risk2"), c2);
      b.try_equal(at("H2 identifies hazard2", a, k), F(Formula::hazard_H2, a, k),
                  T(truth.hazard2, "hazard2"), c2);
      b.try_equal(at("cs1 identifies hazard3", a, k), F(Formula::hazard_cs1, a, k),
                  T(truth.hazard3, "hazard3"), c2);
      b.try_equal(at("cs2 identifies hazard4", a, k), F(Formula::hazard_cs2, a, k),
                  T(truth.hazard4, "hazard4"), c2);
      b.try_equal(at("gform_competing identifies risk3", a, k), F(Formula::gform_competing, a, k),
                  T(truth.risk3, "risk3"), c2);
    }
  }

  if (dgp.name == "hazard_paradox_dgp") {
    const auto hp = hazard_paradox_demo(dgp);
    b.differ("marginal hazard ratio at k+1=2 differs from 1", hp.ratio, 1.0);
    b.equal("U=0 hazard ratio at k+1=2 equals 1", hp.u_conditional_ratio[0], 1.0);
    b.equal("U=1 hazard ratio at k+1=2 equals 1", hp.u_conditional_ratio[1], 1.0);
    auto& e = b.equal("Y2 table has no treatment parent", hp.y_table_depends_on_a ? 1.0 : 0.0, 0.0);
    e.note = "treatment has no effect on Y2 in any U stratum";
  }
  return rep;
}

HazardParadox hazard_paradox_demo(const DiscreteDGP& dgp, int k) {
  if (k < 0 || k > dgp.k_max) throw ConfigError("interval index outside 0..K");
  HazardParadox hp;
  hp.hazard_a1 = true_estimand(dgp, Estimand::hazard1, {1, k});
  hp.hazard_a0 = true_estimand(dgp, Estimand::hazard1, {0, k});
  hp.ratio = true_estimand(dgp, Estimand::hazard1_ratio, {1, k});
  for (int u = 0; u <= 1; ++u)
    hp.u_conditional_ratio[u] = u_conditional_hazard(dgp, 1, u, k) / u_conditional_hazard(dgp, 0, u, k);
  const auto& parents = dgp.y[static_cast<std::size_t>(k)].parents;
  hp.y_table_depends_on_a = std::find(parents.begin(), parents.end(), "A") != parents.end();
  return hp;
}

}  // namespace crisk::oracle
