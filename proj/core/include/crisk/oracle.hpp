#pragma once

// Exact computations on small binary structural causal models: observed-data
// laws, identifying functionals, counterfactual truths (single- and
// cross-world), identity checks, and simulation with known ground truth.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "crisk/cohort.hpp"

namespace crisk::oracle {

/// Pr[X = 1 | parents]. Parents are named "U", "L0", "A" or "L1".."L4";
/// entry i of `p` is the configuration whose j-th parent has value bit j of i.
struct Cpt {
  std::vector<std::string> parents;
  std::vector<double> p{0.0};

  static Cpt constant(double prob) { return {{}, {prob}}; }
};

/// Variables in causal order: U, L0, A, then for each interval k = 0..K the
/// block C_{k+1}, D_{k+1}, Y_{k+1}, L_{k+1}. C, D and Y are absorbing, Y is
/// 0 once D is 1, and nothing is censored after a competing event.
struct DiscreteDGP {
  std::string name;
  std::string description;
  int k_max = 1;
  bool has_l0 = false;
  /// L_1..L_K present (L_{K+1} is never needed).
  bool time_varying_l = false;
  double p_u = 0.5;
  Cpt l0 = Cpt::constant(0.0);
  Cpt a = Cpt::constant(0.5);
  /// c[k], d[k], y[k]: tables for C_{k+1}, D_{k+1}, Y_{k+1}.
  std::vector<Cpt> c, d, y;
  /// l[k-1]: table for L_k, k = 1..K.
  std::vector<Cpt> l;

  /// Throws ConfigError on malformed tables, probabilities outside [0,1],
  /// parents that do not precede the variable, or k_max outside 0..max_k.
  void validate(int max_k = 4) const;
};

/// Whether U is kept out of the parent sets that each exchangeability
/// structure forbids: A, C and D for elimination of competing events; A and
/// C for the total-effect structure.
bool satisfies_exchangeability_c1(const DiscreteDGP& dgp);
bool satisfies_exchangeability_c2(const DiscreteDGP& dgp);

DiscreteDGP figure1_dgp();
DiscreteDGP figure2_dgp();
DiscreteDGP hazard_paradox_dgp();
DiscreteDGP section6_extreme_dgp();
std::vector<DiscreteDGP> canned_dgps();
/// Accepts "figure1" or "figure1_dgp" and so on. Throws ConfigError.
DiscreteDGP canned_dgp(std::string_view name);

struct RandomDgpOptions {
  int max_k = 3;
  /// Probability range for event and censoring tables.
  double min_prob = 0.05;
  double max_prob = 0.6;
  bool allow_time_varying_l = true;
};

/// Random DGP with every table strictly inside (0,1), so positivity holds.
DiscreteDGP random_dgp(std::uint64_t seed, const RandomDgpOptions& options = {});

struct InterventionSpec {
  std::optional<int> set_a;
  bool eliminate_censoring = false;
  bool eliminate_competing = false;
  /// D follows the structural values of this earlier world (cross-world).
  std::optional<std::size_t> competing_from;
};

/// Positions in a history code.
struct Layout {
  static constexpr int l0 = 0;
  static constexpr int a = 1;
  static constexpr int stride = 4;
  static int c(int k) { return 2 + stride * k; }
  static int d(int k) { return 3 + stride * k; }
  static int y(int k) { return 4 + stride * k; }
  static int l(int k) { return 5 + stride * k; }
  static std::size_t length(int k_max) { return 2 + stride * static_cast<std::size_t>(k_max + 1); }
};

/// One joint history: U plus one code per world. After a terminal event the
/// remaining positions hold their forced values (C stays 1; after D: C=0,
/// D=1, Y=0; after Y: Y=1; L is 0 when not generated).
struct JointHistory {
  int u = 0;
  std::vector<std::vector<std::int8_t>> codes;
  double prob = 0.0;
};

struct EnumerationOptions {
  std::size_t max_histories = std::size_t{1} << 20;
};

/// Worlds share one exogenous uniform per variable, so their joint law is the
/// comonotone coupling of the structural equations.
std::vector<JointHistory> enumerate_worlds(const DiscreteDGP& dgp,
                                           std::span<const InterventionSpec> worlds,
                                           const EnumerationOptions& options = {});

/// Observed data law with U marginalized: code -> probability.
struct ObservedLaw {
  int k_max = 0;
  std::vector<std::vector<std::int8_t>> codes;
  std::vector<double> probs;

  double total() const;
};

ObservedLaw enumerate_observed_law(const DiscreteDGP& dgp, const EnumerationOptions& options = {});

enum class Formula {
  gform1,
  ipw1,
  gform2,
  gform2taub,
  ipw2first,
  ipw2,
  gform_competing,
  ipw_competing,
  hazard_h1,
  hazard_H2,
  hazard_cs1,
  hazard_cs2,
};

std::string_view to_string(Formula f);

/// Throws PositivityError naming the first empty conditioning event the
/// formula needs under A = a.
void check_positivity(const ObservedLaw& law, Formula f, int a);

/// Exact value under the observed law. Risk formulas give the risk by k+1
/// and hazard formulas the hazard at k+1. Weighted expectations are taken
/// within baseline strata and standardized to the marginal law of L0.
double exact_identifying_functional(const ObservedLaw& law, Formula f, int a, int k);
double exact_identifying_functional(const DiscreteDGP& dgp, Formula f, int a, int k);

/// Weighted moments of the observed law given A = a (not standardized), per
/// interval k. W = W^C W^D; Wsub uses the subdistribution censoring weights.
struct WeightedMoments {
  std::vector<double> y_w, surv_w;          // E[Y_{k+1}(1-Y_k)W_k], E[(1-Y_k)W_k]
  std::vector<double> y_wsub, surv_wsub;    // same with W^sub
  std::vector<double> cs1_num, cs1_den;     // E[Y_{k+1}(1-D_{k+1})(1-Y_k)W^C_k], E[(1-D_{k+1})(1-Y_k)W^C_k]
  std::vector<double> cs2_num, cs2_den;     // E[D_{k+1}(1-Y_k)(1-D_k)W^C_k], E[(1-Y_k)(1-D_k)W^C_k]
};

WeightedMoments weighted_moments(const ObservedLaw& law, int a);

enum class Estimand {
  risk1,
  risk2,
  risk3,
  composite,
  hazard1,
  hazard2,
  hazard3,
  hazard4,
  RD1,
  RD2,
  RD3,
  RD4,
  hazard1_ratio,
  hazard2_ratio,
  hazard3_ratio,
  SACE,
  NDE,
};

std::string_view to_string(Estimand e);
Estimand estimand_from_string(std::string_view s);

struct EstimandArgs {
  int a = 1;
  int k = 0;
};

/// Truth by intervention on the structural model: risks by k+1, hazards at
/// k+1, contrasts of arm 1 against arm 0 (differences; *_ratio for hazards).
/// RD1 direct, RD2 total, RD3 composite, RD4 competing event.
/// Risk 1 and hazard 1 also eliminate competing events. SACE conditions on
/// the principal stratum free of the competing event by k+1 under both arms
/// and throws PositivityError when it is empty. NDE is the cross-world risk
/// with A=1 and D at its a=0 values minus the risk under a=0.
double true_estimand(const DiscreteDGP& dgp, Estimand e, EstimandArgs args);

/// Counterfactual risk by k+1 with A=1 and D held at its a=0 values (the
/// left-hand side of the natural direct effect).
double nde_treated_risk(const DiscreteDGP& dgp, int k);

/// Hazard of Y at k+1 under set A and eliminated censoring and competing
/// events, given U = u.
double u_conditional_hazard(const DiscreteDGP& dgp, int a, int u, int k);

struct IdentityEntry {
  std::string name;
  double left = 0.0;
  double right = 0.0;
  double delta = 0.0;
  bool pass = false;
  bool applicable = true;
  /// The entry should pass given the DGP's structure.
  bool expected_to_hold = true;
  /// The check asserts a difference (|delta| > tol) instead of equality.
  bool asserts_difference = false;
  std::string note;
};

struct IdentityReport {
  std::string dgp;
  double tolerance = 1e-10;
  std::vector<IdentityEntry> entries;

  /// Every applicable entry met its expectation.
  bool ok() const;
  std::size_t count_failed_expectations() const;
};

/// Algebraic equivalences, telescoping moment identities, identification
/// checks whose expectation follows the DGP's exchangeability structure, and
/// (for hazard_paradox_dgp) the hazard non-causality demonstration.
IdentityReport verify_identities(const DiscreteDGP& dgp, double tol = 1e-10);

struct HazardParadox {
  double hazard_a1 = 0.0;
  double hazard_a0 = 0.0;
  double ratio = 0.0;
  double u_conditional_ratio[2] = {0.0, 0.0};
  bool y_table_depends_on_a = false;
};

HazardParadox hazard_paradox_demo(const DiscreteDGP& dgp, int k = 1);

/// n i.i.d. subjects in person-time format. Subject i draws from stream i of
/// `seed`. With an intervention the structural model is mutilated first.
/// The cohort's schema holds L0 (levels 0,1) when the DGP has it.
Cohort simulate_cohort(const DiscreteDGP& dgp, std::size_t n, std::uint64_t seed,
                       const InterventionSpec& intervention = {});

CovariateSchema simulated_schema(const DiscreteDGP& dgp);

std::string dgp_to_json(const DiscreteDGP& dgp);
/// Throws ConfigError on malformed input.
DiscreteDGP dgp_from_json(std::string_view text);
std::string report_to_json(const IdentityReport& report);

}  // namespace crisk::oracle
