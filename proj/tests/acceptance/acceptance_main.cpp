// Acceptance suite: one PASS/FAIL line per criterion.
//
//   crisk_acceptance                 run every criterion
//   crisk_acceptance --criterion N   run one; exit 0 pass, 1 fail, 77 when
//                                    the criterion needs input that is absent
//
// The prostate criteria read data/prostate.csv under the source tree, or the
// file named by CRISK_PROSTATE_CSV (see data/README.md).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "crisk/config.hpp"
#include "crisk/error.hpp"
#include "crisk/estimators.hpp"
#include "crisk/hazards.hpp"
#include "crisk/inference.hpp"
#include "crisk/oracle.hpp"
#include "crisk/pipeline.hpp"
#include "crisk/random.hpp"

namespace {

namespace fs = std::filesystem;
using namespace crisk;
using namespace crisk::oracle;

// Tolerances.
constexpr double kRefRdTol = 0.02;
constexpr double kRefRrTol = 0.05;
constexpr double kExactTol = 1e-10;
constexpr double kCompositeTol = 1e-12;
constexpr double kMcSigmas = 3.0;
constexpr double kCoverageLo = 0.90, kCoverageHi = 0.98;
constexpr double kWidthTol = 0.25;
constexpr double kScoreTol = 1e-6;
constexpr double kFdRelTol = 1e-4;
constexpr double kFdStep = 1e-5;

struct Verdict {
  bool pass = false;
  bool unavailable = false;
  std::string detail;
};

std::optional<fs::path> prostate_csv() {
  if (const char* env = std::getenv("CRISK_PROSTATE_CSV")) {
    if (fs::exists(env)) return fs::path(env);
    return std::nullopt;
  }
  const fs::path p = fs::path(CRISK_SOURCE_DIR) / "data" / "prostate.csv";
  if (fs::exists(p)) return p;
  return std::nullopt;
}

Verdict no_prostate() {
  return {false, true,
          "prostate trial data not found (data/prostate.csv or CRISK_PROSTATE_CSV); "
          "see data/README.md"};
}

RunConfig prostate_config(const fs::path& csv) {
  auto cfg = load_run_config(fs::path(CRISK_SOURCE_DIR) / "configs" / "prostate.json");
  cfg.data_path = csv;
  return cfg;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

int hw_jobs() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

// Each arm's hazards free over time: degree K in time with interaction.
DesignSpec saturated(HazardKind kind, int K) {
  DesignSpec s;
  s.kind = kind;
  s.time_degree = K;
  s.treatment_time_interaction = true;
  return s;
}

struct Fits {
  FittedHazardModel event, competing, censoring;
  HazardModels view() const { return {&event, &competing, &censoring}; }
};

Fits fit_three(const Cohort& c, const DesignSpec& ev, const DesignSpec& cm, const DesignSpec& cs) {
  return {fit_pooled_logistic(c, ev, Outcome::y_next, RiskSet::standard(HazardKind::event)),
          fit_pooled_logistic(c, cm, Outcome::d_next, RiskSet::standard(HazardKind::competing)),
          fit_pooled_logistic(c, cs, Outcome::c_next, RiskSet::standard(HazardKind::censoring))};
}

Fits fit_saturated(const Cohort& c) {
  const int K = c.k_max();
  return fit_three(c, saturated(HazardKind::event, K), saturated(HazardKind::competing, K),
                   saturated(HazardKind::censoring, K));
}

RiskCurve run_estimator(const Cohort& c, const HazardModels& m, Target t, Method meth, int a, int h) {
  const EstimandSpec s{t, meth, a, h};
  return meth == Method::gformula ? estimate_risk_gformula(c, m, s) : estimate_risk_ipw(c, m, s);
}

Cohort subjects_slice(const Cohort& c, std::size_t lo, std::size_t hi) {
  std::vector<PersonTimeRecord> recs;
  for (std::size_t s = lo; s < hi; ++s)
    for (const auto& r : c.subject_records(s)) recs.push_back(r);
  return Cohort(std::move(recs), c.schema(), c.k_max());
}

// ---------------------------------------------------------------------------

// Reference effects for the prostate trial at 60 months: point, 95% interval.
struct ReferenceRow {
  Target target;
  Method method;
  double rr, rd;
  double rr_lo, rr_hi, rd_lo, rd_hi;
};

const std::vector<ReferenceRow>& reference_rows() {
  static const std::vector<ReferenceRow> rows = {
      {Target::total_risk, Method::gformula, 0.76, -0.07, 0.47, 1.24, -0.18, 0.05},
      {Target::total_risk, Method::ipw_cause_specific, 0.78, -0.06, 0.49, 1.28, -0.17, 0.06},
      {Target::total_risk, Method::ipw_subdistribution, 0.78, -0.06, 0.47, 1.32, -0.18, 0.06},
      {Target::competing_risk, Method::gformula, 1.28, 0.12, 0.97, 1.61, -0.01, 0.23},
      {Target::competing_risk, Method::ipw_cause_specific, 1.19, 0.08, 0.91, 1.54, -0.04, 0.20},
      {Target::competing_risk, Method::ipw_subdistribution, 1.19, 0.08, 0.90, 1.54, -0.05, 0.21},
      {Target::direct_risk, Method::gformula, 0.91, -0.03, 0.57, 1.47, -0.19, 0.14},
      {Target::direct_risk, Method::ipw_cause_specific, 0.98, -0.01, 0.56, 1.59, -0.20, 0.17},
  };
  return rows;
}

const EffectRow* find_effect(const Analysis& a, Target t, Method m, Scale s) {
  for (const auto& e : a.effects)
    if (e.request.target == t && e.request.method == m && e.effect.scale == s) return &e;
  return nullptr;
}

Verdict criterion1() {
  const auto csv = prostate_csv();
  if (!csv) return no_prostate();
  auto cfg = prostate_config(*csv);
  cfg.bootstrap.reset();
  const auto t0 = std::chrono::steady_clock::now();
  const auto data = load_configured_cohort(cfg);
  const auto analysis = analyze(data, cfg);
  const double secs = seconds_since(t0);
  Verdict v{true, false, ""};
  std::ostringstream os;
  for (const auto& row : reference_rows()) {
    for (auto scale : {Scale::ratio, Scale::difference}) {
      const auto* e = find_effect(analysis, row.target, row.method, scale);
      const double want = scale == Scale::ratio ? row.rr : row.rd;
      const double tol = scale == Scale::ratio ? kRefRrTol : kRefRdTol;
      if (!e || !e->effect.horizon_value || std::abs(*e->effect.horizon_value - want) > tol) {
        v.pass = false;
        os << " " << to_string(row.target) << "/" << to_string(row.method) << " "
           << (scale == Scale::ratio ? "RR " : "RD ")
           << (e && e->effect.horizon_value ? fmt(*e->effect.horizon_value) : "undefined")
           << " vs " << want << ";";
      }
    }
  }
  if (secs >= 60) v.pass = false;
  v.detail = (v.pass ? "all 16 reference effects within tolerance" : "outside tolerance:" + os.str()) +
             ", point estimates in " + fmt(secs, 3) + " s";
  return v;
}

Verdict criterion2() {
  const auto csv = prostate_csv();
  if (!csv) return no_prostate();
  const auto t0 = std::chrono::steady_clock::now();
  auto cfg = prostate_config(*csv);
  const auto data = load_configured_cohort(cfg);
  const auto cens = fit_pooled_logistic(data, cfg.censoring_model, Outcome::c_next,
                                        RiskSet::standard(HazardKind::censoring));
  const HazardModels m{nullptr, nullptr, &cens};
  const int H = std::min(50, data.k_max() + 1);
  double worst = 0;
  for (int a = 0; a <= 1; ++a) {
    const auto np = nonparametric_cumulative(data, a, Outcome::y_next, H);
    for (auto meth : {Method::ipw_cause_specific, Method::ipw_subdistribution}) {
      const auto c = run_estimator(data, m, Target::total_risk, meth, a, H);
      for (int k = 0; k < H; ++k) worst = std::max(worst, std::abs(c.values[k] - np.values[k]));
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= kExactTol && secs < 10, false,
          "max |IPW - cumulative proportion| over k+1<=50, both arms = " + fmt(worst, 3) + " in " +
              fmt(secs, 3) + " s"};
}

bool algebraic(const std::string& name) {
  return name.find("identifies") == std::string::npos && name.find("hazard ratio") == std::string::npos &&
         name.find("Y2 table") == std::string::npos;
}

Verdict criterion3() {
  const auto t0 = std::chrono::steady_clock::now();
  RandomDgpOptions opt;
  opt.max_k = 3;
  std::size_t dgps = 0, checked = 0, failed = 0;
  double worst = 0;
  std::string first_failure;
  for (std::uint64_t seed = 1; seed <= 120; ++seed) {
    const auto g = random_dgp(seed, opt);
    if (g.k_max > 3) continue;
    ++dgps;
    const auto rep = verify_identities(g, kExactTol);
    for (const auto& e : rep.entries) {
      if (!algebraic(e.name)) continue;
      ++checked;
      if (!e.applicable || !e.pass) {
        ++failed;
        if (first_failure.empty()) first_failure = g.name + ": " + e.name;
      } else {
        worst = std::max(worst, std::abs(e.delta));
      }
    }
  }
  const double secs = seconds_since(t0);
  Verdict v{failed == 0 && dgps >= 100 && secs < 60, false, ""};
  v.detail = std::to_string(checked) + " equivalence and moment identities over " +
             std::to_string(dgps) + " random DGPs, max |delta| " + fmt(worst, 3) + ", " +
             std::to_string(failed) + " failed" + (first_failure.empty() ? "" : " (" + first_failure + ")") +
             ", " + fmt(secs, 3) + " s";
  return v;
}

// Estimates of risk1 (direct) and risk2 (total), indexed [estimator][arm][k].
struct Named {
  const char* name;
  Target target;
  Method method;
  Estimand truth;
};
const Named kCrit4[] = {
    {"risk1 g-formula", Target::direct_risk, Method::gformula, Estimand::risk1},
    {"risk1 IPW", Target::direct_risk, Method::ipw_cause_specific, Estimand::risk1},
    {"risk2 g-formula", Target::total_risk, Method::gformula, Estimand::risk2},
    {"risk2 IPW-cs", Target::total_risk, Method::ipw_cause_specific, Estimand::risk2},
    {"risk2 IPW-sub", Target::total_risk, Method::ipw_subdistribution, Estimand::risk2},
};

std::vector<double> estimates4(const Cohort& c) {
  const auto f = fit_saturated(c);
  const int H = c.k_max() + 1;
  std::vector<double> out;
  for (const auto& n : kCrit4)
    for (int a = 0; a <= 1; ++a) {
      const auto r = run_estimator(c, f.view(), n.target, n.method, a, H);
      out.insert(out.end(), r.values.begin(), r.values.end());
    }
  return out;
}

struct McResult {
  std::vector<double> est, se, truth;
};

McResult monte_carlo(const DiscreteDGP& g, std::uint64_t seed) {
  const std::size_t n = 200000, batches = 100, per = n / batches;
  const auto c = simulate_cohort(g, n, seed);
  McResult r;
  r.est = estimates4(c);
  std::vector<std::vector<double>> b(batches);
  std::vector<std::thread> pool;
  std::atomic<std::size_t> next{0};
  for (int w = 0; w < hw_jobs(); ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < batches;)
        b[i] = estimates4(subjects_slice(c, i * per, (i + 1) * per));
    });
  for (auto& t : pool) t.join();
  r.se.assign(r.est.size(), 0.0);
  for (std::size_t q = 0; q < r.est.size(); ++q) {
    double mean = 0, ss = 0;
    for (const auto& v : b) mean += v[q];
    mean /= batches;
    for (const auto& v : b) ss += (v[q] - mean) * (v[q] - mean);
    r.se[q] = std::sqrt(ss / (batches - 1)) / std::sqrt(static_cast<double>(batches));
  }
  const int H = g.k_max + 1;
  for (const auto& nm : kCrit4)
    for (int a = 0; a <= 1; ++a)
      for (int k = 0; k < H; ++k) r.truth.push_back(true_estimand(g, nm.truth, {a, k}));
  return r;
}

Verdict criterion4() {
  const auto t0 = std::chrono::steady_clock::now();
  std::ostringstream os;
  bool ok = true;

  const auto g1 = figure1_dgp();
  const auto m1 = monte_carlo(g1, 401);
  double worst1 = 0;
  for (std::size_t q = 0; q < m1.est.size(); ++q) {
    const double z = std::abs(m1.est[q] - m1.truth[q]) / m1.se[q];
    worst1 = std::max(worst1, z);
    if (z > kMcSigmas) ok = false;
  }
  os << "figure1: max |est-truth|/SE " << fmt(worst1, 3) << " over " << m1.est.size() << " estimates";

  const auto g2 = figure2_dgp();
  const auto m2 = monte_carlo(g2, 402);
  const int H = g2.k_max + 1;
  double worst_total = 0, min_direct = 1e300;
  for (std::size_t e = 0; e < std::size(kCrit4); ++e)
    for (int a = 0; a <= 1; ++a)
      for (int k = 0; k < H; ++k) {
        const std::size_t q = (e * 2 + static_cast<std::size_t>(a)) * static_cast<std::size_t>(H) +
                              static_cast<std::size_t>(k);
        const double z = std::abs(m2.est[q] - m2.truth[q]) / m2.se[q];
        if (kCrit4[e].target == Target::total_risk) {
          worst_total = std::max(worst_total, z);
          if (z > kMcSigmas) ok = false;
        } else if (k == H - 1) {
          min_direct = std::min(min_direct, z);
          if (z <= kMcSigmas) ok = false;
        }
      }
  os << "; figure2: total-risk max " << fmt(worst_total, 3) << " SE, direct-risk bias at k+1="
     << H << " at least " << fmt(min_direct, 3) << " SE";
  const double secs = seconds_since(t0);
  if (secs >= 300) ok = false;
  os << ", " << fmt(secs, 3) << " s";
  return {ok, false, os.str()};
}

Verdict criterion5() {
  const auto g = hazard_paradox_dgp();
  const auto d = hazard_paradox_demo(g, 1);
  const bool ok = std::abs(d.ratio - 1.0) > 1e-6 && !d.y_table_depends_on_a &&
                  std::abs(d.u_conditional_ratio[0] - 1.0) < 1e-12 &&
                  std::abs(d.u_conditional_ratio[1] - 1.0) < 1e-12;
  return {ok, false,
          "hazard ratio at k+1=2 = " + fmt(d.ratio, 6) + " (h1 " + fmt(d.hazard_a1, 6) + " vs h0 " +
              fmt(d.hazard_a0, 6) + "); U-stratum ratios " + fmt(d.u_conditional_ratio[0], 6) + ", " +
              fmt(d.u_conditional_ratio[1], 6) + "; Y2 table has no A parent: " +
              (d.y_table_depends_on_a ? "no" : "yes")};
}

DiscreteDGP figure2_with_l0() {
  auto g = figure2_dgp();
  g.has_l0 = true;
  g.l0 = Cpt::constant(0.4);
  g.a = {{"L0"}, {0.35, 0.65}};
  g.y = std::vector<Cpt>(static_cast<std::size_t>(g.k_max + 1),
                         {{"A", "U", "L0"}, {0.03, 0.02, 0.15, 0.09, 0.06, 0.04, 0.2, 0.12}});
  g.c = std::vector<Cpt>(static_cast<std::size_t>(g.k_max + 1), {{"A", "L0"}, {0.04, 0.06, 0.08, 0.1}});
  g.validate();
  return g;
}

Verdict criterion6() {
  std::size_t compared = 0;
  double worst = 0;
  auto check = [&](const Cohort& c, const HazardModels& m) {
    const int H = c.k_max() + 1;
    for (auto meth : {Method::gformula, Method::ipw_cause_specific, Method::ipw_subdistribution})
      for (int a = 0; a <= 1; ++a) {
        const auto t = run_estimator(c, m, Target::total_risk, meth, a, H);
        const auto d = run_estimator(c, m, Target::competing_risk, meth, a, H);
        const auto comp = run_estimator(c, m, Target::composite_risk, meth, a, H);
        for (int k = 0; k < H; ++k) {
          worst = std::max(worst, std::abs(comp.values[k] - (t.values[k] + d.values[k])));
          ++compared;
        }
      }
  };
  const auto g = figure2_with_l0();
  const auto c = simulate_cohort(g, 5000, 61);
  DesignSpec ev;
  ev.time_degree = 2;
  ev.treatment_time_interaction = true;
  ev.covariates = {{"L0", {}}};
  auto cm = ev;
  cm.kind = HazardKind::competing;
  auto cs = ev;
  cs.kind = HazardKind::censoring;
  check(c, fit_three(c, ev, cm, cs).view());
  const auto c2 = simulate_cohort(figure1_dgp(), 5000, 62);
  check(c2, fit_saturated(c2).view());
  if (const auto csv = prostate_csv()) {
    const auto cfg = prostate_config(*csv);
    const auto data = load_configured_cohort(cfg);
    const auto fm = fit_models(data, cfg);
    check(data, fm.view());
  }
  return {worst <= kCompositeTol, false,
          std::to_string(compared) + " interval comparisons over 3 methods x 2 arms, max |composite - "
          "(total + competing)| = " + fmt(worst, 3)};
}

// Linear in time per arm. At n=500 arm 1 sees about five events per interval,
// and saturated or quadratic models separate whenever a resample empties the
// last interval (or the last two).
DesignSpec smooth(HazardKind kind) {
  return saturated(kind, 1);
}

double rd2_gformula(const Cohort& c) {
  const int K = c.k_max();
  const auto ev = fit_pooled_logistic(c, smooth(HazardKind::event), Outcome::y_next,
                                      RiskSet::standard(HazardKind::event));
  const auto cm = fit_pooled_logistic(c, smooth(HazardKind::competing), Outcome::d_next,
                                      RiskSet::standard(HazardKind::competing));
  const HazardModels m{&ev, &cm, nullptr};
  return run_estimator(c, m, Target::total_risk, Method::gformula, 1, K + 1).at_horizon() -
         run_estimator(c, m, Target::total_risk, Method::gformula, 0, K + 1).at_horizon();
}

Verdict criterion7() {
  const auto t0 = std::chrono::steady_clock::now();
  std::ostringstream os;
  bool ok = true;

  // Determinism across reruns and worker counts.
  const auto g = figure2_dgp();
  const auto c = simulate_cohort(g, 500, 70);
  const Statistic stat = [](const Cohort& d) { return std::vector<double>{rd2_gformula(d)}; };
  BootstrapPlan plan;
  plan.replicates = 200;
  plan.seed = 7;
  const auto b1 = bootstrap_percentile_ci(c, stat, plan, 1);
  const auto b2 = bootstrap_percentile_ci(c, stat, plan, hw_jobs());
  const auto b3 = bootstrap_percentile_ci(c, stat, plan, 3);
  const bool same = b1.draws == b2.draws && b1.draws == b3.draws &&
                    b1.intervals[0].lower == b2.intervals[0].lower &&
                    b1.intervals[0].upper == b2.intervals[0].upper;
  ok = ok && same;
  os << "determinism " << (same ? "exact" : "BROKEN");

  // Coverage over 200 simulated data sets.
  const double truth = true_estimand(g, Estimand::RD2, {1, g.k_max});
  int covered = 0, runs = 0;
  for (std::uint64_t d = 0; d < 200; ++d) {
    const auto data = simulate_cohort(g, 500, derive_seed(7007, d));
    BootstrapPlan p;
    p.replicates = 200;
    p.seed = derive_seed(7008, d);
    const auto r = bootstrap_percentile_ci(data, stat, p, hw_jobs());
    ++runs;
    covered += r.intervals[0].lower <= truth && truth <= r.intervals[0].upper;
  }
  const double coverage = static_cast<double>(covered) / runs;
  const bool cov_ok = coverage >= kCoverageLo && coverage <= kCoverageHi;
  ok = ok && cov_ok;
  os << "; RD2 95% CI coverage " << covered << "/" << runs << " = " << fmt(coverage, 3);

  const auto csv = prostate_csv();
  if (!csv) {
    os << "; prostate CI check not run: prostate trial data not found";
    os << " (" << fmt(seconds_since(t0), 3) << " s)";
    return {false, true, os.str()};
  }
  auto cfg = prostate_config(*csv);
  const auto data = load_configured_cohort(cfg);
  Analysis analysis = analyze(data, cfg);
  const Statistic pstat = [&cfg](const Cohort& d) { return summary_vector(analyze(d, cfg), cfg); };
  const auto boot = bootstrap_percentile_ci(data, pstat, *cfg.bootstrap, hw_jobs());
  const auto labels = summary_labels(cfg);
  const std::size_t per_req = 2 + cfg.scales.size();
  int bad = 0, rows = 0;
  for (const auto& row : reference_rows()) {
    for (std::size_t r = 0; r < cfg.estimands.size(); ++r) {
      if (cfg.estimands[r].target != row.target || cfg.estimands[r].method != row.method) continue;
      for (std::size_t s = 0; s < cfg.scales.size(); ++s) {
        const auto& iv = boot.intervals[r * per_req + 2 + s];
        const bool ratio = cfg.scales[s] == Scale::ratio;
        const double ref_w = ratio ? row.rr_hi - row.rr_lo : row.rd_hi - row.rd_lo;
        const double w = iv.upper - iv.lower;
        ++rows;
        if (!(iv.lower <= iv.point && iv.point <= iv.upper) ||
            std::abs(w - ref_w) > kWidthTol * ref_w) {
          ++bad;
          os << "; " << labels[r * per_req + 2 + s] << " (" << fmt(iv.lower) << ", " << fmt(iv.upper)
             << ") width " << fmt(w, 3) << " vs " << fmt(ref_w, 3);
        }
      }
    }
  }
  ok = ok && bad == 0;
  os << "; prostate CIs: " << rows - bad << "/" << rows << " bracket and match widths";
  os << " (" << fmt(seconds_since(t0), 3) << " s)";
  return {ok, false, os.str()};
}

struct FitCase {
  std::string label;
  PooledData rows;
  Design design;
  Outcome outcome;
};

void add_cases(std::vector<FitCase>& out, const std::string& label, const Cohort& c,
               const std::vector<DesignSpec>& specs) {
  for (const auto& s : specs) {
    Design d(s, c.schema(), c.k_max());
    const auto o = s.kind == HazardKind::event       ? Outcome::y_next
                   : s.kind == HazardKind::competing ? Outcome::d_next
                                                     : Outcome::c_next;
    out.push_back({label + "/" + std::string(to_string(s.kind)),
                   assemble_pooled_data(c, d, o, RiskSet::standard(s.kind)), d, o});
  }
}

Verdict criterion8() {
  std::vector<FitCase> cases;
  {
    const auto c = simulate_cohort(figure1_dgp(), 200000, 801);
    const int K = c.k_max();
    add_cases(cases, "figure1 n=200000", c,
              {saturated(HazardKind::event, K), saturated(HazardKind::competing, K),
               saturated(HazardKind::censoring, K)});
  }
  for (std::uint64_t s = 1; s <= 20; ++s) {
    const auto g = random_dgp(s);
    const auto c = simulate_cohort(g, 4000, 900 + s);
    std::vector<DesignSpec> specs;
    for (auto kind : {HazardKind::event, HazardKind::competing, HazardKind::censoring}) {
      DesignSpec d;
      d.kind = kind;
      d.time_degree = std::min(2, g.k_max);
      if (g.has_l0) d.covariates = {{"L0", {}}};
      specs.push_back(d);
    }
    add_cases(cases, g.name, c, specs);
  }
  if (const auto csv = prostate_csv()) {
    const auto cfg = prostate_config(*csv);
    const auto data = load_configured_cohort(cfg);
    add_cases(cases, "prostate", data, {cfg.event_model, cfg.competing_model, cfg.censoring_model});
  }

  std::size_t converged = 0, skipped = 0, bad = 0;
  double worst_score = 0, worst_fd = 0;
  std::string first_bad;
  for (const auto& fc : cases) {
    FittedHazardModel m;
    try {
      m = fit_pooled_logistic(fc.rows, fc.design, fc.outcome);
    } catch (const NumericalError&) {
      ++skipped;
      continue;
    }
    if (!m.converged) {
      ++skipped;
      continue;
    }
    ++converged;
    auto fd_check = [&](std::vector<double> beta) {
      const auto g = score(fc.rows, beta);
      double worst = 0, max_abs = 0;
      for (std::size_t j = 0; j < beta.size(); ++j) {
        const double b = beta[j];
        beta[j] = b + kFdStep;
        const double up = log_likelihood(fc.rows, beta);
        beta[j] = b - kFdStep;
        const double down = log_likelihood(fc.rows, beta);
        beta[j] = b;
        const double fd = (up - down) / (2 * kFdStep);
        worst = std::max(worst, std::abs(fd - g[j]) / std::max(1.0, std::abs(g[j])));
        max_abs = std::max(max_abs, std::abs(g[j]));
      }
      return std::pair{max_abs, worst};
    };
    const auto [score_max, fd_at_opt] = fd_check(m.coefficients);
    auto moved = m.coefficients;
    for (auto& b : moved) b += 0.05;
    const auto [unused, fd_moved] = fd_check(moved);
    (void)unused;
    worst_score = std::max(worst_score, score_max);
    worst_fd = std::max({worst_fd, fd_at_opt, fd_moved});
    if (score_max >= kScoreTol || fd_at_opt > kFdRelTol || fd_moved > kFdRelTol) {
      ++bad;
      if (first_bad.empty()) first_bad = fc.label;
    }
  }
  return {bad == 0 && converged > 0, false,
          std::to_string(converged) + " converged fits (" + std::to_string(skipped) +
              " not converged, excluded): max |score| " + fmt(worst_score, 3) +
              ", max relative score/FD gap " + fmt(worst_fd, 3) + (first_bad.empty() ? "" : ", first failure " + first_bad)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"crisk acceptance suite"};
  int only = 0;
  app.add_option("--criterion", only, "run a single criterion (1-8)")->check(CLI::Range(1, 8));
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::function<Verdict()>> criteria = {criterion1, criterion2, criterion3,
                                                          criterion4, criterion5, criterion6,
                                                          criterion7, criterion8};
  int failed = 0, unavailable = 0;
  for (int i = 1; i <= 8; ++i) {
    if (only && i != only) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[static_cast<std::size_t>(i - 1)]();
    } catch (const std::exception& e) {
      v = {false, false, std::string("error: ") + e.what()};
    }
    std::cout << (v.pass ? "PASS" : "FAIL") << "  criterion " << i << ": " << v.detail << " ["
              << fmt(seconds_since(t0), 3) << " s]" << std::endl;
    if (!v.pass) (v.unavailable ? unavailable : failed)++;
  }
  if (failed) return 1;
  if (unavailable) return 77;
  return 0;
}
