#include "crisk/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "crisk/error.hpp"
#include "csv.hpp"

namespace crisk {

std::string_view to_string(Target t) {
  switch (t) {
    case Target::direct_risk: return "direct_risk";
    case Target::total_risk: return "total_risk";
    case Target::competing_risk: return "competing_risk";
    case Target::composite_risk: return "composite_risk";
  }
  return "unknown";
}

std::string_view to_string(Method m) {
  switch (m) {
    case Method::gformula: return "gformula";
    case Method::ipw_cause_specific: return "ipw_cause_specific";
    case Method::ipw_subdistribution: return "ipw_subdistribution";
  }
  return "unknown";
}

Target target_from_string(std::string_view s) {
  for (auto t : {Target::direct_risk, Target::total_risk, Target::competing_risk,
                 Target::composite_risk})
    if (s == to_string(t)) return t;
  throw ConfigError("unknown estimand target '" + std::string(s) + "'");
}

Method method_from_string(std::string_view s) {
  for (auto m : {Method::gformula, Method::ipw_cause_specific, Method::ipw_subdistribution})
    if (s == to_string(m)) return m;
  throw ConfigError("unknown estimation method '" + std::string(s) + "'");
}

std::string_view to_string(Scale s) { return s == Scale::difference ? "difference" : "ratio"; }

Scale scale_from_string(std::string_view s) {
  if (s == "difference") return Scale::difference;
  if (s == "ratio") return Scale::ratio;
  throw ConfigError("unknown contrast scale '" + std::string(s) + "'");
}

void check_admissible(Target target, Method method) {
  if (target == Target::direct_risk && method == Method::ipw_subdistribution)
    throw ConfigError("inadmissible estimand: direct_risk has no subdistribution-weighted "
                      "estimator (use gformula or ipw_cause_specific)");
}

namespace {

std::string label(const EstimandSpec& s) {
  return std::string(to_string(s.target)) + "/" + std::string(to_string(s.method)) +
         " (a=" + std::to_string(s.arm) + ")";
}

void check_spec(const Cohort& data, const EstimandSpec& spec) {
  check_admissible(spec.target, spec.method);
  if (spec.arm != 0 && spec.arm != 1) throw ConfigError("arm must be 0 or 1");
  if (spec.horizon < 1 || spec.horizon > data.k_max() + 1)
    throw ConfigError("horizon " + std::to_string(spec.horizon) + " outside 1.." +
                      std::to_string(data.k_max() + 1));
}

const FittedHazardModel& need(const FittedHazardModel* m, const char* what,
                              const EstimandSpec& spec) {
  if (!m) throw ConfigError(label(spec) + " requires a fitted " + what + " hazard model");
  if (!m->converged)
    throw NumericalError(label(spec) + ": the " + what + " hazard model did not converge");
  return *m;
}

void check_curve(const RiskCurve& c) {
  for (double v : c.values)
    if (!std::isfinite(v)) throw NumericalError(label(c.estimand) + ": non-finite risk");
}

// Weighted sums over one arm's records at each interval.
struct WeightedSums {
  std::vector<double> w, yw, dw, not_dw;
  explicit WeightedSums(int horizon)
      : w(horizon, 0.0), yw(horizon, 0.0), dw(horizon, 0.0), not_dw(horizon, 0.0) {}
};

struct WeightedRecord {
  int k;
  double w;
  int y;
  int d;
};

WeightedSums sum_weights(std::vector<WeightedRecord>& recs, int horizon,
                         const IpwOptions& options) {
  if (options.truncate_percentile) {
    const double pct = *options.truncate_percentile;
    if (!(pct > 0.0 && pct <= 100.0)) throw ConfigError("truncation percentile must be in (0,100]");
    std::vector<double> pos;
    for (const auto& r : recs)
      if (r.w > 0) pos.push_back(r.w);
    if (!pos.empty()) {
      std::sort(pos.begin(), pos.end());
      const double h = (pct / 100.0) * static_cast<double>(pos.size() - 1);
      const auto lo = static_cast<std::size_t>(std::floor(h));
      const auto hi = std::min(lo + 1, pos.size() - 1);
      const double cap = pos[lo] + (h - static_cast<double>(lo)) * (pos[hi] - pos[lo]);
      for (auto& r : recs) r.w = std::min(r.w, cap);
    }
  }
  WeightedSums s(horizon);
  for (const auto& r : recs) {
    if (r.k >= horizon) continue;
    s.w[r.k] += r.w;
    s.yw[r.k] += r.y * r.w;
    s.dw[r.k] += r.d * r.w;
    s.not_dw[r.k] += (1 - r.d) * r.w;
  }
  return s;
}

double checked_weight(double indicator, double denom, const EstimandSpec& spec, int k) {
  if (!(denom > 0.0) || !std::isfinite(denom))
    throw NumericalError(label(spec) + ": predicted probability of remaining uncensored is 0 at "
                                       "k=" + std::to_string(k) + " (infinite weight)");
  return indicator / denom;
}

void hold_warning(RiskCurve& c, int k) {
  c.warnings.push_back("empty weighted risk set at k+1=" + std::to_string(k + 1) +
                       "; curve held constant from there on");
}

// Product-limit accumulation for the direct estimator and subdistribution
// estimators: risk += h * S, S *= 1 - h.
RiskCurve product_limit(const WeightedSums& s, const EstimandSpec& spec) {
  RiskCurve c{spec, std::vector<double>(spec.horizon, 0.0), {}};
  double risk = 0.0, surv = 1.0;
  bool ended = false;
  for (int k = 0; k < spec.horizon; ++k) {
    if (!ended && s.w[k] <= 0.0) {
      hold_warning(c, k);
      ended = true;
    }
    if (!ended) {
      const double h = std::clamp(s.yw[k] / s.w[k], 0.0, 1.0);
      risk += h * surv;
      surv *= 1.0 - h;
    }
    c.values[k] = risk;
  }
  return c;
}

// Weighted Aalen-Johansen accumulation with cause-specific hazards h1 (event
// of interest among those free of the competing event at k+1) and h2.
void aalen_johansen(const WeightedSums& s, RiskCurve* total, RiskCurve* competing, int horizon) {
  double rt = 0.0, rc = 0.0, surv = 1.0;
  bool ended = false;
  for (int k = 0; k < horizon; ++k) {
    if (!ended && s.w[k] <= 0.0) {
      if (total) hold_warning(*total, k);
      if (competing) hold_warning(*competing, k);
      ended = true;
    }
    if (!ended) {
      const double h2 = std::clamp(s.dw[k] / s.w[k], 0.0, 1.0);
      const double h1 = s.not_dw[k] > 0.0 ? std::clamp(s.yw[k] / s.not_dw[k], 0.0, 1.0) : 0.0;
      rt += h1 * (1.0 - h2) * surv;
      rc += h2 * surv;
      surv *= (1.0 - h1) * (1.0 - h2);
    }
    if (total) total->values[k] = rt;
    if (competing) competing->values[k] = rc;
  }
}

RiskCurve direct_or_cs(const Cohort& data, const HazardModels& models, const EstimandSpec& spec,
                       const IpwOptions& options) {
  const bool direct = spec.target == Target::direct_risk;
  const auto& cens = need(models.censoring, "censoring", spec);
  const FittedHazardModel* comp = direct ? &need(models.competing, "competing", spec) : nullptr;

  std::vector<WeightedRecord> recs;
  for (std::size_t s = 0; s < data.subject_count(); ++s) {
    if (data.treatment(s) != spec.arm) continue;
    const auto& l0 = data.baseline(s);
    double denom = 1.0;
    for (const auto& r : data.subject_records(s)) {
      if (r.k >= spec.horizon) break;
      denom *= 1.0 - predict_hazard(cens, r.a, l0, r.k);
      if (comp) denom *= 1.0 - predict_hazard(*comp, r.a, l0, r.k);
      const double ind = direct ? (1 - r.c_next) * (1 - r.d_next) : (1 - r.c_next);
      recs.push_back({r.k, checked_weight(ind, denom, spec, r.k), r.y_next, r.d_next});
    }
  }
  const auto sums = sum_weights(recs, spec.horizon, options);

  if (direct) return product_limit(sums, spec);
  RiskCurve total{spec, std::vector<double>(spec.horizon, 0.0), {}};
  RiskCurve competing = total;
  total.estimand.target = Target::total_risk;
  competing.estimand.target = Target::competing_risk;
  aalen_johansen(sums, &total, &competing, spec.horizon);
  switch (spec.target) {
    case Target::total_risk: return total;
    case Target::competing_risk: return competing;
    default: return composite_of(total, competing);
  }
}

}  // namespace

RiskCurve estimate_risk_gformula(const Cohort& data, const HazardModels& models,
                                 const EstimandSpec& spec) {
  check_spec(data, spec);
  if (spec.method != Method::gformula)
    throw ConfigError("estimate_risk_gformula called with method " +
                      std::string(to_string(spec.method)));
  const auto& p_model = need(models.event, "event", spec);
  const bool direct = spec.target == Target::direct_risk;
  const FittedHazardModel* q_model = direct ? nullptr : &need(models.competing, "competing", spec);
  const std::size_t n = data.subject_count();
  if (n == 0) throw DataError("g-formula requires at least one subject");

  const auto H = static_cast<std::size_t>(spec.horizon);
  std::vector<double> total(H, 0.0), competing(H, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& l0 = data.baseline(i);
    double surv = 1.0, rt = 0.0, rc = 0.0;
    for (std::size_t k = 0; k < H; ++k) {
      const int kk = static_cast<int>(k);
      const double p = predict_hazard(p_model, spec.arm, l0, kk);
      const double q = q_model ? predict_hazard(*q_model, spec.arm, l0, kk) : 0.0;
      rt += p * (1.0 - q) * surv;
      rc += q * surv;
      surv *= (1.0 - p) * (1.0 - q);
      total[k] += rt;
      competing[k] += rc;
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  RiskCurve out{spec, std::vector<double>(H), {}};
  for (std::size_t k = 0; k < H; ++k) {
    const double t = total[k] * inv_n, c = competing[k] * inv_n;
    switch (spec.target) {
      case Target::direct_risk:
      case Target::total_risk: out.values[k] = t; break;
      case Target::competing_risk: out.values[k] = c; break;
      case Target::composite_risk: out.values[k] = t + c; break;
    }
  }
  check_curve(out);
  return out;
}

RiskCurve estimate_risk_ipw(const ExpandedCohort& data, const FittedHazardModel& censoring,
                            const EstimandSpec& spec, const IpwOptions& options) {
  check_spec(data.table(), spec);
  if (spec.method != Method::ipw_subdistribution)
    throw ConfigError("expanded data is only used by ipw_subdistribution");
  const auto want = spec.target == Target::total_risk       ? EventRole::event_of_interest
                    : spec.target == Target::competing_risk ? EventRole::competing_event
                                                            : data.role();
  if (spec.target == Target::composite_risk)
    throw ConfigError("composite subdistribution risk needs both expanded tables; use the "
                      "person-time overload");
  if (data.role() != want)
    throw ConfigError(label(spec) + ": expanded table was built for the other event role");
  const auto& cens = need(&censoring, "censoring", spec);

  const auto& table = data.table();
  std::vector<WeightedRecord> recs;
  for (std::size_t s = 0; s < table.subject_count(); ++s) {
    if (table.treatment(s) != spec.arm) continue;
    const auto& l0 = table.baseline(s);
    const auto rs = table.subject_records(s);
    double denom = 1.0;
    for (std::size_t j = 0; j < rs.size(); ++j) {
      const auto& r = rs[j];
      if (r.k >= spec.horizon) break;
      // Nobody can be lost after a competing event: censoring hazard 0.
      if (!prior_state(rs, j).prior_d) denom *= 1.0 - predict_hazard(cens, r.a, l0, r.k);
      recs.push_back({r.k, checked_weight(1 - r.c_next, denom, spec, r.k), r.y_next, r.d_next});
    }
  }
  auto c = product_limit(sum_weights(recs, spec.horizon, options), spec);
  check_curve(c);
  return c;
}

RiskCurve estimate_risk_ipw(const Cohort& data, const HazardModels& models,
                            const EstimandSpec& spec, const IpwOptions& options) {
  check_spec(data, spec);
  if (spec.method == Method::gformula)
    throw ConfigError("estimate_risk_ipw called with method gformula");
  if (spec.method == Method::ipw_subdistribution) {
    const auto& cens = need(models.censoring, "censoring", spec);
    auto run = [&](Target t, EventRole role) {
      EstimandSpec s = spec;
      s.target = t;
      return estimate_risk_ipw(expand_risk_sets(data, role), cens, s, options);
    };
    if (spec.target == Target::total_risk) return run(Target::total_risk, EventRole::event_of_interest);
    if (spec.target == Target::competing_risk)
      return run(Target::competing_risk, EventRole::competing_event);
    return composite_of(run(Target::total_risk, EventRole::event_of_interest),
                        run(Target::competing_risk, EventRole::competing_event));
  }
  auto c = direct_or_cs(data, models, spec, options);
  check_curve(c);
  return c;
}

RiskCurve nonparametric_cumulative(const Cohort& data, int arm, Outcome event, int horizon) {
  if (event == Outcome::c_next)
    throw ConfigError("nonparametric cumulative proportion is defined for y_next or d_next");
  EstimandSpec spec{event == Outcome::y_next ? Target::total_risk : Target::competing_risk,
                    Method::ipw_cause_specific, arm, horizon};
  if (horizon < 1 || horizon > data.k_max() + 1)
    throw ConfigError("horizon " + std::to_string(horizon) + " outside 1.." +
                      std::to_string(data.k_max() + 1));
  std::vector<double> counts(static_cast<std::size_t>(horizon), 0.0);
  std::size_t n = 0;
  for (std::size_t s = 0; s < data.subject_count(); ++s) {
    if (data.treatment(s) != arm) continue;
    ++n;
    for (const auto& r : data.subject_records(s)) {
      const int hit = event == Outcome::y_next ? r.y_next : r.d_next;
      if (hit == 1 && r.k < horizon) {
        counts[static_cast<std::size_t>(r.k)] += 1.0;
        break;
      }
    }
  }
  if (n == 0) throw DataError("arm a=" + std::to_string(arm) + " has no subjects");
  RiskCurve c{spec, std::vector<double>(counts.size()), {}};
  double cum = 0.0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    cum += counts[k];
    c.values[k] = cum / static_cast<double>(n);
  }
  return c;
}

RiskCurve composite_of(const RiskCurve& total, const RiskCurve& competing) {
  if (total.estimand.method != competing.estimand.method || total.arm() != competing.arm() ||
      total.values.size() != competing.values.size())
    throw ConfigError("composite risk needs total and competing curves of one method and arm");
  RiskCurve c = total;
  c.estimand.target = Target::composite_risk;
  for (std::size_t k = 0; k < c.values.size(); ++k) c.values[k] += competing.values[k];
  c.warnings.insert(c.warnings.end(), competing.warnings.begin(), competing.warnings.end());
  return c;
}

EffectEstimate effect_contrast(const RiskCurve& r1, const RiskCurve& r0, Scale scale) {
  auto a = r1.estimand, b = r0.estimand;
  a.arm = b.arm = 0;
  if (!(a == b) || r1.values.size() != r0.values.size())
    throw ConfigError("effect contrast needs curves of the same estimand and horizon");
  if (r1.arm() != 1 || r0.arm() != 0)
    throw ConfigError("effect contrast compares arm 1 against arm 0");
  EffectEstimate e;
  e.scale = scale;
  e.estimand = r1.estimand;
  e.description = std::string(to_string(a.target)) + " " + std::string(to_string(a.method)) +
                  (scale == Scale::difference ? " RD" : " RR") + " (a=1 vs a=0)";
  for (std::size_t k = 0; k < r1.values.size(); ++k) {
    const double x1 = r1.values[k], x0 = r0.values[k];
    if (scale == Scale::difference)
      e.per_interval.emplace_back(x1 - x0);
    else
      e.per_interval.push_back(x0 > 0.0 ? std::optional<double>(x1 / x0) : std::nullopt);
  }
  if (!e.per_interval.empty()) e.horizon_value = e.per_interval.back();
  return e;
}

void write_risk_curves_csv(std::ostream& out, std::span<const RiskCurve> curves) {
  out << "estimand,method,arm,k_plus_1,risk\n";
  for (const auto& c : curves)
    for (std::size_t k = 0; k < c.values.size(); ++k)
      out << to_string(c.estimand.target) << ',' << to_string(c.estimand.method) << ','
          << c.arm() << ',' << (k + 1) << ',' << csv::format_double(c.values[k]) << '\n';
}

}  // namespace crisk
