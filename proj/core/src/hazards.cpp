#include "crisk/hazards.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>

#include "crisk/error.hpp"
#include "csv.hpp"

namespace crisk {

std::string_view to_string(HazardKind kind) {
  switch (kind) {
    case HazardKind::event: return "event";
    case HazardKind::competing: return "competing";
    case HazardKind::censoring: return "censoring";
  }
  return "unknown";
}

HazardKind hazard_kind_from_string(std::string_view s) {
  if (s == "event") return HazardKind::event;
  if (s == "competing") return HazardKind::competing;
  if (s == "censoring") return HazardKind::censoring;
  throw ConfigError("unknown hazard kind '" + std::string(s) + "'");
}

std::size_t DesignSpec::width() const {
  const auto deg = static_cast<std::size_t>(std::max(0, time_degree));
  std::size_t w = 1 + deg + (include_treatment ? 1 : 0) +
                  (include_treatment && treatment_time_interaction ? deg : 0);
  for (const auto& c : covariates) w += c.cuts.empty() ? 1 : c.cuts.size();
  return w;
}

namespace {

std::string band_label(const CovariateTerm& term, std::size_t band) {
  const auto& c = term.cuts;
  if (band == 0) return term.name + "<" + csv::format_double(c.front());
  if (band == c.size()) return term.name + ">=" + csv::format_double(c.back());
  return csv::format_double(c[band - 1]) + "<=" + term.name + "<" + csv::format_double(c[band]);
}

std::size_t band_of(const std::vector<double>& cuts, double x) {
  return static_cast<std::size_t>(std::upper_bound(cuts.begin(), cuts.end(), x) - cuts.begin());
}

}  // namespace

std::vector<std::string> DesignSpec::column_names() const {
  std::vector<std::string> names{"(intercept)"};
  for (int d = 1; d <= time_degree; ++d) names.push_back(d == 1 ? "t" : "t^" + std::to_string(d));
  if (include_treatment) {
    names.push_back("a");
    if (treatment_time_interaction)
      for (int d = 1; d <= time_degree; ++d)
        names.push_back(d == 1 ? "a:t" : "a:t^" + std::to_string(d));
  }
  for (const auto& c : covariates) {
    if (c.cuts.empty()) {
      names.push_back(c.name);
    } else {
      for (std::size_t b = 1; b <= c.cuts.size(); ++b) names.push_back(band_label(c, b));
    }
  }
  return names;
}

void validate_spec(const DesignSpec& spec, const CovariateSchema& schema) {
  const std::string which(to_string(spec.kind));
  if (spec.time_degree < 0)
    throw ConfigError(which + " model: time_degree must be non-negative");
  if (spec.treatment_time_interaction && !spec.include_treatment)
    throw ConfigError(which + " model: treatment_time_interaction requires treatment");
  if (spec.structural_zero_before < 0)
    throw ConfigError(which + " model: structural_zero_before must be non-negative");
  for (const auto& c : spec.covariates) {
    if (!schema.index_of(c.name))
      throw ConfigError(which + " model: covariate '" + c.name + "' is not in the schema");
    for (std::size_t i = 0; i < c.cuts.size(); ++i) {
      if (!std::isfinite(c.cuts[i]) || (i > 0 && c.cuts[i] <= c.cuts[i - 1]))
        throw ConfigError(which + " model: cut points for '" + c.name +
                          "' must be finite and strictly increasing");
    }
  }
}

Design::Design(DesignSpec spec, const CovariateSchema& schema, int k_max)
    : spec_(std::move(spec)), k_max_(k_max) {
  validate_spec(spec_, schema);
  for (const auto& c : spec_.covariates) {
    const auto idx = *schema.index_of(c.name);
    cov_index_.push_back(idx);
    cov_levels_.push_back(schema.covariates[idx].levels);
  }
  width_ = spec_.width();
}

void Design::row(int a, std::span<const double> l0, int k, double* out) const {
  const double t = static_cast<double>(k + 1) / static_cast<double>(k_max_ + 1);
  const double av = a == 1 ? 1.0 : 0.0;
  std::size_t col = 0;
  out[col++] = 1.0;
  double p = 1.0;
  for (int d = 1; d <= spec_.time_degree; ++d) out[col++] = (p *= t);
  if (spec_.include_treatment) {
    out[col++] = av;
    if (spec_.treatment_time_interaction) {
      p = 1.0;
      for (int d = 1; d <= spec_.time_degree; ++d) out[col++] = av * (p *= t);
    }
  }
  for (std::size_t c = 0; c < spec_.covariates.size(); ++c) {
    const auto& term = spec_.covariates[c];
    if (cov_index_[c] >= l0.size())
      throw DataError("covariate vector too short for '" + term.name + "'");
    const double x = l0[cov_index_[c]];
    const auto& levels = cov_levels_[c];
    if (!std::isfinite(x) ||
        (!levels.empty() && std::find(levels.begin(), levels.end(), x) == levels.end()))
      throw DataError("covariate '" + term.name + "' value " + csv::format_double(x) +
                      " is outside its declared domain");
    if (term.cuts.empty()) {
      out[col++] = x;
    } else {
      const auto b = band_of(term.cuts, x);
      for (std::size_t j = 1; j <= term.cuts.size(); ++j) out[col++] = b == j ? 1.0 : 0.0;
    }
  }
}

std::vector<double> Design::row(int a, std::span<const double> l0, int k) const {
  std::vector<double> out(width_);
  row(a, l0, k, out.data());
  return out;
}

std::vector<double> build_design_row(const DesignSpec& spec, const CovariateSchema& schema,
                                     int k_max, int a, std::span<const double> l0, int k) {
  return Design(spec, schema, k_max).row(a, l0, k);
}

RiskSet RiskSet::all_records() {
  return {"all person-time records", [](const PersonTimeRecord&, const RecordState&) {
            return true;
          }};
}

RiskSet RiskSet::uncensored() {
  return {"records with c_next=0",
          [](const PersonTimeRecord& r, const RecordState&) { return r.c_next == 0; }};
}

RiskSet RiskSet::uncensored_event_free() {
  return {"records with c_next=0 and d_next=0", [](const PersonTimeRecord& r, const RecordState&) {
            return r.c_next == 0 && r.d_next == 0;
          }};
}

RiskSet RiskSet::before_competing_event() {
  return {"records without a prior competing event",
          [](const PersonTimeRecord&, const RecordState& s) { return !s.prior_d; }};
}

RiskSet RiskSet::standard(HazardKind kind) {
  switch (kind) {
    case HazardKind::event: return uncensored_event_free();
    case HazardKind::competing: return uncensored();
    case HazardKind::censoring: return before_competing_event();
  }
  return all_records();
}

namespace {

int outcome_value(const PersonTimeRecord& r, Outcome o) {
  switch (o) {
    case Outcome::y_next: return r.y_next;
    case Outcome::d_next: return r.d_next;
    case Outcome::c_next: return r.c_next;
  }
  return 0;
}

// log(1 + exp(eta)) without overflow.
double softplus(double eta) {
  return eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
}

double inv_logit(double eta) {
  if (eta >= 0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMatrix> as_matrix(const PooledData& d) {
  return {d.x.data(), static_cast<Eigen::Index>(d.rows()), static_cast<Eigen::Index>(d.width)};
}

Eigen::Map<const Eigen::VectorXd> as_vector(std::span<const double> v) {
  return {v.data(), static_cast<Eigen::Index>(v.size())};
}

double log_likelihood_eta(const Eigen::VectorXd& eta, const std::vector<double>& y) {
  // Neumaier summation: finite-difference checks on 1e6-row fits need it.
  double ll = 0.0, comp = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double term = y[i] * eta[i] - softplus(eta[i]);
    const double t = ll + term;
    comp += std::abs(ll) >= std::abs(term) ? (ll - t) + term : (term - t) + ll;
    ll = t;
  }
  return ll + comp;
}

}  // namespace

PooledData assemble_pooled_data(const Cohort& data, const Design& design, Outcome outcome,
                                const RiskSet& risk_set) {
  PooledData out;
  out.width = design.width();
  std::vector<double> row(out.width);
  for (std::size_t s = 0; s < data.subject_count(); ++s) {
    const auto rs = data.subject_records(s);
    for (std::size_t j = 0; j < rs.size(); ++j) {
      const auto& r = rs[j];
      if (design.structural_zero(r.k)) continue;
      if (!risk_set.include(r, prior_state(rs, j))) continue;
      design.row(r.a, r.l0, r.k, row.data());
      out.x.insert(out.x.end(), row.begin(), row.end());
      out.y.push_back(outcome_value(r, outcome));
    }
  }
  return out;
}

double log_likelihood(const PooledData& data, std::span<const double> beta) {
  const Eigen::VectorXd eta = as_matrix(data) * as_vector(beta);
  return log_likelihood_eta(eta, data.y);
}

std::vector<double> score(const PooledData& data, std::span<const double> beta) {
  const auto X = as_matrix(data);
  const Eigen::VectorXd eta = X * as_vector(beta);
  Eigen::VectorXd resid(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) resid[i] = data.y[i] - inv_logit(eta[i]);
  const Eigen::VectorXd g = X.transpose() * resid;
  return {g.data(), g.data() + g.size()};
}

FittedHazardModel fit_pooled_logistic(const PooledData& rows, const Design& design,
                                      Outcome outcome, const FitOptions& options) {
  const std::string which(to_string(design.spec().kind));
  if (rows.rows() == 0)
    throw DataError("empty risk set for the " + which + " hazard model");

  FittedHazardModel m;
  m.design = design;
  m.outcome = outcome;
  m.columns = design.spec().column_names();
  m.records_used = rows.rows();
  for (double v : rows.y) m.events += v != 0.0;

  const auto X = as_matrix(rows);
  const auto p_cols = static_cast<Eigen::Index>(rows.width);
  for (Eigen::Index j = 1; j < p_cols; ++j)
    if ((X.col(j).array() == 0.0).all())
      throw NumericalError(which + " model: column '" + m.columns[j] +
                           "' is identically zero in the risk set");

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p_cols);
  Eigen::VectorXd eta = X * beta;
  double ll = log_likelihood_eta(eta, rows.y);
  m.trace.push_back(ll);

  Eigen::VectorXd col_scale = X.cwiseAbs().colwise().maxCoeff().transpose();
  double eta_max_prev = 0.0;
  Eigen::VectorXd p(eta.size());
  for (int iter = 0;; ++iter) {
    for (Eigen::Index i = 0; i < eta.size(); ++i) p[i] = inv_logit(eta[i]);
    Eigen::VectorXd resid(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) resid[i] = rows.y[i] - p[i];
    const Eigen::VectorXd g = X.transpose() * resid;
    m.max_abs_score = g.cwiseAbs().maxCoeff();
    m.iterations = iter;
    if (m.max_abs_score < options.score_tolerance) {
      m.converged = true;
      break;
    }
    if (iter >= options.max_iterations) break;

    const Eigen::VectorXd w = (p.array() * (1.0 - p.array())).matrix();
    const RowMatrix Xw = X.array().colwise() * w.array();
    const Eigen::MatrixXd H = X.transpose() * Xw;
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
    const auto D = ldlt.vectorD();
    if (ldlt.info() != Eigen::Success || D.minCoeff() <= 1e-13 * D.cwiseAbs().maxCoeff() ||
        D.maxCoeff() <= 0.0)
      throw NumericalError(which + " model: information matrix is singular (collinear or "
                                   "degenerate design columns)");
    const Eigen::VectorXd delta = ldlt.solve(g);
    if (!delta.allFinite()) throw NumericalError(which + " model: non-finite Newton step");

    // Within floating-point noise of the optimum the likelihood cannot
    // discriminate between iterates; take the full step there.
    const double predicted = g.dot(delta);
    const bool in_noise = predicted <= 1e-10 * (1.0 + std::abs(ll));

    double step = 1.0;
    Eigen::VectorXd cand;
    double ll_cand = ll;
    bool accepted = false;
    for (int halving = 0; halving < 50; ++halving, step *= 0.5) {
      cand = beta + step * delta;
      eta = X * cand;
      ll_cand = log_likelihood_eta(eta, rows.y);
      if (std::isfinite(ll_cand) && (ll_cand >= ll || in_noise)) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      eta = X * beta;
      break;
    }

    // Divergence shows up in the linear predictor: some fitted probability
    // heads for 0 or 1 while the likelihood has stopped improving. Raw
    // coefficients can be large at a proper optimum (polynomial time terms).
    const double eta_max = eta.cwiseAbs().maxCoeff();
    if (eta_max > options.separation_threshold && eta_max - eta_max_prev >= 0.5 &&
        ll_cand - ll < 1e-3) {
      Eigen::Index worst = 0;
      double reach = -1.0;
      for (Eigen::Index j = 0; j < p_cols; ++j) {
        const double r = std::abs(cand[j] - beta[j]) * col_scale[j];
        if (r > reach) reach = r, worst = j;
      }
      throw SeparationError(m.columns[worst],
                            which + " model: complete separation on column '" + m.columns[worst] +
                                "' (linear predictor diverging past " +
                                csv::format_double(eta_max) + ")");
    }
    eta_max_prev = eta_max;
    beta = cand;
    ll = ll_cand;
    m.trace.push_back(ll);
  }

  m.coefficients.assign(beta.data(), beta.data() + beta.size());
  m.log_likelihood = ll;
  if (!beta.allFinite()) throw NumericalError(which + " model: non-finite coefficients");
  return m;
}

FittedHazardModel fit_pooled_logistic(const Cohort& data, const DesignSpec& spec, Outcome outcome,
                                      const RiskSet& risk_set, const FitOptions& options) {
  Design design(spec, data.schema(), data.k_max());
  auto rows = assemble_pooled_data(data, design, outcome, risk_set);
  auto m = fit_pooled_logistic(rows, design, outcome, options);
  m.fit_filter = risk_set.description;
  if (spec.structural_zero_before > 0)
    m.fit_filter += ", k >= " + std::to_string(spec.structural_zero_before);
  return m;
}

FittedHazardModel fit_pooled_logistic(const ExpandedCohort& data, const DesignSpec& spec,
                                      Outcome outcome, const RiskSet& risk_set,
                                      const FitOptions& options) {
  return fit_pooled_logistic(data.table(), spec, outcome, risk_set, options);
}

double predict_hazard(const FittedHazardModel& m, int a, std::span<const double> l0, int k) {
  if (!m.converged)
    throw NumericalError(std::string(to_string(m.spec().kind)) +
                         " model did not converge; cannot predict");
  if (m.design.structural_zero(k)) return 0.0;
  if (m.coefficients.empty()) return 0.0;
  const auto& d = m.design;
  double buf[64];
  std::vector<double> heap;
  double* row = buf;
  if (d.width() > 64) {
    heap.resize(d.width());
    row = heap.data();
  }
  d.row(a, l0, k, row);
  double eta = 0.0;
  for (std::size_t j = 0; j < d.width(); ++j) eta += row[j] * m.coefficients[j];
  return inv_logit(eta);
}

FittedHazardModel zero_hazard_model(const DesignSpec& spec, const CovariateSchema& schema,
                                    int k_max) {
  FittedHazardModel m;
  DesignSpec s = spec;
  s.structural_zero_before = k_max + 1;
  m.design = Design(s, schema, k_max);
  m.columns = s.column_names();
  m.converged = true;
  m.fit_filter = "no events in risk set; hazard fixed at 0";
  return m;
}

std::vector<PositivityCell> positivity_report(const Cohort& data,
                                              std::span<const CovariateTerm> strata,
                                              PositivityTarget which) {
  std::vector<PositivityCell> out;
  if (data.subject_count() == 0) return out;
  const auto& schema = data.schema();
  std::vector<std::size_t> idx;
  for (const auto& t : strata) {
    auto i = schema.index_of(t.name);
    if (!i) throw ConfigError("positivity stratum '" + t.name + "' is not a declared covariate");
    idx.push_back(*i);
  }
  auto label_of = [&](const std::vector<double>& l0) {
    std::string label;
    for (std::size_t s = 0; s < strata.size(); ++s) {
      if (!label.empty()) label += ';';
      const double x = l0[idx[s]];
      label += strata[s].cuts.empty() ? strata[s].name + "=" + csv::format_double(x)
                                      : band_label(strata[s], band_of(strata[s].cuts, x));
    }
    return label.empty() ? std::string("all") : label;
  };

  const int K = data.k_max();
  std::map<std::string, std::vector<std::size_t>> counts;  // per label: [arm][k]
  for (std::size_t s = 0; s < data.subject_count(); ++s) {
    auto& c = counts[label_of(data.baseline(s))];
    if (c.empty()) c.assign(2 * static_cast<std::size_t>(K + 1), 0);
    for (const auto& r : data.subject_records(s)) {
      if (r.a < 0 || r.a > 1 || r.k < 0 || r.k > K) continue;
      bool keep = true;
      if (which == PositivityTarget::censoring) keep = r.c_next == 0;
      if (which == PositivityTarget::competing) keep = r.c_next == 0 && r.d_next == 0;
      if (keep) ++c[static_cast<std::size_t>(r.a * (K + 1) + r.k)];
    }
  }
  for (const auto& [label, c] : counts)
    for (int a = 0; a <= 1; ++a)
      for (int k = 0; k <= K; ++k) {
        const auto n = c[static_cast<std::size_t>(a * (K + 1) + k)];
        out.push_back({label, a, k, n, n == 0});
      }
  return out;
}

}  // namespace crisk
