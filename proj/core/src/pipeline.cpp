#include "crisk/pipeline.hpp"

#include <Eigen/Core>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "csv.hpp"
#include "json.hpp"

namespace crisk {

using nlohmann::json;

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::config: return "config";
    case Stage::load: return "load";
    case Stage::validate: return "validate";
    case Stage::fit: return "fit";
    case Stage::estimate: return "estimate";
    case Stage::bootstrap: return "bootstrap";
    case Stage::write: return "write";
  }
  return "?";
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << h;
  return ss.str();
}

Cohort load_configured_cohort(const RunConfig& config) {
  auto data = load_person_time_file(config.data_path.string(), config.schema, config.k_max);
  if (config.horizon > data.k_max() + 1)
    throw ConfigError("horizon " + std::to_string(config.horizon) + " exceeds K+1 = " +
                      std::to_string(data.k_max() + 1) + " of the data");
  return data;
}

HazardModels FittedModels::view() const {
  return {event ? &*event : nullptr, competing ? &*competing : nullptr,
          censoring ? &*censoring : nullptr};
}

namespace {

Outcome outcome_of(HazardKind kind) {
  switch (kind) {
    case HazardKind::event: return Outcome::y_next;
    case HazardKind::competing: return Outcome::d_next;
    case HazardKind::censoring: return Outcome::c_next;
  }
  return Outcome::y_next;
}

FittedHazardModel fit_one(const Cohort& data, const DesignSpec& spec,
                          std::vector<std::string>& warnings) {
  const Design design(spec, data.schema(), data.k_max());
  const auto outcome = outcome_of(spec.kind);
  const auto rs = RiskSet::standard(spec.kind);
  const auto rows = assemble_pooled_data(data, design, outcome, rs);
  std::size_t events = 0;
  for (double v : rows.y) events += v != 0.0;
  if (events == 0) {
    warnings.push_back(std::string(to_string(spec.kind)) +
                       " model: no events in its risk set; hazard fixed at 0");
    auto m = zero_hazard_model(spec, data.schema(), data.k_max());
    m.outcome = outcome;
    m.records_used = rows.rows();
    return m;
  }
  auto m = fit_pooled_logistic(rows, design, outcome);
  m.fit_filter = rs.description;
  if (spec.structural_zero_before > 0)
    m.fit_filter += ", k >= " + std::to_string(spec.structural_zero_before);
  if (!m.converged)
    throw NumericalError(std::string(to_string(spec.kind)) + " model did not converge in " +
                         std::to_string(m.iterations) + " iterations (max |score| " +
                         csv::format_double(m.max_abs_score) +
                         "); consider a simpler model");
  return m;
}

}  // namespace

FittedModels fit_models(const Cohort& data, const RunConfig& config) {
  const auto needs = model_needs(config);
  FittedModels f;
  if (needs.event) f.event = fit_one(data, config.event_model, f.warnings);
  if (needs.competing) f.competing = fit_one(data, config.competing_model, f.warnings);
  if (needs.censoring) f.censoring = fit_one(data, config.censoring_model, f.warnings);
  return f;
}

Analysis analyze(const Cohort& data, const RunConfig& config) {
  Analysis out;
  out.models = fit_models(data, config);
  const auto view = out.models.view();
  for (const auto& req : config.estimands) {
    RiskCurve arms[2];
    for (int a : {1, 0}) {
      const EstimandSpec spec{req.target, req.method, a, config.horizon};
      arms[a] = req.method == Method::gformula ? estimate_risk_gformula(data, view, spec)
                                               : estimate_risk_ipw(data, view, spec, config.ipw);
    }
    out.curves.push_back(arms[1]);
    out.curves.push_back(arms[0]);
    for (auto scale : config.scales)
      out.effects.push_back({req, effect_contrast(arms[1], arms[0], scale), std::nullopt});
  }
  return out;
}

std::vector<double> summary_vector(const Analysis& an, const RunConfig& config) {
  std::vector<double> v;
  const double nan = std::nan("");
  std::size_t e = 0;
  for (std::size_t r = 0; r < config.estimands.size(); ++r) {
    v.push_back(an.curves[2 * r].at_horizon());
    v.push_back(an.curves[2 * r + 1].at_horizon());
    for (std::size_t s = 0; s < config.scales.size(); ++s, ++e)
      v.push_back(an.effects[e].effect.horizon_value.value_or(nan));
  }
  return v;
}

std::vector<std::string> summary_labels(const RunConfig& config) {
  std::vector<std::string> out;
  for (const auto& req : config.estimands) {
    const std::string base =
        std::string(to_string(req.target)) + "/" + std::string(to_string(req.method));
    out.push_back(base + "/risk_a1");
    out.push_back(base + "/risk_a0");
    for (auto s : config.scales) out.push_back(base + "/" + std::string(to_string(s)));
  }
  return out;
}

namespace {

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
json optional_json(const std::optional<double>& v) {
  return v && std::isfinite(*v) ? json(*v) : json(nullptr);
}

std::string_view outcome_name(Outcome o) {
  switch (o) {
    case Outcome::y_next: return "y_next";
    case Outcome::d_next: return "d_next";
    case Outcome::c_next: return "c_next";
  }
  return "?";
}

json fits_json(const FittedModels& f) {
  json j = json::object();
  for (const auto* m : {f.event ? &*f.event : nullptr, f.competing ? &*f.competing : nullptr,
                        f.censoring ? &*f.censoring : nullptr}) {
    if (!m) continue;
    json coef = json::object();
    json cols = json::array();
    for (std::size_t i = 0; i < m->columns.size(); ++i) {
      cols.push_back(m->columns[i]);
      if (i < m->coefficients.size()) coef[m->columns[i]] = m->coefficients[i];
    }
    j[std::string(to_string(m->spec().kind))] = {
        {"outcome", outcome_name(m->outcome)},
        {"fit_filter", m->fit_filter},
        {"structural_zero_before", m->spec().structural_zero_before},
        {"columns", cols},
        {"coefficients", coef},
        {"converged", m->converged},
        {"iterations", m->iterations},
        {"log_likelihood", m->log_likelihood},
        {"max_abs_score", m->max_abs_score},
        {"records_used", m->records_used},
        {"events", m->events}};
  }
  return {{"models", j}, {"warnings", f.warnings}};
}

std::string positivity_csv(const Cohort& data, const RunConfig& config) {
  std::ostringstream out;
  out << "target,stratum,arm,k_plus_1,at_risk,zero_cell\n";
  const std::pair<PositivityTarget, const char*> targets[] = {
      {PositivityTarget::treatment, "treatment"},
      {PositivityTarget::censoring, "censoring"},
      {PositivityTarget::competing, "competing"}};
  for (const auto& [t, name] : targets)
    for (const auto& c : positivity_report(data, config.positivity_strata, t))
      out << name << ',' << c.stratum << ',' << c.arm << ',' << (c.k + 1) << ',' << c.at_risk
          << ',' << (c.zero_cell ? 1 : 0) << '\n';
  return out.str();
}

std::string curves_csv(const std::vector<RiskCurve>& curves, Target target) {
  std::vector<RiskCurve> pick;
  for (const auto& c : curves)
    if (c.estimand.target == target) pick.push_back(c);
  std::ostringstream out;
  write_risk_curves_csv(out, pick);
  return out.str();
}

std::string nonparametric_csv(const Cohort& data, int horizon) {
  std::ostringstream out;
  out << "estimand,method,arm,k_plus_1,risk\n";
  for (auto ev : {Outcome::y_next, Outcome::d_next})
    for (int a : {1, 0}) {
      const auto c = nonparametric_cumulative(data, a, ev, horizon);
      for (std::size_t k = 0; k < c.values.size(); ++k)
        out << to_string(c.estimand.target) << ",nonparametric," << a << ',' << (k + 1) << ','
            << csv::format_double(c.values[k]) << '\n';
    }
  return out.str();
}

std::string effects_json(const PipelineResult& r, const RunConfig& config) {
  json effects = json::array();
  for (const auto& row : r.analysis.effects) {
    const auto& e = row.effect;
    json per = json::array();
    for (const auto& v : e.per_interval) per.push_back(optional_json(v));
    json x{{"target", to_string(row.request.target)},
           {"method", to_string(row.request.method)},
           {"scale", to_string(e.scale)},
           {"description", e.description},
           {"horizon", config.horizon},
           {"value", optional_json(e.horizon_value)},
           {"per_interval", per}};
    if (row.interval) {
      x["lower"] = number_or_null(row.interval->lower);
      x["upper"] = number_or_null(row.interval->upper);
      x["n_failed_replicates"] = row.interval->n_failed_replicates;
      x["n_undefined_replicates"] = row.interval->n_undefined;
    }
    effects.push_back(std::move(x));
  }
  json risks = json::array();
  std::vector<std::string> warnings = r.analysis.models.warnings;
  const auto labels = summary_labels(config);
  for (std::size_t i = 0; i < r.analysis.curves.size(); ++i) {
    const auto& c = r.analysis.curves[i];
    json x{{"target", to_string(c.estimand.target)},
           {"method", to_string(c.estimand.method)},
           {"arm", c.arm()},
           {"horizon", config.horizon},
           {"value", c.at_horizon()}};
    if (r.bootstrap) {
      // Curves come in (arm 1, arm 0) pairs; see summary_vector().
      const std::size_t per_req = 2 + config.scales.size();
      const std::size_t idx = (i / 2) * per_req + (i % 2);
      x["lower"] = number_or_null(r.bootstrap->intervals[idx].lower);
      x["upper"] = number_or_null(r.bootstrap->intervals[idx].upper);
    }
    risks.push_back(std::move(x));
    for (const auto& w : c.warnings) warnings.push_back(std::string(to_string(c.estimand.target)) + "/" + std::string(to_string(c.estimand.method)) + " a=" + std::to_string(c.arm()) + ": " + w);
  }
  json j{{"effects", effects}, {"risks", risks}, {"warnings", warnings}};
  if (r.bootstrap) {
    j["bootstrap"] = {{"replicates", r.bootstrap->replicates},
                      {"failed", r.bootstrap->failed},
                      {"seed", config.seed},
                      {"percentiles",
                       {config.bootstrap->lower_percentile, config.bootstrap->upper_percentile}},
                      {"failure_messages", r.bootstrap->failure_messages}};
  }
  return j.dump(2) + "\n";
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Staging {
  std::filesystem::path dir;
  std::vector<std::pair<std::string, std::string>> files;  // name, contents

  void add(std::string name, std::string contents) {
    files.emplace_back(std::move(name), std::move(contents));
  }
};

template <class F>
auto in_stage(Stage stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(stage, e.kind(), e.what());
  } catch (const std::bad_alloc&) {
    throw StageError(stage, ErrorKind::numerical, "out of memory");
  }
}

void log_line(std::ostream* log, const std::string& line) {
  if (log) *log << line << std::endl;
}

}  // namespace

PipelineResult run_pipeline(const RunConfig& config, const PipelineOptions& options) {
  using clock = std::chrono::steady_clock;
  auto t0 = clock::now();
  auto elapsed = [&] {
    return csv::format_double(
        std::round(std::chrono::duration<double>(clock::now() - t0).count() * 100.0) / 100.0);
  };
  in_stage(Stage::config, [&] {
    config.validate();
    return 0;
  });
  const auto data = in_stage(Stage::load, [&] { return load_configured_cohort(config); });
  log_line(options.log, "load: " + std::to_string(data.subject_count()) + " subjects, " +
                            std::to_string(data.record_count()) + " records, K=" +
                            std::to_string(data.k_max()) + " (" + elapsed() + " s)");

  PipelineResult result;
  Staging st;
  const std::string config_json = run_config_to_json(config);

  if (options.fit_only) {
    result.analysis.models = in_stage(Stage::fit, [&] { return fit_models(data, config); });
  } else {
    result.analysis = in_stage(Stage::estimate, [&] { return analyze(data, config); });
  }
  log_line(options.log, std::string(options.fit_only ? "fit" : "estimate") + ": done (" +
                            elapsed() + " s)");

  if (!options.fit_only && config.bootstrap) {
    result.bootstrap = in_stage(Stage::bootstrap, [&] {
      const Statistic stat = [&config](const Cohort& d) {
        return summary_vector(analyze(d, config), config);
      };
      return bootstrap_percentile_ci(data, stat, *config.bootstrap, options.jobs);
    });
    const std::size_t per_req = 2 + config.scales.size();
    std::size_t e = 0;
    for (std::size_t r = 0; r < config.estimands.size(); ++r)
      for (std::size_t s = 0; s < config.scales.size(); ++s, ++e)
        result.analysis.effects[e].interval = result.bootstrap->intervals[r * per_req + 2 + s];
    log_line(options.log, "bootstrap: " + std::to_string(result.bootstrap->replicates) +
                              " replicates, " + std::to_string(result.bootstrap->failed) +
                              " failed (" + elapsed() + " s)");
  }

  in_stage(Stage::write, [&] {
    st.add("fits.json", fits_json(result.analysis.models).dump(2) + "\n");
    st.add("positivity.csv", positivity_csv(data, config));
    if (!options.fit_only) {
      const std::pair<Target, const char*> files[] = {
          {Target::total_risk, "risk_total.csv"},
          {Target::competing_risk, "risk_competing.csv"},
          {Target::composite_risk, "risk_composite.csv"},
          {Target::direct_risk, "risk_direct.csv"}};
      for (const auto& [t, name] : files) {
        bool any = false;
        for (const auto& r : config.estimands) any |= r.target == t;
        if (any) st.add(name, curves_csv(result.analysis.curves, t));
      }
      st.add("nonparametric_cumulative.csv", nonparametric_csv(data, config.horizon));
      st.add("effects.json", effects_json(result, config));
    }

    json artifacts = json::array();
    for (const auto& [name, body] : st.files)
      artifacts.push_back({{"file", name}, {"fnv1a64", fnv1a_hex(body)}});
    const auto data_bytes = read_bytes(config.data_path);
    json manifest{
        {"tool", "crisk"},
        {"version", "0.1.0"},
        {"command", options.fit_only ? "fit" : "estimate"},
        {"config_fnv1a64", fnv1a_hex(config_json)},
        {"config", json::parse(config_json)},
        {"data", {{"path", config.data_path.generic_string()},
                  {"fnv1a64", fnv1a_hex(data_bytes)},
                  {"subjects", data.subject_count()},
                  {"records", data.record_count()},
                  {"k_max", data.k_max()}}},
        {"seed", config.seed},
        {"versions", {{"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                    std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                    std::to_string(EIGEN_MINOR_VERSION)},
                      {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                            std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                            std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                      {"compiler", __VERSION__}}},
        {"artifacts", artifacts},
        {"created_utc", utc_timestamp()}};
    st.add("manifest.json", manifest.dump(2) + "\n");

    namespace fs = std::filesystem;
    const fs::path out = config.output_dir;
    const fs::path parent = out.has_parent_path() ? out.parent_path() : fs::path(".");
    st.dir = parent / ("." + out.filename().string() + ".partial");
    std::error_code ec;
    fs::remove_all(st.dir, ec);
    try {
      fs::create_directories(st.dir);
      for (const auto& [name, body] : st.files) {
        std::ofstream f(st.dir / name, std::ios::binary);
        f << body;
        if (!f) throw DataError("cannot write " + (st.dir / name).string());
      }
      fs::create_directories(out);
      for (const auto& [name, body] : st.files) {
        fs::rename(st.dir / name, out / name);
        result.artifacts.push_back(out / name);
      }
      fs::remove_all(st.dir, ec);
    } catch (const fs::filesystem_error& e) {
      fs::remove_all(st.dir, ec);
      throw DataError(std::string("cannot write artifacts: ") + e.what());
    } catch (...) {
      fs::remove_all(st.dir, ec);
      throw;
    }
    return 0;
  });
  log_line(options.log, "write: " + std::to_string(result.artifacts.size()) + " files in " +
                            config.output_dir.string() + " (" + elapsed() + " s)");
  return result;
}

}  // namespace crisk
