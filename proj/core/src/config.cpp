#include "crisk/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "crisk/error.hpp"
#include "json.hpp"

namespace crisk {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items())
    if (!ok.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

template <class T>
T get(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + ": missing required key '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + ": key '" + key + "' has the wrong type");
  }
}

template <class T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  return get<T>(j, key, where);
}

std::vector<CovariateTerm> terms_from(const json& arr, const std::string& where) {
  if (!arr.is_array()) throw ConfigError(where + ": expected an array");
  std::vector<CovariateTerm> out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const auto w = where + "[" + std::to_string(i) + "]";
    reject_unknown(arr[i], {"name", "cuts"}, w);
    out.push_back({get<std::string>(arr[i], "name", w),
                   get_or<std::vector<double>>(arr[i], "cuts", {}, w)});
  }
  return out;
}

json terms_json(const std::vector<CovariateTerm>& terms) {
  json arr = json::array();
  for (const auto& t : terms) arr.push_back({{"name", t.name}, {"cuts", t.cuts}});
  return arr;
}

DesignSpec design_from(const json& j, HazardKind kind) {
  const std::string where = "models." + std::string(to_string(kind));
  reject_unknown(j,
                 {"time_degree", "treatment", "treatment_time_interaction", "covariates",
                  "structural_zero_before"},
                 where);
  DesignSpec s;
  s.kind = kind;
  s.time_degree = get_or<int>(j, "time_degree", 0, where);
  s.include_treatment = get_or<bool>(j, "treatment", true, where);
  s.treatment_time_interaction = get_or<bool>(j, "treatment_time_interaction", false, where);
  if (j.contains("covariates")) s.covariates = terms_from(j.at("covariates"), where + ".covariates");
  s.structural_zero_before = get_or<int>(j, "structural_zero_before", 0, where);
  return s;
}

json design_json(const DesignSpec& s) {
  return {{"time_degree", s.time_degree},
          {"treatment", s.include_treatment},
          {"treatment_time_interaction", s.treatment_time_interaction},
          {"covariates", terms_json(s.covariates)},
          {"structural_zero_before", s.structural_zero_before}};
}

std::filesystem::path resolve(const std::filesystem::path& p, const std::filesystem::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p.lexically_normal();
  return (base / p).lexically_normal();
}

}  // namespace

ModelNeeds model_needs(const RunConfig& c) {
  ModelNeeds n;
  for (const auto& e : c.estimands) {
    switch (e.method) {
      case Method::gformula:
        n.event = true;
        if (e.target != Target::direct_risk) n.competing = true;
        break;
      case Method::ipw_cause_specific:
        n.censoring = true;
        if (e.target == Target::direct_risk) n.competing = true;
        break;
      case Method::ipw_subdistribution: n.censoring = true; break;
    }
  }
  return n;
}

void RunConfig::validate() const {
  if (data_path.empty()) throw ConfigError("config: data path is empty");
  if (horizon < 1) throw ConfigError("config: horizon must be at least 1");
  if (k_max && (*k_max < 0 || horizon > *k_max + 1))
    throw ConfigError("config: horizon exceeds k_max + 1");
  if (estimands.empty()) throw ConfigError("config: no estimands requested");
  std::set<std::pair<int, int>> seen;
  for (const auto& e : estimands) {
    check_admissible(e.target, e.method);
    if (!seen.insert({static_cast<int>(e.target), static_cast<int>(e.method)}).second)
      throw ConfigError("config: estimand " + std::string(to_string(e.target)) + "/" +
                        std::string(to_string(e.method)) + " requested twice");
  }
  if (scales.empty()) throw ConfigError("config: no contrast scales requested");
  std::set<std::string> names;
  for (const auto& c : schema.covariates)
    if (!names.insert(c.name).second)
      throw ConfigError("config: covariate '" + c.name + "' declared twice");
  const auto needs = model_needs(*this);
  if (needs.event) validate_spec(event_model, schema);
  if (needs.competing) validate_spec(competing_model, schema);
  if (needs.censoring) validate_spec(censoring_model, schema);
  for (const auto& t : positivity_strata)
    if (!schema.index_of(t.name))
      throw ConfigError("config: positivity stratum '" + t.name + "' is not in the schema");
  if (bootstrap) bootstrap->validate();
  if (ipw.truncate_percentile && !(*ipw.truncate_percentile > 0.0 && *ipw.truncate_percentile <= 100.0))
    throw ConfigError("config: ipw.truncate_percentile must be in (0,100]");
}

RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  const std::string top = "config";
  reject_unknown(j,
                 {"data", "k_max", "covariates", "models", "estimands", "scales", "horizon",
                  "bootstrap", "seed", "output_dir", "ipw", "positivity_strata"},
                 top);
  RunConfig c;
  c.data_path = resolve(get<std::string>(j, "data", top), base_dir);
  if (j.contains("k_max") && !j.at("k_max").is_null()) c.k_max = get<int>(j, "k_max", top);

  if (j.contains("covariates")) {
    const auto& arr = j.at("covariates");
    if (!arr.is_array()) throw ConfigError("config.covariates: expected an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const auto w = "config.covariates[" + std::to_string(i) + "]";
      reject_unknown(arr[i], {"name", "levels"}, w);
      c.schema.covariates.push_back(
          {get<std::string>(arr[i], "name", w), get_or<std::vector<double>>(arr[i], "levels", {}, w)});
    }
  }

  const auto& models = j.contains("models") ? j.at("models") : json::object();
  reject_unknown(models, {"event", "competing", "censoring"}, "config.models");
  auto model = [&](const char* key, HazardKind kind) {
    return design_from(models.contains(key) ? models.at(key) : json::object(), kind);
  };
  c.event_model = model("event", HazardKind::event);
  c.competing_model = model("competing", HazardKind::competing);
  c.censoring_model = model("censoring", HazardKind::censoring);

  const auto& est = j.contains("estimands") ? j.at("estimands") : json();
  if (!est.is_array()) throw ConfigError("config.estimands: expected an array");
  for (std::size_t i = 0; i < est.size(); ++i) {
    const auto w = "config.estimands[" + std::to_string(i) + "]";
    reject_unknown(est[i], {"target", "method"}, w);
    c.estimands.push_back({target_from_string(get<std::string>(est[i], "target", w)),
                           method_from_string(get<std::string>(est[i], "method", w))});
  }

  if (j.contains("scales")) {
    c.scales.clear();
    for (const auto& s : get<std::vector<std::string>>(j, "scales", top))
      c.scales.push_back(scale_from_string(s));
  }
  c.horizon = get<int>(j, "horizon", top);
  c.seed = get_or<std::uint64_t>(j, "seed", 1, top);

  if (j.contains("bootstrap") && !j.at("bootstrap").is_null()) {
    const auto& b = j.at("bootstrap");
    const std::string w = "config.bootstrap";
    reject_unknown(b, {"replicates", "percentiles", "max_failure_share"}, w);
    BootstrapPlan plan;
    plan.replicates = get_or<int>(b, "replicates", plan.replicates, w);
    const auto pct = get_or<std::vector<double>>(
        b, "percentiles", {plan.lower_percentile, plan.upper_percentile}, w);
    if (pct.size() != 2) throw ConfigError(w + ".percentiles: expected [lower, upper]");
    plan.lower_percentile = pct[0];
    plan.upper_percentile = pct[1];
    plan.max_failure_share = get_or<double>(b, "max_failure_share", plan.max_failure_share, w);
    c.bootstrap = plan;
  }
  if (j.contains("output_dir"))
    c.output_dir = resolve(get<std::string>(j, "output_dir", top), base_dir);
  if (j.contains("ipw") && !j.at("ipw").is_null()) {
    const auto& ipw = j.at("ipw");
    reject_unknown(ipw, {"truncate_percentile"}, "config.ipw");
    if (ipw.contains("truncate_percentile") && !ipw.at("truncate_percentile").is_null())
      c.ipw.truncate_percentile = get<double>(ipw, "truncate_percentile", "config.ipw");
  }
  if (j.contains("positivity_strata"))
    c.positivity_strata = terms_from(j.at("positivity_strata"), "config.positivity_strata");
  else
    c.positivity_strata = c.censoring_model.covariates;

  if (c.bootstrap) c.bootstrap->seed = c.seed;
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), file.parent_path());
}

std::string run_config_to_json(const RunConfig& c) {
  json j;
  j["data"] = c.data_path.generic_string();
  j["k_max"] = c.k_max ? json(*c.k_max) : json(nullptr);
  j["covariates"] = json::array();
  for (const auto& d : c.schema.covariates)
    j["covariates"].push_back({{"name", d.name}, {"levels", d.levels}});
  j["models"] = {{"event", design_json(c.event_model)},
                 {"competing", design_json(c.competing_model)},
                 {"censoring", design_json(c.censoring_model)}};
  j["estimands"] = json::array();
  for (const auto& e : c.estimands)
    j["estimands"].push_back({{"target", to_string(e.target)}, {"method", to_string(e.method)}});
  j["scales"] = json::array();
  for (auto s : c.scales) j["scales"].push_back(to_string(s));
  j["horizon"] = c.horizon;
  if (c.bootstrap)
    j["bootstrap"] = {{"replicates", c.bootstrap->replicates},
                      {"percentiles", {c.bootstrap->lower_percentile, c.bootstrap->upper_percentile}},
                      {"max_failure_share", c.bootstrap->max_failure_share}};
  else
    j["bootstrap"] = nullptr;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir.generic_string();
  j["ipw"] = {{"truncate_percentile",
               c.ipw.truncate_percentile ? json(*c.ipw.truncate_percentile) : json(nullptr)}};
  j["positivity_strata"] = terms_json(c.positivity_strata);
  return j.dump(2);
}

}  // namespace crisk
