#include <cmath>

#include "json.hpp"

#include "crisk/error.hpp"
#include "crisk/oracle.hpp"

namespace crisk::oracle {

using nlohmann::json;

namespace {

json cpt_json(const Cpt& t) { return {{"parents", t.parents}, {"p", t.p}}; }

Cpt cpt_from(const json& j, const std::string& what) {
  if (!j.is_object()) throw ConfigError(what + ": expected an object with parents and p");
  Cpt t;
  t.parents = j.value("parents", std::vector<std::string>{});
  if (!j.contains("p")) throw ConfigError(what + ": missing p");
  t.p = j.at("p").get<std::vector<double>>();
  return t;
}

std::vector<Cpt> cpts_from(const json& j, const char* key) {
  std::vector<Cpt> out;
  if (!j.contains(key)) return out;
  const auto& arr = j.at(key);
  if (!arr.is_array()) throw ConfigError(std::string(key) + ": expected an array of tables");
  for (std::size_t i = 0; i < arr.size(); ++i)
    out.push_back(cpt_from(arr[i], std::string(key) + "[" + std::to_string(i) + "]"));
  return out;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

std::string dgp_to_json(const DiscreteDGP& g) {
  json j;
  j["name"] = g.name;
  j["description"] = g.description;
  j["k_max"] = g.k_max;
  j["has_l0"] = g.has_l0;
  j["time_varying_l"] = g.time_varying_l;
  j["p_u"] = g.p_u;
  j["l0"] = cpt_json(g.l0);
  j["a"] = cpt_json(g.a);
  for (const char* key : {"c", "d", "y", "l"}) j[key] = json::array();
  for (const auto& t : g.c) j["c"].push_back(cpt_json(t));
  for (const auto& t : g.d) j["d"].push_back(cpt_json(t));
  for (const auto& t : g.y) j["y"].push_back(cpt_json(t));
  for (const auto& t : g.l) j["l"].push_back(cpt_json(t));
  return j.dump(2);
}

DiscreteDGP dgp_from_json(std::string_view text) {
  DiscreteDGP g;
  try {
    const auto j = json::parse(text);
    if (!j.is_object()) throw ConfigError("DGP JSON must be an object");
    g.name = j.value("name", std::string("custom_dgp"));
    g.description = j.value("description", std::string());
    g.k_max = j.at("k_max").get<int>();
    g.has_l0 = j.value("has_l0", false);
    g.time_varying_l = j.value("time_varying_l", false);
    g.p_u = j.value("p_u", 0.5);
    if (j.contains("l0")) g.l0 = cpt_from(j.at("l0"), "l0");
    if (j.contains("a")) g.a = cpt_from(j.at("a"), "a");
    g.c = cpts_from(j, "c");
    g.d = cpts_from(j, "d");
    g.y = cpts_from(j, "y");
    g.l = cpts_from(j, "l");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed DGP JSON: ") + e.what());
  }
  g.validate();
  return g;
}

std::string report_to_json(const IdentityReport& r) {
  json j;
  j["dgp"] = r.dgp;
  j["tolerance"] = r.tolerance;
  j["ok"] = r.ok();
  j["failed_expectations"] = r.count_failed_expectations();
  j["entries"] = json::array();
  for (const auto& e : r.entries) {
    json x{{"name", e.name},
           {"left", number_or_null(e.left)},
           {"right", number_or_null(e.right)},
           {"delta", number_or_null(e.delta)},
           {"pass", e.pass},
           {"applicable", e.applicable},
           {"expected_to_hold", e.expected_to_hold},
           {"asserts_difference", e.asserts_difference}};
    if (!e.note.empty()) x["note"] = e.note;
    j["entries"].push_back(std::move(x));
  }
  return j.dump(2);
}

}  // namespace crisk::oracle
