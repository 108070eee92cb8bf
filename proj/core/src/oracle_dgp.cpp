#include <algorithm>
#include <cmath>
#include <set>

#include "crisk/error.hpp"
#include "crisk/oracle.hpp"
#include "crisk/random.hpp"
#include "oracle_internal.hpp"

namespace crisk::oracle {

namespace {

// Code position of a named parent, or -1 for U.
int parent_position(const std::string& name) {
  if (name == "U") return -1;
  if (name == "L0") return Layout::l0;
  if (name == "A") return Layout::a;
  if (name.size() >= 2 && name[0] == 'L') {
    const int j = std::stoi(name.substr(1));
    return Layout::l(j - 1);
  }
  throw ConfigError("unknown parent variable '" + name + "'");
}

double eval(const Cpt& t, int u, const std::vector<std::int8_t>& code) {
  std::size_t idx = 0;
  for (std::size_t i = 0; i < t.parents.size(); ++i) {
    const int pos = parent_position(t.parents[i]);
    const int v = pos < 0 ? u : code[static_cast<std::size_t>(pos)];
    idx |= static_cast<std::size_t>(v) << i;
  }
  return t.p[idx];
}

// Allowed parents for a table, in causal order.
std::vector<std::string> allowed_parents(const DiscreteDGP& g, int n_l) {
  std::vector<std::string> out{"U"};
  if (g.has_l0) out.push_back("L0");
  out.push_back("A");
  if (g.time_varying_l)
    for (int j = 1; j <= n_l; ++j) out.push_back("L" + std::to_string(j));
  return out;
}

void check_table(const Cpt& t, const std::vector<std::string>& allowed, const std::string& what) {
  std::set<std::string> seen;
  for (const auto& p : t.parents) {
    if (std::find(allowed.begin(), allowed.end(), p) == allowed.end())
      throw ConfigError(what + ": parent '" + p + "' is not allowed here");
    if (!seen.insert(p).second) throw ConfigError(what + ": duplicate parent '" + p + "'");
  }
  if (t.parents.size() > 16) throw ConfigError(what + ": too many parents");
  if (t.p.size() != (std::size_t{1} << t.parents.size()))
    throw ConfigError(what + ": expected " + std::to_string(std::size_t{1} << t.parents.size()) +
                      " probabilities, found " + std::to_string(t.p.size()));
  for (double v : t.p)
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(what + ": probability outside [0,1]");
}

}  // namespace

void DiscreteDGP::validate(int max_k) const {
  if (k_max < 0 || k_max > max_k)
    throw ConfigError("DGP '" + name + "': K=" + std::to_string(k_max) + " outside 0.." +
                      std::to_string(max_k) + " (enumeration cap)");
  if (!(p_u >= 0.0 && p_u <= 1.0)) throw ConfigError("DGP '" + name + "': p_u outside [0,1]");
  const auto K1 = static_cast<std::size_t>(k_max + 1);
  if (c.size() != K1 || d.size() != K1 || y.size() != K1)
    throw ConfigError("DGP '" + name + "': need K+1 tables for each of C, D, Y");
  if (l.size() != (time_varying_l ? static_cast<std::size_t>(k_max) : 0))
    throw ConfigError("DGP '" + name + "': need K tables for L when time-varying L is on");
  check_table(l0, {"U"}, "L0");
  if (!has_l0 && (l0.parents.size() != 0 || l0.p[0] != 0.0))
    throw ConfigError("DGP '" + name + "': L0 table given but has_l0 is false");
  auto a_allowed = std::vector<std::string>{"U"};
  if (has_l0) a_allowed.push_back("L0");
  check_table(a, a_allowed, "A");
  for (int k = 0; k <= k_max; ++k) {
    const auto allowed = allowed_parents(*this, k);
    const auto sfx = std::to_string(k + 1);
    check_table(c[k], allowed, "C" + sfx);
    check_table(d[k], allowed, "D" + sfx);
    check_table(y[k], allowed, "Y" + sfx);
  }
  for (int k = 1; k <= static_cast<int>(l.size()); ++k)
    check_table(l[k - 1], allowed_parents(*this, k - 1), "L" + std::to_string(k));
}

namespace {

bool has_u(const Cpt& t) {
  return std::find(t.parents.begin(), t.parents.end(), "U") != t.parents.end();
}

bool any_has_u(const std::vector<Cpt>& ts) { return std::any_of(ts.begin(), ts.end(), has_u); }

}  // namespace

bool satisfies_exchangeability_c1(const DiscreteDGP& g) {
  return !has_u(g.a) && !any_has_u(g.c) && !any_has_u(g.d);
}

bool satisfies_exchangeability_c2(const DiscreteDGP& g) { return !has_u(g.a) && !any_has_u(g.c); }

namespace detail {

Step structural_step(const DiscreteDGP& g, const InterventionSpec& w, int pos, int u,
                     const std::vector<std::int8_t>& code, const std::vector<std::int8_t>* source) {
  auto at = [&](int p) { return static_cast<int>(code[static_cast<std::size_t>(p)]); };
  auto prob = [&](const Cpt& t) { return Step{false, 0, eval(t, u, code)}; };
  auto fixed = [](int v) { return Step{true, v, 0.0}; };

  if (pos == Layout::l0) return g.has_l0 ? prob(g.l0) : fixed(0);
  if (pos == Layout::a) return w.set_a ? fixed(*w.set_a) : prob(g.a);

  const int k = (pos - 2) / Layout::stride;
  const int slot = (pos - 2) % Layout::stride;
  const bool first = k == 0;
  const int pc = first ? 0 : at(Layout::c(k - 1));
  const int pd = first ? 0 : at(Layout::d(k - 1));
  const int py = first ? 0 : at(Layout::y(k - 1));
  const auto ku = static_cast<std::size_t>(k);

  switch (slot) {
    case 0:  // C_{k+1}
      if (pc) return fixed(1);
      if (pd || py) return fixed(0);
      if (w.eliminate_censoring) return fixed(0);
      return prob(g.c[ku]);
    case 1:  // D_{k+1}
      if (at(Layout::c(k))) return fixed(0);
      if (pd) return fixed(1);
      if (py) return fixed(0);
      if (w.competing_from) return fixed(source ? (*source)[static_cast<std::size_t>(Layout::d(k))] : 0);
      if (w.eliminate_competing) return fixed(0);
      return prob(g.d[ku]);
    case 2:  // Y_{k+1}
      if (at(Layout::c(k))) return fixed(0);
      if (py) return fixed(1);
      if (at(Layout::d(k))) return fixed(0);
      return prob(g.y[ku]);
    default:  // L_{k+1}
      if (!g.time_varying_l || k == g.k_max) return fixed(0);
      if (at(Layout::c(k)) || at(Layout::d(k)) || at(Layout::y(k))) return fixed(0);
      return prob(g.l[ku]);
  }
}

}  // namespace detail

namespace {

std::vector<Cpt> repeat(const Cpt& t, int n) { return std::vector<Cpt>(static_cast<std::size_t>(n), t); }

}  // namespace

DiscreteDGP figure1_dgp() {
  DiscreteDGP g;
  g.name = "figure1_dgp";
  g.description =
      "Randomized A; unmeasured U affects only the event of interest. Loss to follow-up "
      "depends on A and k, the competing event on A. Y tables index (A, U).";
  g.k_max = 3;
  g.p_u = 0.5;
  g.a = Cpt::constant(0.5);
  for (int k = 0; k <= g.k_max; ++k) {
    const double bump = 0.01 * k;
    g.c.push_back({{"A"}, {0.03 + bump, 0.06 + bump}});
  }
  g.d = repeat({{"A"}, {0.06, 0.12}}, g.k_max + 1);
  // bit 0 = A, bit 1 = U
  g.y = repeat({{"A", "U"}, {0.03, 0.02, 0.15, 0.09}}, g.k_max + 1);
  return g;
}

DiscreteDGP figure2_dgp() {
  DiscreteDGP g = figure1_dgp();
  g.name = "figure2_dgp";
  g.description =
      "As figure1_dgp, but U also raises the competing-event hazard, so the competing event "
      "and the event of interest share an unmeasured cause.";
  g.d = repeat({{"A", "U"}, {0.04, 0.08, 0.15, 0.25}}, g.k_max + 1);
  return g;
}

DiscreteDGP hazard_paradox_dgp() {
  DiscreteDGP g;
  g.name = "hazard_paradox_dgp";
  g.description =
      "Two intervals. A is strongly protective for Y1; U strongly raises Y1 and Y2; Y2 has no "
      "treatment parent. No loss to follow-up; constant competing-event hazard 0.05.";
  g.k_max = 1;
  g.p_u = 0.5;
  g.a = Cpt::constant(0.5);
  g.c = repeat(Cpt::constant(0.0), 2);
  g.d = repeat(Cpt::constant(0.05), 2);
  g.y = {{{"A", "U"}, {0.10, 0.02, 0.60, 0.20}}, {{"U"}, {0.10, 0.50}}};
  return g;
}

DiscreteDGP section6_extreme_dgp() {
  DiscreteDGP g;
  g.name = "section6_extreme_dgp";
  g.description =
      "Treated subjects all fail from the competing event in the first interval; untreated "
      "subjects never do. Event hazard 0.2 (a=0) and 0.3 (a=1). No loss to follow-up.";
  g.k_max = 2;
  g.p_u = 0.5;
  g.a = Cpt::constant(0.5);
  g.c = repeat(Cpt::constant(0.0), 3);
  g.d = {{{"A"}, {0.0, 1.0}}, Cpt::constant(0.0), Cpt::constant(0.0)};
  g.y = repeat({{"A"}, {0.2, 0.3}}, 3);
  return g;
}

std::vector<DiscreteDGP> canned_dgps() {
  return {figure1_dgp(), figure2_dgp(), hazard_paradox_dgp(), section6_extreme_dgp()};
}

DiscreteDGP canned_dgp(std::string_view name) {
  for (auto& g : canned_dgps()) {
    std::string_view n = g.name;
    if (name == n || (n.size() > 4 && name == n.substr(0, n.size() - 4))) return g;
  }
  throw ConfigError("unknown canned DGP '" + std::string(name) +
                    "' (figure1, figure2, hazard_paradox, section6_extreme)");
}

DiscreteDGP random_dgp(std::uint64_t seed, const RandomDgpOptions& opt) {
  Rng rng(derive_seed(seed, 0x0dc0ffee));
  auto unif = [&](double lo, double hi) { return lo + (hi - lo) * rng.uniform(); };
  DiscreteDGP g;
  g.name = "random_dgp_" + std::to_string(seed);
  g.k_max = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(std::max(1, opt.max_k))));
  g.has_l0 = rng.bernoulli(0.7);
  g.time_varying_l = opt.allow_time_varying_l && rng.bernoulli(0.5);
  g.p_u = unif(0.2, 0.8);

  auto table = [&](std::vector<std::string> allowed, double lo, double hi) {
    Cpt t;
    t.parents.clear();
    for (const auto& p : allowed)
      if (t.parents.size() < 3 && rng.bernoulli(0.5)) t.parents.push_back(p);
    t.p.resize(std::size_t{1} << t.parents.size());
    for (auto& v : t.p) v = unif(lo, hi);
    return t;
  };
  if (g.has_l0) g.l0 = table({"U"}, 0.2, 0.8);
  g.a = table(g.has_l0 ? std::vector<std::string>{"U", "L0"} : std::vector<std::string>{"U"}, 0.2,
              0.8);
  for (int k = 0; k <= g.k_max; ++k) {
    const auto allowed = allowed_parents(g, k);
    g.c.push_back(table(allowed, opt.min_prob, opt.max_prob));
    g.d.push_back(table(allowed, opt.min_prob, opt.max_prob));
    g.y.push_back(table(allowed, opt.min_prob, opt.max_prob));
  }
  if (g.time_varying_l)
    for (int k = 1; k <= g.k_max; ++k) g.l.push_back(table(allowed_parents(g, k - 1), 0.2, 0.8));
  g.description = "random positivity-respecting DGP";
  g.validate();
  return g;
}

CovariateSchema simulated_schema(const DiscreteDGP& g) {
  CovariateSchema s;
  if (g.has_l0) s.covariates.push_back({"L0", {0.0, 1.0}});
  return s;
}

Cohort simulate_cohort(const DiscreteDGP& g, std::size_t n, std::uint64_t seed,
                       const InterventionSpec& w) {
  g.validate();
  if (w.competing_from) throw ConfigError("simulate_cohort runs a single world");
  const auto len = Layout::length(g.k_max);
  std::vector<PersonTimeRecord> records;
  records.reserve(n * static_cast<std::size_t>(g.k_max + 1));
  std::vector<std::int8_t> code(len);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, i));
    const int u = rng.uniform() < g.p_u ? 1 : 0;
    std::fill(code.begin(), code.end(), 0);
    for (std::size_t pos = 0; pos < len; ++pos) {
      const auto s = detail::structural_step(g, w, static_cast<int>(pos), u, code, nullptr);
      // One uniform per variable, drawn even when forced, keeps streams aligned.
      const double e = rng.uniform();
      code[pos] = static_cast<std::int8_t>(s.forced ? s.value : (e < s.p ? 1 : 0));
    }
    const std::string id = std::to_string(i + 1);
    std::vector<double> l0;
    if (g.has_l0) l0.push_back(code[Layout::l0]);
    for (int k = 0; k <= g.k_max; ++k) {
      PersonTimeRecord r{id, k, code[Layout::a], l0, code[Layout::c(k)], code[Layout::d(k)],
                         code[Layout::y(k)]};
      const bool stop = r.terminal();
      records.push_back(std::move(r));
      if (stop) break;
    }
  }
  return Cohort(std::move(records), simulated_schema(g), g.k_max);
}

}  // namespace crisk::oracle
