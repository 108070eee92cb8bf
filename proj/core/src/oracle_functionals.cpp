#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>

#include "crisk/error.hpp"
#include "crisk/oracle.hpp"
#include "oracle_internal.hpp"

namespace crisk::oracle {

std::string_view to_string(Formula f) {
  switch (f) {
    case Formula::gform1: return "gform1";
    case Formula::ipw1: return "ipw1";
    case Formula::gform2: return "gform2";
    case Formula::gform2taub: return "gform2taub";
    case Formula::ipw2first: return "ipw2first";
    case Formula::ipw2: return "ipw2";
    case Formula::gform_competing: return "gform_competing";
    case Formula::ipw_competing: return "ipw_competing";
    case Formula::hazard_h1: return "hazard_h1";
    case Formula::hazard_H2: return "hazard_H2";
    case Formula::hazard_cs1: return "hazard_cs1";
    case Formula::hazard_cs2: return "hazard_cs2";
  }
  return "?";
}

namespace {

constexpr Estimand kEstimands[] = {
    Estimand::risk1,   Estimand::risk2,   Estimand::risk3,         Estimand::composite,
    Estimand::hazard1, Estimand::hazard2, Estimand::hazard3,       Estimand::hazard4,
    Estimand::RD1,     Estimand::RD2,     Estimand::RD3,           Estimand::RD4,
    Estimand::hazard1_ratio, Estimand::hazard2_ratio, Estimand::hazard3_ratio,
    Estimand::SACE,    Estimand::NDE};

}  // namespace

std::string_view to_string(Estimand e) {
  switch (e) {
    case Estimand::risk1: return "risk1";
    case Estimand::risk2: return "risk2";
    case Estimand::risk3: return "risk3";
    case Estimand::composite: return "composite";
    case Estimand::hazard1: return "hazard1";
    case Estimand::hazard2: return "hazard2";
    case Estimand::hazard3: return "hazard3";
    case Estimand::hazard4: return "hazard4";
    case Estimand::RD1: return "RD1";
    case Estimand::RD2: return "RD2";
    case Estimand::RD3: return "RD3";
    case Estimand::RD4: return "RD4";
    case Estimand::hazard1_ratio: return "hazard1_ratio";
    case Estimand::hazard2_ratio: return "hazard2_ratio";
    case Estimand::hazard3_ratio: return "hazard3_ratio";
    case Estimand::SACE: return "SACE";
    case Estimand::NDE: return "NDE";
  }
  return "?";
}

Estimand estimand_from_string(std::string_view s) {
  for (auto e : kEstimands)
    if (to_string(e) == s) return e;
  throw ConfigError("unknown estimand '" + std::string(s) + "'");
}

namespace {

std::string position_name(int pos) {
  if (pos == Layout::l0) return "L0";
  if (pos == Layout::a) return "A";
  const int k = (pos - 2) / Layout::stride;
  static const char* names[] = {"C", "D", "Y", "L"};
  return names[(pos - 2) % Layout::stride] + std::to_string(k + 1);
}

/// Prefix tree of the observed law.
struct Trie {
  struct Node {
    double mass = 0.0;
    int child[2] = {-1, -1};
  };
  std::vector<Node> nodes;
  std::size_t depth = 0;

  explicit Trie(const ObservedLaw& law) {
    nodes.emplace_back();
    if (!law.codes.empty()) depth = law.codes.front().size();
    for (std::size_t i = 0; i < law.codes.size(); ++i) {
      int n = 0;
      nodes[0].mass += law.probs[i];
      for (auto v : law.codes[i]) {
        int next = nodes[static_cast<std::size_t>(n)].child[v];
        if (next < 0) {
          next = static_cast<int>(nodes.size());
          nodes[static_cast<std::size_t>(n)].child[v] = next;
          nodes.emplace_back();
        }
        n = next;
        nodes[static_cast<std::size_t>(n)].mass += law.probs[i];
      }
    }
  }

  const Node& at(int n) const { return nodes[static_cast<std::size_t>(n)]; }
  double mass(int n) const { return n < 0 ? 0.0 : at(n).mass; }
  int child(int n, int v) const { return at(n).child[v]; }
  /// Pr[next = v | prefix at n].
  double cond(int n, int v) const {
    const double m = at(n).mass;
    return m > 0.0 ? mass(child(n, v)) / m : 0.0;
  }
};

enum class Family { c1, c2 };

Family family_of(Formula f) {
  switch (f) {
    case Formula::gform1:
    case Formula::ipw1:
    case Formula::hazard_h1: return Family::c1;
    default: return Family::c2;
  }
}

[[noreturn]] void positivity_fail(int pos, int value, int a, const std::string& where) {
  throw PositivityError("Pr[" + position_name(pos) + "=" + std::to_string(value) + " | " + where +
                        "] = 0 under A=" + std::to_string(a));
}

/// Walks the risk set (no event yet) through block k_last and throws at the
/// first empty conditioning event.
void check_positivity_impl(const Trie& t, Family fam, int a, int k_last) {
  const int root = 0;
  for (int l0 = 0; l0 <= 1; ++l0) {
    const int nl = t.child(root, l0);
    if (t.mass(nl) <= 0.0) continue;
    const int na = t.child(nl, a);
    if (t.mass(na) <= 0.0) positivity_fail(Layout::a, a, a, "L0=" + std::to_string(l0));
    std::function<void(int, int)> block = [&](int node, int k) {
      if (k > k_last) return;
      const int nc = t.child(node, 0);
      if (t.mass(nc) <= 0.0) positivity_fail(Layout::c(k), 0, a, "risk-set history");
      const int nd = t.child(nc, 0);
      if (t.mass(nd) <= 0.0) {
        if (fam == Family::c1) positivity_fail(Layout::d(k), 0, a, "C=0, risk-set history");
        return;
      }
      const int ny = t.child(nd, 0);
      if (t.mass(ny) <= 0.0) return;
      for (int l = 0; l <= 1; ++l) {
        const int nx = t.child(ny, l);
        if (t.mass(nx) > 0.0) block(nx, k + 1);
      }
    };
    block(na, 0);
  }
}

void check_args(const ObservedLaw& law, int a, int k) {
  if (a != 0 && a != 1) throw ConfigError("treatment arm must be 0 or 1");
  if (k < 0 || k > law.k_max)
    throw ConfigError("interval index " + std::to_string(k) + " outside 0.." +
                      std::to_string(law.k_max));
  if (law.codes.empty()) throw ConfigError("observed law is empty");
}

/// g-formula expectation of the outcome at `outcome` with the given positions
/// set by intervention. Other variables follow their observed conditionals.
double gformula_generic(const Trie& t, int a, int outcome, const std::function<int(int)>& fixed) {
  std::function<double(int, int)> walk = [&](int node, int pos) -> double {
    if (pos == outcome) return t.cond(node, 1);
    const int v = pos == Layout::a ? a : fixed(pos);
    if (v >= 0) {
      const int next = t.child(node, v);
      if (t.mass(next) <= 0.0) positivity_fail(pos, v, a, "history");
      return walk(next, pos + 1);
    }
    double sum = 0.0;
    for (int b = 0; b <= 1; ++b) {
      const int next = t.child(node, b);
      if (t.mass(next) > 0.0) sum += t.cond(node, b) * walk(next, pos + 1);
    }
    return sum;
  };
  return walk(0, 0);
}

/// Cumulative incidence of Y and D by k+1 from cause-specific hazards,
/// with no censoring.
std::pair<double, double> gformula_hazard_form(const Trie& t, int a, int k_last) {
  std::function<std::pair<double, double>(int, int)> block = [&](int node, int k) {
    const int nc = t.child(node, 0);
    if (t.mass(nc) <= 0.0) positivity_fail(Layout::c(k), 0, a, "risk-set history");
    const double pd0 = t.cond(nc, 0);
    const double risk_d = 1.0 - pd0;
    if (pd0 <= 0.0) return std::pair{0.0, risk_d};
    const int nd = t.child(nc, 0);
    const double py = t.cond(nd, 1);
    double ry = pd0 * py, rd = risk_d;
    const double stay = pd0 * (1.0 - py);
    if (k == k_last || stay <= 0.0) return std::pair{ry, rd};
    const int ny = t.child(nd, 0);
    for (int l = 0; l <= 1; ++l) {
      const int nx = t.child(ny, l);
      if (t.mass(nx) <= 0.0) continue;
      const auto [fy, fd] = block(nx, k + 1);
      ry += stay * t.cond(ny, l) * fy;
      rd += stay * t.cond(ny, l) * fd;
    }
    return std::pair{ry, rd};
  };
  double ry = 0.0, rd = 0.0;
  for (int l0 = 0; l0 <= 1; ++l0) {
    const int nl = t.child(0, l0);
    if (t.mass(nl) <= 0.0) continue;
    const int na = t.child(nl, a);
    if (t.mass(na) <= 0.0) positivity_fail(Layout::a, a, a, "L0=" + std::to_string(l0));
    const auto [fy, fd] = block(na, 0);
    ry += t.cond(0, l0) * fy;
    rd += t.cond(0, l0) * fd;
  }
  return {ry, rd};
}

/// Moments over codes with A = a, each weighted by base(code).
WeightedMoments moments_impl(const ObservedLaw& law, const Trie& t, int a,
                             const std::function<double(const std::vector<std::int8_t>&)>& base) {
  const auto K1 = static_cast<std::size_t>(law.k_max + 1);
  WeightedMoments m;
  for (auto* v : {&m.y_w, &m.surv_w, &m.y_wsub, &m.surv_wsub, &m.cs1_num, &m.cs1_den, &m.cs2_num,
                  &m.cs2_den})
    v->assign(K1, 0.0);
  std::vector<int> path(t.depth + 1);
  for (std::size_t i = 0; i < law.codes.size(); ++i) {
    const auto& code = law.codes[i];
    if (code[Layout::a] != a) continue;
    const double w0 = law.probs[i] * base(code);
    if (w0 == 0.0) continue;
    path[0] = 0;
    for (std::size_t p = 0; p < code.size(); ++p) path[p + 1] = t.child(path[p], code[p]);
    // Running weights; zero once an indicator fails.
    double wc = 1.0, wd = 1.0;
    int y_prev = 0, d_prev = 0;
    for (int k = 0; k <= law.k_max; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      const int pc = Layout::c(k), pd = Layout::d(k), py = Layout::y(k);
      if (code[pc] != 0)
        wc = 0.0;
      else if (wc != 0.0)
        wc /= t.cond(path[pc], 0);
      if (code[pd] != 0)
        wd = 0.0;
      else if (wd != 0.0)
        wd /= t.cond(path[pd], 0);
      const int y = code[py], d = code[pd];
      const double W = wc * wd;
      const double alive = y_prev ? 0.0 : 1.0;
      m.y_w[ku] += w0 * y * alive * W;
      m.surv_w[ku] += w0 * alive * W;
      m.y_wsub[ku] += w0 * y * alive * wc;
      m.surv_wsub[ku] += w0 * alive * wc;
      m.cs1_num[ku] += w0 * y * (1 - d) * alive * wc;
      m.cs1_den[ku] += w0 * (1 - d) * alive * wc;
      m.cs2_num[ku] += w0 * d * alive * (1 - d_prev) * wc;
      m.cs2_den[ku] += w0 * alive * (1 - d_prev) * wc;
      y_prev = y;
      d_prev = d;
    }
  }
  return m;
}

/// Moments standardized to the marginal law of L0.
WeightedMoments standardized_moments(const ObservedLaw& law, const Trie& t, int a) {
  return moments_impl(law, t, a, [&](const std::vector<std::int8_t>& code) {
    const int nl = t.child(0, code[Layout::l0]);
    const double f_l0 = t.mass(nl);
    const double joint = t.mass(t.child(nl, a));
    return f_l0 / joint;
  });
}

double ratio_or_fail(double num, double den, Formula f, int a, int k) {
  if (!(den > 0.0))
    throw PositivityError(std::string(to_string(f)) + ": empty weighted risk set at interval " +
                          std::to_string(k + 1) + " under A=" + std::to_string(a));
  return num / den;
}

double evaluate(const ObservedLaw& law, Formula f, int a, int k) {
  check_args(law, a, k);
  const Trie t(law);
  check_positivity_impl(t, family_of(f), a, k);
  const auto ku = static_cast<std::size_t>(k);
  auto except_c = [](int pos) {
    return pos >= 2 && (pos - 2) % Layout::stride == 0 ? 0 : -1;
  };
  auto except_cd = [](int pos) {
    return pos >= 2 && (pos - 2) % Layout::stride <= 1 ? 0 : -1;
  };

  switch (f) {
    case Formula::gform1: return gformula_generic(t, a, Layout::y(k), except_cd);
    case Formula::gform2: return gformula_generic(t, a, Layout::y(k), except_c);
    case Formula::gform2taub: return gformula_hazard_form(t, a, k).first;
    case Formula::gform_competing: return gformula_hazard_form(t, a, k).second;
    default: break;
  }

  const auto m = standardized_moments(law, t, a);
  switch (f) {
    case Formula::ipw1:
    case Formula::ipw2first: {
      const auto& num = f == Formula::ipw1 ? m.y_w : m.y_wsub;
      const auto& den = f == Formula::ipw1 ? m.surv_w : m.surv_wsub;
      double surv = 1.0;
      for (std::size_t j = 0; j <= ku; ++j)
        if (den[j] > 0.0) surv *= 1.0 - num[j] / den[j];
      return 1.0 - surv;
    }
    case Formula::ipw2:
    case Formula::ipw_competing: {
      double surv = 1.0, risk = 0.0;
      for (std::size_t j = 0; j <= ku && surv > 0.0; ++j) {
        const double h4 = m.cs2_den[j] > 0.0 ? m.cs2_num[j] / m.cs2_den[j] : 0.0;
        const double h3 = m.cs1_den[j] > 0.0 ? m.cs1_num[j] / m.cs1_den[j] : 0.0;
        risk += surv * (f == Formula::ipw2 ? h3 * (1.0 - h4) : h4);
        surv *= (1.0 - h3) * (1.0 - h4);
      }
      return risk;
    }
    case Formula::hazard_h1: return ratio_or_fail(m.y_w[ku], m.surv_w[ku], f, a, k);
    case Formula::hazard_H2: return ratio_or_fail(m.y_wsub[ku], m.surv_wsub[ku], f, a, k);
    case Formula::hazard_cs1: return ratio_or_fail(m.cs1_num[ku], m.cs1_den[ku], f, a, k);
    case Formula::hazard_cs2: return ratio_or_fail(m.cs2_num[ku], m.cs2_den[ku], f, a, k);
    default: break;
  }
  throw ConfigError("unhandled formula");
}

}  // namespace

void check_positivity(const ObservedLaw& law, Formula f, int a) {
  check_args(law, a, 0);
  check_positivity_impl(Trie(law), family_of(f), a, law.k_max);
}

double exact_identifying_functional(const ObservedLaw& law, Formula f, int a, int k) {
  return evaluate(law, f, a, k);
}

double exact_identifying_functional(const DiscreteDGP& dgp, Formula f, int a, int k) {
  return evaluate(enumerate_observed_law(dgp), f, a, k);
}

WeightedMoments weighted_moments(const ObservedLaw& law, int a) {
  check_args(law, a, 0);
  const Trie t(law);
  double pa = 0.0;
  for (std::size_t i = 0; i < law.codes.size(); ++i)
    if (law.codes[i][Layout::a] == a) pa += law.probs[i];
  if (!(pa > 0.0)) throw PositivityError("Pr[A=" + std::to_string(a) + "] = 0");
  return moments_impl(law, t, a, [pa](const std::vector<std::int8_t>&) { return 1.0 / pa; });
}

// ---------------------------------------------------------------------------
// Counterfactual truths

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct WorldTruth {
  std::vector<double> risk_y, risk_d, h_sub, h_cs, h_d, h_elim;
};

/// Risks and hazards of one single-world distribution, optionally restricted
/// to U = u.
WorldTruth world_truth(const DiscreteDGP& g, const InterventionSpec& w, int only_u = -1) {
  const auto joint = enumerate_worlds(g, std::span(&w, 1));
  const auto K1 = static_cast<std::size_t>(g.k_max + 1);
  std::vector<double> ry(K1), rd(K1), hn(K1), hd(K1), csn(K1), csd(K1), dn(K1), dd(K1);
  double total = 0.0;
  for (const auto& h : joint) {
    if (only_u >= 0 && h.u != only_u) continue;
    total += h.prob;
    const auto& c = h.codes[0];
    int y_prev = 0, d_prev = 0;
    for (std::size_t k = 0; k < K1; ++k) {
      const int y = c[Layout::y(static_cast<int>(k))], d = c[Layout::d(static_cast<int>(k))];
      ry[k] += h.prob * y;
      rd[k] += h.prob * d;
      if (!y_prev) {
        hd[k] += h.prob;
        hn[k] += h.prob * y;
        if (!d) {
          csd[k] += h.prob;
          csn[k] += h.prob * y;
        }
        if (!d_prev) {
          dd[k] += h.prob;
          dn[k] += h.prob * d;
        }
      }
      y_prev = y;
      d_prev = d;
    }
  }
  WorldTruth out;
  auto ratio = [](double n, double d) { return d > 0.0 ? n / d : kNaN; };
  for (std::size_t k = 0; k < K1; ++k) {
    out.risk_y.push_back(ry[k] / total);
    out.risk_d.push_back(rd[k] / total);
    out.h_sub.push_back(ratio(hn[k], hd[k]));
    out.h_cs.push_back(ratio(csn[k], csd[k]));
    out.h_d.push_back(ratio(dn[k], dd[k]));
  }
  out.h_elim = out.h_sub;
  return out;
}

}  // namespace

namespace detail {

TruthTables compute_truth(const DiscreteDGP& g) {
  TruthTables t;
  for (int a = 0; a <= 1; ++a) {
    const auto elim = world_truth(g, {a, true, true, {}});
    const auto total = world_truth(g, {a, true, false, {}});
    t.risk1[a] = elim.risk_y;
    t.hazard1[a] = elim.h_elim;
    t.risk2[a] = total.risk_y;
    t.risk3[a] = total.risk_d;
    for (std::size_t k = 0; k < total.risk_y.size(); ++k)
      t.composite[a].push_back(total.risk_y[k] + total.risk_d[k]);
    t.hazard2[a] = total.h_sub;
    t.hazard3[a] = total.h_cs;
    t.hazard4[a] = total.h_d;
  }
  return t;
}

}  // namespace detail

namespace {

double defined(double v, std::string_view what, int a, int k) {
  if (std::isnan(v))
    throw PositivityError(std::string(what) + " undefined at interval " + std::to_string(k + 1) +
                          " under A=" + std::to_string(a) + " (empty risk set)");
  return v;
}

double hazard_ratio(const std::vector<double>* h, std::string_view what, int k) {
  const double h1 = defined(h[1][static_cast<std::size_t>(k)], what, 1, k);
  const double h0 = defined(h[0][static_cast<std::size_t>(k)], what, 0, k);
  if (h0 == 0.0)
    throw PositivityError(std::string(what) + " ratio undefined: reference hazard is 0");
  return h1 / h0;
}

double sace(const DiscreteDGP& g, int k) {
  const InterventionSpec worlds[] = {{1, true, false, {}}, {0, true, false, {}}};
  const auto joint = enumerate_worlds(g, worlds);
  const int pd = Layout::d(k), py = Layout::y(k);
  double mass = 0.0, diff = 0.0;
  for (const auto& h : joint) {
    if (h.codes[0][pd] || h.codes[1][pd]) continue;
    mass += h.prob;
    diff += h.prob * (h.codes[0][py] - h.codes[1][py]);
  }
  if (!(mass > 0.0))
    throw PositivityError("SACE undefined: nobody is free of the competing event by interval " +
                          std::to_string(k + 1) + " under both arms");
  return diff / mass;
}

}  // namespace

double nde_treated_risk(const DiscreteDGP& g, int k) {
  if (k < 0 || k > g.k_max) throw ConfigError("interval index outside 0..K");
  const InterventionSpec worlds[] = {{0, true, false, {}}, {1, true, false, std::size_t{0}}};
  const auto joint = enumerate_worlds(g, worlds);
  double r = 0.0;
  for (const auto& h : joint) r += h.prob * h.codes[1][Layout::y(k)];
  return r;
}

double u_conditional_hazard(const DiscreteDGP& g, int a, int u, int k) {
  if (k < 0 || k > g.k_max) throw ConfigError("interval index outside 0..K");
  if (u != 0 && u != 1) throw ConfigError("U must be 0 or 1");
  const double pu = u ? g.p_u : 1.0 - g.p_u;
  if (!(pu > 0.0)) throw PositivityError("Pr[U=" + std::to_string(u) + "] = 0");
  const auto w = world_truth(g, {a, true, true, {}}, u);
  return defined(w.h_elim[static_cast<std::size_t>(k)], "U-conditional hazard", a, k);
}

double true_estimand(const DiscreteDGP& g, Estimand e, EstimandArgs args) {
  g.validate();
  const int a = args.a, k = args.k;
  if (a != 0 && a != 1) throw ConfigError("treatment arm must be 0 or 1");
  if (k < 0 || k > g.k_max)
    throw ConfigError("interval index " + std::to_string(k) + " outside 0.." +
                      std::to_string(g.k_max));
  if (e == Estimand::SACE) return sace(g, k);
  if (e == Estimand::NDE) {
    const auto w = world_truth(g, {0, true, false, {}});
    return nde_treated_risk(g, k) - w.risk_y[static_cast<std::size_t>(k)];
  }
  const auto t = detail::compute_truth(g);
  const auto ku = static_cast<std::size_t>(k);
  const auto au = static_cast<std::size_t>(a);
  switch (e) {
    case Estimand::risk1: return t.risk1[au][ku];
    case Estimand::risk2: return t.risk2[au][ku];
    case Estimand::risk3: return t.risk3[au][ku];
    case Estimand::composite: return t.composite[au][ku];
    case Estimand::hazard1: return defined(t.hazard1[au][ku], "hazard1", a, k);
    case Estimand::hazard2: return defined(t.hazard2[au][ku], "hazard2", a, k);
    case Estimand::hazard3: return defined(t.hazard3[au][ku], "hazard3", a, k);
    case Estimand::hazard4: return defined(t.hazard4[au][ku], "hazard4", a, k);
    case Estimand::RD1: return t.risk1[1][ku] - t.risk1[0][ku];
    case Estimand::RD2: return t.risk2[1][ku] - t.risk2[0][ku];
    case Estimand::RD3: return t.composite[1][ku] - t.composite[0][ku];
    case Estimand::RD4: return t.risk3[1][ku] - t.risk3[0][ku];
    case Estimand::hazard1_ratio: return hazard_ratio(t.hazard1, "hazard1", k);
    case Estimand::hazard2_ratio: return hazard_ratio(t.hazard2, "hazard2", k);
    case Estimand::hazard3_ratio: return hazard_ratio(t.hazard3, "hazard3", k);
    default: break;
  }
  throw ConfigError("unhandled estimand");
}

}  // namespace crisk::oracle
