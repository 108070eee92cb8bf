#include <algorithm>
#include <map>
#include <numeric>

#include "crisk/error.hpp"
#include "crisk/oracle.hpp"
#include "oracle_internal.hpp"

namespace crisk::oracle {

namespace {

struct Enumerator {
  const DiscreteDGP& dgp;
  std::span<const InterventionSpec> worlds;
  std::size_t cap;
  std::size_t len;
  int u = 0;
  std::vector<std::vector<std::int8_t>> codes;
  std::vector<JointHistory> out;

  void emit(double prob) {
    if (out.size() >= cap)
      throw ConfigError("enumeration exceeds " + std::to_string(cap) +
                        " joint histories; reduce K or the number of worlds");
    out.push_back({u, codes, prob});
  }

  void descend(std::size_t pos, double prob) {
    if (pos == len) {
      emit(prob);
      return;
    }
    const auto W = worlds.size();
    std::vector<detail::Step> steps(W);
    std::vector<double> cuts{0.0, 1.0};
    for (std::size_t w = 0; w < W; ++w) {
      const auto* src = worlds[w].competing_from ? &codes[*worlds[w].competing_from] : nullptr;
      steps[w] = detail::structural_step(dgp, worlds[w], static_cast<int>(pos), u, codes[w], src);
      if (!steps[w].forced) cuts.push_back(steps[w].p);
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    // The shared uniform falls in [lo, hi); world w takes 1 iff p_w >= hi.
    for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
      const double lo = cuts[s], hi = cuts[s + 1];
      const double width = hi - lo;
      if (width <= 0.0) continue;
      for (std::size_t w = 0; w < W; ++w) {
        int v;
        if (steps[w].forced) {
          // Cross-world copies read the source world's value at this position.
          const auto* src = worlds[w].competing_from ? &codes[*worlds[w].competing_from] : nullptr;
          v = src ? detail::structural_step(dgp, worlds[w], static_cast<int>(pos), u, codes[w], src).value
                  : steps[w].value;
        } else {
          v = steps[w].p >= hi ? 1 : 0;
        }
        codes[w][pos] = static_cast<std::int8_t>(v);
      }
      descend(pos + 1, prob * width);
    }
    for (auto& c : codes) c[pos] = 0;
  }
};

}  // namespace

std::vector<JointHistory> enumerate_worlds(const DiscreteDGP& dgp,
                                           std::span<const InterventionSpec> worlds,
                                           const EnumerationOptions& options) {
  dgp.validate();
  if (worlds.empty()) throw ConfigError("enumerate_worlds needs at least one world");
  for (std::size_t w = 0; w < worlds.size(); ++w) {
    if (worlds[w].set_a && *worlds[w].set_a != 0 && *worlds[w].set_a != 1)
      throw ConfigError("intervention set_a must be 0 or 1");
    if (worlds[w].competing_from && *worlds[w].competing_from >= w)
      throw ConfigError("competing_from must name an earlier world");
  }
  Enumerator e{dgp, worlds, options.max_histories, Layout::length(dgp.k_max), 0, {}, {}};
  e.codes.assign(worlds.size(), std::vector<std::int8_t>(e.len, 0));
  for (int u = 0; u <= 1; ++u) {
    const double pu = u ? dgp.p_u : 1.0 - dgp.p_u;
    if (pu <= 0.0) continue;
    e.u = u;
    e.descend(0, pu);
  }
  return std::move(e.out);
}

double ObservedLaw::total() const { return std::accumulate(probs.begin(), probs.end(), 0.0); }

ObservedLaw enumerate_observed_law(const DiscreteDGP& dgp, const EnumerationOptions& options) {
  const InterventionSpec natural{};
  const auto joint = enumerate_worlds(dgp, std::span(&natural, 1), options);
  std::map<std::vector<std::int8_t>, double> agg;
  for (const auto& h : joint) agg[h.codes[0]] += h.prob;
  ObservedLaw law;
  law.k_max = dgp.k_max;
  for (auto& [code, p] : agg) {
    if (p <= 0.0) continue;
    law.codes.push_back(code);
    law.probs.push_back(p);
  }
  return law;
}

}  // namespace crisk::oracle
