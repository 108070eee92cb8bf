// Micro benchmarks for the hot paths: pooled logistic fit, the estimators,
// exact enumeration and the bootstrap.

#include <benchmark/benchmark.h>

#include <map>

#include "crisk/estimators.hpp"
#include "crisk/hazards.hpp"
#include "crisk/inference.hpp"
#include "crisk/oracle.hpp"

namespace {

using namespace crisk;

DesignSpec spec(HazardKind kind, int degree) {
  DesignSpec s;
  s.kind = kind;
  s.time_degree = degree;
  s.treatment_time_interaction = true;
  return s;
}

const Cohort& cohort(std::size_t n) {
  static std::map<std::size_t, Cohort> cache;
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, oracle::simulate_cohort(oracle::figure1_dgp(), n, 5)).first;
  return it->second;
}

void BM_fit_event(benchmark::State& st) {
  const auto& c = cohort(static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) {
    auto m = fit_pooled_logistic(c, spec(HazardKind::event, 3), Outcome::y_next,
                                 RiskSet::standard(HazardKind::event));
    benchmark::DoNotOptimize(m.coefficients.data());
  }
  st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(c.record_count()));
}
BENCHMARK(BM_fit_event)->Arg(1000)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);

struct Models {
  FittedHazardModel ev, cm, cs;
  explicit Models(const Cohort& c)
      : ev(fit_pooled_logistic(c, spec(HazardKind::event, 3), Outcome::y_next,
                               RiskSet::standard(HazardKind::event))),
        cm(fit_pooled_logistic(c, spec(HazardKind::competing, 3), Outcome::d_next,
                               RiskSet::standard(HazardKind::competing))),
        cs(fit_pooled_logistic(c, spec(HazardKind::censoring, 3), Outcome::c_next,
                               RiskSet::standard(HazardKind::censoring))) {}
  HazardModels view() const { return {&ev, &cm, &cs}; }
};

void BM_estimator(benchmark::State& st) {
  const auto& c = cohort(10000);
  const Models m(c);
  const auto method = static_cast<Method>(st.range(0));
  const EstimandSpec s{Target::total_risk, method, 1, c.k_max() + 1};
  for (auto _ : st) {
    auto r = method == Method::gformula ? estimate_risk_gformula(c, m.view(), s)
                                        : estimate_risk_ipw(c, m.view(), s);
    benchmark::DoNotOptimize(r.values.data());
  }
}
BENCHMARK(BM_estimator)
    ->Arg(static_cast<int>(Method::gformula))
    ->Arg(static_cast<int>(Method::ipw_cause_specific))
    ->Arg(static_cast<int>(Method::ipw_subdistribution))
    ->Unit(benchmark::kMicrosecond);

void BM_enumerate(benchmark::State& st) {
  const auto g = oracle::random_dgp(static_cast<std::uint64_t>(st.range(0)));
  for (auto _ : st) {
    auto law = oracle::enumerate_observed_law(g);
    benchmark::DoNotOptimize(law.probs.data());
  }
  st.SetLabel("K=" + std::to_string(g.k_max));
}
BENCHMARK(BM_enumerate)->DenseRange(1, 4)->Unit(benchmark::kMicrosecond);

void BM_verify(benchmark::State& st) {
  const auto g = oracle::figure1_dgp();
  for (auto _ : st) {
    auto r = oracle::verify_identities(g);
    benchmark::DoNotOptimize(r.entries.data());
  }
}
BENCHMARK(BM_verify)->Unit(benchmark::kMillisecond);

void BM_bootstrap(benchmark::State& st) {
  const auto& c = cohort(1000);
  const Statistic stat = [](const Cohort& d) {
    const auto ev = fit_pooled_logistic(d, spec(HazardKind::event, 3), Outcome::y_next,
                                        RiskSet::standard(HazardKind::event));
    const auto cm = fit_pooled_logistic(d, spec(HazardKind::competing, 3), Outcome::d_next,
                                        RiskSet::standard(HazardKind::competing));
    const HazardModels m{&ev, &cm, nullptr};
    return std::vector<double>{
        estimate_risk_gformula(d, m, {Target::total_risk, Method::gformula, 1, d.k_max() + 1})
            .at_horizon()};
  };
  BootstrapPlan plan;
  plan.replicates = static_cast<int>(st.range(0));
  for (auto _ : st) {
    auto r = bootstrap_percentile_ci(c, stat, plan, 1);
    benchmark::DoNotOptimize(r.draws.data());
  }
}
BENCHMARK(BM_bootstrap)->Arg(50)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
