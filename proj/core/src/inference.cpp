#include "crisk/inference.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

#include "crisk/error.hpp"
#include "crisk/random.hpp"

namespace crisk {

void BootstrapPlan::validate() const {
  if (replicates < 2) throw ConfigError("bootstrap needs at least 2 replicates");
  if (!(lower_percentile > 0.0 && lower_percentile < upper_percentile && upper_percentile < 100.0))
    throw ConfigError("bootstrap percentiles must satisfy 0 < lower < upper < 100");
  if (!(max_failure_share >= 0.0 && max_failure_share <= 1.0))
    throw ConfigError("bootstrap max_failure_share must be in [0,1]");
}

double percentile_sorted(std::span<const double> sorted, double pct) {
  if (sorted.empty()) return std::nan("");
  const double h = (pct / 100.0) * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::vector<std::size_t> resample_indices(std::size_t n, std::uint64_t seed,
                                          std::uint64_t replicate) {
  Rng rng(derive_seed(seed, replicate));
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = static_cast<std::size_t>(rng.below(n));
  return idx;
}

int default_jobs() {
  if (const char* env = std::getenv("CRISK_JOBS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1 && v <= 1024) return static_cast<int>(v);
    throw ConfigError("CRISK_JOBS must be a positive integer");
  }
  return 1;
}

BootstrapResult bootstrap_percentile_ci(const Cohort& data, const Statistic& statistic,
                                        const BootstrapPlan& plan, int jobs) {
  plan.validate();
  const auto point = statistic(data);
  const auto R = static_cast<std::size_t>(plan.replicates);
  const std::size_t n = data.subject_count();

  BootstrapResult res;
  res.replicates = R;
  res.draws.assign(R, {});
  std::vector<std::string> errors(R);
  std::exception_ptr fatal;
  std::mutex fatal_mu;
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t r; (r = next.fetch_add(1)) < R;) {
      try {
        const auto idx = resample_indices(n, plan.seed, r);
        auto v = statistic(data.resample(idx));
        if (v.size() != point.size())
          throw ConfigError("bootstrap statistic changed length between replicates");
        res.draws[r] = std::move(v);
      } catch (const ConfigError&) {
        std::lock_guard lock(fatal_mu);
        if (!fatal) fatal = std::current_exception();
      } catch (const Error& e) {
        errors[r] = e.what();
      } catch (...) {
        std::lock_guard lock(fatal_mu);
        if (!fatal) fatal = std::current_exception();
      }
    }
  };

  const int workers = std::clamp(jobs, 1, static_cast<int>(std::max<std::size_t>(1, R)));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (fatal) std::rethrow_exception(fatal);

  for (std::size_t r = 0; r < R; ++r) {
    if (errors[r].empty()) continue;
    ++res.failed;
    if (res.failure_messages.size() < 5)
      res.failure_messages.push_back("replicate " + std::to_string(r) + ": " + errors[r]);
  }
  if (static_cast<double>(res.failed) > plan.max_failure_share * static_cast<double>(R)) {
    std::string msg = std::to_string(res.failed) + " of " + std::to_string(R) +
                      " bootstrap replicates failed; consider a simpler hazard model "
                      "(lower time degree or fewer covariate terms)";
    if (!res.failure_messages.empty()) msg += "; first failure: " + res.failure_messages.front();
    throw NumericalError(msg);
  }

  res.intervals.resize(point.size());
  std::vector<double> col;
  for (std::size_t q = 0; q < point.size(); ++q) {
    auto& iv = res.intervals[q];
    iv.point = point[q];
    iv.n_failed_replicates = res.failed;
    col.clear();
    for (std::size_t r = 0; r < R; ++r) {
      if (!errors[r].empty()) continue;
      const double v = res.draws[r][q];
      if (std::isnan(v))
        ++iv.n_undefined;
      else
        col.push_back(v);
    }
    std::sort(col.begin(), col.end());
    iv.lower = percentile_sorted(col, plan.lower_percentile);
    iv.upper = percentile_sorted(col, plan.upper_percentile);
  }
  return res;
}

}  // namespace crisk
