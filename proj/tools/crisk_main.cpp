// crisk: command-line front end.
//
// Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
// failure (including failed identity checks).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "crisk/cohort.hpp"
#include "crisk/config.hpp"
#include "crisk/error.hpp"
#include "crisk/inference.hpp"
#include "crisk/oracle.hpp"
#include "crisk/pipeline.hpp"

namespace {

namespace fs = std::filesystem;
using namespace crisk;

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::config: return 2;
    case ErrorKind::data: return 3;
    case ErrorKind::numerical: return 4;
  }
  return 4;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& body) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << body;
  if (!out) throw DataError("cannot write " + path.string());
}

oracle::DiscreteDGP pick_dgp(const std::string& name, const std::string& file) {
  if (!file.empty()) return oracle::dgp_from_json(read_file(file));
  if (name.empty()) throw ConfigError("give --dgp NAME or --dgp-file PATH");
  return oracle::canned_dgp(name);
}

struct Overrides {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int bootstrap = -1;
  int jobs = 0;
};

RunConfig configured(const Overrides& o) {
  auto cfg = load_run_config(o.config);
  if (!o.out.empty()) cfg.output_dir = o.out;
  if (o.seed_set) cfg.seed = o.seed;
  if (o.bootstrap == 0) cfg.bootstrap.reset();
  if (o.bootstrap > 0) {
    if (!cfg.bootstrap) cfg.bootstrap = BootstrapPlan{};
    cfg.bootstrap->replicates = o.bootstrap;
  }
  if (cfg.bootstrap) cfg.bootstrap->seed = cfg.seed;
  cfg.validate();
  return cfg;
}

void print_counts(const ValidationReport& rep) {
  for (int a : {1, 0}) {
    const auto& c = rep.arm[a];
    std::cout << "a=" << a << ": " << c.subjects << " subjects, " << c.records << " records, "
              << c.events << " events, " << c.competing_events << " competing events, "
              << c.censored << " censored\n";
  }
}

void print_report(const oracle::IdentityReport& r) {
  std::size_t na = 0, informational = 0, passed = 0;
  for (const auto& e : r.entries) {
    if (!e.applicable) {
      ++na;
      continue;
    }
    if (!e.expected_to_hold) {
      ++informational;
      continue;
    }
    if (e.pass) ++passed;
    else
      std::cout << "FAIL  " << e.name << "  left=" << e.left << " right=" << e.right
                << " delta=" << e.delta << "\n";
  }
  std::cout << r.dgp << ": " << passed << " passed, " << r.count_failed_expectations()
            << " failed, " << informational << " informational, " << na
            << " not applicable (tol " << r.tolerance << ")\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"crisk: causal risk estimands with competing events"};
  app.require_subcommand(1);
  int default_jobs_value = 1;
  try {
    default_jobs_value = default_jobs();
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  Overrides ov;
  ov.jobs = default_jobs_value;
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("-c,--config", ov.config, "run configuration (JSON)")->required();
  };
  auto add_run_flags = [&](CLI::App* sub) {
    sub->add_option("--out", ov.out, "output directory (overrides the config)");
    sub->add_option("--seed", ov.seed, "bootstrap seed (overrides the config)")
        ->each([&](const std::string&) { ov.seed_set = true; });
    sub->add_option("--bootstrap", ov.bootstrap, "bootstrap replicates; 0 disables");
    sub->add_option("-j,--jobs", ov.jobs, "worker threads (default: CRISK_JOBS or 1)")
        ->check(CLI::PositiveNumber);
  };

  auto* validate = app.add_subcommand("validate", "load and validate the configured data");
  add_config(validate);

  auto* fit = app.add_subcommand("fit", "fit the hazard models and write fit diagnostics");
  add_config(fit);
  add_run_flags(fit);

  auto* estimate = app.add_subcommand("estimate", "run the full estimation pipeline");
  add_config(estimate);
  add_run_flags(estimate);

  std::string dgp_name, dgp_file, sim_out;
  std::size_t sim_n = 1000;
  std::uint64_t sim_seed = 1;
  int set_a = -1;
  bool elim_c = false, elim_d = false;
  auto* simulate = app.add_subcommand("simulate", "simulate a person-time cohort from a DGP");
  simulate->add_option("--dgp", dgp_name, "canned DGP name");
  simulate->add_option("--dgp-file", dgp_file, "DGP JSON file");
  simulate->add_option("-n,--n", sim_n, "number of subjects")->check(CLI::PositiveNumber);
  simulate->add_option("--seed", sim_seed, "random seed");
  simulate->add_option("--set-a", set_a, "intervene on treatment")->check(CLI::Range(0, 1));
  simulate->add_flag("--eliminate-censoring", elim_c, "remove loss to follow-up");
  simulate->add_flag("--eliminate-competing", elim_d, "remove competing events");
  simulate->add_option("-o,--out", sim_out, "output CSV (default: stdout)");

  auto* oracle_cmd = app.add_subcommand("oracle", "exact computations on discrete DGPs");
  oracle_cmd->require_subcommand(1);
  double tol = 1e-10;
  std::string report_out;
  auto* verify = oracle_cmd->add_subcommand("verify", "check identities on a DGP");
  verify->add_option("--dgp", dgp_name, "canned DGP name (figure1, figure2, ...)");
  verify->add_option("--dgp-file", dgp_file, "DGP JSON file");
  verify->add_option("--tol", tol, "absolute tolerance");
  verify->add_option("--json", report_out, "write the report as JSON");
  auto* emit = oracle_cmd->add_subcommand("emit-dgp", "write canned DGPs as JSON");
  std::string emit_out;
  emit->add_option("--dgp", dgp_name, "canned DGP name; omit for all");
  emit->add_option("-o,--out", emit_out, "file (one DGP) or directory (all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*validate) {
      auto cfg = load_run_config(ov.config);
      const auto data = load_configured_cohort(cfg);
      const auto rep = validate_cohort(data);
      std::cout << "valid: " << data.subject_count() << " subjects, " << data.record_count()
                << " records, K=" << data.k_max() << "\n";
      print_counts(rep);
      return 0;
    }
    if (*fit || *estimate) {
      const auto cfg = configured(ov);
      PipelineOptions opt;
      opt.jobs = ov.jobs;
      opt.log = &std::cerr;
      opt.fit_only = fit->parsed();
      const auto res = run_pipeline(cfg, opt);
      for (const auto& row : res.analysis.effects) {
        std::cout << row.effect.description << " at k+1=" << cfg.horizon << ": ";
        if (row.effect.horizon_value)
          std::cout << *row.effect.horizon_value;
        else
          std::cout << "undefined";
        if (row.interval)
          std::cout << " (" << row.interval->lower << ", " << row.interval->upper << ")";
        std::cout << "\n";
      }
      return 0;
    }
    if (*simulate) {
      const auto g = pick_dgp(dgp_name, dgp_file);
      oracle::InterventionSpec w;
      if (set_a >= 0) w.set_a = set_a;
      w.eliminate_censoring = elim_c;
      w.eliminate_competing = elim_d;
      const auto cohort = oracle::simulate_cohort(g, sim_n, sim_seed, w);
      std::ostringstream ss;
      write_person_time(ss, cohort);
      if (sim_out.empty())
        std::cout << ss.str();
      else
        write_file(sim_out, ss.str());
      return 0;
    }
    if (*verify) {
      const auto g = pick_dgp(dgp_name, dgp_file);
      const auto rep = oracle::verify_identities(g, tol);
      print_report(rep);
      if (!report_out.empty()) write_file(report_out, oracle::report_to_json(rep) + "\n");
      return rep.ok() ? 0 : 4;
    }
    if (*emit) {
      if (!dgp_name.empty()) {
        const auto body = oracle::dgp_to_json(oracle::canned_dgp(dgp_name)) + "\n";
        if (emit_out.empty())
          std::cout << body;
        else
          write_file(emit_out, body);
        return 0;
      }
      const fs::path dir = emit_out.empty() ? fs::path(".") : fs::path(emit_out);
      for (const auto& g : oracle::canned_dgps()) {
        write_file(dir / (g.name + ".json"), oracle::dgp_to_json(g) + "\n");
        std::cout << (dir / (g.name + ".json")).string() << "\n";
      }
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
