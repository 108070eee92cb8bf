#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "crisk/config.hpp"
#include "crisk/error.hpp"
#include "crisk/oracle.hpp"
#include "crisk/pipeline.hpp"
#include "doctest.h"
#include "json.hpp"

using namespace crisk;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("crisk_test_" + std::to_string(::getpid()) + "_" +
                                        std::to_string(counter()++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_cohort(const fs::path& p, const Cohort& c) {
  std::ofstream out(p);
  write_person_time(out, c);
}

const char* kConfig = R"({
  "data": "sim.csv",
  "covariates": [{"name": "L0", "levels": [0, 1]}],
  "models": {
    "event": {"time_degree": 2, "covariates": [{"name": "L0"}]},
    "competing": {"time_degree": 1, "covariates": [{"name": "L0"}]},
    "censoring": {"time_degree": 1, "covariates": [{"name": "L0"}]}
  },
  "estimands": [
    {"target": "total_risk", "method": "gformula"},
    {"target": "total_risk", "method": "ipw_cause_specific"},
    {"target": "competing_risk", "method": "ipw_subdistribution"},
    {"target": "composite_risk", "method": "gformula"},
    {"target": "direct_risk", "method": "ipw_cause_specific"}
  ],
  "horizon": 4,
  "bootstrap": {"replicates": 20},
  "seed": 11,
  "output_dir": "out"
})";

// figure1 plus a measured baseline confounder of treatment.
oracle::DiscreteDGP with_l0() {
  auto g = oracle::figure1_dgp();
  g.has_l0 = true;
  g.l0 = oracle::Cpt::constant(0.4);
  g.a = {{"L0"}, {0.35, 0.65}};
  g.validate();
  return g;
}

RunConfig sim_config(const TempDir& dir, std::size_t n = 800) {
  const auto g = with_l0();
  write_cohort(dir.path / "sim.csv", oracle::simulate_cohort(g, n, 21));
  std::ofstream(dir.path / "run.json") << kConfig;
  return load_run_config(dir.path / "run.json");
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("parsing and defaults") {
  const auto c = parse_run_config(kConfig, "/base");
  CHECK(c.data_path == fs::path("/base/sim.csv"));
  CHECK(c.output_dir == fs::path("/base/out"));
  CHECK(c.horizon == 4);
  CHECK(c.estimands.size() == 5);
  CHECK(c.scales.size() == 2);
  REQUIRE(c.bootstrap);
  CHECK(c.bootstrap->replicates == 20);
  CHECK(c.bootstrap->seed == 11);
  CHECK(c.event_model.kind == HazardKind::event);
  CHECK(c.positivity_strata.size() == 1);
  const auto needs = model_needs(c);
  CHECK(needs.event);
  CHECK(needs.competing);
  CHECK(needs.censoring);
}

TEST_CASE("canonical JSON round trip") {
  const auto c = parse_run_config(kConfig, "/base");
  const auto text = run_config_to_json(c);
  const auto back = parse_run_config(text);
  CHECK(run_config_to_json(back) == text);
}

TEST_CASE("rejections") {
  auto with = [](const std::string& from, const std::string& to) {
    std::string s = kConfig;
    const auto at = s.find(from);
    REQUIRE(at != std::string::npos);
    return s.replace(at, from.size(), to);
  };
  CHECK_THROWS_AS(parse_run_config(with("\"seed\"", "\"sead\"")), ConfigError);
  CHECK_THROWS_AS(parse_run_config(with("{\"target\": \"total_risk\", \"method\": \"gformula\"}",
                                        "{\"target\": \"direct_risk\", \"method\": \"ipw_subdistribution\"}")),
                  ConfigError);
  CHECK_THROWS_AS(parse_run_config(with("\"horizon\": 4", "\"horizon\": 0")), ConfigError);
  CHECK_THROWS_AS(parse_run_config(with("{\"name\": \"L0\"}]", "{\"name\": \"L9\"}]")), ConfigError);
  CHECK_THROWS_AS(parse_run_config(with("\"replicates\": 20", "\"replicates\": 1")), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[1, 2"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(with("\"horizon\": 4,", "")), ConfigError);
  CHECK_THROWS_AS(parse_run_config(with("\"horizon\": 4", "\"horizon\": \"four\"")), ConfigError);
  CHECK_THROWS_AS(parse_run_config(with("\"ipw_cause_specific\"}", "\"ipw_cause_specific\"},\n"
                                        "{\"target\": \"total_risk\", \"method\": \"gformula\"}")),
                  ConfigError);
}

}  // TEST_SUITE

TEST_SUITE("pipeline") {

TEST_CASE("artifacts, determinism and worker independence") {
  TempDir dir;
  auto cfg = sim_config(dir);
  PipelineOptions one;
  const auto r1 = run_pipeline(cfg, one);
  const std::vector<std::string> expected = {"fits.json", "positivity.csv", "risk_total.csv",
                                             "risk_competing.csv", "risk_composite.csv",
                                             "risk_direct.csv", "nonparametric_cumulative.csv",
                                             "effects.json", "manifest.json"};
  for (const auto& f : expected) CHECK(fs::exists(dir.path / "out" / f));
  CHECK(r1.artifacts.size() == expected.size());
  CHECK_FALSE(fs::exists(dir.path / ".out.partial"));

  std::map<std::string, std::string> first;
  for (const auto& f : expected) first[f] = slurp(dir.path / "out" / f);

  cfg.output_dir = dir.path / "out2";
  PipelineOptions four;
  four.jobs = 4;
  (void)run_pipeline(cfg, four);
  for (const auto& f : expected) {
    CAPTURE(f);
    if (f == "manifest.json") {
      auto a = json::parse(first[f]), b = json::parse(slurp(dir.path / "out2" / f));
      a.erase("created_utc");
      b.erase("created_utc");
      a["config"].erase("output_dir");
      b["config"].erase("output_dir");
      a.erase("config_fnv1a64");
      b.erase("config_fnv1a64");
      CHECK(a == b);
    } else {
      CHECK(slurp(dir.path / "out2" / f) == first[f]);
    }
  }

  const auto effects = json::parse(first["effects.json"]);
  REQUIRE(effects.at("effects").size() == 10);
  for (const auto& e : effects.at("effects")) {
    CHECK(e.contains("lower"));
    CHECK(e.contains("upper"));
    CHECK(e.at("n_failed_replicates").get<int>() == 0);
    CHECK(e.at("per_interval").size() == 4);
  }
  const auto manifest = json::parse(first["manifest.json"]);
  CHECK(manifest.at("seed").get<int>() == 11);
  CHECK(manifest.at("data").at("subjects").get<int>() == 800);
  CHECK(manifest.at("artifacts").size() == expected.size() - 1);
  CHECK(parse_run_config(manifest.at("config").dump()).horizon == 4);
}

TEST_CASE("summary vector layout") {
  TempDir dir;
  const auto cfg = sim_config(dir, 400);
  const auto a = analyze(load_configured_cohort(cfg), cfg);
  const auto v = summary_vector(a, cfg);
  const auto labels = summary_labels(cfg);
  CHECK(v.size() == cfg.estimands.size() * 4);
  CHECK(labels.size() == v.size());
  CHECK(v[2] == doctest::Approx(v[0] - v[1]).epsilon(1e-15));
  CHECK(v[3] == doctest::Approx(v[0] / v[1]).epsilon(1e-15));
  REQUIRE(a.curves.size() == 2 * cfg.estimands.size());
  CHECK(a.curves[0].arm() == 1);
  CHECK(a.curves[1].arm() == 0);
}

TEST_CASE("failures name their stage and leave no output") {
  TempDir dir;
  auto cfg = sim_config(dir, 300);
  cfg.output_dir = dir.path / "never";
  SUBCASE("missing data") {
    cfg.data_path = dir.path / "absent.csv";
    try {
      (void)run_pipeline(cfg);
      FAIL("expected StageError");
    } catch (const StageError& e) {
      CHECK(e.stage() == Stage::load);
      CHECK(e.kind() == ErrorKind::data);
      CHECK(std::string(e.what()).rfind("[load] ", 0) == 0);
    }
  }
  SUBCASE("horizon beyond the data") {
    cfg.horizon = 9;
    CHECK_THROWS_AS(run_pipeline(cfg), StageError);
  }
  SUBCASE("invalid data") {
    std::ofstream(dir.path / "bad.csv") << "subject_id,k,a,L0,c_next,d_next,y_next\ns,0,1,0,0,0,1\ns,1,1,0,0,0,0\n";
    cfg.data_path = dir.path / "bad.csv";
    try {
      (void)run_pipeline(cfg);
      FAIL("expected StageError");
    } catch (const StageError& e) {
      CHECK(e.kind() == ErrorKind::data);
    }
  }
  CHECK_FALSE(fs::exists(dir.path / "never"));
  CHECK_FALSE(fs::exists(dir.path / ".never.partial"));
}

TEST_CASE("fit-only run and zero-event models") {
  TempDir dir;
  auto g = with_l0();
  for (auto& t : g.c) t = oracle::Cpt::constant(0.0);
  write_cohort(dir.path / "sim.csv", oracle::simulate_cohort(g, 500, 3));
  std::ofstream(dir.path / "run.json") << kConfig;
  auto cfg = load_run_config(dir.path / "run.json");
  cfg.bootstrap.reset();
  const auto models = fit_models(load_configured_cohort(cfg), cfg);
  REQUIRE(models.censoring);
  CHECK(models.censoring->converged);
  CHECK_FALSE(models.warnings.empty());
  PipelineOptions opt;
  opt.fit_only = true;
  const auto r = run_pipeline(cfg, opt);
  CHECK(fs::exists(dir.path / "out" / "fits.json"));
  CHECK_FALSE(fs::exists(dir.path / "out" / "effects.json"));
  CHECK(r.analysis.effects.empty());
}

TEST_CASE("fnv1a") {
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
}

}  // TEST_SUITE
