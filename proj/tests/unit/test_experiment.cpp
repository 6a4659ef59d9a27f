#include "doctest.h"
#include "support.hpp"

#include "mhmc/experiment.hpp"
#include "mhmc/io.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace mhmc;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_config(const std::string& out) {
  ParsedConfig p = parse_config_text(R"(
name = "small"
manifold = "sphere:2"
observables = ["neglogpi", "coord:0"]
[target]
kind = "bvmf"
A = [[-2, 0, 0], [0, 0, 0], [0, 0, 2]]
c = [1, 0, 0]
[sampler]
mean_duration = 0.2
dt_max = 0.02
n_samples = 2000
seed = 5
)",
                                     false);
  REQUIRE(p.issues.empty());
  p.config.out_dir = out;
  return p.config;
}

fs::path scratch(const std::string& leaf) {
  const auto dir = fs::temp_directory_path() / "mhmc_unit_experiment" / leaf;
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("observables") {
  CHECK(Observable::parse("neglogpi").coord == -1);
  CHECK(Observable::parse("coord:12").coord == 12);
  for (const char* bad : {"coord:", "coord:-1", "coord:1a", "energy", "Coord:0"}) {
    CHECK_THROWS_AS(Observable::parse(bad), ConfigError);
  }
  UniformTarget u(2);
  CHECK(Observable::parse("coord:1")(u, Vector{{3.0, 4.0}}) == 4.0);
  CHECK_THROWS_AS(Observable::parse("coord:2")(u, Vector{{3.0, 4.0}}), DimensionError);
  const std::vector<Vector> xs{Vector{{1.0, 2.0}}, Vector{{3.0, 4.0}}, Vector{{5.0, 6.0}}};
  CHECK(observable_series(Observable::parse("coord:0"), u, xs, 1) == std::vector<double>{3.0, 5.0});
}

TEST_CASE("a single run writes its artifacts") {
  const auto dir = scratch("single");
  const ExperimentConfig cfg = small_config(dir.string());
  const auto results = run_experiment(cfg);
  REQUIRE(results.size() == 1);
  const RunResult& r = results.front();
  CHECK(r.chain.size() == 2000);
  CHECK(r.diagnostics.size() == 2);
  const auto diag = read_json(dir / "small.diagnostics.json");
  for (const char* key : {"run", "sampler", "manifold", "target", "n_samples", "burn_in", "burn_in_samples",
                          "acceptance_rate", "rev_failures", "rev_failure_ratio", "shake_failures",
                          "evaluation_failures", "nonneg_rejections", "gradient_evaluations", "sweep", "observables"}) {
    CHECK_MESSAGE(diag.contains(key), key);
  }
  CHECK(diag["burn_in_samples"] == 200);
  CHECK(diag["observables"].size() == 2);
  CHECK(diag["observables"][0]["observable"] == "neglogpi");
  const auto meta = read_json(dir / "small.meta.json");
  CHECK(meta["seed"] == 5);
  CHECK(meta["chain_file"] == "small.csv");
  CHECK(meta["settings"]["dt_max"] == 0.02);
  const Matrix chain = read_matrix_csv(dir / "small.csv", 3);
  CHECK(chain.rows() == 2000);
  CHECK((chain.row(1999).transpose() - r.chain.samples.back()).norm() == 0.0);

  // diagnose on the written chain reproduces the in-process numbers
  const TargetPtr target = build_target(cfg);
  const auto again = diagnose_chain(chain, cfg.observables, target.get(), cfg.burn_in, cfg.max_lag);
  REQUIRE(again.size() == 2);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(again[k].tau == doctest::Approx(r.diagnostics[k].tau).epsilon(1e-12));
    CHECK(again[k].mean == doctest::Approx(r.diagnostics[k].mean).epsilon(1e-12));
  }
  CHECK_THROWS_AS(diagnose_chain(chain, {"neglogpi"}, nullptr, 0.1, std::nullopt), ConfigError);
  CHECK_THROWS_AS(diagnose_chain(chain.topRows(50), {"coord:0"}, nullptr, 0.1, std::nullopt), Error);
  CHECK_THROWS_AS(diagnose_chain(chain, {"coord:3"}, nullptr, 0.1, std::nullopt), DimensionError);
}

TEST_CASE("unadjusted samplers report no acceptance rate") {
  ExperimentConfig cfg = small_config(scratch("unadj").string());
  cfg.sampler = SamplerKind::gbaoab;
  cfg.langevin.n_samples = 500;
  const RunResult r = run_chain(cfg, "g");
  CHECK(r.summary["acceptance_rate"].is_null());
  CHECK(r.diagnostics.size() == 2);
}

TEST_CASE("invalid configs are refused before running") {
  ExperimentConfig cfg = small_config(scratch("invalid").string());
  cfg.manifold = "sphere:3";
  CHECK_THROWS_AS(run_experiment(cfg), ConfigError);
}

TEST_CASE("sweeps are deterministic across thread counts") {
  auto sweep_cfg = [](const fs::path& dir, int threads) {
    ExperimentConfig cfg = small_config(dir.string());
    cfg.chmc.n_samples = 600;
    cfg.threads = threads;
    SweepSpec sw;
    sw.parameter = "dt_max";
    sw.values = {0.01, 0.02, 0.04};
    sw.samplers = {SamplerKind::rt_chmc, SamplerKind::rmhmc};
    cfg.sweep = sw;
    return cfg;
  };
  const auto d1 = scratch("sweep1");
  const auto d4 = scratch("sweep4");
  const auto r1 = run_experiment(sweep_cfg(d1, 1));
  const auto r4 = run_experiment(sweep_cfg(d4, 4));
  REQUIRE(r1.size() == 6);
  REQUIRE(r4.size() == 6);
  CHECK(r1[0].run == "small-rt-chmc-00");
  CHECK(r1[5].run == "small-rmhmc-05");
  CHECK(r1[4].sweep_value == 0.02);
  for (std::size_t k = 0; k < 6; ++k) {
    CHECK(slurp(d1 / (r1[k].run + ".csv")) == slurp(d4 / (r4[k].run + ".csv")));
    CHECK(r1[k].summary["sweep"]["parameter"] == "dt_max");
  }
  // point k uses seed + k, so neighbouring points differ
  CHECK(slurp(d1 / "small-rt-chmc-00.csv") != slurp(d1 / "small-rt-chmc-01.csv"));
  const std::string table = slurp(d1 / "small.sweep.csv");
  CHECK(std::count(table.begin(), table.end(), '\n') == 7);
  CHECK(table.rfind("run,sampler,parameter,value,n_samples,acceptance_rate,rev_failures,rev_failure_ratio,"
                    "shake_failures,tau[neglogpi],ess[neglogpi],mean[neglogpi],stderr[neglogpi],tau[coord:0]",
                    0) == 0);
  CHECK(table == slurp(d4 / "small.sweep.csv"));
  CHECK(read_json(d1 / "small.sweep.json")["points"].size() == 6);
}

TEST_CASE("presets parse and validate") {
  for (const auto& name : preset_names()) {
    const ParsedConfig p = parse_config(preset(name));
    CHECK_MESSAGE(p.issues.empty(), name);
    if (!p.config.covest) CHECK_MESSAGE(!has_errors(validate(p.config)), name);
  }
  CHECK_THROWS_AS(preset("fig9"), ConfigError);
}

TEST_CASE("covest on synthetic data") {
  ParsedConfig p = parse_config_text(R"(
name = "cov"
[sampler]
mean_duration = 0.05
dt_max = 0.005
n_samples = 1500
seed = 3
[covest]
p = 6
m = 2
synthetic_count = 40
map_steps = 50
)",
                                     false);
  p.config.out_dir = scratch("covest").string();
  const CovestRun run = run_covest(p.config);
  REQUIRE(run.reference);
  CHECK(run.summary["p"] == 6);
  CHECK(run.summary["m"] == 2);
  CHECK(run.summary["n"] == 40);
  CHECK(run.summary["metrics"].contains("posterior"));
  CHECK(run.summary["metrics"].contains("sample_loaded"));
  CHECK(run.summary.contains("evaluation_failures"));
  CHECK(run.report.posterior_mean.rows() == 6);
  write_covest_artifacts(p.config, run);
  const fs::path dir(p.config.out_dir);
  CHECK(read_matrix_csv(dir / "cov.posterior_mean.csv", 6).isApprox(run.report.posterior_mean, 1e-15));
  CHECK(fs::exists(dir / "cov.covreport.json"));
  ExperimentConfig none;
  CHECK_THROWS_AS(run_covest(none), ConfigError);
}
