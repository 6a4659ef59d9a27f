#include "mhmc/config.hpp"
#include "mhmc/experiment.hpp"
#include "mhmc/io.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace mhmc;

namespace {

struct Common {
  std::string config;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::optional<Index> n_samples;
  std::string out;
  std::optional<int> threads;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "TOML or JSON experiment config")->check(CLI::ExistingFile);
  app->add_option("--preset", c.preset, "built-in experiment (see `mhmc presets`)");
  app->add_option("--seed", c.seed, "base RNG seed");
  app->add_option("--n-samples", c.n_samples, "override the number of samples")->check(CLI::PositiveNumber);
  app->add_option("--out", c.out, "output directory");
  app->add_option("--threads", c.threads, "sweep worker count")->check(CLI::PositiveNumber);
}

void print_issues(const std::vector<ConfigIssue>& issues) {
  for (const auto& i : issues) {
    std::cerr << (i.level == ConfigIssue::Level::error ? "error: " : "warning: ") << i.message << "\n";
  }
}

ParsedConfig load(const Common& c) {
  if (c.config.empty() == c.preset.empty()) throw ConfigError("pass exactly one of --config or --preset");
  ParsedConfig pc = c.config.empty() ? parse_config(preset(c.preset)) : load_config(c.config);
  ExperimentConfig& cfg = pc.config;
  if (c.seed) cfg.set_seed(*c.seed);
  if (c.n_samples) cfg.set_n_samples(*c.n_samples);
  if (!c.out.empty()) cfg.out_dir = c.out;
  if (c.threads) cfg.threads = *c.threads;
  print_issues(pc.issues);
  return pc;
}

void print_run(const RunResult& r) {
  std::cout << r.run << ": n=" << r.chain.recorded;
  if (!r.summary["acceptance_rate"].is_null()) std::cout << " acceptance=" << r.summary["acceptance_rate"].get<double>();
  if (r.chain.rev_failures > 0) std::cout << " rev_failures=" << r.chain.rev_failures;
  std::cout << "\n";
  for (const auto& d : r.diagnostics) {
    std::cout << "  " << d.observable << ": mean=" << d.mean << " stderr=" << d.std_error << " tau=" << d.tau
              << " ess=" << d.ess << "\n";
  }
}

int cmd_sample(const Common& c) {
  ParsedConfig pc = load(c);
  pc.config.sweep.reset();
  const auto results = run_experiment(pc.config);
  for (const auto& r : results) print_run(r);
  return 0;
}

int cmd_sweep(const Common& c) {
  ParsedConfig pc = load(c);
  if (!pc.config.sweep) throw ConfigError("config has no [sweep] table");
  const auto results = run_experiment(pc.config);
  std::cout << sweep_table_csv(pc.config, results);
  return 0;
}

int cmd_validate(const Common& c) {
  ParsedConfig pc;
  try {
    pc = load(c);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  const auto issues = validate(pc.config);
  print_issues(issues);
  if (has_errors(issues)) return 1;
  std::cout << "OK\n";
  return 0;
}

struct DiagnoseArgs {
  std::string chain;
  std::vector<std::string> observables;
  double burn_in = 0.1;
  std::optional<Index> max_lag;
  bool skip_header = false;
};

int cmd_diagnose(const Common& c, const DiagnoseArgs& a) {
  std::optional<ParsedConfig> pc;
  TargetPtr target;
  if (!c.config.empty() || !c.preset.empty()) {
    pc = load(c);
    target = build_target(pc->config);
  }
  std::vector<std::string> obs = a.observables;
  if (obs.empty()) obs = pc ? pc->config.observables : std::vector<std::string>{"neglogpi"};
  const Matrix chain = read_matrix_csv(a.chain, std::nullopt, a.skip_header);
  const auto records = diagnose_chain(chain, obs, target.get(), a.burn_in, a.max_lag);
  const std::string run = fs::path(a.chain).stem().string();
  nlohmann::json j;
  j["run"] = run;
  j["sampler"] = nullptr;
  j["n_samples"] = chain.rows();
  j["burn_in"] = a.burn_in;
  j["burn_in_samples"] = static_cast<Index>(a.burn_in * static_cast<double>(chain.rows()));
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : records) arr.push_back(to_json(r));
  j["observables"] = arr;
  if (c.out.empty()) {
    std::cout << j.dump(2) << "\n";
  } else {
    const fs::path p = fs::path(c.out) / (run + ".diagnostics.json");
    write_json(p, j);
    std::cout << p.string() << "\n";
  }
  return 0;
}

struct CovestArgs {
  std::string data;
  std::string reference;
  std::optional<Index> p;
  std::optional<Index> m;
  bool skip_header = false;
};

int cmd_covest(const Common& c, const CovestArgs& a) {
  ParsedConfig pc;
  if (c.config.empty() && c.preset.empty()) {
    pc = parse_config(preset("covest-desk"));
    pc.config.name = "covest";
    pc.config.out_dir = "out/covest";
    if (c.seed) pc.config.set_seed(*c.seed);
    if (c.n_samples) pc.config.set_n_samples(*c.n_samples);
    if (!c.out.empty()) pc.config.out_dir = c.out;
  } else {
    pc = load(c);
  }
  ExperimentConfig& cfg = pc.config;
  if (!cfg.covest) cfg.covest = CovestSpec{};
  CovestSpec& cs = *cfg.covest;
  if (!a.data.empty()) cs.data = a.data;
  if (!a.reference.empty()) cs.reference = a.reference;
  if (a.p) cs.p = *a.p;
  if (a.m) cs.m = *a.m;
  if (a.skip_header) cs.skip_header = true;
  const CovestRun run = run_covest(cfg);
  write_covest_artifacts(cfg, run);
  std::cout << run.summary.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Constrained Hamiltonian Monte Carlo on embedded manifolds"};
  app.require_subcommand(1);

  Common common;
  auto* sample = app.add_subcommand("sample", "run one chain and write its chain CSV and diagnostics");
  add_common(sample, common);
  auto* sweep = app.add_subcommand("sweep", "run the [sweep] grid of a config");
  add_common(sweep, common);
  auto* validate_cmd = app.add_subcommand("validate", "check a config without running it");
  add_common(validate_cmd, common);

  DiagnoseArgs dargs;
  auto* diagnose = app.add_subcommand("diagnose", "recompute IAC/ESS from an existing chain CSV");
  add_common(diagnose, common);
  diagnose->add_option("--chain", dargs.chain, "chain CSV")->required()->check(CLI::ExistingFile);
  diagnose->add_option("--observable", dargs.observables, "neglogpi or coord:i (repeatable)");
  diagnose->add_option("--burn-in", dargs.burn_in, "fraction discarded");
  diagnose->add_option("--max-lag", dargs.max_lag, "lag cap M (default N/50)");
  diagnose->add_flag("--skip-header", dargs.skip_header, "the CSV has a header row");

  CovestArgs cargs;
  auto* covest = app.add_subcommand("covest", "Bayesian spiked covariance estimate");
  add_common(covest, common);
  covest->add_option("--data", cargs.data, "CSV of data vectors")->check(CLI::ExistingFile);
  covest->add_option("--reference", cargs.reference, "CSV of a reference covariance")->check(CLI::ExistingFile);
  covest->add_option("--p", cargs.p, "data dimension");
  covest->add_option("--m", cargs.m, "spike rank (default ceil(p/6))");
  covest->add_flag("--skip-header", cargs.skip_header, "the data CSV has a header row");

  std::string show;
  auto* presets = app.add_subcommand("presets", "list built-in presets");
  presets->add_option("--show", show, "print the preset config as JSON");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sample->parsed()) return cmd_sample(common);
    if (sweep->parsed()) return cmd_sweep(common);
    if (validate_cmd->parsed()) return cmd_validate(common);
    if (diagnose->parsed()) return cmd_diagnose(common, dargs);
    if (covest->parsed()) return cmd_covest(common, cargs);
    if (presets->parsed()) {
      if (!show.empty()) {
        std::cout << preset(show).dump(2) << "\n";
      } else {
        for (const auto& n : preset_names()) std::cout << n << "\n";
      }
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
