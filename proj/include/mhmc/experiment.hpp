#pragma once

#include "mhmc/config.hpp"
#include "mhmc/covest.hpp"
#include "mhmc/diagnostics.hpp"

#include "json.hpp"

#include <optional>
#include <string>
#include <vector>

namespace mhmc {

/// Named scalar function of a state: "neglogpi" (the target potential) or
/// "coord:i" (0-based ambient coordinate).
struct Observable {
  std::string name;
  Index coord = -1;  // -1 for neglogpi

  static Observable parse(const std::string& spec);
  double operator()(const TargetDensity& target, const Vector& x) const;
};

std::vector<double> observable_series(const Observable& obs, const TargetDensity& target,
                                      const std::vector<Vector>& samples, Index begin = 0);

struct RunResult {
  std::string run;
  SamplerKind sampler = SamplerKind::rt_chmc;
  std::optional<double> sweep_value;
  ChainRecord chain;
  std::vector<DiagnosticRecord> diagnostics;
  double wall_seconds = 0.0;
  nlohmann::json summary;  // contents of <run>.diagnostics.json
};

/// Runs one chain and computes diagnostics on the post-burn-in samples.
/// No files are written.
RunResult run_chain(const ExperimentConfig& cfg, const std::string& run_name);

/// Writes <run>.csv (if cfg.write_chain), <run>.meta.json and
/// <run>.diagnostics.json into cfg.out_dir.
void write_run_artifacts(const ExperimentConfig& cfg, const RunResult& r);

/// Single run, or the full sweep grid when cfg.sweep is set. Sweep points
/// run on cfg.threads workers, point k using seed + k. Returns results in
/// grid order (samples dropped once written).
std::vector<RunResult> run_experiment(const ExperimentConfig& cfg);

/// Rows of the sweep table, one per grid point.
std::string sweep_table_csv(const ExperimentConfig& cfg, const std::vector<RunResult>& results);

/// Recompute diagnostics from a chain CSV.
std::vector<DiagnosticRecord> diagnose_chain(const Matrix& chain, const std::vector<std::string>& observables,
                                             const TargetDensity* target, double burn_in,
                                             std::optional<Index> max_lag);

std::vector<std::string> preset_names();
/// Preset config document, or ConfigError for an unknown name.
nlohmann::json preset(const std::string& name);

struct CovestRun {
  CovReport report;
  std::optional<Matrix> reference;
  nlohmann::json summary;
};

/// Data from cfg.covest (a CSV, or synthetic spiked data when no path is
/// given), sampler settings from cfg.chmc.
CovestRun run_covest(const ExperimentConfig& cfg);
void write_covest_artifacts(const ExperimentConfig& cfg, const CovestRun& run);

}  // namespace mhmc
