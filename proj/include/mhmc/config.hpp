#pragma once

#include "mhmc/manifold.hpp"
#include "mhmc/samplers.hpp"
#include "mhmc/targets.hpp"

#include "json.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mhmc {

enum class SamplerKind { rt_chmc, rt_chmc_unadjusted, rmhmc, rt_exact_sphere, gbaoab };

SamplerKind parse_sampler_kind(const std::string& s);
std::string to_string(SamplerKind k);

struct TargetSpec {
  std::string kind = "uniform";  // uniform | bvmf | vmf-stiefel
  Matrix A;
  Vector c;
  Matrix F;
};

struct SweepSpec {
  std::string parameter;
  std::vector<double> values;
  std::vector<SamplerKind> samplers;  // empty: the config's sampler only
};

struct CovestSpec {
  std::string data;       // CSV path; empty means synthetic
  std::string reference;  // optional CSV of a reference covariance
  Index p = 0;
  std::optional<Index> m;
  double sigma1 = 2.0;
  double sigma2 = 2.0;
  bool skip_header = false;
  int map_steps = 500;
  double map_lr = 1e-3;
  int init_refine = 0;
  Index synthetic_count = 20;
  std::uint64_t synthetic_seed = 1;
};

struct ExperimentConfig {
  std::string name = "run";
  std::string manifold;
  TargetSpec target;
  SamplerKind sampler = SamplerKind::rt_chmc;
  SamplerConfig chmc;
  LangevinConfig langevin;
  std::optional<Vector> x0;
  std::optional<SweepSpec> sweep;
  std::optional<CovestSpec> covest;
  std::string out_dir = "out";
  std::vector<std::string> observables;
  double burn_in = 0.1;
  std::optional<Index> max_lag;
  int threads = 1;
  bool write_chain = true;

  void set_seed(std::uint64_t seed);
  void set_n_samples(Index n);
  /// Sets a numeric sampler parameter by config name.
  void set_parameter(const std::string& name, double value);
};

struct ConfigIssue {
  enum class Level { warning, error };
  Level level = Level::warning;
  std::string message;
};

struct ParsedConfig {
  ExperimentConfig config;
  std::vector<ConfigIssue> issues;  // unknown keys and similar
};

/// Convert TOML text to the equivalent JSON document.
nlohmann::json toml_to_json(const std::string& text);

/// base_dir resolves relative CSV paths. Throws ConfigError on malformed values.
ParsedConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
/// .json files are parsed as JSON, anything else as TOML.
ParsedConfig load_config(const std::filesystem::path& path);
ParsedConfig parse_config_text(const std::string& text, bool is_json, const std::filesystem::path& base_dir = {});

/// Closest known name for an unrecognized key, if any is close enough.
std::optional<std::string> suggest_key(const std::string& key, const std::vector<std::string>& known);

/// Dimension and compatibility checks. Never throws.
std::vector<ConfigIssue> validate(const ExperimentConfig& cfg);

bool has_errors(const std::vector<ConfigIssue>& issues);

/// Target and manifold built from the config.
ManifoldPtr build_manifold(const ExperimentConfig& cfg);
TargetPtr build_target(const ExperimentConfig& cfg);

}  // namespace mhmc
