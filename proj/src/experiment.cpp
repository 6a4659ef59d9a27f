#include "mhmc/experiment.hpp"

#include "mhmc/io.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <mutex>
#include <thread>

namespace mhmc {

namespace fs = std::filesystem;
using nlohmann::json;

Observable Observable::parse(const std::string& spec) {
  if (spec == "neglogpi") return Observable{spec, -1};
  if (spec.rfind("coord:", 0) == 0) {
    const std::string idx = spec.substr(6);
    if (!idx.empty() && std::all_of(idx.begin(), idx.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      return Observable{spec, static_cast<Index>(std::stoll(idx))};
    }
  }
  throw ConfigError("unknown observable '" + spec + "' (expected neglogpi or coord:i)");
}

double Observable::operator()(const TargetDensity& target, const Vector& x) const {
  if (coord < 0) return target.potential(x);
  if (coord >= x.size()) throw DimensionError("observable " + name + " is out of range");
  return x(coord);
}

std::vector<double> observable_series(const Observable& obs, const TargetDensity& target,
                                      const std::vector<Vector>& samples, Index begin) {
  std::vector<double> out;
  const auto b = static_cast<std::size_t>(std::max<Index>(0, begin));
  if (b < samples.size()) out.reserve(samples.size() - b);
  for (std::size_t i = b; i < samples.size(); ++i) out.push_back(obs(target, samples[i]));
  return out;
}

namespace {

Index burn_count(double burn_in, Index n) {
  return static_cast<Index>(std::floor(burn_in * static_cast<double>(n)));
}

std::vector<DiagnosticRecord> diagnostics_for(const std::vector<std::string>& names, const TargetDensity* target,
                                              const std::vector<Vector>& samples, Index burn,
                                              std::optional<Index> max_lag) {
  std::vector<DiagnosticRecord> out;
  const Index kept = static_cast<Index>(samples.size()) - burn;
  if (kept < 100) return out;
  IacOptions opts;
  opts.max_lag = max_lag;
  for (const auto& name : names) {
    const Observable obs = Observable::parse(name);
    if (obs.coord < 0 && target == nullptr) throw ConfigError("neglogpi needs a target (pass --config)");
    std::vector<double> f;
    f.reserve(static_cast<std::size_t>(kept));
    for (std::size_t i = static_cast<std::size_t>(burn); i < samples.size(); ++i) {
      const Vector& x = samples[i];
      f.push_back(obs.coord < 0 ? target->potential(x) : x(obs.coord));
    }
    out.push_back(diagnose_series(name, f, opts));
  }
  return out;
}

json meta_json(const ExperimentConfig& cfg, const RunResult& r, Index dim) {
  json j;
  j["run"] = r.run;
  j["sampler"] = to_string(r.sampler);
  j["manifold"] = cfg.manifold;
  j["target"] = cfg.target.kind;
  j["ambient_dim"] = dim;
  j["chain_file"] = cfg.write_chain ? json(r.run + ".csv") : json(nullptr);
  j["n_samples"] = r.chain.recorded;
  j["acceptance_rate"] = r.summary["acceptance_rate"];
  j["rev_failures"] = r.chain.rev_failures;
  j["wall_seconds"] = r.wall_seconds;
  if (r.sampler == SamplerKind::gbaoab) {
    j["seed"] = cfg.langevin.seed;
    j["settings"] = {{"gamma", cfg.langevin.gamma},
                     {"stepsize", cfg.langevin.stepsize},
                     {"drift_substeps", cfg.langevin.drift_substeps},
                     {"shake_tol", cfg.langevin.shake_tol},
                     {"shake_max_iters", cfg.langevin.shake_max_iters}};
  } else {
    j["seed"] = cfg.chmc.seed;
    j["settings"] = {{"mean_duration", cfg.chmc.mean_duration},
                     {"dt_max", cfg.chmc.dt_max},
                     {"shake_tol", cfg.chmc.shake_tol},
                     {"shake_max_iters", cfg.chmc.shake_max_iters},
                     {"rev_check", cfg.chmc.enable_rev_check},
                     {"rev_tol", cfg.chmc.rev_tol},
                     {"record_every_step", cfg.chmc.record_every_step}};
  }
  return j;
}

}  // namespace

RunResult run_chain(const ExperimentConfig& cfg, const std::string& run_name) {
  const ManifoldPtr M = build_manifold(cfg);
  const TargetPtr target = build_target(cfg);
  const Vector x0 = cfg.x0 ? *cfg.x0 : M->default_point();

  RunResult r;
  r.run = run_name;
  r.sampler = cfg.sampler;
  const auto t0 = std::chrono::steady_clock::now();
  switch (cfg.sampler) {
    case SamplerKind::rt_chmc: r.chain = rt_chmc_metropolis(*M, *target, x0, cfg.chmc); break;
    case SamplerKind::rmhmc: r.chain = rmhmc_fixed(*M, *target, x0, cfg.chmc); break;
    case SamplerKind::rt_chmc_unadjusted: r.chain = rt_chmc_unadjusted(*M, *target, x0, cfg.chmc); break;
    case SamplerKind::rt_exact_sphere:
      if (dynamic_cast<const Sphere*>(M.get()) == nullptr) throw ConfigError("rt-exact-sphere needs a sphere");
      r.chain = rt_rmhmc_exact_sphere(M->ambient_dim(), x0, cfg.chmc);
      break;
    case SamplerKind::gbaoab: r.chain = gbaoab(*M, *target, x0, cfg.langevin); break;
  }
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const Index n = r.chain.size();
  const Index burn = burn_count(cfg.burn_in, n);
  r.diagnostics = diagnostics_for(cfg.observables, target.get(), r.chain.samples, burn, cfg.max_lag);

  const bool adjusted = cfg.sampler == SamplerKind::rt_chmc || cfg.sampler == SamplerKind::rmhmc;
  json& s = r.summary;
  s["run"] = r.run;
  s["sampler"] = to_string(r.sampler);
  s["manifold"] = cfg.manifold;
  s["target"] = cfg.target.kind;
  s["n_samples"] = n;
  s["burn_in"] = cfg.burn_in;
  s["burn_in_samples"] = burn;
  s["acceptance_rate"] = adjusted ? json(r.chain.acceptance_rate) : json(nullptr);
  s["rev_failures"] = r.chain.rev_failures;
  s["rev_failure_ratio"] = r.chain.recorded > 0 ? static_cast<double>(r.chain.rev_failures) / static_cast<double>(r.chain.recorded) : 0.0;
  s["shake_failures"] = r.chain.shake_failures;
  s["evaluation_failures"] = r.chain.evaluation_failures;
  s["nonneg_rejections"] = r.chain.nonneg_rejections;
  s["gradient_evaluations"] = r.chain.gradient_evaluations;
  s["sweep"] = nullptr;
  json obs = json::array();
  for (const auto& d : r.diagnostics) obs.push_back(to_json(d));
  s["observables"] = obs;
  return r;
}

void write_run_artifacts(const ExperimentConfig& cfg, const RunResult& r) {
  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  const Index dim = r.chain.samples.empty() ? 0 : r.chain.samples.front().size();
  if (cfg.write_chain) write_chain_csv(dir / (r.run + ".csv"), r.chain.samples);
  write_json(meta_path(dir, r.run), meta_json(cfg, r, dim));
  write_json(dir / (r.run + ".diagnostics.json"), r.summary);
}

std::string sweep_table_csv(const ExperimentConfig& cfg, const std::vector<RunResult>& results) {
  std::string s = "run,sampler,parameter,value,n_samples,acceptance_rate,rev_failures,rev_failure_ratio,shake_failures";
  for (const auto& o : cfg.observables) s += ",tau[" + o + "],ess[" + o + "],mean[" + o + "],stderr[" + o + "]";
  s += '\n';
  for (const auto& r : results) {
    const json& j = r.summary;
    s += r.run + "," + to_string(r.sampler) + "," + (cfg.sweep ? cfg.sweep->parameter : "") + ",";
    s += r.sweep_value ? format_double(*r.sweep_value) : "";
    s += "," + std::to_string(j["n_samples"].get<Index>()) + ",";
    s += j["acceptance_rate"].is_null() ? "" : format_double(j["acceptance_rate"].get<double>());
    s += "," + std::to_string(j["rev_failures"].get<long>()) + "," + format_double(j["rev_failure_ratio"].get<double>()) +
         "," + std::to_string(j["shake_failures"].get<long>());
    for (const auto& o : cfg.observables) {
      const auto it = std::find_if(r.diagnostics.begin(), r.diagnostics.end(),
                                   [&](const DiagnosticRecord& d) { return d.observable == o; });
      if (it == r.diagnostics.end()) {
        s += ",,,,";
      } else {
        s += "," + format_double(it->tau) + "," + format_double(it->ess) + "," + format_double(it->mean) + "," +
             format_double(it->std_error);
      }
    }
    s += '\n';
  }
  return s;
}

std::vector<RunResult> run_experiment(const ExperimentConfig& cfg) {
  const auto issues = validate(cfg);
  if (has_errors(issues)) {
    std::string msg = "invalid config:";
    for (const auto& i : issues)
      if (i.level == ConfigIssue::Level::error) msg += "\n  " + i.message;
    throw ConfigError(msg);
  }
  if (!cfg.sweep) {
    RunResult r = run_chain(cfg, cfg.name);
    write_run_artifacts(cfg, r);
    std::vector<RunResult> out;
    out.push_back(std::move(r));
    return out;
  }

  struct Point {
    ExperimentConfig cfg;
    std::string run;
    double value;
  };
  const SweepSpec& sw = *cfg.sweep;
  const std::vector<SamplerKind> kinds = sw.samplers.empty() ? std::vector<SamplerKind>{cfg.sampler} : sw.samplers;
  std::vector<Point> points;
  const std::uint64_t base_seed = cfg.sampler == SamplerKind::gbaoab ? cfg.langevin.seed : cfg.chmc.seed;
  for (const SamplerKind kind : kinds) {
    for (const double v : sw.values) {
      Point p{cfg, "", v};
      p.cfg.sweep.reset();
      p.cfg.sampler = kind;
      p.cfg.set_parameter(sw.parameter, v);
      p.cfg.set_seed(base_seed + points.size());
      char idx[16];
      std::snprintf(idx, sizeof(idx), "%02zu", points.size());
      p.run = cfg.name + "-" + to_string(kind) + "-" + idx;
      points.push_back(std::move(p));
    }
  }

  std::vector<RunResult> results(points.size());
  std::vector<std::exception_ptr> errors(points.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k; (k = next.fetch_add(1)) < points.size();) {
      try {
        RunResult r = run_chain(points[k].cfg, points[k].run);
        r.sweep_value = points[k].value;
        r.summary["sweep"] = {{"parameter", sw.parameter}, {"value", points[k].value}};
        write_run_artifacts(points[k].cfg, r);
        r.chain.samples.clear();
        r.chain.samples.shrink_to_fit();
        results[k] = std::move(r);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const std::size_t width = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, cfg.threads)), points.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < width; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  {
    const std::string table = sweep_table_csv(cfg, results);
    std::FILE* f = std::fopen((dir / (cfg.name + ".sweep.csv")).c_str(), "wb");
    if (f == nullptr) throw Error("cannot write sweep table in " + dir.string());
    std::fwrite(table.data(), 1, table.size(), f);
    std::fclose(f);
  }
  json points_json = json::array();
  for (const auto& r : results) points_json.push_back(r.summary);
  write_json(dir / (cfg.name + ".sweep.json"), {{"name", cfg.name}, {"parameter", sw.parameter}, {"points", points_json}});
  return results;
}

std::vector<DiagnosticRecord> diagnose_chain(const Matrix& chain, const std::vector<std::string>& observables,
                                             const TargetDensity* target, double burn_in,
                                             std::optional<Index> max_lag) {
  if (!(burn_in >= 0.0 && burn_in < 1.0)) throw ConfigError("burn_in must be in [0, 1)");
  std::vector<Vector> samples(static_cast<std::size_t>(chain.rows()));
  for (Index i = 0; i < chain.rows(); ++i) samples[static_cast<std::size_t>(i)] = chain.row(i).transpose();
  if (target != nullptr && target->dim() != chain.cols()) {
    throw DimensionError("chain has " + std::to_string(chain.cols()) + " columns but the target is " +
                         std::to_string(target->dim()) + "-dimensional");
  }
  for (const auto& o : observables) {
    const Observable obs = Observable::parse(o);
    if (obs.coord >= chain.cols()) throw DimensionError("observable " + o + " is out of range");
  }
  const Index burn = burn_count(burn_in, chain.rows());
  if (chain.rows() - burn < 100) throw Error("need at least 100 samples after burn-in");
  return diagnostics_for(observables, target, samples, burn, max_lag);
}

std::vector<std::string> preset_names() { return {"fig1-desk", "fig2-desk", "fig5-desk", "sphere-exact", "vmf-stiefel", "covest-desk"}; }

json preset(const std::string& name) {
  const json bvmf3 = {{"kind", "bvmf"},
                      {"A", {{-1000.0, 0.0, 0.0}, {0.0, 0.0, 0.0}, {0.0, 0.0, 1000.0}}},
                      {"c", {100.0, 0.0, 0.0}}};
  if (name == "fig1-desk") {
    return {{"name", name},
            {"manifold", "sphere:2"},
            {"target", bvmf3},
            {"x0", {0.0, 0.0, 1.0}},
            {"sampler", {{"kind", "rt-chmc"}, {"mean_duration", 0.1}, {"dt_max", 1e-3}, {"n_samples", 10000},
                         {"seed", 1}, {"rev_check", true}, {"shake_tol", 1e-13}}},
            {"sweep", {{"parameter", "dt_max"},
                       {"values", {1e-3, 2e-3, 5e-3, 1e-2, 1.5e-2, 2e-2, 2.5e-2, 3e-2, 4e-2, 5e-2}}}},
            {"observables", {"neglogpi"}},
            {"out", "out/fig1-desk"}};
  }
  if (name == "fig2-desk") {
    return {{"name", name},
            {"manifold", "sphere:2"},
            {"target", bvmf3},
            {"x0", {0.0, 0.0, 1.0}},
            {"sampler", {{"kind", "rt-chmc"}, {"dt_max", 1e-3}, {"n_samples", 100000}, {"seed", 1}}},
            {"sweep", {{"parameter", "mean_duration"},
                       {"values", {0.02, 0.04, 0.06, 0.08, 0.1, 0.12, 0.14, 0.16, 0.18, 0.2}},
                       {"samplers", {"rt-chmc", "rmhmc"}}}},
            {"observables", {"neglogpi", "coord:0", "coord:1", "coord:2"}},
            {"out", "out/fig2-desk"}};
  }
  if (name == "fig5-desk") {
    json A = json::array();
    const double diag[5] = {-20.0, -10.0, 0.0, 10.0, 20.0};
    for (int i = 0; i < 5; ++i) {
      json row = json::array();
      for (int j = 0; j < 5; ++j) row.push_back(i == j ? diag[i] : 0.0);
      A.push_back(row);
    }
    return {{"name", name},
            {"manifold", "sphere:4"},
            {"target", {{"kind", "bvmf"}, {"A", A}, {"c", {40.0, 0.0, 0.0, 0.0, 0.0}}}},
            {"x0", {0.0, 0.0, 0.0, 0.0, 1.0}},
            {"sampler", {{"kind", "gbaoab"}, {"gamma", 2.0}, {"stepsize", 0.01}, {"n_samples", 100000}, {"seed", 1}}},
            {"sweep", {{"parameter", "stepsize"}, {"values", {0.01, 0.05, 0.1}}}},
            {"observables", {"neglogpi"}},
            {"out", "out/fig5-desk"}};
  }
  if (name == "sphere-exact") {
    return {{"name", name},
            {"manifold", "sphere:2"},
            {"target", {{"kind", "uniform"}}},
            {"sampler", {{"kind", "rt-exact-sphere"}, {"mean_duration", 1.0}, {"n_samples", 100000}, {"seed", 1}}},
            {"observables", {"coord:0", "coord:1", "coord:2"}},
            {"out", "out/sphere-exact"}};
  }
  if (name == "vmf-stiefel") {
    return {{"name", name},
            {"manifold", "stiefel:4,2"},
            {"target", {{"kind", "vmf-stiefel"}, {"F", {{5.0, 0.0}, {0.0, 3.0}, {0.0, 0.0}, {0.0, 0.0}}}}},
            {"sampler", {{"kind", "rt-chmc"}, {"mean_duration", 0.5}, {"dt_max", 0.02}, {"n_samples", 20000},
                         {"seed", 1}}},
            {"observables", {"neglogpi", "coord:0", "coord:5"}},
            {"out", "out/vmf-stiefel"}};
  }
  if (name == "covest-desk") {
    return {{"name", name},
            {"sampler", {{"kind", "rt-chmc"}, {"mean_duration", 0.05}, {"dt_max", 0.005}, {"n_samples", 20000},
                         {"seed", 1}}},
            {"covest", {{"p", 30}, {"m", 5}, {"synthetic_count", 20}, {"synthetic_seed", 1}}},
            {"out", "out/covest-desk"}};
  }
  throw ConfigError("unknown preset '" + name + "'");
}

CovestRun run_covest(const ExperimentConfig& cfg) {
  if (!cfg.covest) throw ConfigError("config has no [covest] table");
  const CovestSpec& c = *cfg.covest;
  CovestRun out;
  Matrix raw;
  if (!c.data.empty()) {
    if (c.p < 1) throw ConfigError("covest.p is required with a data file");
    raw = ingest(c.data, c.p, c.skip_header);
    if (!c.reference.empty()) out.reference = read_matrix_csv(c.reference, c.p);
  } else {
    SyntheticSpec spec;
    spec.p = c.p > 0 ? c.p : spec.p;
    spec.m = c.m.value_or(default_spike_rank(spec.p));
    spec.count = c.synthetic_count;
    spec.seed = c.synthetic_seed;
    const SyntheticData syn = make_synthetic(spec);
    raw = syn.samples;
    out.reference = syn.covariance;
  }
  const CovModel model = make_model(raw, c.m, c.sigma1, c.sigma2);
  InitOptions init;
  init.refine_sweeps = c.init_refine;
  const SpikedCovParams theta0 = initialize(model, init);
  PosteriorOptions po;
  po.sampler = cfg.chmc;
  po.burn_in = cfg.burn_in;
  po.map.steps = c.map_steps;
  po.map.lr = c.map_lr;
  out.report = posterior_estimate(model, theta0, po);
  if (out.reference) attach_metrics(out.report, *out.reference);

  json& s = out.summary;
  s["name"] = cfg.name;
  s["p"] = model.p;
  s["m"] = model.m;
  s["n"] = model.n;
  s["sigma1"] = model.sigma1;
  s["sigma2"] = model.sigma2;
  s["flagged_columns"] = model.flagged;
  s["acceptance_rate"] = out.report.acceptance_rate;
  s["samples_used"] = out.report.samples_used;
  s["nonneg_rejections"] = out.report.chain.nonneg_rejections;
  s["shake_failures"] = out.report.chain.shake_failures;
  s["evaluation_failures"] = out.report.chain.evaluation_failures;
  s["metrics"] = out.report.metrics;
  s["files"] = {{"posterior_mean", cfg.name + ".posterior_mean.csv"},
                {"posterior_sd", cfg.name + ".posterior_sd.csv"},
                {"posterior_mean_inverse", cfg.name + ".posterior_mean_inverse.csv"},
                {"map", cfg.name + ".map.csv"}};
  return out;
}

void write_covest_artifacts(const ExperimentConfig& cfg, const CovestRun& run) {
  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  write_matrix_csv(dir / (cfg.name + ".posterior_mean.csv"), run.report.posterior_mean);
  write_matrix_csv(dir / (cfg.name + ".posterior_sd.csv"), run.report.posterior_sd);
  write_matrix_csv(dir / (cfg.name + ".posterior_mean_inverse.csv"), run.report.posterior_mean_inverse);
  write_matrix_csv(dir / (cfg.name + ".map.csv"), run.report.map_estimate);
  write_json(dir / (cfg.name + ".covreport.json"), run.summary);
}

}  // namespace mhmc
