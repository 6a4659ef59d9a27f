#include "mhmc/config.hpp"

#include "mhmc/io.hpp"

#include "toml.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace mhmc {

namespace fs = std::filesystem;
using nlohmann::json;

SamplerKind parse_sampler_kind(const std::string& s) {
  if (s == "rt-chmc") return SamplerKind::rt_chmc;
  if (s == "rt-chmc-unadjusted") return SamplerKind::rt_chmc_unadjusted;
  if (s == "rmhmc") return SamplerKind::rmhmc;
  if (s == "rt-exact-sphere") return SamplerKind::rt_exact_sphere;
  if (s == "gbaoab") return SamplerKind::gbaoab;
  throw ConfigError("unknown sampler '" + s +
                    "' (expected rt-chmc, rt-chmc-unadjusted, rmhmc, rt-exact-sphere or gbaoab)");
}

std::string to_string(SamplerKind k) {
  switch (k) {
    case SamplerKind::rt_chmc: return "rt-chmc";
    case SamplerKind::rt_chmc_unadjusted: return "rt-chmc-unadjusted";
    case SamplerKind::rmhmc: return "rmhmc";
    case SamplerKind::rt_exact_sphere: return "rt-exact-sphere";
    case SamplerKind::gbaoab: return "gbaoab";
  }
  return "?";
}

void ExperimentConfig::set_seed(std::uint64_t seed) {
  chmc.seed = seed;
  langevin.seed = seed;
}

void ExperimentConfig::set_n_samples(Index n) {
  chmc.n_samples = n;
  langevin.n_samples = n;
}

void ExperimentConfig::set_parameter(const std::string& name, double value) {
  if (name == "mean_duration") chmc.mean_duration = value;
  else if (name == "dt_max") chmc.dt_max = value;
  else if (name == "stepsize") langevin.stepsize = value;
  else if (name == "gamma") langevin.gamma = value;
  else if (name == "shake_tol") chmc.shake_tol = langevin.shake_tol = value;
  else if (name == "rev_tol") chmc.rev_tol = value;
  else if (name == "n_samples") set_n_samples(static_cast<Index>(std::llround(value)));
  else if (name == "seed") set_seed(static_cast<std::uint64_t>(std::llround(value)));
  else if (name == "drift_substeps") langevin.drift_substeps = static_cast<int>(std::lround(value));
  else throw ConfigError("parameter '" + name + "' cannot be swept");
}

namespace {

json toml_node_to_json(const toml::node& node) {
  if (const auto* t = node.as_table()) {
    json j = json::object();
    for (const auto& [k, v] : *t) j[std::string(k.str())] = toml_node_to_json(v);
    return j;
  }
  if (const auto* a = node.as_array()) {
    json j = json::array();
    for (const auto& v : *a) j.push_back(toml_node_to_json(v));
    return j;
  }
  if (const auto* v = node.as_string()) return v->get();
  if (const auto* v = node.as_integer()) return v->get();
  if (const auto* v = node.as_floating_point()) return v->get();
  if (const auto* v = node.as_boolean()) return v->get();
  throw ConfigError("unsupported TOML value (dates and times are not accepted)");
}

const std::map<std::string, std::vector<std::string>>& known_keys() {
  static const std::map<std::string, std::vector<std::string>> k = {
      {"", {"name", "manifold", "target", "sampler", "x0", "sweep", "covest", "out", "observables", "burn_in",
            "max_lag", "threads", "write_chain"}},
      {"target", {"kind", "A", "A_csv", "c", "c_csv", "F", "F_csv"}},
      {"sampler", {"kind", "mean_duration", "dt_max", "n_samples", "seed", "shake_tol", "shake_max_iters", "rev_tol",
                   "rev_check", "record_every_step", "gamma", "stepsize", "drift_substeps"}},
      {"sweep", {"parameter", "values", "samplers"}},
      {"covest", {"data", "reference", "p", "m", "sigma1", "sigma2", "skip_header", "map_steps", "map_lr",
                  "init_refine", "synthetic_count", "synthetic_seed"}},
  };
  return k;
}

const std::map<std::string, std::string>& key_aliases() {
  static const std::map<std::string, std::string> a = {
      {"stepsize_max", "dt_max"},   {"max_stepsize", "dt_max"},  {"h_max", "dt_max"},
      {"hmax", "dt_max"},           {"dt", "dt_max"},            {"step_max", "dt_max"},
      {"lambda", "mean_duration"},  {"duration", "mean_duration"}, {"event_rate", "mean_duration"},
      {"samples", "n_samples"},     {"num_samples", "n_samples"}, {"N", "n_samples"},
      {"friction", "gamma"},        {"h", "stepsize"},           {"reversibility_check", "rev_check"},
      {"burnin", "burn_in"},        {"burn", "burn_in"},         {"output", "out"},
      {"out_dir", "out"},           {"output_dir", "out"},       {"workers", "threads"},
  };
  return a;
}

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

json toml_to_json(const std::string& text) {
  try {
    const toml::table tbl = toml::parse(text);
    return toml_node_to_json(tbl);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "TOML parse error at line " << e.source().begin.line << ": " << e.description();
    throw ParseError(msg.str(), static_cast<long>(e.source().begin.line));
  }
}

std::optional<std::string> suggest_key(const std::string& key, const std::vector<std::string>& known) {
  const auto& aliases = key_aliases();
  if (auto it = aliases.find(key); it != aliases.end()) {
    if (std::find(known.begin(), known.end(), it->second) != known.end()) return it->second;
  }
  std::optional<std::string> best;
  std::size_t best_d = 3;
  for (const auto& k : known) {
    const std::size_t d = edit_distance(key, k);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

namespace {

struct Reader {
  fs::path base;
  std::vector<ConfigIssue>* issues;

  void check_keys(const json& obj, const std::string& section) const {
    const auto& all = known_keys();
    const auto& known = all.at(section);
    for (const auto& [k, v] : obj.items()) {
      if (std::find(known.begin(), known.end(), k) != known.end()) continue;
      const std::string where = section.empty() ? k : section + "." + k;
      std::string msg = "unknown key '" + where + "'";
      if (auto s = suggest_key(k, known)) {
        msg += "; did you mean '" + (section.empty() ? *s : section + "." + *s) + "'?";
      } else {
        for (const auto& [sec, keys] : all) {
          if (sec == section || sec.empty()) continue;
          if (auto s2 = suggest_key(k, keys)) {
            msg += "; did you mean '" + sec + "." + *s2 + "'?";
            break;
          }
        }
      }
      issues->push_back({ConfigIssue::Level::warning, msg});
    }
  }

  static double number(const json& v, const std::string& what) {
    if (!v.is_number()) throw ConfigError(what + ": expected a number");
    return v.get<double>();
  }
  static Index integer(const json& v, const std::string& what) {
    if (!v.is_number_integer()) throw ConfigError(what + ": expected an integer");
    return v.get<Index>();
  }
  static bool boolean(const json& v, const std::string& what) {
    if (!v.is_boolean()) throw ConfigError(what + ": expected true or false");
    return v.get<bool>();
  }
  static std::string string(const json& v, const std::string& what) {
    if (!v.is_string()) throw ConfigError(what + ": expected a string");
    return v.get<std::string>();
  }

  static Vector vector(const json& v, const std::string& what) {
    if (!v.is_array()) throw ConfigError(what + ": expected a list of numbers");
    Vector out(static_cast<Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Index>(i)) = number(v[i], what);
    return out;
  }

  static Matrix matrix(const json& v, const std::string& what) {
    if (!v.is_array() || v.empty() || !v[0].is_array()) throw ConfigError(what + ": expected a list of rows");
    const std::size_t cols = v[0].size();
    Matrix out(static_cast<Index>(v.size()), static_cast<Index>(cols));
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_array() || v[i].size() != cols) throw ConfigError(what + ": rows have unequal length");
      for (std::size_t j = 0; j < cols; ++j)
        out(static_cast<Index>(i), static_cast<Index>(j)) = number(v[i][j], what);
    }
    return out;
  }

  fs::path resolve(const std::string& p) const {
    const fs::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
  }

  Matrix matrix_from(const json& obj, const std::string& key, const std::string& section) const {
    if (obj.contains(key + "_csv")) return read_matrix_csv(resolve(string(obj[key + "_csv"], section + "." + key)));
    return matrix(obj[key], section + "." + key);
  }

  Vector vector_from(const json& obj, const std::string& key, const std::string& section) const {
    if (obj.contains(key + "_csv")) {
      const Matrix m = read_matrix_csv(resolve(string(obj[key + "_csv"], section + "." + key + "_csv")));
      if (m.rows() != 1 && m.cols() != 1) throw ConfigError(section + "." + key + "_csv: expected a single row or column");
      return Eigen::Map<const Vector>(m.data(), m.size());
    }
    return vector(obj[key], section + "." + key);
  }
};

void read_target(const Reader& r, const json& t, TargetSpec& spec) {
  if (!t.is_object()) throw ConfigError("target: expected a table");
  r.check_keys(t, "target");
  if (t.contains("kind")) spec.kind = Reader::string(t["kind"], "target.kind");
  if (spec.kind == "bvmf") {
    if (!(t.contains("A") || t.contains("A_csv")) || !(t.contains("c") || t.contains("c_csv")))
      throw ConfigError("target: bvmf needs A and c");
    spec.A = r.matrix_from(t, "A", "target");
    spec.c = r.vector_from(t, "c", "target");
  } else if (spec.kind == "vmf-stiefel") {
    if (!(t.contains("F") || t.contains("F_csv"))) throw ConfigError("target: vmf-stiefel needs F");
    spec.F = r.matrix_from(t, "F", "target");
  } else if (spec.kind != "uniform") {
    throw ConfigError("target: unknown kind '" + spec.kind + "' (expected uniform, bvmf or vmf-stiefel)");
  }
}

void read_sampler(const Reader& r, const json& s, ExperimentConfig& cfg) {
  if (!s.is_object()) throw ConfigError("sampler: expected a table");
  r.check_keys(s, "sampler");
  auto num = [&](const char* k, double& dst) {
    if (s.contains(k)) dst = Reader::number(s[k], std::string("sampler.") + k);
  };
  if (s.contains("kind")) cfg.sampler = parse_sampler_kind(Reader::string(s["kind"], "sampler.kind"));
  num("mean_duration", cfg.chmc.mean_duration);
  num("dt_max", cfg.chmc.dt_max);
  num("rev_tol", cfg.chmc.rev_tol);
  num("gamma", cfg.langevin.gamma);
  num("stepsize", cfg.langevin.stepsize);
  if (s.contains("shake_tol")) cfg.chmc.shake_tol = cfg.langevin.shake_tol = Reader::number(s["shake_tol"], "sampler.shake_tol");
  if (s.contains("shake_max_iters")) {
    cfg.chmc.shake_max_iters = cfg.langevin.shake_max_iters =
        static_cast<int>(Reader::integer(s["shake_max_iters"], "sampler.shake_max_iters"));
  }
  if (s.contains("n_samples")) cfg.set_n_samples(Reader::integer(s["n_samples"], "sampler.n_samples"));
  if (s.contains("seed")) {
    const Index seed = Reader::integer(s["seed"], "sampler.seed");
    if (seed < 0) throw ConfigError("sampler.seed: must be >= 0");
    cfg.set_seed(static_cast<std::uint64_t>(seed));
  }
  if (s.contains("rev_check")) cfg.chmc.enable_rev_check = Reader::boolean(s["rev_check"], "sampler.rev_check");
  if (s.contains("record_every_step"))
    cfg.chmc.record_every_step = Reader::boolean(s["record_every_step"], "sampler.record_every_step");
  if (s.contains("drift_substeps"))
    cfg.langevin.drift_substeps = static_cast<int>(Reader::integer(s["drift_substeps"], "sampler.drift_substeps"));
}

void read_sweep(const Reader& r, const json& s, ExperimentConfig& cfg) {
  if (!s.is_object()) throw ConfigError("sweep: expected a table");
  r.check_keys(s, "sweep");
  SweepSpec sw;
  if (!s.contains("parameter") || !s.contains("values")) throw ConfigError("sweep: needs parameter and values");
  sw.parameter = Reader::string(s["parameter"], "sweep.parameter");
  const Vector v = Reader::vector(s["values"], "sweep.values");
  sw.values.assign(v.data(), v.data() + v.size());
  if (s.contains("samplers")) {
    if (!s["samplers"].is_array()) throw ConfigError("sweep.samplers: expected a list");
    for (const auto& k : s["samplers"]) sw.samplers.push_back(parse_sampler_kind(Reader::string(k, "sweep.samplers")));
  }
  cfg.sweep = sw;
}

void read_covest(const Reader& r, const json& s, ExperimentConfig& cfg) {
  if (!s.is_object()) throw ConfigError("covest: expected a table");
  r.check_keys(s, "covest");
  CovestSpec c;
  if (s.contains("data")) c.data = r.resolve(Reader::string(s["data"], "covest.data")).string();
  if (s.contains("reference")) c.reference = r.resolve(Reader::string(s["reference"], "covest.reference")).string();
  if (s.contains("p")) c.p = Reader::integer(s["p"], "covest.p");
  if (s.contains("m")) c.m = Reader::integer(s["m"], "covest.m");
  if (s.contains("sigma1")) c.sigma1 = Reader::number(s["sigma1"], "covest.sigma1");
  if (s.contains("sigma2")) c.sigma2 = Reader::number(s["sigma2"], "covest.sigma2");
  if (s.contains("skip_header")) c.skip_header = Reader::boolean(s["skip_header"], "covest.skip_header");
  if (s.contains("map_steps")) c.map_steps = static_cast<int>(Reader::integer(s["map_steps"], "covest.map_steps"));
  if (s.contains("map_lr")) c.map_lr = Reader::number(s["map_lr"], "covest.map_lr");
  if (s.contains("init_refine")) c.init_refine = static_cast<int>(Reader::integer(s["init_refine"], "covest.init_refine"));
  if (s.contains("synthetic_count")) c.synthetic_count = Reader::integer(s["synthetic_count"], "covest.synthetic_count");
  if (s.contains("synthetic_seed"))
    c.synthetic_seed = static_cast<std::uint64_t>(Reader::integer(s["synthetic_seed"], "covest.synthetic_seed"));
  cfg.covest = c;
}

}  // namespace

ParsedConfig parse_config(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ConfigError("config: expected a table at the top level");
  ParsedConfig out;
  Reader r{base_dir, &out.issues};
  r.check_keys(j, "");
  ExperimentConfig& cfg = out.config;
  if (j.contains("name")) cfg.name = Reader::string(j["name"], "name");
  if (j.contains("manifold")) cfg.manifold = Reader::string(j["manifold"], "manifold");
  if (j.contains("target")) read_target(r, j["target"], cfg.target);
  if (j.contains("sampler")) {
    if (j["sampler"].is_string()) cfg.sampler = parse_sampler_kind(j["sampler"].get<std::string>());
    else read_sampler(r, j["sampler"], cfg);
  }
  if (j.contains("x0")) cfg.x0 = Reader::vector(j["x0"], "x0");
  if (j.contains("sweep")) read_sweep(r, j["sweep"], cfg);
  if (j.contains("covest")) read_covest(r, j["covest"], cfg);
  if (j.contains("out")) cfg.out_dir = Reader::string(j["out"], "out");
  if (j.contains("observables")) {
    if (!j["observables"].is_array()) throw ConfigError("observables: expected a list");
    for (const auto& o : j["observables"]) cfg.observables.push_back(Reader::string(o, "observables"));
  }
  if (j.contains("burn_in")) cfg.burn_in = Reader::number(j["burn_in"], "burn_in");
  if (j.contains("max_lag")) cfg.max_lag = Reader::integer(j["max_lag"], "max_lag");
  if (j.contains("threads")) cfg.threads = static_cast<int>(Reader::integer(j["threads"], "threads"));
  if (j.contains("write_chain")) cfg.write_chain = Reader::boolean(j["write_chain"], "write_chain");
  if (cfg.observables.empty()) cfg.observables.push_back("neglogpi");
  return out;
}

ParsedConfig parse_config_text(const std::string& text, bool is_json, const fs::path& base_dir) {
  json j;
  if (is_json) {
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("JSON parse error: ") + e.what(), 0);
    }
  } else {
    j = toml_to_json(text);
  }
  return parse_config(j, base_dir);
}

ParsedConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path.extension() == ".json", path.parent_path());
}

ManifoldPtr build_manifold(const ExperimentConfig& cfg) {
  if (cfg.manifold.empty()) throw ConfigError("config: manifold is required");
  return parse_manifold(cfg.manifold);
}

TargetPtr build_target(const ExperimentConfig& cfg) {
  const TargetSpec& t = cfg.target;
  if (t.kind == "bvmf") return std::make_shared<BvmfTarget>(BvmfParams{t.A, t.c});
  if (t.kind == "vmf-stiefel") return std::make_shared<VmfStiefelTarget>(VmfStiefelParams{t.F});
  if (t.kind == "uniform") return std::make_shared<UniformTarget>(build_manifold(cfg)->ambient_dim());
  throw ConfigError("unknown target kind '" + t.kind + "'");
}

bool has_errors(const std::vector<ConfigIssue>& issues) {
  return std::any_of(issues.begin(), issues.end(),
                     [](const ConfigIssue& i) { return i.level == ConfigIssue::Level::error; });
}

namespace {

bool valid_observable(const std::string& o, Index n) {
  if (o == "neglogpi") return true;
  if (o.rfind("coord:", 0) != 0) return false;
  const std::string idx = o.substr(6);
  if (idx.empty() || !std::all_of(idx.begin(), idx.end(), [](char ch) { return ch >= '0' && ch <= '9'; }))
    return false;
  return std::stoll(idx) < n;
}

}  // namespace

std::vector<ConfigIssue> validate(const ExperimentConfig& cfg) {
  std::vector<ConfigIssue> out;
  auto error = [&](std::string m) { out.push_back({ConfigIssue::Level::error, std::move(m)}); };
  auto warn = [&](std::string m) { out.push_back({ConfigIssue::Level::warning, std::move(m)}); };

  if (cfg.covest && cfg.manifold.empty()) {
    // The covariance pipeline builds its own manifold from p and m.
    const CovestSpec& c = *cfg.covest;
    if (c.data.empty() && c.p < 2) error("covest: p must be at least 2");
    if (!c.data.empty() && c.p < 1) error("covest: p is required with a data file");
    if (c.m && (*c.m < 1 || (c.p > 0 && *c.m >= c.p))) error("covest: need 1 <= m < p");
    if (c.data.empty() && c.synthetic_count < 2) error("covest: synthetic_count must be at least 2");
    try {
      cfg.chmc.validate();
    } catch (const Error& e) {
      error(std::string("sampler: ") + e.what());
    }
    return out;
  }

  ManifoldPtr M;
  try {
    M = build_manifold(cfg);
  } catch (const Error& e) {
    error(std::string("manifold: ") + e.what());
    return out;
  }
  const Index n = M->ambient_dim();
  const TargetSpec& t = cfg.target;
  if (t.kind == "bvmf") {
    if (t.A.rows() != t.A.cols()) error("target: A must be square");
    if (t.A.rows() != t.c.size()) {
      error("target: A is " + std::to_string(t.A.rows()) + "x" + std::to_string(t.A.cols()) + " but c has length " +
            std::to_string(t.c.size()));
    }
    if (t.c.size() != n) {
      error("dimension mismatch: manifold '" + cfg.manifold + "' lives in R^" + std::to_string(n) +
            " but the bvmf parameters are " + std::to_string(t.c.size()) + "-dimensional");
    }
    if (dynamic_cast<const Sphere*>(M.get()) == nullptr) warn("target: bvmf is normally used on a sphere");
    if (t.A.rows() == t.A.cols() && t.A.size() > 0) {
      const double scale = std::max(1.0, t.A.cwiseAbs().maxCoeff());
      if ((t.A - t.A.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) error("target: A must be symmetric");
    }
  } else if (t.kind == "vmf-stiefel") {
    const auto* S = dynamic_cast<const Stiefel*>(M.get());
    if (S == nullptr) {
      error("target: vmf-stiefel needs a stiefel manifold");
    } else if (S->rows() != t.F.rows() || S->cols() != t.F.cols()) {
      error("dimension mismatch: manifold '" + cfg.manifold + "' but F is " + std::to_string(t.F.rows()) + "x" +
            std::to_string(t.F.cols()));
    }
  } else if (t.kind != "uniform") {
    error("target: unknown kind '" + t.kind + "'");
  }

  if (cfg.sampler == SamplerKind::rt_exact_sphere || (cfg.sweep && std::count(cfg.sweep->samplers.begin(),
                                                                               cfg.sweep->samplers.end(),
                                                                               SamplerKind::rt_exact_sphere))) {
    if (dynamic_cast<const Sphere*>(M.get()) == nullptr) error("sampler: rt-exact-sphere needs a sphere manifold");
    if (t.kind != "uniform") error("sampler: rt-exact-sphere samples the uniform law only");
  }

  try {
    cfg.chmc.validate();
  } catch (const ConfigError& e) {
    error(e.what());
  }
  try {
    cfg.langevin.validate();
  } catch (const ConfigError& e) {
    error(e.what());
  }

  if (cfg.x0) {
    if (cfg.x0->size() != n) {
      error("x0 has length " + std::to_string(cfg.x0->size()) + ", expected " + std::to_string(n));
    } else if (!M->on_manifold(*cfg.x0, std::max(kFeasibilityTol, 10.0 * cfg.chmc.shake_tol))) {
      error("x0 is not on the manifold");
    }
  }

  if (cfg.sweep) {
    if (cfg.sweep->values.empty()) error("sweep: values must be non-empty");
    ExperimentConfig probe = cfg;
    try {
      probe.set_parameter(cfg.sweep->parameter, cfg.sweep->values.empty() ? 1.0 : cfg.sweep->values.front());
    } catch (const ConfigError& e) {
      error(std::string("sweep: ") + e.what());
    }
  }

  for (const auto& o : cfg.observables) {
    if (!valid_observable(o, n)) error("observable '" + o + "' is not neglogpi or coord:i with i < " + std::to_string(n));
  }
  if (!(cfg.burn_in >= 0.0 && cfg.burn_in < 1.0)) error("burn_in must be in [0, 1)");
  if (cfg.threads < 1) error("threads must be >= 1");
  const Index n_samples = cfg.sampler == SamplerKind::gbaoab ? cfg.langevin.n_samples : cfg.chmc.n_samples;
  const auto kept = static_cast<Index>(static_cast<double>(n_samples) * (1.0 - cfg.burn_in));
  if (kept < 100) warn("fewer than 100 samples remain after burn-in; diagnostics will be skipped");
  if (cfg.max_lag && *cfg.max_lag >= kept) error("max_lag must be smaller than the post-burn-in sample count");
  return out;
}

}  // namespace mhmc
