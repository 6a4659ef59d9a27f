#include "mhmc/samplers.hpp"

#include "mhmc/langevin.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace mhmc {

void SamplerConfig::validate() const {
  if (!(mean_duration > 0.0) || !std::isfinite(mean_duration)) throw ConfigError("sampler: mean_duration must be > 0");
  if (!(dt_max > 0.0) || !std::isfinite(dt_max)) throw ConfigError("sampler: dt_max must be > 0");
  if (n_samples < 1) throw ConfigError("sampler: n_samples must be >= 1");
  if (!(rev_tol > 0.0)) throw ConfigError("sampler: rev_tol must be > 0");
  for (const auto& r : nonneg_blocks) {
    if (r.begin < 0 || r.end < r.begin) throw ConfigError("sampler: malformed nonneg block");
  }
  rattle().validate();
}

RattleConfig SamplerConfig::rattle() const {
  RattleConfig rc;
  rc.stepsize = dt_max;
  rc.shake_tol = shake_tol;
  rc.shake_max_iters = shake_max_iters;
  return rc;
}

void ChainRecord::record(const Vector& x, bool accept, double h, double duration, const SampleSink& sink) {
  ++recorded;
  accepted_count += accept ? 1 : 0;
  if (sink) {
    sink(x);
    return;
  }
  samples.push_back(x);
  accepted.push_back(accept);
  energy.push_back(h);
  durations.push_back(duration);
}

void ChainRecord::finalize() {
  acceptance_rate = recorded > 0 ? static_cast<double>(accepted_count) / static_cast<double>(recorded) : 0.0;
}

void LangevinConfig::validate() const {
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ConfigError("langevin: gamma must be >= 0");
  if (!(stepsize > 0.0) || !std::isfinite(stepsize)) throw ConfigError("langevin: stepsize must be > 0");
  if (n_samples < 1) throw ConfigError("langevin: n_samples must be >= 1");
  if (drift_substeps < 1) throw ConfigError("langevin: drift_substeps must be >= 1");
  if (!(shake_tol > 0.0) || shake_max_iters < 1) throw ConfigError("langevin: bad SHAKE settings");
}

double metropolis_accept_probability(double h_current, double h_proposed) {
  if (!std::isfinite(h_proposed) || !std::isfinite(h_current)) return 0.0;
  const double log_ratio = h_current - h_proposed;
  return log_ratio >= 0.0 ? 1.0 : std::exp(log_ratio);
}

StepPlan plan_steps(double duration, double dt_max) {
  if (!(dt_max > 0.0)) throw ConfigError("plan_steps: dt_max must be > 0");
  if (!(duration > 0.0)) return StepPlan{1, std::max(duration, std::numeric_limits<double>::min())};
  const double ratio = std::ceil(duration / dt_max);
  const int steps = static_cast<int>(std::max(1.0, ratio));
  return StepPlan{steps, duration / steps};
}

double draw_duration(double mean_duration, Rng& rng) {
  std::exponential_distribution<double> expo(1.0 / mean_duration);
  double t = expo(rng);
  // exponential_distribution may return exactly 0; the flow needs T > 0.
  while (!(t > 0.0)) t = expo(rng);
  return t;
}

namespace {

void require_start(const Manifold& M, ConstVectorRef x0, double tol) {
  require_dim(x0.size(), M.ambient_dim(), "sampler start point");
  if (!M.on_manifold(x0, tol)) throw OffManifoldError("sampler: start point is not on the manifold");
}

bool violates_nonneg(const std::vector<IndexRange>& blocks, const Vector& x) {
  for (const auto& r : blocks) {
    for (Index i = r.begin; i < r.end; ++i) {
      if (x(i) < 0.0) return true;
    }
  }
  return false;
}

class TangentSampler {
 public:
  explicit TangentSampler(const Manifold& M) : M_(M), C_(M.constraint_dim(), M.ambient_dim()) {}

  Vector draw(const Vector& x, Rng& rng) {
    Vector w(M_.ambient_dim());
    for (Index i = 0; i < w.size(); ++i) w(i) = normal_(rng);
    if (M_.constraint_dim() > 0) {
      M_.jacobian_into(x, C_);
      gram_.factor(C_);
      gram_.project(w);
    }
    return w;
  }

 private:
  const Manifold& M_;
  Matrix C_;
  GramProjector gram_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

enum class DurationMode { exponential, fixed };

ChainRecord metropolized_chain(const Manifold& M, const TargetDensity& target, ConstVectorRef x0,
                               const SamplerConfig& cfg, DurationMode mode, const SampleSink& sink) {
  cfg.validate();
  require_dim(target.dim(), M.ambient_dim(), "sampler target");
  require_start(M, x0, std::max(kFeasibilityTol, 10.0 * cfg.shake_tol));
  for (const auto& r : cfg.nonneg_blocks) {
    if (r.end > M.ambient_dim()) throw ConfigError("sampler: nonneg block outside the ambient space");
  }

  Rng rng(cfg.seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  TangentSampler tangent(M);
  RattleIntegrator integrator(M, target, cfg.rattle());

  ChainRecord rec;
  if (!sink) {
    const auto n = static_cast<std::size_t>(cfg.n_samples);
    rec.samples.reserve(n);
    rec.accepted.reserve(n);
    rec.energy.reserve(n);
    rec.durations.reserve(n);
  }

  Vector x = x0;
  for (Index k = 0; k < cfg.n_samples; ++k) {
    PhasePoint start{x, tangent.draw(x, rng)};
    const double T = mode == DurationMode::exponential ? draw_duration(cfg.mean_duration, rng) : cfg.mean_duration;
    const StepPlan plan = plan_steps(T, cfg.dt_max);
    const double u = uniform(rng);

    integrator.set_stepsize(plan.stepsize);
    const FlowResult fwd = integrator.flow(start, plan.steps);
    rec.gradient_evaluations += fwd.gradient_evaluations;

    bool accept = false;
    double energy = std::numeric_limits<double>::quiet_NaN();
    if (!fwd.converged) {
      if (fwd.failure == FlowFailure::target_evaluation) {
        ++rec.evaluation_failures;
      } else {
        ++rec.shake_failures;
      }
    } else {
      energy = fwd.energy_end;
      const PhasePoint proposal = momentum_flip(fwd.end_state);
      bool ok = true;
      if (cfg.enable_rev_check) {
        const FlowResult back = integrator.flow(proposal, plan.steps);
        rec.gradient_evaluations += back.gradient_evaluations;
        if (!back.converged || phase_distance(momentum_flip(back.end_state), start) > cfg.rev_tol) {
          ++rec.rev_failures;
          ok = false;
        }
      }
      if (ok && violates_nonneg(cfg.nonneg_blocks, proposal.x)) {
        ++rec.nonneg_rejections;
        ok = false;
      }
      if (ok) accept = u < metropolis_accept_probability(fwd.energy_start, fwd.energy_end);
      if (accept) x = proposal.x;
    }
    rec.record(x, accept, energy, T, sink);
  }
  rec.finalize();
  return rec;
}

}  // namespace

ChainRecord rt_chmc_metropolis(const Manifold& M, const TargetDensity& target, ConstVectorRef x0,
                               const SamplerConfig& cfg, const SampleSink& sink) {
  return metropolized_chain(M, target, x0, cfg, DurationMode::exponential, sink);
}

ChainRecord rmhmc_fixed(const Manifold& M, const TargetDensity& target, ConstVectorRef x0, const SamplerConfig& cfg,
                        const SampleSink& sink) {
  return metropolized_chain(M, target, x0, cfg, DurationMode::fixed, sink);
}

ChainRecord rt_chmc_unadjusted(const Manifold& M, const TargetDensity& target, ConstVectorRef x0,
                               const SamplerConfig& cfg, const SampleSink& sink) {
  cfg.validate();
  require_dim(target.dim(), M.ambient_dim(), "sampler target");
  require_start(M, x0, std::max(kFeasibilityTol, 10.0 * cfg.shake_tol));

  Rng rng(cfg.seed);
  TangentSampler tangent(M);
  RattleIntegrator integrator(M, target, cfg.rattle());

  ChainRecord rec;
  if (!sink) rec.samples.reserve(static_cast<std::size_t>(cfg.n_samples));
  Vector x = x0;
  long event = 0;
  while (rec.recorded < cfg.n_samples) {
    PhasePoint z{x, tangent.draw(x, rng)};
    const double T = draw_duration(cfg.mean_duration, rng);
    const StepPlan plan = plan_steps(T, cfg.dt_max);
    integrator.set_stepsize(plan.stepsize);

    FlowResult fr;
    if (cfg.record_every_step) {
      fr = integrator.advance(z, plan.steps, [&](const PhasePoint& s) {
        if (rec.recorded < cfg.n_samples) {
          rec.record(s.x, true, std::numeric_limits<double>::quiet_NaN(), plan.stepsize, sink);
        }
      });
    } else {
      fr = integrator.advance(z, plan.steps, [](const PhasePoint&) {});
    }
    rec.gradient_evaluations += fr.gradient_evaluations;
    if (!fr.converged) {
      throw SamplerError("rt_chmc_unadjusted: integrator failed (" + std::string(to_string(fr.failure)) +
                         ") at event " + std::to_string(event) + " after " + std::to_string(fr.steps_taken) +
                         " of " + std::to_string(plan.steps) + " steps, stepsize " + std::to_string(plan.stepsize));
    }
    x = fr.end_state.x;
    if (!cfg.record_every_step) {
      rec.record(x, true, fr.energy_end, T, sink);
    } else if (!rec.energy.empty()) {
      rec.energy.back() = fr.energy_end;
    }
    ++event;
  }
  rec.finalize();
  return rec;
}

ChainRecord rt_rmhmc_exact_sphere(Index n, ConstVectorRef x0, const SamplerConfig& cfg, const SampleSink& sink) {
  if (!(cfg.mean_duration > 0.0)) throw ConfigError("sampler: mean_duration must be > 0");
  if (cfg.n_samples < 1) throw ConfigError("sampler: n_samples must be >= 1");
  require_dim(x0.size(), n, "rt_rmhmc_exact_sphere start point");
  if (std::abs(x0.norm() - 1.0) > 1e-12) throw OffManifoldError("rt_rmhmc_exact_sphere: |x0| != 1");

  Rng rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  ChainRecord rec;
  if (!sink) rec.samples.reserve(static_cast<std::size_t>(cfg.n_samples));
  Vector x = x0;
  Vector v(n);
  for (Index k = 0; k < cfg.n_samples; ++k) {
    for (Index i = 0; i < n; ++i) v(i) = normal(rng);
    v -= x.dot(v) * x;
    const double T = draw_duration(cfg.mean_duration, rng);
    PhasePoint z = sphere_geodesic_flow(x, v, T);
    x = z.x / z.x.norm();
    rec.record(x, true, 0.5 * z.v.squaredNorm(), T, sink);
  }
  rec.finalize();
  return rec;
}

ChainRecord gbaoab(const Manifold& M, const TargetDensity& target, ConstVectorRef x0, const LangevinConfig& cfg,
                   const SampleSink& sink) {
  cfg.validate();
  require_start(M, x0, std::max(kFeasibilityTol, 10.0 * cfg.shake_tol));
  Rng rng(cfg.seed);
  GbaoabIntegrator integrator(M, target, cfg);
  PhasePoint z{x0, sample_tangent_gaussian(M, x0, rng)};
  integrator.reset(z);

  ChainRecord rec;
  if (!sink) rec.samples.reserve(static_cast<std::size_t>(cfg.n_samples));
  for (Index k = 0; k < cfg.n_samples; ++k) {
    if (!integrator.step(z, rng)) {
      throw SamplerError("gbaoab: integrator failed (" + std::string(to_string(integrator.last_failure())) +
                         ") at step " + std::to_string(k) + ", stepsize " + std::to_string(cfg.stepsize));
    }
    rec.record(z.x, true, integrator.last_energy(), cfg.stepsize, sink);
  }
  rec.gradient_evaluations = integrator.gradient_evaluations();
  rec.finalize();
  return rec;
}

}  // namespace mhmc
