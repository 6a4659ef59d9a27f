#pragma once

#include "mhmc/integrators.hpp"
#include "mhmc/manifold.hpp"
#include "mhmc/targets.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace mhmc {

struct SamplerConfig {
  /// Expected Hamiltonian travel time between momentum refreshments
  /// (the exponential duration has rate 1 / mean_duration).
  double mean_duration = 0.1;
  double dt_max = 1e-3;
  Index n_samples = 1000;
  std::uint64_t seed = 1;
  double shake_tol = 1e-10;
  int shake_max_iters = 500;
  double rev_tol = kDefaultRevTol;
  bool enable_rev_check = false;
  /// Ambient index ranges that must stay >= 0; proposals violating this are rejected.
  std::vector<IndexRange> nonneg_blocks;
  /// Unadjusted sampler only: emit every RATTLE step instead of every event endpoint.
  bool record_every_step = false;

  void validate() const;
  RattleConfig rattle() const;
};

/// Receives each recorded state. When a sink is passed to a sampler the
/// per-sample vectors of ChainRecord stay empty and only counters are kept.
using SampleSink = std::function<void(const Vector& x)>;

struct ChainRecord {
  std::vector<Vector> samples;
  std::vector<bool> accepted;
  std::vector<double> energy;     // H at the proposal (or end state), NaN if unavailable
  std::vector<double> durations;  // integration time per step
  double acceptance_rate = 0.0;
  long rev_failures = 0;
  long shake_failures = 0;
  long evaluation_failures = 0;
  long nonneg_rejections = 0;
  long gradient_evaluations = 0;
  Index recorded = 0;
  long accepted_count = 0;

  Index size() const { return static_cast<Index>(samples.size()); }
  void record(const Vector& x, bool accept, double h, double duration, const SampleSink& sink);
  void finalize();
};

struct LangevinConfig {
  double gamma = 1.0;
  double stepsize = 0.01;
  Index n_samples = 1000;
  std::uint64_t seed = 1;
  double shake_tol = 1e-10;
  int shake_max_iters = 500;
  /// RATTLE substeps per drift (A) stage.
  int drift_substeps = 1;

  void validate() const;
};

/// min{1, exp(h_current - h_proposed)}; 0 for non-finite proposals.
double metropolis_accept_probability(double h_current, double h_proposed);

struct StepPlan {
  int steps = 1;
  double stepsize = 0.0;
};

/// L = ceil(T / dt_max), h = T / L.
StepPlan plan_steps(double duration, double dt_max);

/// Exponential duration with the given mean.
double draw_duration(double mean_duration, Rng& rng);

/// Metropolis-adjusted randomized-time constrained HMC.
ChainRecord rt_chmc_metropolis(const Manifold& M, const TargetDensity& target, ConstVectorRef x0,
                               const SamplerConfig& cfg, const SampleSink& sink = {});

/// Same as rt_chmc_metropolis with the duration fixed to cfg.mean_duration.
ChainRecord rmhmc_fixed(const Manifold& M, const TargetDensity& target, ConstVectorRef x0, const SamplerConfig& cfg,
                        const SampleSink& sink = {});

/// Randomized-time constrained HMC without accept/reject or momentum flip.
/// Throws SamplerError on integrator failure.
ChainRecord rt_chmc_unadjusted(const Manifold& M, const TargetDensity& target, ConstVectorRef x0,
                               const SamplerConfig& cfg, const SampleSink& sink = {});

/// Exact-flow randomized-time sampler for the uniform law on the unit
/// sphere S^{n-1} in R^n.
ChainRecord rt_rmhmc_exact_sphere(Index n, ConstVectorRef x0, const SamplerConfig& cfg, const SampleSink& sink = {});

/// g-BAOAB constrained underdamped Langevin integrator (no correction).
/// Throws SamplerError on integrator failure.
ChainRecord gbaoab(const Manifold& M, const TargetDensity& target, ConstVectorRef x0, const LangevinConfig& cfg,
                   const SampleSink& sink = {});

}  // namespace mhmc
