#pragma once

#include "mhmc/manifold.hpp"
#include "mhmc/targets.hpp"

namespace mhmc {

struct RattleConfig {
  double stepsize = 1e-3;
  double shake_tol = 1e-10;
  int shake_max_iters = 500;
  double gram_regularization = 0.0;

  void validate() const;
};

enum class FlowFailure {
  none,
  shake_not_converged,
  singular_constraints,
  target_evaluation,
};

const char* to_string(FlowFailure f);

struct FlowResult {
  PhasePoint end_state;
  bool converged = true;
  FlowFailure failure = FlowFailure::none;
  int shake_iterations = 0;  // max SHAKE sweeps over the steps taken
  int steps_taken = 0;
  long gradient_evaluations = 0;
  double energy_start = 0.0;
  double energy_end = 0.0;
};

/// H(x, v) = U(x) + v.v / 2.
double hamiltonian(const TargetDensity& target, const PhasePoint& z);

/// RATTLE integrator for the embedded constrained Hamiltonian
/// H(x, v) = U(x) + |v|^2 / 2.
///
/// Position multipliers are found by a SHAKE sweep (one constraint at a time,
/// ascending order); velocity multipliers by projecting onto the tangent space
/// of the new point. The object owns its scratch buffers, so use one instance
/// per thread.
class RattleIntegrator {
 public:
  RattleIntegrator(const Manifold& manifold, const TargetDensity& target, RattleConfig cfg);

  const RattleConfig& config() const { return cfg_; }
  void set_stepsize(double h);
  /// Tangent projection at the position reached by the last successful step.
  void project_tangent(VectorRef w) { gram_.project(w); }

  FlowResult step(const PhasePoint& state);
  /// L steps; stops at the first failure.
  FlowResult flow(const PhasePoint& state, int steps);

  /// Lower level entry point used by the samplers: advances `state` by
  /// `steps` steps in place, calling `on_step` after every successful step.
  template <typename OnStep>
  FlowResult advance(PhasePoint& state, int steps, OnStep&& on_step);

 private:
  bool prepare(const PhasePoint& state, FlowResult& out);
  bool single_step(PhasePoint& state, FlowResult& out);

  const Manifold& M_;
  const TargetDensity& U_;
  RattleConfig cfg_;

  Index n_;
  Index m_;
  Matrix C_cur_;  // C(x) at the current position
  Matrix C_new_;
  Vector grad_cur_;
  Vector grad_new_;
  Vector q_;
  Vector r_;
  Vector row_;
  GramProjector gram_;
};

template <typename OnStep>
FlowResult RattleIntegrator::advance(PhasePoint& state, int steps, OnStep&& on_step) {
  FlowResult out;
  if (!prepare(state, out)) {
    out.end_state = state;
    return out;
  }
  for (int k = 0; k < steps; ++k) {
    if (!single_step(state, out)) break;
    ++out.steps_taken;
    on_step(state);
  }
  if (out.converged) {
    try {
      out.energy_end = hamiltonian(U_, state);
    } catch (const EvaluationError&) {
      out.converged = false;
      out.failure = FlowFailure::target_evaluation;
    }
  }
  out.end_state = state;
  return out;
}

FlowResult rattle_step(const Manifold& M, const TargetDensity& target, const PhasePoint& state, const RattleConfig& cfg);
FlowResult flow(const Manifold& M, const TargetDensity& target, const PhasePoint& state, const RattleConfig& cfg,
                int steps);

/// (x, v) -> (x, -v).
PhasePoint momentum_flip(const PhasePoint& z);

inline constexpr double kDefaultRevTol = 1e-8;

/// Integrates `proposal` again for `steps` steps, flips, and compares with
/// `start` in the joint infinity norm over (x, v). False if either leg fails
/// to converge or the distance exceeds rev_tol.
bool reversibility_check(const Manifold& M, const TargetDensity& target, const PhasePoint& start,
                         const PhasePoint& proposal, const RattleConfig& cfg, int steps,
                         double rev_tol = kDefaultRevTol);

/// Same check, reusing an existing integrator (its stepsize must match).
bool reversibility_check(RattleIntegrator& integrator, const PhasePoint& start, const PhasePoint& proposal, int steps,
                         double rev_tol = kDefaultRevTol);

double phase_distance(const PhasePoint& a, const PhasePoint& b);

/// Exact free (U = 0) Hamiltonian flow on the unit sphere: great-circle
/// motion with constant speed.
PhasePoint sphere_geodesic_flow(ConstVectorRef x, ConstVectorRef v, double t, double tol = 1e-12);

}  // namespace mhmc
