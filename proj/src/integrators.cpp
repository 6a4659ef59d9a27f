#include "mhmc/integrators.hpp"

#include <cmath>

namespace mhmc {

void RattleConfig::validate() const {
  if (!(stepsize > 0.0) || !std::isfinite(stepsize)) throw ConfigError("rattle: stepsize must be positive");
  if (!(shake_tol > 0.0)) throw ConfigError("rattle: shake_tol must be positive");
  if (shake_max_iters < 1) throw ConfigError("rattle: shake_max_iters must be >= 1");
  if (gram_regularization < 0.0) throw ConfigError("rattle: gram_regularization must be nonnegative");
}

const char* to_string(FlowFailure f) {
  switch (f) {
    case FlowFailure::none: return "none";
    case FlowFailure::shake_not_converged: return "shake_not_converged";
    case FlowFailure::singular_constraints: return "singular_constraints";
    case FlowFailure::target_evaluation: return "target_evaluation";
  }
  return "unknown";
}

double hamiltonian(const TargetDensity& target, const PhasePoint& z) {
  return target.potential(z.x) + 0.5 * z.v.squaredNorm();
}

RattleIntegrator::RattleIntegrator(const Manifold& manifold, const TargetDensity& target, RattleConfig cfg)
    : M_(manifold), U_(target), cfg_(cfg), n_(manifold.ambient_dim()), m_(manifold.constraint_dim()) {
  cfg_.validate();
  require_dim(target.dim(), n_, "RattleIntegrator target");
  C_cur_.resize(m_, n_);
  C_new_.resize(m_, n_);
  grad_cur_.resize(n_);
  grad_new_.resize(n_);
  q_.resize(n_);
  r_.resize(m_);
  row_.resize(n_);
}

void RattleIntegrator::set_stepsize(double h) {
  if (!(h > 0.0) || !std::isfinite(h)) throw ConfigError("rattle: stepsize must be positive");
  cfg_.stepsize = h;
}

bool RattleIntegrator::prepare(const PhasePoint& state, FlowResult& out) {
  require_dim(state.x.size(), n_, "rattle state x");
  require_dim(state.v.size(), n_, "rattle state v");
  try {
    out.energy_start = hamiltonian(U_, state);
    U_.gradient_into(state.x, grad_cur_);
    ++out.gradient_evaluations;
  } catch (const EvaluationError&) {
    out.converged = false;
    out.failure = FlowFailure::target_evaluation;
    return false;
  }
  M_.jacobian_into(state.x, C_cur_);
  return true;
}

bool RattleIntegrator::single_step(PhasePoint& state, FlowResult& out) {
  const double h = cfg_.stepsize;
  auto fail = [&](FlowFailure why) {
    out.converged = false;
    out.failure = why;
    return false;
  };

  // Position: unconstrained predictor, then SHAKE sweeps over the constraints.
  q_ = state.x + h * state.v - (0.5 * h * h) * grad_cur_;
  int sweeps = 0;
  if (m_ > 0) {
    for (;;) {
      if (!q_.allFinite()) return fail(FlowFailure::shake_not_converged);
      M_.constraints_into(q_, r_);
      if (r_.lpNorm<Eigen::Infinity>() < cfg_.shake_tol) break;
      if (sweeps >= cfg_.shake_max_iters) {
        out.shake_iterations = std::max(out.shake_iterations, sweeps);
        return fail(FlowFailure::shake_not_converged);
      }
      for (Index i = 0; i < m_; ++i) {
        const double gi = M_.constraint_component(i, q_);
        M_.jacobian_row_into(i, q_, row_);
        const double denom = C_cur_.row(i).dot(row_);
        if (!(std::abs(denom) >= 1e-14)) return fail(FlowFailure::shake_not_converged);
        q_.noalias() -= (gi / denom) * C_cur_.row(i).transpose();
      }
      ++sweeps;
    }
  }
  out.shake_iterations = std::max(out.shake_iterations, sweeps);

  // Velocity: half step recomputed from the solved position, kick, project.
  try {
    U_.gradient_into(q_, grad_new_);
    ++out.gradient_evaluations;
  } catch (const EvaluationError&) {
    return fail(FlowFailure::target_evaluation);
  }
  M_.jacobian_into(q_, C_new_);
  try {
    gram_.factor(C_new_, cfg_.gram_regularization);
  } catch (const SingularConstraintError&) {
    return fail(FlowFailure::singular_constraints);
  }
  state.v = (q_ - state.x) / h - (0.5 * h) * grad_new_;
  gram_.project(state.v);
  state.x.swap(q_);
  C_cur_.swap(C_new_);
  grad_cur_.swap(grad_new_);
  return true;
}

FlowResult RattleIntegrator::step(const PhasePoint& state) { return flow(state, 1); }

FlowResult RattleIntegrator::flow(const PhasePoint& state, int steps) {
  if (steps < 1) throw ConfigError("flow: number of steps must be >= 1");
  PhasePoint z = state;
  return advance(z, steps, [](const PhasePoint&) {});
}

FlowResult rattle_step(const Manifold& M, const TargetDensity& target, const PhasePoint& state,
                       const RattleConfig& cfg) {
  RattleIntegrator integrator(M, target, cfg);
  return integrator.step(state);
}

FlowResult flow(const Manifold& M, const TargetDensity& target, const PhasePoint& state, const RattleConfig& cfg,
                int steps) {
  RattleIntegrator integrator(M, target, cfg);
  return integrator.flow(state, steps);
}

PhasePoint momentum_flip(const PhasePoint& z) { return PhasePoint{z.x, -z.v}; }

double phase_distance(const PhasePoint& a, const PhasePoint& b) {
  return std::max((a.x - b.x).lpNorm<Eigen::Infinity>(), (a.v - b.v).lpNorm<Eigen::Infinity>());
}

bool reversibility_check(RattleIntegrator& integrator, const PhasePoint& start, const PhasePoint& proposal, int steps,
                         double rev_tol) {
  const FlowResult back = integrator.flow(proposal, steps);
  if (!back.converged) return false;
  const double dist = phase_distance(momentum_flip(back.end_state), start);
  return dist <= rev_tol;
}

bool reversibility_check(const Manifold& M, const TargetDensity& target, const PhasePoint& start,
                         const PhasePoint& proposal, const RattleConfig& cfg, int steps, double rev_tol) {
  RattleIntegrator integrator(M, target, cfg);
  return reversibility_check(integrator, start, proposal, steps, rev_tol);
}

PhasePoint sphere_geodesic_flow(ConstVectorRef x, ConstVectorRef v, double t, double tol) {
  require_dim(v.size(), x.size(), "sphere_geodesic_flow");
  const double speed = v.norm();
  if (std::abs(x.norm() - 1.0) > tol || std::abs(x.dot(v)) > tol * std::max(1.0, speed)) {
    throw OffManifoldError("sphere_geodesic_flow: (x, v) is not in the tangent bundle of the unit sphere");
  }
  if (speed == 0.0 || t == 0.0) return PhasePoint{x, v};
  const double c = std::cos(speed * t);
  const double s = std::sin(speed * t);
  PhasePoint out;
  out.x = c * x + (s / speed) * v;
  out.v = (-speed * s) * x + c * v;
  return out;
}

}  // namespace mhmc
