#include "mhmc/langevin.hpp"

#include <cmath>

namespace mhmc {

namespace {

RattleConfig drift_config(const LangevinConfig& cfg) {
  RattleConfig rc;
  rc.stepsize = 0.5 * cfg.stepsize / cfg.drift_substeps;
  rc.shake_tol = cfg.shake_tol;
  rc.shake_max_iters = cfg.shake_max_iters;
  return rc;
}

}  // namespace

GbaoabIntegrator::GbaoabIntegrator(const Manifold& manifold, const TargetDensity& target, LangevinConfig cfg)
    : M_(manifold),
      U_(target),
      cfg_((cfg.validate(), cfg)),
      free_(manifold.ambient_dim()),
      drift_(manifold, free_, drift_config(cfg)),
      C_(manifold.constraint_dim(), manifold.ambient_dim()),
      grad_(manifold.ambient_dim()),
      noise_(manifold.ambient_dim()) {
  require_dim(target.dim(), manifold.ambient_dim(), "gbaoab target");
}

bool GbaoabIntegrator::refresh_geometry(const Vector& x) {
  geometry_from_drift_ = false;
  M_.jacobian_into(x, C_);
  try {
    gram_.factor(C_);
  } catch (const SingularConstraintError&) {
    failure_ = FlowFailure::singular_constraints;
    return false;
  }
  return true;
}

void GbaoabIntegrator::reset(const PhasePoint& z) {
  failure_ = FlowFailure::none;
  if (!refresh_geometry(z.x)) throw SingularConstraintError("gbaoab: singular constraints at start");
  U_.gradient_into(z.x, grad_);
  ++grad_evals_;
}

bool GbaoabIntegrator::kick(PhasePoint& z) {
  z.v -= (0.5 * cfg_.stepsize) * grad_;
  project(z.v);
  return true;
}

void GbaoabIntegrator::project(VectorRef w) {
  if (geometry_from_drift_) {
    drift_.project_tangent(w);
  } else {
    gram_.project(w);
  }
}

bool GbaoabIntegrator::drift(PhasePoint& z) {
  const FlowResult fr = drift_.advance(z, cfg_.drift_substeps, [](const PhasePoint&) {});
  if (!fr.converged) {
    failure_ = fr.failure;
    return false;
  }
  // The last RATTLE step already factored the Gram matrix at the new position.
  geometry_from_drift_ = true;
  return true;
}

bool GbaoabIntegrator::ornstein_uhlenbeck(PhasePoint& z, Rng& rng) {
  const double a = std::exp(-cfg_.gamma * cfg_.stepsize);
  const double b = std::sqrt(-std::expm1(-2.0 * cfg_.gamma * cfg_.stepsize));
  for (Index i = 0; i < noise_.size(); ++i) noise_(i) = normal_(rng);
  project(noise_);
  z.v = a * z.v + b * noise_;
  return true;
}

bool GbaoabIntegrator::step(PhasePoint& z, Rng& rng) {
  kick(z);
  if (!drift(z)) return false;
  ornstein_uhlenbeck(z, rng);
  if (!drift(z)) return false;
  try {
    U_.gradient_into(z.x, grad_);
    ++grad_evals_;
  } catch (const EvaluationError&) {
    failure_ = FlowFailure::target_evaluation;
    return false;
  }
  kick(z);
  try {
    energy_ = hamiltonian(U_, z);
  } catch (const EvaluationError&) {
    failure_ = FlowFailure::target_evaluation;
    return false;
  }
  return true;
}

}  // namespace mhmc
