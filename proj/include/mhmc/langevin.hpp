#pragma once

#include "mhmc/integrators.hpp"
#include "mhmc/samplers.hpp"

namespace mhmc {

/// One g-BAOAB step is B A O A B:
///   B: v <- P(x)(v - h/2 grad U(x))
///   A: constrained free drift over h/2 (RATTLE with U = 0)
///   O: v <- e^{-gamma h} v + sqrt(1 - e^{-2 gamma h}) P(x) xi
class GbaoabIntegrator {
 public:
  GbaoabIntegrator(const Manifold& manifold, const TargetDensity& target, LangevinConfig cfg);

  /// Must be called before the first step with a tangent state.
  void reset(const PhasePoint& z);
  /// Full B A O A B step. False on SHAKE or evaluation failure.
  bool step(PhasePoint& z, Rng& rng);

  bool kick(PhasePoint& z);
  bool drift(PhasePoint& z);
  bool ornstein_uhlenbeck(PhasePoint& z, Rng& rng);

  FlowFailure last_failure() const { return failure_; }
  double last_energy() const { return energy_; }
  long gradient_evaluations() const { return grad_evals_; }

 private:
  bool refresh_geometry(const Vector& x);
  void project(VectorRef w);

  const Manifold& M_;
  const TargetDensity& U_;
  LangevinConfig cfg_;
  UniformTarget free_;
  RattleIntegrator drift_;
  Matrix C_;
  GramProjector gram_;
  Vector grad_;
  Vector noise_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  FlowFailure failure_ = FlowFailure::none;
  double energy_ = 0.0;
  long grad_evals_ = 0;
  bool geometry_from_drift_ = false;
};

}  // namespace mhmc
