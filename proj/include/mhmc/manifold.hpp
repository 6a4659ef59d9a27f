#pragma once

#include "mhmc/types.hpp"

#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace mhmc {

/// Default feasibility tolerance (infinity norm of c(x)).
inline constexpr double kFeasibilityTol = 1e-9;

/// Gram matrices whose estimated condition number exceeds this are rejected.
inline constexpr double kMaxGramCondition = 1e12;

/// An algebraically constrained manifold M = {x in R^n : c(x) = 0}.
///
/// Implementations provide the residual vector c(x) and the Jacobian
/// C(x) = dc/dx (m x n). The per-component hooks exist so that SHAKE sweeps
/// can touch one constraint at a time without evaluating the full residual;
/// the defaults fall back to the full evaluators.
class Manifold {
 public:
  virtual ~Manifold() = default;

  virtual Index ambient_dim() const = 0;
  virtual Index constraint_dim() const = 0;

  virtual void constraints_into(ConstVectorRef x, VectorRef out) const = 0;
  virtual void jacobian_into(ConstVectorRef x, MatrixRef out) const = 0;

  virtual double constraint_component(Index i, ConstVectorRef x) const;
  virtual void jacobian_row_into(Index i, ConstVectorRef x, VectorRef row) const;

  /// A feasible point, used when no start point is configured.
  virtual Vector default_point() const = 0;
  virtual std::string describe() const = 0;

  /// Checked, allocating wrappers.
  Vector constraints(ConstVectorRef x) const;
  Matrix jacobian(ConstVectorRef x) const;

  bool on_manifold(ConstVectorRef x, double tol = kFeasibilityTol) const;
};

using ManifoldPtr = std::shared_ptr<const Manifold>;

/// Unit sphere S^{n-1} embedded in R^n, c(x) = x.x - 1.
class Sphere final : public Manifold {
 public:
  explicit Sphere(Index ambient_dim);

  Index ambient_dim() const override { return n_; }
  Index constraint_dim() const override { return 1; }
  void constraints_into(ConstVectorRef x, VectorRef out) const override;
  void jacobian_into(ConstVectorRef x, MatrixRef out) const override;
  double constraint_component(Index i, ConstVectorRef x) const override;
  void jacobian_row_into(Index i, ConstVectorRef x, VectorRef row) const override;
  Vector default_point() const override;
  std::string describe() const override;

 private:
  Index n_;
};

/// Stiefel manifold V_{d,p} of d x p matrices with orthonormal columns.
///
/// Points are flattened column-major: X(r, c) = x[c * d + r]. The constraints
/// are the p(p+1)/2 entries of X^T X - I on and above the diagonal, ordered
/// row by row: (0,0), (0,1), ..., (0,p-1), (1,1), ...
class Stiefel final : public Manifold {
 public:
  Stiefel(Index rows, Index cols);

  Index rows() const { return d_; }
  Index cols() const { return p_; }
  Index ambient_dim() const override { return d_ * p_; }
  Index constraint_dim() const override { return static_cast<Index>(pairs_.size()); }
  void constraints_into(ConstVectorRef x, VectorRef out) const override;
  void jacobian_into(ConstVectorRef x, MatrixRef out) const override;
  double constraint_component(Index i, ConstVectorRef x) const override;
  void jacobian_row_into(Index i, ConstVectorRef x, VectorRef row) const override;
  Vector default_point() const override;
  std::string describe() const override;

  /// Column pair (a, b), a <= b, of constraint i.
  std::pair<Index, Index> pair(Index i) const { return pairs_[static_cast<std::size_t>(i)]; }

  Matrix unflatten(ConstVectorRef x) const;
  Vector flatten(const Matrix& X) const;

 private:
  Index d_;
  Index p_;
  std::vector<std::pair<Index, Index>> pairs_;
};

/// Unconstrained Euclidean block inside a product manifold.
struct EuclideanBlock {
  Index dim = 0;
  bool nonnegative = false;
};

/// Half-open range [begin, end) of ambient indices.
struct IndexRange {
  Index begin = 0;
  Index end = 0;
  bool operator==(const IndexRange&) const = default;
};

/// Ordered product of constrained factors and Euclidean blocks.
/// The ambient vector is the concatenation of the factor ambients, and the
/// constraint vector the concatenation of the factor constraints.
class ProductManifold final : public Manifold {
 public:
  ProductManifold() = default;

  ProductManifold& add(ManifoldPtr factor);
  ProductManifold& add(EuclideanBlock block);

  Index ambient_dim() const override { return n_; }
  Index constraint_dim() const override { return m_; }
  void constraints_into(ConstVectorRef x, VectorRef out) const override;
  void jacobian_into(ConstVectorRef x, MatrixRef out) const override;
  double constraint_component(Index i, ConstVectorRef x) const override;
  void jacobian_row_into(Index i, ConstVectorRef x, VectorRef row) const override;
  Vector default_point() const override;
  std::string describe() const override;

  /// Ambient ranges of the Euclidean blocks flagged nonnegative.
  std::vector<IndexRange> nonnegative_ranges() const;
  std::size_t factor_count() const { return parts_.size(); }
  IndexRange ambient_range(std::size_t k) const;

 private:
  struct Part {
    ManifoldPtr factor;  // null for a Euclidean block
    EuclideanBlock block;
    Index ambient_offset = 0;
    Index constraint_offset = 0;
    Index ambient_size() const { return factor ? factor->ambient_dim() : block.dim; }
    Index constraint_size() const { return factor ? factor->constraint_dim() : 0; }
  };
  const Part& part_for_constraint(Index i) const;

  std::vector<Part> parts_;
  Index n_ = 0;
  Index m_ = 0;
};

/// Cholesky factorization of the Gram matrix C C^T (+ reg I), used for the
/// tangent projection v -> v - C^T (C C^T)^{-1} C v.
///
/// Scratch is held by the object so repeated projections do not allocate.
class GramProjector {
 public:
  GramProjector() = default;

  /// Throws SingularConstraintError when the factorization fails or the
  /// condition estimate (max L_ii / min L_ii)^2 exceeds kMaxGramCondition.
  void factor(const Matrix& jacobian, double regularization = 0.0);
  void project(VectorRef w);
  /// Explicit n x n projector I - C^T (C C^T)^{-1} C.
  Matrix matrix() const;

 private:
  Matrix C_;
  Matrix gram_;
  Eigen::LLT<Matrix> llt_;
  Vector tmp_;
  double inv_gram_ = 0.0;
};

Matrix tangent_projector(const Manifold& M, ConstVectorRef x);
Vector project_to_tangent(const Manifold& M, ConstVectorRef x, ConstVectorRef w);

/// v = P(x) v' with v' ~ N(0, I_n).
Vector sample_tangent_gaussian(const Manifold& M, ConstVectorRef x, Rng& rng);

/// Parse "sphere:n" (S^n in R^{n+1}), "stiefel:d,p", "euclid:k",
/// "euclid+:k" (nonnegative), or "product:[f1;f2;...]".
ManifoldPtr parse_manifold(const std::string& spec);

}  // namespace mhmc
