#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace mhmc {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using VectorRef = Eigen::Ref<Vector>;
using ConstVectorRef = Eigen::Ref<const Vector>;
using MatrixRef = Eigen::Ref<Matrix>;
using ConstMatrixRef = Eigen::Ref<const Matrix>;

/// Random engine used by every sampler. One engine per chain.
using Rng = std::mt19937_64;

/// Position on the manifold together with a tangent velocity, both in
/// ambient coordinates.
struct PhasePoint {
  Vector x;
  Vector v;
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Raised when the constraint Gram matrix C C^T is (numerically) singular.
class SingularConstraintError : public Error {
 public:
  using Error::Error;
};

class OffManifoldError : public Error {
 public:
  using Error::Error;
};

/// A target density could not be evaluated at the requested point
/// (e.g. a covariance matrix that is not positive definite).
class EvaluationError : public Error {
 public:
  using Error::Error;
};

class SamplerError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, long row) : Error(what), row_(row) {}
  long row() const { return row_; }

 private:
  long row_;
};

inline void require_dim(Index got, Index want, const char* what) {
  if (got != want) {
    throw DimensionError(std::string(what) + ": expected dimension " + std::to_string(want) +
                         ", got " + std::to_string(got));
  }
}

}  // namespace mhmc
