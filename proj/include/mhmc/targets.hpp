#pragma once

#include "mhmc/types.hpp"

#include <memory>
#include <string>

namespace mhmc {

/// Potential U(x) = -log pi_H(x) (up to a constant) of a density with respect
/// to the Hausdorff measure of an embedded manifold, with its ambient
/// gradient.
class TargetDensity {
 public:
  virtual ~TargetDensity() = default;

  virtual Index dim() const = 0;
  virtual double potential(ConstVectorRef x) const = 0;
  virtual void gradient_into(ConstVectorRef x, VectorRef grad) const = 0;
  virtual std::string name() const = 0;

  Vector gradient(ConstVectorRef x) const;
};

using TargetPtr = std::shared_ptr<const TargetDensity>;

/// U = 0.
class UniformTarget final : public TargetDensity {
 public:
  explicit UniformTarget(Index dim) : dim_(dim) {}
  Index dim() const override { return dim_; }
  double potential(ConstVectorRef) const override { return 0.0; }
  void gradient_into(ConstVectorRef, VectorRef grad) const override { grad.setZero(); }
  std::string name() const override { return "uniform"; }

 private:
  Index dim_;
};

struct BvmfParams {
  Matrix A;  // symmetric
  Vector c;
};

/// Bingham-von Mises-Fisher: pi(x) ~ exp(c.x + x^T A x) on the sphere.
class BvmfTarget final : public TargetDensity {
 public:
  explicit BvmfTarget(BvmfParams params);
  Index dim() const override { return params_.c.size(); }
  double potential(ConstVectorRef x) const override;
  void gradient_into(ConstVectorRef x, VectorRef grad) const override;
  std::string name() const override { return "bvmf"; }
  const BvmfParams& params() const { return params_; }

 private:
  BvmfParams params_;
};

double bvmf_potential(const BvmfParams& params, ConstVectorRef x);
Vector bvmf_gradient(const BvmfParams& params, ConstVectorRef x);

struct VmfStiefelParams {
  Matrix F;  // d x p
};

/// von Mises-Fisher on V_{d,p}: pi(X) ~ exp(tr(F^T X)), X flattened column-major.
class VmfStiefelTarget final : public TargetDensity {
 public:
  explicit VmfStiefelTarget(VmfStiefelParams params);
  Index dim() const override { return params_.F.size(); }
  double potential(ConstVectorRef x) const override;
  void gradient_into(ConstVectorRef x, VectorRef grad) const override;
  std::string name() const override { return "vmf-stiefel"; }

 private:
  VmfStiefelParams params_;
};

double vmf_stiefel_potential(const VmfStiefelParams& params, ConstVectorRef x);
Vector vmf_stiefel_gradient(const VmfStiefelParams& params, ConstVectorRef x);

/// Sufficient statistics of the spiked covariance model
/// Sigma = X diag(d1) X^T + diag(d2), X in V_{p,m}.
struct SpikedCovData {
  Index p = 0;
  Index m = 0;
  Index count = 0;   // number of data vectors n
  Matrix scatter;    // S = sum_i (x_i - mean)(x_i - mean)^T, p x p
  double sigma1 = 2.0;
  double sigma2 = 2.0;
};

/// Parameter vector layout: [vec(X) column-major (p*m), d1 (m), d2 (p)].
struct SpikedCovParams {
  Matrix X;
  Vector d1;
  Vector d2;
};

SpikedCovParams unpack_spiked(const SpikedCovData& data, ConstVectorRef theta);
Vector pack_spiked(const SpikedCovParams& params);
Matrix assemble_covariance(const SpikedCovParams& params);

/// Negative log posterior of the spiked covariance model:
///   n/2 log det Sigma + 1/2 tr(Sigma^{-1} S) + |d1|^2/(2 sigma1^2) + |d2|^2/(2 sigma2^2).
/// Throws EvaluationError if Sigma is not numerically positive definite.
class SpikedCovTarget final : public TargetDensity {
 public:
  explicit SpikedCovTarget(SpikedCovData data);
  Index dim() const override { return data_.p * data_.m + data_.m + data_.p; }
  double potential(ConstVectorRef theta) const override;
  void gradient_into(ConstVectorRef theta, VectorRef grad) const override;
  std::string name() const override { return "spiked-cov"; }
  const SpikedCovData& data() const { return data_; }

 private:
  SpikedCovData data_;
};

double spiked_cov_potential(const SpikedCovData& data, ConstVectorRef theta);
Vector spiked_cov_gradient(const SpikedCovData& data, ConstVectorRef theta);

}  // namespace mhmc
