#include "mhmc/targets.hpp"

#include <cmath>

namespace mhmc {

Vector TargetDensity::gradient(ConstVectorRef x) const {
  require_dim(x.size(), dim(), name().c_str());
  Vector g(dim());
  gradient_into(x, g);
  return g;
}

// ---------------------------------------------------------------------------
// BVMF

BvmfTarget::BvmfTarget(BvmfParams params) : params_(std::move(params)) {
  const auto& A = params_.A;
  if (A.rows() != A.cols() || A.rows() != params_.c.size()) throw DimensionError("bvmf: A must be n x n with c in R^n");
  const double scale = std::max(1.0, A.cwiseAbs().maxCoeff());
  if ((A - A.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) throw ConfigError("bvmf: A must be symmetric");
}

double BvmfTarget::potential(ConstVectorRef x) const {
  const Matrix& A = params_.A;
  const Index n = x.size();
  double q = 0.0;
  for (Index j = 0; j < n; ++j) q += x(j) * A.col(j).dot(x);
  return -(params_.c.dot(x) + q);
}

void BvmfTarget::gradient_into(ConstVectorRef x, VectorRef grad) const {
  grad.noalias() = -2.0 * (params_.A * x);
  grad -= params_.c;
}

double bvmf_potential(const BvmfParams& params, ConstVectorRef x) {
  require_dim(x.size(), params.c.size(), "bvmf_potential");
  return BvmfTarget(params).potential(x);
}

Vector bvmf_gradient(const BvmfParams& params, ConstVectorRef x) {
  return BvmfTarget(params).gradient(x);
}

// ---------------------------------------------------------------------------
// vMF on Stiefel

VmfStiefelTarget::VmfStiefelTarget(VmfStiefelParams params) : params_(std::move(params)) {}

double VmfStiefelTarget::potential(ConstVectorRef x) const {
  require_dim(x.size(), dim(), "vmf_stiefel_potential");
  return -Eigen::Map<const Vector>(params_.F.data(), params_.F.size()).dot(x);
}

void VmfStiefelTarget::gradient_into(ConstVectorRef, VectorRef grad) const {
  grad = -Eigen::Map<const Vector>(params_.F.data(), params_.F.size());
}

double vmf_stiefel_potential(const VmfStiefelParams& params, ConstVectorRef x) {
  return VmfStiefelTarget(params).potential(x);
}

Vector vmf_stiefel_gradient(const VmfStiefelParams& params, ConstVectorRef x) {
  return VmfStiefelTarget(params).gradient(x);
}

// ---------------------------------------------------------------------------
// Spiked covariance

SpikedCovParams unpack_spiked(const SpikedCovData& data, ConstVectorRef theta) {
  const Index p = data.p, m = data.m;
  require_dim(theta.size(), p * m + m + p, "spiked covariance parameters");
  SpikedCovParams out;
  out.X = Eigen::Map<const Matrix>(theta.data(), p, m);
  out.d1 = theta.segment(p * m, m);
  out.d2 = theta.segment(p * m + m, p);
  return out;
}

Vector pack_spiked(const SpikedCovParams& params) {
  const Index p = params.X.rows(), m = params.X.cols();
  Vector theta(p * m + m + p);
  theta.head(p * m) = Eigen::Map<const Vector>(params.X.data(), p * m);
  theta.segment(p * m, m) = params.d1;
  theta.segment(p * m + m, p) = params.d2;
  return theta;
}

Matrix assemble_covariance(const SpikedCovParams& params) {
  Matrix sigma = params.X * params.d1.asDiagonal() * params.X.transpose();
  sigma.diagonal() += params.d2;
  return sigma;
}

namespace {

struct CovFactor {
  Eigen::LLT<Matrix> llt;
  double logdet = 0.0;
};

CovFactor factor_covariance(const Matrix& sigma) {
  CovFactor f;
  if (!sigma.allFinite()) throw EvaluationError("spiked-cov: non-finite covariance");
  f.llt.compute(sigma);
  if (f.llt.info() != Eigen::Success) throw EvaluationError("spiked-cov: covariance is not positive definite");
  const auto diag = f.llt.matrixLLT().diagonal();
  if (!(diag.minCoeff() > 0.0)) throw EvaluationError("spiked-cov: covariance is singular");
  f.logdet = 2.0 * diag.array().log().sum();
  return f;
}

}  // namespace

SpikedCovTarget::SpikedCovTarget(SpikedCovData data) : data_(std::move(data)) {
  if (data_.m < 1 || data_.m > data_.p) throw ConfigError("spiked-cov: need 1 <= m <= p");
  if (data_.scatter.rows() != data_.p || data_.scatter.cols() != data_.p) throw DimensionError("spiked-cov: scatter must be p x p");
  if (!(data_.sigma1 > 0.0) || !(data_.sigma2 > 0.0)) throw ConfigError("spiked-cov: prior scales must be positive");
}

double SpikedCovTarget::potential(ConstVectorRef theta) const {
  const SpikedCovParams th = unpack_spiked(data_, theta);
  const Matrix sigma = assemble_covariance(th);
  const CovFactor f = factor_covariance(sigma);
  const Matrix sinv_s = f.llt.solve(data_.scatter);
  const double n = static_cast<double>(data_.count);
  return 0.5 * n * f.logdet + 0.5 * sinv_s.trace() + th.d1.squaredNorm() / (2.0 * data_.sigma1 * data_.sigma1) +
         th.d2.squaredNorm() / (2.0 * data_.sigma2 * data_.sigma2);
}

void SpikedCovTarget::gradient_into(ConstVectorRef theta, VectorRef grad) const {
  const Index p = data_.p, m = data_.m;
  const SpikedCovParams th = unpack_spiked(data_, theta);
  const Matrix sigma = assemble_covariance(th);
  const CovFactor f = factor_covariance(sigma);
  const Matrix sinv = f.llt.solve(Matrix::Identity(p, p));
  const double n = static_cast<double>(data_.count);
  // dU/dSigma = (n Sigma^{-1} - Sigma^{-1} S Sigma^{-1}) / 2
  Matrix G = n * sinv - sinv * data_.scatter * sinv;
  G = (0.25 * (G + G.transpose())).eval();
  const Matrix GX = G * th.X;
  Eigen::Map<Matrix> gX(grad.data(), p, m);
  gX = 2.0 * GX * th.d1.asDiagonal();
  for (Index j = 0; j < m; ++j) {
    grad(p * m + j) = th.X.col(j).dot(GX.col(j)) + th.d1(j) / (data_.sigma1 * data_.sigma1);
  }
  for (Index j = 0; j < p; ++j) {
    grad(p * m + m + j) = G(j, j) + th.d2(j) / (data_.sigma2 * data_.sigma2);
  }
}

double spiked_cov_potential(const SpikedCovData& data, ConstVectorRef theta) {
  return SpikedCovTarget(data).potential(theta);
}

Vector spiked_cov_gradient(const SpikedCovData& data, ConstVectorRef theta) {
  return SpikedCovTarget(data).gradient(theta);
}

}  // namespace mhmc
