#include "doctest.h"
#include "support.hpp"

#include "mhmc/targets.hpp"

#include <Eigen/Eigenvalues>

using namespace mhmc;
using testutil::max_abs;
using testutil::max_rel_err;

namespace {

BvmfParams stiff_params() {
  return {Vector{{-1000.0, 0.0, 1000.0}}.asDiagonal(), Vector{{100.0, 0.0, 0.0}}};
}

struct SpikedInstance {
  Matrix raw;  // n x p data
  SpikedCovData data;
};

SpikedInstance make_instance(Index p, Index m, Index n, Rng& rng) {
  SpikedInstance out;
  out.raw.resize(n, p);
  for (Index i = 0; i < n; ++i) out.raw.row(i) = testutil::gaussian_vector(p, rng).transpose();
  const Vector mean = out.raw.colwise().mean();
  const Matrix centered = out.raw.rowwise() - mean.transpose();
  out.data.p = p;
  out.data.m = m;
  out.data.count = n;
  out.data.scatter = centered.transpose() * centered;
  out.data.sigma1 = 2.0;
  out.data.sigma2 = 1.5;
  return out;
}

Vector random_theta(Index p, Index m, Rng& rng) {
  SpikedCovParams th;
  th.X = testutil::random_orthonormal(p, m, rng);
  std::uniform_real_distribution<double> u(0.2, 3.0);
  th.d1.resize(m);
  th.d2.resize(p);
  for (Index j = 0; j < m; ++j) th.d1(j) = u(rng);
  for (Index j = 0; j < p; ++j) th.d2(j) = u(rng);
  return pack_spiked(th);
}

// Per-datum likelihood written out from its definition with an eigendecomposition.
double spiked_oracle(const SpikedInstance& inst, const Vector& theta) {
  const SpikedCovParams th = unpack_spiked(inst.data, theta);
  const Matrix sigma = assemble_covariance(th);
  Eigen::SelfAdjointEigenSolver<Matrix> es(sigma);
  const Vector lam = es.eigenvalues();
  const Matrix inv = es.eigenvectors() * lam.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
  const Vector mean = inst.raw.colwise().mean();
  double quad = 0.0;
  for (Index i = 0; i < inst.raw.rows(); ++i) {
    const Vector d = inst.raw.row(i).transpose() - mean;
    quad += d.dot(inv * d);
  }
  const double n = static_cast<double>(inst.raw.rows());
  return 0.5 * n * lam.array().log().sum() + 0.5 * quad +
         th.d1.squaredNorm() / (2.0 * inst.data.sigma1 * inst.data.sigma1) +
         th.d2.squaredNorm() / (2.0 * inst.data.sigma2 * inst.data.sigma2);
}

void check_fd_gradient(const TargetDensity& U, const Vector& x, double tol = 1e-5) {
  const Vector g = U.gradient(x);
  const Vector fd = testutil::fd_gradient([&](const Vector& y) { return U.potential(y); }, x);
  CHECK(max_rel_err(fd, g) <= tol);
}

}  // namespace

TEST_CASE("bvmf potential and gradient on the stiff target") {
  BvmfTarget U(stiff_params());
  const Vector x = Vector::Unit(3, 0);
  CHECK(U.potential(x) == doctest::Approx(900.0));
  CHECK(max_abs(U.gradient(x) - Vector{{1900.0, 0.0, 0.0}}) < 1e-12);
  CHECK(bvmf_potential(stiff_params(), x) == doctest::Approx(900.0));
  CHECK(max_abs(bvmf_gradient(stiff_params(), x) - Vector{{1900.0, 0.0, 0.0}}) < 1e-12);
  check_fd_gradient(U, x);
}

TEST_CASE("bvmf with zero parameters is uniform") {
  BvmfTarget U({Matrix::Zero(4, 4), Vector::Zero(4)});
  Rng rng(1);
  const Vector x = testutil::random_sphere_point(4, rng);
  CHECK(U.potential(x) == 0.0);
  CHECK(max_abs(U.gradient(x)) == 0.0);
}

TEST_CASE("bvmf gradient matches finite differences at 100 unit vectors") {
  Rng rng(2);
  Matrix A = Matrix::Random(5, 5) * 10.0;
  A = 0.5 * (A + A.transpose()).eval();
  BvmfTarget U({A, Vector::Random(5) * 5.0});
  for (int k = 0; k < 100; ++k) check_fd_gradient(U, testutil::random_sphere_point(5, rng), 1e-6);
}

TEST_CASE("bvmf is antipodally symmetric without a linear term") {
  Rng rng(3);
  Matrix A = Matrix::Random(4, 4);
  A = (A + A.transpose()).eval();
  BvmfTarget U({A, Vector::Zero(4)});
  for (int k = 0; k < 50; ++k) {
    const Vector x = testutil::random_sphere_point(4, rng);
    CHECK(U.potential(x) == doctest::Approx(U.potential(-x)).epsilon(1e-14));
  }
}

TEST_CASE("bvmf parameter checks") {
  const BvmfParams asym{Matrix{{0.0, 1.0}, {0.0, 0.0}}, Vector::Zero(2)};
  CHECK_THROWS_AS(BvmfTarget{asym}, ConfigError);
  const BvmfParams mismatch{Matrix::Zero(3, 3), Vector::Zero(2)};
  CHECK_THROWS_AS(BvmfTarget{mismatch}, DimensionError);
  CHECK_THROWS_AS(bvmf_potential(stiff_params(), Vector::Zero(4)), DimensionError);
}

TEST_CASE("vmf on stiefel") {
  Stiefel V(4, 2);
  Rng rng(4);
  const Matrix X = testutil::random_orthonormal(4, 2, rng);
  const Vector x = V.flatten(X);
  CHECK(vmf_stiefel_potential({Matrix::Zero(4, 2)}, x) == 0.0);
  CHECK(vmf_stiefel_potential({X}, x) == doctest::Approx(-2.0));
  CHECK_THROWS_AS(vmf_stiefel_potential({X}, Vector::Zero(6)), DimensionError);
  const Matrix F = Matrix::Random(4, 2);
  CHECK(vmf_stiefel_potential({F}, x) == doctest::Approx(-(F.transpose() * X).trace()));
}

TEST_CASE("vmf on O(3) with a skew parameter") {
  // Skew(2, -45, -4): upper triangle (0,1) = 2, (0,2) = -45, (1,2) = -4.
  Matrix F{{0.0, 2.0, -45.0}, {-2.0, 0.0, -4.0}, {45.0, 4.0, 0.0}};
  VmfStiefelTarget U({F});
  Stiefel O3(3, 3);
  Rng rng(5);
  const Vector negF = -Eigen::Map<const Vector>(F.data(), 9);
  for (int k = 0; k < 20; ++k) {
    const Vector x = O3.flatten(testutil::random_orthonormal(3, 3, rng));
    CHECK(max_abs(U.gradient(x) - negF) == 0.0);
    check_fd_gradient(U, x);
  }
}

TEST_CASE("spiked scalar case worked by hand") {
  SpikedCovData d;
  d.p = 1;
  d.m = 1;
  d.count = 1;
  d.scatter = Matrix::Zero(1, 1);
  d.sigma1 = 2.0;
  d.sigma2 = 2.0;
  SpikedCovTarget U(d);
  const Vector theta{{1.0, 0.0, 1.0}};  // X = 1, d1 = 0, d2 = 1
  // log det = 0, quadratic form 0, d2 prior 1/8.
  CHECK(U.potential(theta) == doctest::Approx(0.125));
  const Vector g = U.gradient(theta);
  CHECK(g(2) == doctest::Approx(0.5 + 1.0 / 4.0));
  check_fd_gradient(U, theta);
}

TEST_CASE("spiked potential equals the per-datum likelihood") {
  Rng rng(6);
  const auto inst = make_instance(8, 2, 12, rng);
  SpikedCovTarget U(inst.data);
  for (int k = 0; k < 20; ++k) {
    const Vector theta = random_theta(8, 2, rng);
    CHECK(U.potential(theta) == doctest::Approx(spiked_oracle(inst, theta)).epsilon(1e-11));
  }
}

TEST_CASE("spiked gradient matches finite differences") {
  Rng rng(7);
  const auto inst = make_instance(8, 2, 12, rng);
  SpikedCovTarget U(inst.data);
  for (int k = 0; k < 100; ++k) check_fd_gradient(U, random_theta(8, 2, rng));
  CHECK(max_abs(spiked_cov_gradient(inst.data, random_theta(8, 2, rng))) > 0.0);
}

TEST_CASE("doubling the data shifts the potential and keeps the gradient consistent") {
  Rng rng(8);
  auto inst = make_instance(6, 2, 10, rng);
  const Vector theta = random_theta(6, 2, rng);
  const double u1 = spiked_cov_potential(inst.data, theta);
  SpikedInstance twice = inst;
  twice.raw *= 2.0;
  twice.data.scatter *= 4.0;
  const double u2 = spiked_cov_potential(twice.data, theta);
  // Only the quadratic term changes: it is multiplied by 4.
  const Matrix sigma = assemble_covariance(unpack_spiked(inst.data, theta));
  const double quad = 0.5 * sigma.llt().solve(inst.data.scatter).trace();
  CHECK(u2 - u1 == doctest::Approx(3.0 * quad).epsilon(1e-10));
  CHECK(u2 == doctest::Approx(spiked_oracle(twice, theta)).epsilon(1e-11));
  SpikedCovTarget U2(twice.data);
  CHECK(U2.gradient(theta).allFinite());
  check_fd_gradient(U2, theta);
}

TEST_CASE("spiked potential is invariant under joint column permutation") {
  Rng rng(9);
  const auto inst = make_instance(7, 3, 11, rng);
  for (int k = 0; k < 20; ++k) {
    SpikedCovParams th = unpack_spiked(inst.data, random_theta(7, 3, rng));
    const double u = spiked_cov_potential(inst.data, pack_spiked(th));
    Eigen::PermutationMatrix<Eigen::Dynamic> perm(3);
    perm.indices() << 2, 0, 1;
    SpikedCovParams q = th;
    q.X = th.X * perm;
    q.d1 = perm.transpose() * th.d1;
    CHECK(max_abs(assemble_covariance(q) - assemble_covariance(th)) < 1e-13);
    CHECK(spiked_cov_potential(inst.data, pack_spiked(q)) == doctest::Approx(u).epsilon(1e-12));
  }
}

TEST_CASE("spiked potential rejects indefinite covariance") {
  Rng rng(10);
  const auto inst = make_instance(5, 2, 8, rng);
  SpikedCovParams th = unpack_spiked(inst.data, random_theta(5, 2, rng));
  th.d2(0) = -10.0;
  th.d1.setZero();
  CHECK_THROWS_AS(spiked_cov_potential(inst.data, pack_spiked(th)), EvaluationError);
  CHECK_THROWS_AS(spiked_cov_gradient(inst.data, pack_spiked(th)), EvaluationError);
  CHECK_THROWS_AS(spiked_cov_potential(inst.data, Vector::Zero(3)), DimensionError);
}

TEST_CASE("spiked model checks") {
  SpikedCovData d;
  d.p = 3;
  d.m = 4;
  d.count = 5;
  d.scatter = Matrix::Identity(3, 3);
  CHECK_THROWS_AS(SpikedCovTarget{d}, ConfigError);
  d.m = 1;
  d.scatter = Matrix::Identity(2, 2);
  CHECK_THROWS_AS(SpikedCovTarget{d}, DimensionError);
  d.scatter = Matrix::Identity(3, 3);
  d.sigma1 = 0.0;
  CHECK_THROWS_AS(SpikedCovTarget{d}, ConfigError);
}

TEST_CASE("pack and unpack round trip") {
  Rng rng(11);
  SpikedCovData d;
  d.p = 4;
  d.m = 2;
  const Vector theta = random_theta(4, 2, rng);
  CHECK(pack_spiked(unpack_spiked(d, theta)) == theta);
  const SpikedCovParams th = unpack_spiked(d, theta);
  CHECK(th.X(1, 0) == theta(1));
  CHECK(th.X(0, 1) == theta(4));
  CHECK(th.d1(0) == theta(8));
  CHECK(th.d2(3) == theta(13));
}

TEST_CASE("uniform target") {
  UniformTarget U(3);
  CHECK(U.potential(Vector::Ones(3)) == 0.0);
  CHECK(U.gradient(Vector::Ones(3)) == Vector::Zero(3));
  CHECK(U.name() == "uniform");
}
