#include "doctest.h"
#include "support.hpp"

#include "mhmc/manifold.hpp"

#include <Eigen/SVD>

using namespace mhmc;
using testutil::max_abs;

namespace {

// Feasible random points for the manifolds exercised by the property tests.
struct Case {
  ManifoldPtr M;
  std::function<Vector(Rng&)> draw;
};

std::vector<Case> property_cases() {
  std::vector<Case> out;
  out.push_back({std::make_shared<Sphere>(3), [](Rng& r) { return testutil::random_sphere_point(3, r); }});
  out.push_back({std::make_shared<Sphere>(6), [](Rng& r) { return testutil::random_sphere_point(6, r); }});
  out.push_back({std::make_shared<Stiefel>(3, 2),
                 [](Rng& r) { return testutil::flatten(testutil::random_orthonormal(3, 2, r)); }});
  out.push_back({std::make_shared<Stiefel>(4, 2),
                 [](Rng& r) { return testutil::flatten(testutil::random_orthonormal(4, 2, r)); }});
  out.push_back({std::make_shared<Stiefel>(3, 3),
                 [](Rng& r) { return testutil::flatten(testutil::random_orthonormal(3, 3, r)); }});
  out.push_back({parse_manifold("product:[stiefel:5,2;euclid+:2;euclid:3]"), [](Rng& r) {
                   Vector x(15);
                   x.head(10) = testutil::flatten(testutil::random_orthonormal(5, 2, r));
                   x.tail(5) = testutil::gaussian_vector(5, r).cwiseAbs();
                   return x;
                 }});
  return out;
}

}  // namespace

TEST_CASE("sphere residuals") {
  Sphere S(3);
  CHECK(S.constraints(Vector::Unit(3, 0))(0) == 0.0);
  CHECK(S.constraints(Vector{{2.0, 0.0, 0.0}})(0) == doctest::Approx(3.0));
  CHECK_THROWS_AS(S.constraints(Vector::Zero(4)), DimensionError);
  CHECK_THROWS_AS(S.jacobian(Vector::Zero(2)), DimensionError);
}

TEST_CASE("stiefel residual at the first columns of the identity") {
  Stiefel V(3, 2);
  const Matrix X = Matrix::Identity(3, 2);
  const Vector r = V.constraints(V.flatten(X));
  REQUIRE(r.size() == 3);
  CHECK(max_abs(r) == 0.0);
}

TEST_CASE("stiefel constraint count and ordering") {
  for (Index p = 1; p <= 4; ++p) {
    Stiefel V(5, p);
    CHECK(V.constraint_dim() == p * (p + 1) / 2);
  }
  Stiefel V(3, 2);
  CHECK(V.pair(0) == std::make_pair<Index, Index>(0, 0));
  CHECK(V.pair(1) == std::make_pair<Index, Index>(0, 1));
  CHECK(V.pair(2) == std::make_pair<Index, Index>(1, 1));
  // X^T X - I with X = [[1, 1], [0, 1], [0, 0]]: (0,0) 0, (0,1) 1, (1,1) 1.
  Matrix X{{1.0, 1.0}, {0.0, 1.0}, {0.0, 0.0}};
  const Vector r = V.constraints(V.flatten(X));
  CHECK(r(0) == doctest::Approx(0.0));
  CHECK(r(1) == doctest::Approx(1.0));
  CHECK(r(2) == doctest::Approx(1.0));
  // Column-major flattening.
  const Vector x = V.flatten(X);
  CHECK(x(3) == 1.0);
  CHECK(x(4) == 1.0);
  CHECK(V.unflatten(x) == X);
}

TEST_CASE("stiefel residual vanishes at random orthonormal matrices") {
  Rng rng(11);
  for (int k = 0; k < 20; ++k) {
    Stiefel V(6, 3);
    const Vector x = testutil::flatten(testutil::random_orthonormal(6, 3, rng));
    CHECK(max_abs(V.constraints(x)) < 1e-14);
    CHECK(V.on_manifold(x));
  }
}

TEST_CASE("sphere jacobian examples") {
  Sphere S(3);
  const Matrix J1 = S.jacobian(Vector::Unit(3, 0));
  CHECK(max_abs(J1 - Matrix{{2.0, 0.0, 0.0}}) == 0.0);
  const Matrix J2 = S.jacobian(Vector{{0.6, 0.8, 0.0}});
  CHECK(max_abs(J2 - Matrix{{1.2, 1.6, 0.0}}) < 1e-15);
}

TEST_CASE("stiefel jacobian matches finite differences near the manifold") {
  Rng rng(3);
  Stiefel V(3, 2);
  for (int k = 0; k < 20; ++k) {
    Vector x = testutil::flatten(testutil::random_orthonormal(3, 2, rng));
    x += 1e-3 * testutil::gaussian_vector(6, rng);
    CHECK(max_abs(V.jacobian(x) - testutil::fd_jacobian(V, x)) < 1e-6);
  }
}

TEST_CASE("jacobian consistency at 100 feasible points per manifold") {
  Rng rng(5);
  for (const auto& c : property_cases()) {
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
      const Vector x = c.draw(rng);
      worst = std::max(worst, max_abs(c.M->jacobian(x) - testutil::fd_jacobian(*c.M, x)));
    }
    INFO(c.M->describe());
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("component hooks agree with full evaluators") {
  Rng rng(9);
  for (const auto& c : property_cases()) {
    const Vector x = c.draw(rng) + 0.01 * testutil::gaussian_vector(c.M->ambient_dim(), rng);
    const Vector r = c.M->constraints(x);
    const Matrix J = c.M->jacobian(x);
    Vector row(c.M->ambient_dim());
    for (Index i = 0; i < c.M->constraint_dim(); ++i) {
      CHECK(c.M->constraint_component(i, x) == doctest::Approx(r(i)).epsilon(1e-14));
      c.M->jacobian_row_into(i, x, row);
      CHECK(max_abs(row.transpose() - J.row(i)) < 1e-14);
    }
  }
}

TEST_CASE("jacobian has full row rank at sampled points") {
  Rng rng(13);
  for (const auto& c : property_cases()) {
    for (int k = 0; k < 20; ++k) {
      const Matrix J = c.M->jacobian(c.draw(rng));
      Eigen::JacobiSVD<Matrix> svd(J);
      CHECK(svd.singularValues().minCoeff() > 1e-10);
    }
  }
}

TEST_CASE("projector at the sphere pole") {
  Sphere S(3);
  const Matrix P = tangent_projector(S, Vector::Unit(3, 0));
  const Matrix want = Vector{{0.0, 1.0, 1.0}}.asDiagonal();
  CHECK(max_abs(P - want) < 1e-15);
}

TEST_CASE("projector identities") {
  Rng rng(17);
  for (const auto& c : property_cases()) {
    for (int k = 0; k < 50; ++k) {
      const Vector x = c.draw(rng);
      const Matrix P = tangent_projector(*c.M, x);
      const Matrix C = c.M->jacobian(x);
      INFO(c.M->describe());
      CHECK(max_abs(P * P - P) <= 1e-10);
      CHECK(max_abs(P.transpose() * P - P) <= 1e-10);
      CHECK(max_abs(C * P) <= 1e-10);
      CHECK(max_abs(P - P.transpose()) <= 1e-12);
    }
  }
}

TEST_CASE("in-place projection matches the explicit projector") {
  Rng rng(19);
  Stiefel V(4, 2);
  const Vector x = testutil::flatten(testutil::random_orthonormal(4, 2, rng));
  const Vector w = testutil::gaussian_vector(8, rng);
  CHECK(max_abs(project_to_tangent(V, x, w) - tangent_projector(V, x) * w) < 1e-13);
  GramProjector g;
  g.factor(V.jacobian(x));
  Vector u = w;
  g.project(u);
  CHECK(max_abs(u - g.matrix() * w) < 1e-13);
}

TEST_CASE("singular constraints are rejected") {
  Sphere S(3);
  CHECK_THROWS_AS(tangent_projector(S, Vector::Zero(3)), SingularConstraintError);
  Stiefel V(3, 2);
  Matrix X = Matrix::Zero(3, 2);
  X(0, 0) = 1.0;  // second column zero: the (1,1) row of C vanishes
  CHECK_THROWS_AS(tangent_projector(V, V.flatten(X)), SingularConstraintError);
  // Nearly parallel rows push the Gram condition number past the cap.
  Matrix C{{1.0, 0.0, 0.0}, {1.0, 1e-7, 0.0}};
  GramProjector g;
  CHECK_THROWS_AS(g.factor(C), SingularConstraintError);
}

TEST_CASE("tangent gaussian removes the normal component") {
  Sphere S(3);
  const Vector v = project_to_tangent(S, Vector::Unit(3, 0), Vector{{1.0, 2.0, 3.0}});
  CHECK(max_abs(v - Vector{{0.0, 2.0, 3.0}}) < 1e-15);
}

TEST_CASE("tangent gaussian draws lie in the tangent space") {
  Rng rng(23);
  for (const auto& c : property_cases()) {
    const Vector x = c.draw(rng);
    const Matrix C = c.M->jacobian(x);
    double worst = 0.0;
    for (int k = 0; k < 1000; ++k) worst = std::max(worst, max_abs(C * sample_tangent_gaussian(*c.M, x, rng)));
    CHECK(worst <= 1e-10);
  }
}

TEST_CASE("tangent gaussian covariance at the north pole") {
  Sphere S(3);
  Rng rng(29);
  const Vector x = Vector::Unit(3, 2);
  Matrix acc = Matrix::Zero(3, 3);
  const int n = 100000;
  for (int k = 0; k < n; ++k) {
    const Vector v = sample_tangent_gaussian(S, x, rng);
    acc += v * v.transpose();
  }
  acc /= n;
  const Matrix want = Vector{{1.0, 1.0, 0.0}}.asDiagonal();
  CHECK(max_abs(acc - want) < 0.02);
}

TEST_CASE("sample_tangent_gaussian is seed deterministic") {
  Stiefel V(4, 2);
  const Vector x = V.default_point();
  Rng a(99), b(99);
  CHECK(sample_tangent_gaussian(V, x, a) == sample_tangent_gaussian(V, x, b));
}

TEST_CASE("product manifold layout") {
  ProductManifold P;
  P.add(std::make_shared<Sphere>(3)).add(EuclideanBlock{2, true}).add(std::make_shared<Stiefel>(3, 2));
  CHECK(P.ambient_dim() == 11);
  CHECK(P.constraint_dim() == 4);
  CHECK(P.ambient_range(1) == IndexRange{3, 5});
  const auto nn = P.nonnegative_ranges();
  REQUIRE(nn.size() == 1);
  CHECK(nn[0] == IndexRange{3, 5});
  Vector x = P.default_point();
  CHECK(P.on_manifold(x));
  // Euclidean coordinates contribute no constraints.
  x(3) = 7.0;
  x(4) = -2.0;
  CHECK(max_abs(P.constraints(x)) < 1e-15);
  x(0) *= 2.0;
  const Vector r = P.constraints(x);
  CHECK(r(0) == doctest::Approx(x.head(3).squaredNorm() - 1.0));
  CHECK(max_abs(r.tail(3)) < 1e-15);
}

TEST_CASE("manifold description strings") {
  auto s = parse_manifold("sphere:2");
  CHECK(s->ambient_dim() == 3);
  CHECK(s->constraint_dim() == 1);
  auto v = parse_manifold("stiefel:4,2");
  CHECK(v->ambient_dim() == 8);
  CHECK(v->constraint_dim() == 3);
  auto p = parse_manifold(" product:[stiefel:30,5; euclid+:5; euclid+:30] ");
  CHECK(p->ambient_dim() == 185);
  CHECK(p->constraint_dim() == 15);
  auto nested = parse_manifold("product:[sphere:1;product:[sphere:2;euclid:1]]");
  CHECK(nested->ambient_dim() == 6);
  CHECK(nested->constraint_dim() == 2);
  for (const char* bad : {"torus:3", "sphere:", "sphere:0", "stiefel:2,3", "stiefel:3", "product:[sphere:2",
                          "euclid:-1", "sphere:2x"}) {
    INFO(bad);
    CHECK_THROWS_AS(parse_manifold(bad), ConfigError);
  }
}
