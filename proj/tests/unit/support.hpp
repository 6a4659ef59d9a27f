#pragma once

#include "mhmc/manifold.hpp"
#include "mhmc/targets.hpp"

#include <Eigen/QR>

#include <cmath>
#include <functional>
#include <random>
#include <algorithm>
#include <vector>

namespace testutil {

using mhmc::Index;
using mhmc::Matrix;
using mhmc::Rng;
using mhmc::Vector;

inline Vector gaussian_vector(Index n, Rng& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = z(rng);
  return v;
}

inline Vector random_sphere_point(Index n, Rng& rng) {
  Vector v = gaussian_vector(n, rng);
  return v / v.norm();
}

inline Matrix random_orthonormal(Index d, Index p, Rng& rng) {
  Matrix G(d, p);
  for (Index j = 0; j < p; ++j) G.col(j) = gaussian_vector(d, rng);
  Eigen::HouseholderQR<Matrix> qr(G);
  return qr.householderQ() * Matrix::Identity(d, p);
}

inline Vector flatten(const Matrix& X) { return Eigen::Map<const Vector>(X.data(), X.size()); }

inline Matrix fd_jacobian(const mhmc::Manifold& M, const Vector& x, double step = 1e-5) {
  Matrix J(M.constraint_dim(), M.ambient_dim());
  for (Index j = 0; j < x.size(); ++j) {
    Vector a = x, b = x;
    a(j) += step;
    b(j) -= step;
    J.col(j) = (M.constraints(a) - M.constraints(b)) / (2.0 * step);
  }
  return J;
}

inline Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& x, double step = 1e-5) {
  Vector g(x.size());
  for (Index j = 0; j < x.size(); ++j) {
    Vector a = x, b = x;
    a(j) += step;
    b(j) -= step;
    g(j) = (f(a) - f(b)) / (2.0 * step);
  }
  return g;
}

inline double max_abs(const Matrix& A) { return A.size() == 0 ? 0.0 : A.cwiseAbs().maxCoeff(); }

/// Largest componentwise |a - b| / max(1, |b|).
inline double max_rel_err(const Vector& a, const Vector& b) {
  double e = 0.0;
  for (Index i = 0; i < a.size(); ++i) e = std::max(e, std::abs(a(i) - b(i)) / std::max(1.0, std::abs(b(i))));
  return e;
}

/// Kolmogorov-Smirnov statistic of a sample against a continuous CDF.
inline double ks_statistic(std::vector<double> xs, const std::function<double(double)>& cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double F = cdf(xs[i]);
    d = std::max({d, F - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - F});
  }
  return d;
}

/// Asymptotic Kolmogorov p-value for statistic d at sample size n.
inline double ks_pvalue(double d, std::size_t n) {
  const double sn = std::sqrt(static_cast<double>(n));
  const double lam = (sn + 0.12 + 0.11 / sn) * d;
  double p = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lam * lam);
    p += term;
    if (std::abs(term) < 1e-12) break;
  }
  return std::clamp(p, 0.0, 1.0);
}

/// Two-sample Kolmogorov-Smirnov statistic.
inline double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

/// E_pi[f] on S^2 for pi ~ exp(-U), midpoint rule on a 200 x 400 latitude-longitude grid.
inline double sphere2_expectation(const mhmc::TargetDensity& U, const std::function<double(const Vector&)>& f,
                                  int n_theta = 200, int n_phi = 400) {
  const double pi = 3.14159265358979323846;
  double z = 0.0, acc = 0.0;
  Vector x(3);
  for (int i = 0; i < n_theta; ++i) {
    const double th = (i + 0.5) * pi / n_theta;
    for (int j = 0; j < n_phi; ++j) {
      const double ph = (j + 0.5) * 2.0 * pi / n_phi;
      x << std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th);
      const double w = std::exp(-U.potential(x)) * std::sin(th);
      z += w;
      acc += w * f(x);
    }
  }
  return acc / z;
}

/// E_pi[f] on S^1 for pi ~ exp(-U), midpoint rule in the angle.
inline double sphere1_expectation(const mhmc::TargetDensity& U, const std::function<double(const Vector&)>& f,
                                  int n = 20000) {
  const double pi = 3.14159265358979323846;
  double z = 0.0, acc = 0.0;
  Vector x(2);
  for (int i = 0; i < n; ++i) {
    const double t = (i + 0.5) * 2.0 * pi / n;
    x << std::cos(t), std::sin(t);
    const double w = std::exp(-U.potential(x));
    z += w;
    acc += w * f(x);
  }
  return acc / z;
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace testutil
