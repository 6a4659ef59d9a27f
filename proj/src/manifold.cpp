#include "mhmc/manifold.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <sstream>

namespace mhmc {

// ---------------------------------------------------------------------------
// Manifold

double Manifold::constraint_component(Index i, ConstVectorRef x) const {
  Vector r(constraint_dim());
  constraints_into(x, r);
  return r(i);
}

void Manifold::jacobian_row_into(Index i, ConstVectorRef x, VectorRef row) const {
  Matrix C(constraint_dim(), ambient_dim());
  jacobian_into(x, C);
  row = C.row(i).transpose();
}

Vector Manifold::constraints(ConstVectorRef x) const {
  require_dim(x.size(), ambient_dim(), "constraints");
  Vector r(constraint_dim());
  constraints_into(x, r);
  return r;
}

Matrix Manifold::jacobian(ConstVectorRef x) const {
  require_dim(x.size(), ambient_dim(), "jacobian");
  Matrix C(constraint_dim(), ambient_dim());
  jacobian_into(x, C);
  return C;
}

bool Manifold::on_manifold(ConstVectorRef x, double tol) const {
  if (x.size() != ambient_dim() || !x.allFinite()) return false;
  if (constraint_dim() == 0) return true;
  return constraints(x).lpNorm<Eigen::Infinity>() <= tol;
}

// ---------------------------------------------------------------------------
// Sphere

Sphere::Sphere(Index ambient_dim) : n_(ambient_dim) {
  if (n_ < 2) throw DimensionError("sphere needs ambient dimension >= 2");
}

void Sphere::constraints_into(ConstVectorRef x, VectorRef out) const { out(0) = x.squaredNorm() - 1.0; }

void Sphere::jacobian_into(ConstVectorRef x, MatrixRef out) const { out.row(0) = 2.0 * x.transpose(); }

double Sphere::constraint_component(Index, ConstVectorRef x) const { return x.squaredNorm() - 1.0; }

void Sphere::jacobian_row_into(Index, ConstVectorRef x, VectorRef row) const { row = 2.0 * x; }

Vector Sphere::default_point() const { return Vector::Unit(n_, 0); }

std::string Sphere::describe() const { return "sphere:" + std::to_string(n_ - 1); }

// ---------------------------------------------------------------------------
// Stiefel

Stiefel::Stiefel(Index rows, Index cols) : d_(rows), p_(cols) {
  if (p_ < 1 || d_ < p_) throw DimensionError("stiefel needs 1 <= p <= d");
  for (Index a = 0; a < p_; ++a)
    for (Index b = a; b < p_; ++b) pairs_.emplace_back(a, b);
}

void Stiefel::constraints_into(ConstVectorRef x, VectorRef out) const {
  for (Index i = 0; i < constraint_dim(); ++i) out(i) = constraint_component(i, x);
}

void Stiefel::jacobian_into(ConstVectorRef x, MatrixRef out) const {
  out.setZero();
  for (Index i = 0; i < constraint_dim(); ++i) {
    const auto [a, b] = pair(i);
    if (a == b) {
      out.row(i).segment(a * d_, d_) = 2.0 * x.segment(a * d_, d_).transpose();
    } else {
      out.row(i).segment(a * d_, d_) = x.segment(b * d_, d_).transpose();
      out.row(i).segment(b * d_, d_) = x.segment(a * d_, d_).transpose();
    }
  }
}

double Stiefel::constraint_component(Index i, ConstVectorRef x) const {
  const auto [a, b] = pair(i);
  const double dot = x.segment(a * d_, d_).dot(x.segment(b * d_, d_));
  return a == b ? dot - 1.0 : dot;
}

void Stiefel::jacobian_row_into(Index i, ConstVectorRef x, VectorRef row) const {
  row.setZero();
  const auto [a, b] = pair(i);
  if (a == b) {
    row.segment(a * d_, d_) = 2.0 * x.segment(a * d_, d_);
  } else {
    row.segment(a * d_, d_) = x.segment(b * d_, d_);
    row.segment(b * d_, d_) = x.segment(a * d_, d_);
  }
}

Vector Stiefel::default_point() const { return flatten(Matrix::Identity(d_, p_)); }

std::string Stiefel::describe() const { return "stiefel:" + std::to_string(d_) + "," + std::to_string(p_); }

Matrix Stiefel::unflatten(ConstVectorRef x) const {
  require_dim(x.size(), ambient_dim(), "Stiefel::unflatten");
  return Eigen::Map<const Matrix>(x.data(), d_, p_);
}

Vector Stiefel::flatten(const Matrix& X) const {
  if (X.rows() != d_ || X.cols() != p_) throw DimensionError("Stiefel::flatten: shape mismatch");
  return Eigen::Map<const Vector>(X.data(), d_ * p_);
}

// ---------------------------------------------------------------------------
// ProductManifold

ProductManifold& ProductManifold::add(ManifoldPtr factor) {
  if (!factor) throw Error("ProductManifold::add: null factor");
  Part part;
  part.factor = std::move(factor);
  part.ambient_offset = n_;
  part.constraint_offset = m_;
  n_ += part.ambient_size();
  m_ += part.constraint_size();
  parts_.push_back(std::move(part));
  return *this;
}

ProductManifold& ProductManifold::add(EuclideanBlock block) {
  if (block.dim < 1) throw DimensionError("Euclidean block needs dim >= 1");
  Part part;
  part.block = block;
  part.ambient_offset = n_;
  part.constraint_offset = m_;
  n_ += block.dim;
  parts_.push_back(std::move(part));
  return *this;
}

void ProductManifold::constraints_into(ConstVectorRef x, VectorRef out) const {
  for (const auto& p : parts_) {
    if (!p.factor) continue;
    p.factor->constraints_into(x.segment(p.ambient_offset, p.ambient_size()),
                               out.segment(p.constraint_offset, p.constraint_size()));
  }
}

void ProductManifold::jacobian_into(ConstVectorRef x, MatrixRef out) const {
  out.setZero();
  for (const auto& p : parts_) {
    if (!p.factor) continue;
    p.factor->jacobian_into(x.segment(p.ambient_offset, p.ambient_size()),
                            out.block(p.constraint_offset, p.ambient_offset, p.constraint_size(), p.ambient_size()));
  }
}

const ProductManifold::Part& ProductManifold::part_for_constraint(Index i) const {
  for (const auto& p : parts_) {
    if (p.factor && i >= p.constraint_offset && i < p.constraint_offset + p.constraint_size()) return p;
  }
  throw DimensionError("ProductManifold: constraint index out of range");
}

double ProductManifold::constraint_component(Index i, ConstVectorRef x) const {
  const Part& p = part_for_constraint(i);
  return p.factor->constraint_component(i - p.constraint_offset, x.segment(p.ambient_offset, p.ambient_size()));
}

void ProductManifold::jacobian_row_into(Index i, ConstVectorRef x, VectorRef row) const {
  const Part& p = part_for_constraint(i);
  row.setZero();
  p.factor->jacobian_row_into(i - p.constraint_offset, x.segment(p.ambient_offset, p.ambient_size()),
                              row.segment(p.ambient_offset, p.ambient_size()));
}

Vector ProductManifold::default_point() const {
  Vector x = Vector::Zero(n_);
  for (const auto& p : parts_) {
    if (p.factor) {
      x.segment(p.ambient_offset, p.ambient_size()) = p.factor->default_point();
    } else {
      x.segment(p.ambient_offset, p.ambient_size()).setOnes();
    }
  }
  return x;
}

std::string ProductManifold::describe() const {
  std::string s = "product:[";
  for (std::size_t k = 0; k < parts_.size(); ++k) {
    if (k) s += ";";
    const auto& p = parts_[k];
    if (p.factor) {
      s += p.factor->describe();
    } else {
      s += (p.block.nonnegative ? "euclid+:" : "euclid:") + std::to_string(p.block.dim);
    }
  }
  return s + "]";
}

std::vector<IndexRange> ProductManifold::nonnegative_ranges() const {
  std::vector<IndexRange> out;
  for (const auto& p : parts_) {
    if (!p.factor && p.block.nonnegative) out.push_back({p.ambient_offset, p.ambient_offset + p.block.dim});
  }
  return out;
}

IndexRange ProductManifold::ambient_range(std::size_t k) const {
  const auto& p = parts_.at(k);
  return {p.ambient_offset, p.ambient_offset + p.ambient_size()};
}

// ---------------------------------------------------------------------------
// Projection

void GramProjector::factor(const Matrix& jacobian, double regularization) {
  C_ = jacobian;
  const Index m = C_.rows();
  tmp_.resize(m);
  if (m == 0) return;
  if (m == 1) {
    // A single constraint needs no factorization and is always well conditioned.
    const double g = C_.row(0).squaredNorm() + std::max(regularization, 0.0);
    if (!(g > 0.0) || !std::isfinite(g)) throw SingularConstraintError("constraint Gram matrix is not positive definite");
    inv_gram_ = 1.0 / g;
    return;
  }
  gram_.resize(m, m);
  gram_.noalias() = C_ * C_.transpose();
  if (regularization > 0.0) gram_.diagonal().array() += regularization;
  llt_.compute(gram_);
  if (llt_.info() != Eigen::Success) throw SingularConstraintError("constraint Gram matrix is not positive definite");
  const auto diag = llt_.matrixLLT().diagonal();
  const double lo = diag.minCoeff();
  const double hi = diag.maxCoeff();
  if (!(lo > 0.0) || (hi / lo) * (hi / lo) > kMaxGramCondition) {
    throw SingularConstraintError("constraint Gram matrix is ill-conditioned (rank-deficient Jacobian)");
  }
}

void GramProjector::project(VectorRef w) {
  const Index m = C_.rows();
  if (m == 0) return;
  if (m == 1) {
    const double s = C_.row(0).dot(w) * inv_gram_;
    w -= s * C_.row(0).transpose();
    return;
  }
  tmp_.noalias() = C_ * w;
  llt_.solveInPlace(tmp_);
  w.noalias() -= C_.transpose() * tmp_;
}

Matrix GramProjector::matrix() const {
  const Index n = C_.cols();
  Matrix P = Matrix::Identity(n, n);
  if (C_.rows() == 0) return P;
  if (C_.rows() == 1) {
    P.noalias() -= inv_gram_ * (C_.transpose() * C_);
  } else {
    P.noalias() -= C_.transpose() * llt_.solve(C_);
  }
  return P;
}

Matrix tangent_projector(const Manifold& M, ConstVectorRef x) {
  GramProjector g;
  g.factor(M.jacobian(x));
  return g.matrix();
}

Vector project_to_tangent(const Manifold& M, ConstVectorRef x, ConstVectorRef w) {
  require_dim(w.size(), M.ambient_dim(), "project_to_tangent");
  GramProjector g;
  g.factor(M.jacobian(x));
  Vector out = w;
  g.project(out);
  return out;
}

Vector sample_tangent_gaussian(const Manifold& M, ConstVectorRef x, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector w(M.ambient_dim());
  for (Index i = 0; i < w.size(); ++i) w(i) = normal(rng);
  return project_to_tangent(M, x, w);
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

Index parse_index(const std::string& s, const std::string& spec) {
  const std::string t = trim(s);
  Index value = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc() || ptr != t.data() + t.size() || value < 1) {
    throw ConfigError("manifold spec '" + spec + "': bad integer '" + t + "'");
  }
  return value;
}

std::vector<std::string> split_top_level(const std::string& s, char sep) {
  std::vector<std::string> out;
  int depth = 0;
  std::string cur;
  for (char ch : s) {
    if (ch == '[') ++depth;
    if (ch == ']') --depth;
    if (ch == sep && depth == 0) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

ManifoldPtr parse_manifold(const std::string& raw) {
  const std::string spec = trim(raw);
  const auto colon = spec.find(':');
  if (colon == std::string::npos) throw ConfigError("manifold spec '" + spec + "': missing ':'");
  std::string kind = trim(spec.substr(0, colon));
  std::transform(kind.begin(), kind.end(), kind.begin(), [](unsigned char c) { return std::tolower(c); });
  const std::string args = trim(spec.substr(colon + 1));

  if (kind == "sphere") return std::make_shared<Sphere>(parse_index(args, spec) + 1);
  if (kind == "stiefel") {
    const auto parts = split_top_level(args, ',');
    if (parts.size() != 2) throw ConfigError("manifold spec '" + spec + "': expected stiefel:d,p");
    const Index d = parse_index(parts[0], spec), p = parse_index(parts[1], spec);
    if (p > d) throw ConfigError("manifold spec '" + spec + "': stiefel needs p <= d");
    return std::make_shared<Stiefel>(d, p);
  }
  if (kind == "euclid" || kind == "euclid+") {
    auto prod = std::make_shared<ProductManifold>();
    prod->add(EuclideanBlock{parse_index(args, spec), kind == "euclid+"});
    return prod;
  }
  if (kind == "product") {
    if (args.size() < 2 || args.front() != '[' || args.back() != ']') {
      throw ConfigError("manifold spec '" + spec + "': expected product:[f1;f2;...]");
    }
    auto prod = std::make_shared<ProductManifold>();
    for (const auto& item : split_top_level(args.substr(1, args.size() - 2), ';')) {
      const std::string f = trim(item);
      if (f.empty()) throw ConfigError("manifold spec '" + spec + "': empty factor");
      const auto fc = f.find(':');
      const std::string fk = fc == std::string::npos ? f : trim(f.substr(0, fc));
      if (fk == "euclid" || fk == "euclid+") {
        prod->add(EuclideanBlock{parse_index(f.substr(fc + 1), spec), fk == "euclid+"});
      } else {
        prod->add(parse_manifold(f));
      }
    }
    return prod;
  }
  throw ConfigError("unknown manifold kind '" + kind + "'");
}

}  // namespace mhmc
