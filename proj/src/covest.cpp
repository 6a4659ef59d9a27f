#include "mhmc/covest.hpp"

#include "mhmc/diagnostics.hpp"
#include "mhmc/io.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>

#include <cmath>
#include <limits>
#include <random>

namespace mhmc {

namespace {
constexpr double kFlatColumnSd = 1e-12;
}

Matrix ingest(const std::filesystem::path& csv_path, Index p, bool skip_header) {
  if (p < 1) throw ConfigError("ingest: p must be >= 1");
  return read_matrix_csv(csv_path, p, skip_header);
}

NormalizedData normalize(const Matrix& data) {
  const Index n = data.rows(), p = data.cols();
  if (n < 2) throw Error("normalize: need at least two data vectors");
  NormalizedData out;
  out.mean = data.colwise().mean().transpose();
  out.data = data.rowwise() - out.mean.transpose();
  out.scale.resize(p);
  for (Index j = 0; j < p; ++j) {
    const double sd = std::sqrt(out.data.col(j).squaredNorm() / static_cast<double>(n - 1));
    if (sd < kFlatColumnSd) {
      out.scale(j) = 1.0;
      out.flagged.push_back(j);
    } else {
      out.scale(j) = sd;
      out.data.col(j) /= sd;
    }
  }
  return out;
}

Matrix sample_covariance(const Matrix& data) {
  const Index n = data.rows();
  if (n < 2) throw Error("sample_covariance: need at least two data vectors");
  const Matrix c = data.rowwise() - data.colwise().mean();
  return (c.transpose() * c) / static_cast<double>(n - 1);
}

Matrix rescale_covariance(const Matrix& Sigma, const Vector& s) {
  return Sigma.cwiseProduct(s * s.transpose());
}

Matrix rescale_precision(const Matrix& Omega, const Vector& s) {
  const Vector r = s.cwiseInverse();
  return Omega.cwiseProduct(r * r.transpose());
}

Index default_spike_rank(Index p) { return std::max<Index>(1, (p + 5) / 6); }

SpikedCovData CovModel::target_data() const {
  SpikedCovData d;
  d.p = p;
  d.m = m;
  d.count = n;
  d.scatter = scatter;
  d.sigma1 = sigma1;
  d.sigma2 = sigma2;
  return d;
}

Matrix CovModel::sample_cov() const { return scatter / static_cast<double>(n - 1); }

CovModel make_model(const Matrix& raw, std::optional<Index> m, double sigma1, double sigma2) {
  const NormalizedData nd = normalize(raw);
  CovModel model;
  model.p = raw.cols();
  model.n = raw.rows();
  model.m = m.value_or(default_spike_rank(model.p));
  if (model.m < 1 || model.m >= model.p) throw ConfigError("covest: need 1 <= m < p");
  if (!(sigma1 > 0.0) || !(sigma2 > 0.0)) throw ConfigError("covest: prior scales must be positive");
  model.sigma1 = sigma1;
  model.sigma2 = sigma2;
  model.scatter = nd.data.transpose() * nd.data;
  model.scatter = (0.5 * (model.scatter + model.scatter.transpose())).eval();
  model.mean = nd.mean;
  model.scale = nd.scale;
  model.flagged = nd.flagged;
  return model;
}

namespace {

void spike_step(const Matrix& Sigma_S, const Vector& d2, Index m, double eps, SpikedCovParams& out) {
  Matrix R = Sigma_S;
  R.diagonal() -= d2;
  Eigen::SelfAdjointEigenSolver<Matrix> es(R);
  if (es.info() != Eigen::Success) throw Error("initialize: eigensolver failed");
  const Index p = R.rows();
  // Eigenvalues ascending; take the top m.
  Matrix X = es.eigenvectors().rightCols(m).rowwise().reverse();
  Vector d1 = es.eigenvalues().tail(m).reverse();
  Eigen::HouseholderQR<Matrix> qr(X);
  Matrix Q = qr.householderQ() * Matrix::Identity(p, m);
  // Keep the eigenvector signs.
  for (Index j = 0; j < m; ++j) {
    if (Q.col(j).dot(X.col(j)) < 0.0) Q.col(j) = -Q.col(j);
  }
  out.X = Q;
  out.d1 = d1.cwiseMax(eps);
}

}  // namespace

SpikedCovParams initialize_from_covariance(const Matrix& Sigma_S, Index m, const InitOptions& opts) {
  const Index p = Sigma_S.rows();
  if (Sigma_S.cols() != p) throw DimensionError("initialize: covariance must be square");
  if (m < 1 || m > p) throw ConfigError("initialize: need 1 <= m <= p");
  SpikedCovParams th;
  Vector d2 = Sigma_S.diagonal();
  spike_step(Sigma_S, d2, m, opts.eps, th);
  th.d2 = d2.cwiseMax(opts.eps);
  for (int k = 0; k < opts.refine_sweeps; ++k) {
    const Matrix low = th.X * th.d1.asDiagonal() * th.X.transpose();
    const Vector d2_new = (Sigma_S.diagonal() - low.diagonal()).cwiseMax(opts.eps);
    const double change = (d2_new - th.d2).cwiseAbs().maxCoeff();
    th.d2 = d2_new;
    spike_step(Sigma_S, th.d2, m, opts.eps, th);
    if (change < opts.refine_tol) break;
  }
  return th;
}

SpikedCovParams initialize(const CovModel& model, const InitOptions& opts) {
  return initialize_from_covariance(model.sample_cov(), model.m, opts);
}

namespace {

Matrix polar(const Matrix& A) {
  Eigen::JacobiSVD<Matrix> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return svd.matrixU() * svd.matrixV().transpose();
}

double safe_potential(const SpikedCovTarget& t, const Vector& theta) {
  try {
    return t.potential(theta);
  } catch (const EvaluationError&) {
    return std::numeric_limits<double>::infinity();
  }
}

}  // namespace

MapResult map_estimate(const SpikedCovData& data, const SpikedCovParams& theta0, const MapOptions& opts) {
  if (!(opts.lr > 0.0) || opts.steps < 0) throw ConfigError("map_estimate: need lr > 0 and steps >= 0");
  const SpikedCovTarget target(data);
  Vector theta = pack_spiked(theta0);
  double U = safe_potential(target, theta);
  if (!std::isfinite(U)) throw EvaluationError("map_estimate: non-finite potential at the start point");
  MapResult out;
  out.potential.push_back(U);
  double lr = opts.lr;
  Vector grad(theta.size());
  for (int it = 0; it < opts.steps; ++it) {
    target.gradient_into(theta, grad);
    if (!grad.allFinite()) throw EvaluationError("map_estimate: non-finite gradient");
    if (grad.lpNorm<Eigen::Infinity>() == 0.0) break;
    bool moved = false;
    for (int k = 0; k <= opts.max_halvings; ++k) {
      Vector cand = theta - lr * grad;
      SpikedCovParams c = unpack_spiked(data, cand);
      c.X = polar(c.X);
      c.d1 = c.d1.cwiseMax(opts.eps);
      c.d2 = c.d2.cwiseMax(opts.eps);
      cand = pack_spiked(c);
      const double Uc = safe_potential(target, cand);
      if (std::isfinite(Uc) && Uc <= U + opts.increase_tol) {
        theta = cand;
        U = Uc;
        moved = true;
        break;
      }
      lr *= 0.5;
    }
    if (!moved) break;
    out.potential.push_back(U);
  }
  out.theta = unpack_spiked(data, theta);
  out.final_lr = lr;
  return out;
}

ProductManifold spiked_manifold(Index p, Index m) {
  ProductManifold M;
  M.add(std::make_shared<Stiefel>(p, m));
  M.add(EuclideanBlock{m, true});
  M.add(EuclideanBlock{p, true});
  return M;
}

Matrix loaded_sample_covariance(const Matrix& raw) {
  Matrix S = sample_covariance(raw);
  const double eps = 0.01 * S.diagonal().mean();
  S.diagonal().array() += eps;
  return S;
}

namespace {

Matrix spd_inverse(const Matrix& A, const char* what) {
  Eigen::LLT<Matrix> llt(A);
  if (llt.info() != Eigen::Success) throw EvaluationError(std::string(what) + " is not positive definite");
  return llt.solve(Matrix::Identity(A.rows(), A.cols()));
}

}  // namespace

std::map<std::string, double> covariance_metrics(const Matrix& reference, const Matrix& estimate,
                                                 const Matrix& estimate_inverse) {
  const Matrix ref_inv = spd_inverse(reference, "reference covariance");
  return {{"rel_frobenius", rel_frobenius(reference, estimate)},
          {"rel_frobenius_inverse", rel_frobenius(ref_inv, estimate_inverse)},
          {"forstner", forstner_metric(reference, estimate)}};
}

std::map<std::string, double> covariance_metrics(const Matrix& reference, const Matrix& estimate) {
  return covariance_metrics(reference, estimate, spd_inverse(estimate, "estimate"));
}

void attach_metrics(CovReport& report, const Matrix& reference) {
  report.metrics["posterior"] =
      covariance_metrics(reference, report.posterior_mean, report.posterior_mean_inverse);
  report.metrics["map"] = covariance_metrics(reference, report.map_estimate);
  report.metrics["sample_loaded"] = covariance_metrics(reference, report.loaded_sample_cov);
}

CovReport posterior_estimate(const CovModel& model, const SpikedCovParams& theta0, const PosteriorOptions& opts) {
  if (!(opts.burn_in >= 0.0 && opts.burn_in < 1.0)) throw ConfigError("covest: burn_in must be in [0, 1)");
  const Index p = model.p;
  const SpikedCovData data = model.target_data();
  const SpikedCovTarget target(data);
  const ProductManifold M = spiked_manifold(p, model.m);
  SamplerConfig cfg = opts.sampler;
  cfg.nonneg_blocks = M.nonnegative_ranges();

  CovReport rep;
  const Index N = cfg.n_samples;
  const Index burn = static_cast<Index>(std::floor(opts.burn_in * static_cast<double>(N)));
  Matrix mean = Matrix::Zero(p, p), m2 = Matrix::Zero(p, p), mean_inv = Matrix::Zero(p, p);
  std::vector<Vector> kept;
  Index seen = 0, k = 0;
  auto accumulate = [&](const Vector& theta) {
    if (opts.keep_samples) kept.push_back(theta);
    if (seen++ < burn) return;
    const Matrix sigma = assemble_covariance(unpack_spiked(data, theta));
    const Matrix omega = spd_inverse(sigma, "sampled covariance");
    ++k;
    const Matrix delta = sigma - mean;
    mean += delta / static_cast<double>(k);
    m2 += delta.cwiseProduct(sigma - mean);
    mean_inv += (omega - mean_inv) / static_cast<double>(k);
  };
  rep.chain = rt_chmc_metropolis(M, target, pack_spiked(theta0), cfg, accumulate);
  rep.chain.samples = std::move(kept);
  rep.acceptance_rate = rep.chain.acceptance_rate;

  rep.samples_used = k;
  const Matrix var = k > 1 ? Matrix(m2 / static_cast<double>(k - 1)) : Matrix::Zero(p, p);

  rep.posterior_mean = rescale_covariance(mean, model.scale);
  rep.posterior_sd = rescale_covariance(var.cwiseMax(0.0).cwiseSqrt(), model.scale);
  rep.posterior_mean_inverse = rescale_precision(mean_inv, model.scale);

  const MapResult map = map_estimate(data, theta0, opts.map);
  rep.map_estimate = rescale_covariance(assemble_covariance(map.theta), model.scale);

  Matrix loaded = model.sample_cov();
  loaded.diagonal().array() += 0.01 * loaded.diagonal().mean();
  rep.loaded_sample_cov = rescale_covariance(loaded, model.scale);

  return rep;
}

SyntheticData make_synthetic(const SyntheticSpec& spec) {
  if (spec.m < 1 || spec.m > spec.p || spec.count < 1) throw ConfigError("synthetic: bad dimensions");
  if (!(spec.d1_min > 0.0 && spec.d1_max >= spec.d1_min && spec.d2_min > 0.0 && spec.d2_max >= spec.d2_min)) {
    throw ConfigError("synthetic: bad eigenvalue ranges");
  }
  Rng rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Index p = spec.p, m = spec.m;
  Matrix G(p, m);
  for (Index j = 0; j < m; ++j)
    for (Index i = 0; i < p; ++i) G(i, j) = normal(rng);
  Eigen::HouseholderQR<Matrix> qr(G);
  SyntheticData out;
  out.truth.X = qr.householderQ() * Matrix::Identity(p, m);
  std::uniform_real_distribution<double> u1(std::log(spec.d1_min), std::log(spec.d1_max));
  std::uniform_real_distribution<double> u2(std::log(spec.d2_min), std::log(spec.d2_max));
  out.truth.d1.resize(m);
  out.truth.d2.resize(p);
  for (Index j = 0; j < m; ++j) out.truth.d1(j) = std::exp(u1(rng));
  for (Index j = 0; j < p; ++j) out.truth.d2(j) = std::exp(u2(rng));
  out.covariance = assemble_covariance(out.truth);
  out.samples.resize(spec.count, p);
  const Vector r1 = out.truth.d1.cwiseSqrt(), r2 = out.truth.d2.cwiseSqrt();
  Vector z1(m), z2(p);
  for (Index i = 0; i < spec.count; ++i) {
    for (Index j = 0; j < m; ++j) z1(j) = normal(rng);
    for (Index j = 0; j < p; ++j) z2(j) = normal(rng);
    out.samples.row(i) = (out.truth.X * r1.cwiseProduct(z1) + r2.cwiseProduct(z2)).transpose();
  }
  return out;
}

}  // namespace mhmc
