#include "mhmc/diagnostics.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>

namespace mhmc {

namespace {

// FFTW's planner is not re-entrant.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

// Raw lagged products sum_{n} d_n d_{n+i} for i = 0..max_lag.
std::vector<double> lagged_products_direct(const std::vector<double>& d, Index max_lag) {
  const Index N = static_cast<Index>(d.size());
  std::vector<double> out(static_cast<std::size_t>(max_lag + 1), 0.0);
  for (Index i = 0; i <= max_lag; ++i) {
    double s = 0.0;
    const double* a = d.data();
    const double* b = d.data() + i;
    for (Index n = 0; n < N - i; ++n) s += a[n] * b[n];
    out[static_cast<std::size_t>(i)] = s;
  }
  return out;
}

std::vector<double> lagged_products_fft(const std::vector<double>& d, Index max_lag) {
  const Index N = static_cast<Index>(d.size());
  Index L = 1;
  while (L < 2 * N) L <<= 1;
  const Index nc = L / 2 + 1;
  double* buf = fftw_alloc_real(static_cast<std::size_t>(L));
  fftw_complex* spec = fftw_alloc_complex(static_cast<std::size_t>(nc));
  fftw_plan fwd, inv;
  {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fwd = fftw_plan_dft_r2c_1d(static_cast<int>(L), buf, spec, FFTW_ESTIMATE);
    inv = fftw_plan_dft_c2r_1d(static_cast<int>(L), spec, buf, FFTW_ESTIMATE);
  }
  std::fill(buf, buf + L, 0.0);
  std::copy(d.begin(), d.end(), buf);
  fftw_execute(fwd);
  for (Index k = 0; k < nc; ++k) {
    const double re = spec[k][0], im = spec[k][1];
    spec[k][0] = re * re + im * im;
    spec[k][1] = 0.0;
  }
  fftw_execute(inv);
  std::vector<double> out(static_cast<std::size_t>(max_lag + 1));
  for (Index i = 0; i <= max_lag; ++i) out[static_cast<std::size_t>(i)] = buf[i] / static_cast<double>(L);
  {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(inv);
  }
  fftw_free(buf);
  fftw_free(spec);
  return out;
}

constexpr double kDirectWorkLimit = 5e7;

}  // namespace

Autocovariance autocovariance(std::span<const double> series, Index max_lag, AutocovMethod method) {
  const Index N = static_cast<Index>(series.size());
  if (max_lag < 0) throw Error("autocovariance: max_lag must be >= 0");
  if (max_lag >= N) throw Error("autocovariance: max_lag must be < N");
  for (double f : series) {
    if (!std::isfinite(f)) throw Error("autocovariance: non-finite value in series");
  }
  const double mu = std::accumulate(series.begin(), series.end(), 0.0) / static_cast<double>(N);
  std::vector<double> d(series.begin(), series.end());
  for (double& f : d) f -= mu;

  if (method == AutocovMethod::automatic) {
    method = static_cast<double>(N) * static_cast<double>(max_lag + 1) <= kDirectWorkLimit ? AutocovMethod::direct
                                                                                           : AutocovMethod::fft;
  }
  Autocovariance out;
  out.values = method == AutocovMethod::fft ? lagged_products_fft(d, max_lag) : lagged_products_direct(d, max_lag);
  for (Index i = 0; i <= max_lag; ++i) out.values[static_cast<std::size_t>(i)] /= static_cast<double>(N - i);
  out.constant = !(out.values[0] > 0.0);
  return out;
}

IacEstimate iac(std::span<const double> series, const IacOptions& opts) {
  const Index N = static_cast<Index>(series.size());
  if (N < 2) throw Error("iac: need at least two samples");
  const Index M = opts.max_lag.value_or(std::max<Index>(1, N / 50));
  IacEstimate est;
  est.lag_cap = M;
  Autocovariance ac = autocovariance(series, M, opts.method);
  est.constant = ac.constant;
  if (ac.constant) {
    est.tau = 1.0;
  } else {
    double s = 0.0;
    for (Index i = 1; i <= M; ++i) s += ac.values[static_cast<std::size_t>(i)];
    est.tau = std::max(opts.tau_floor, 1.0 + 2.0 * s / ac.values[0]);
  }
  est.autocov = std::move(ac.values);
  est.ess = static_cast<double>(N) / est.tau;
  return est;
}

McEstimate mc_average_with_error(std::span<const double> series, const IacOptions& opts) {
  const Index N = static_cast<Index>(series.size());
  if (N < 100) throw Error("mc_average_with_error: need at least 100 samples");
  const IacEstimate est = iac(series, opts);
  McEstimate out;
  out.mean = std::accumulate(series.begin(), series.end(), 0.0) / static_cast<double>(N);
  out.tau = est.tau;
  out.ess = est.ess;
  out.std_error = est.constant ? 0.0 : std::sqrt(est.tau * est.autocov[0] / static_cast<double>(N));
  return out;
}

namespace {

void require_spd(const Matrix& A, const char* name) {
  if (A.rows() != A.cols() || A.rows() == 0) throw Error(std::string("forstner_metric: ") + name + " must be square");
  if (!A.allFinite()) throw Error(std::string("forstner_metric: ") + name + " has non-finite entries");
  const double scale = std::max(1e-300, A.cwiseAbs().maxCoeff());
  if ((A - A.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw Error(std::string("forstner_metric: ") + name + " is not symmetric");
  }
  Eigen::LLT<Matrix> llt(A);
  if (llt.info() != Eigen::Success || !(llt.matrixLLT().diagonal().minCoeff() > 0.0)) {
    throw Error(std::string("forstner_metric: ") + name + " is not positive definite");
  }
}

}  // namespace

double forstner_metric(const Matrix& A, const Matrix& B) {
  require_spd(A, "A");
  require_spd(B, "B");
  if (A.rows() != B.rows()) throw DimensionError("forstner_metric: size mismatch");
  // Generalized eigenvalues of (B, A) are the eigenvalues of L^{-1} B L^{-T}, A = L L^T.
  const Eigen::LLT<Matrix> llt(A);
  const auto L = llt.matrixL();
  Matrix K = L.solve(B);
  K = L.solve(K.transpose()).eval();
  K = (0.5 * (K + K.transpose())).eval();
  Eigen::SelfAdjointEigenSolver<Matrix> es(K, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw Error("forstner_metric: eigensolver failed");
  double s = 0.0;
  for (Index i = 0; i < es.eigenvalues().size(); ++i) {
    const double lam = es.eigenvalues()(i);
    if (!(lam > 0.0)) throw Error("forstner_metric: non-positive generalized eigenvalue");
    const double l = std::log(lam);
    s += l * l;
  }
  return std::sqrt(s);
}

double rel_frobenius(const Matrix& A, const Matrix& B) {
  if (A.rows() != B.rows() || A.cols() != B.cols()) throw DimensionError("rel_frobenius: shape mismatch");
  const double na = A.norm();
  if (!(na > 0.0)) throw Error("rel_frobenius: reference matrix has zero norm");
  return (A - B).norm() / na;
}

DiagnosticRecord diagnose_series(const std::string& observable, std::span<const double> series,
                                 const IacOptions& opts) {
  const McEstimate mc = mc_average_with_error(series, opts);
  DiagnosticRecord r;
  r.observable = observable;
  r.tau = mc.tau;
  r.ess = mc.ess;
  r.mean = mc.mean;
  r.std_error = mc.std_error;
  r.n = static_cast<Index>(series.size());
  r.lag_cap = opts.max_lag.value_or(std::max<Index>(1, r.n / 50));
  return r;
}

nlohmann::json to_json(const DiagnosticRecord& r) {
  return nlohmann::json{{"observable", r.observable}, {"tau", r.tau},   {"ess", r.ess},
                        {"mean", r.mean},             {"stderr", r.std_error}, {"n", r.n},
                        {"lag_cap", r.lag_cap}};
}

namespace {

std::vector<double> ranks(std::span<const double> a) {
  const std::size_t n = a.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return a[i] < a[j]; });
  std::vector<double> r(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && a[idx[j + 1]] == a[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw DimensionError("spearman: need two equal-length series");
  const auto ra = ranks(a), rb = ranks(b);
  const Eigen::Map<const Vector> x(ra.data(), static_cast<Index>(ra.size()));
  const Eigen::Map<const Vector> y(rb.data(), static_cast<Index>(rb.size()));
  const Vector xc = x.array() - x.mean();
  const Vector yc = y.array() - y.mean();
  const double den = xc.norm() * yc.norm();
  return den > 0.0 ? xc.dot(yc) / den : 0.0;
}

}  // namespace mhmc
