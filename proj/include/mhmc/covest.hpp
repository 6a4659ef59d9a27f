#pragma once

#include "mhmc/samplers.hpp"
#include "mhmc/targets.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mhmc {

/// Reads n rows of p numeric columns.
Matrix ingest(const std::filesystem::path& csv_path, Index p, bool skip_header = false);

struct NormalizedData {
  Matrix data;                // n x p, centered, unit sample SD per column
  Vector scale;               // s, 1 for flagged columns
  Vector mean;                // x-bar
  std::vector<Index> flagged; // columns with SD < 1e-12, left unscaled
};

NormalizedData normalize(const Matrix& data);

/// Sum_i (x_i - mean)(x_i - mean)^T / (n - 1).
Matrix sample_covariance(const Matrix& data);

/// Sigma ∘ (s s^T), mapping a normalized-units covariance back to data units.
Matrix rescale_covariance(const Matrix& Sigma, const Vector& s);
/// Sigma^{-1} ∘ (s^{-1} s^{-T}), the matching map for precision matrices.
Matrix rescale_precision(const Matrix& Omega, const Vector& s);

/// m = ceil(p / 6), at least 1.
Index default_spike_rank(Index p);

struct CovModel {
  Index p = 0;
  Index m = 0;
  Index n = 0;
  double sigma1 = 2.0;
  double sigma2 = 2.0;
  Matrix scatter;  // of the normalized data
  Vector mean;
  Vector scale;
  std::vector<Index> flagged;

  SpikedCovData target_data() const;
  /// S / (n - 1), normalized units.
  Matrix sample_cov() const;
};

/// Normalizes the data and forms the scatter matrix. Throws ConfigError
/// unless 1 <= m < p and n >= 2.
CovModel make_model(const Matrix& raw, std::optional<Index> m = std::nullopt, double sigma1 = 2.0,
                    double sigma2 = 2.0);

struct InitOptions {
  double eps = 1e-6;
  /// Extra sweeps alternating D2 = diag(Sigma_S - X D1 X^T) with the
  /// eigendecomposition step; 0 gives the single-pass rule.
  int refine_sweeps = 0;
  double refine_tol = 1e-14;
};

SpikedCovParams initialize(const CovModel& model, const InitOptions& opts = {});
/// Same rule applied to an arbitrary covariance Sigma_S.
SpikedCovParams initialize_from_covariance(const Matrix& Sigma_S, Index m, const InitOptions& opts = {});

struct MapOptions {
  int steps = 500;
  double lr = 1e-3;
  double eps = 1e-6;
  double increase_tol = 1e-8;
  int max_halvings = 60;
};

struct MapResult {
  SpikedCovParams theta;
  std::vector<double> potential;  // U after each accepted step, starting with U(theta0)
  double final_lr = 0.0;
};

/// Projected gradient descent: X <- polar(X - lr dX), d <- max(d - lr dd, eps).
MapResult map_estimate(const SpikedCovData& data, const SpikedCovParams& theta0, const MapOptions& opts = {});

/// V_{p,m} x R^m_+ x R^p_+ in parameter order [vec(X), d1, d2].
ProductManifold spiked_manifold(Index p, Index m);

struct PosteriorOptions {
  SamplerConfig sampler;
  MapOptions map;
  double burn_in = 0.1;
  bool keep_samples = false;
};

struct CovReport {
  Matrix posterior_mean;
  Matrix posterior_sd;
  Matrix posterior_mean_inverse;
  Matrix map_estimate;
  Matrix loaded_sample_cov;
  std::map<std::string, std::map<std::string, double>> metrics;  // estimator -> metric -> value
  double acceptance_rate = 0.0;
  Index samples_used = 0;
  ChainRecord chain;  // samples kept only if requested
};

/// Runs rt_chmc_metropolis on spiked_manifold(p, m) and accumulates the
/// running mean and variance of Sigma and Sigma^{-1}. Estimates in the
/// report are rescaled to data units.
CovReport posterior_estimate(const CovModel& model, const SpikedCovParams& theta0, const PosteriorOptions& opts);

/// Sigma_S + eps I with eps = 0.01 * mean(diag Sigma_S), data units.
Matrix loaded_sample_covariance(const Matrix& raw);

/// rel_frobenius, rel_frobenius_inverse, forstner against a reference.
std::map<std::string, double> covariance_metrics(const Matrix& reference, const Matrix& estimate);
std::map<std::string, double> covariance_metrics(const Matrix& reference, const Matrix& estimate,
                                                 const Matrix& estimate_inverse);
void attach_metrics(CovReport& report, const Matrix& reference);

struct SyntheticSpec {
  Index p = 30;
  Index m = 5;
  Index count = 20;
  double d1_min = 2.0, d1_max = 20.0;
  double d2_min = 0.1, d2_max = 1.0;
  std::uint64_t seed = 1;
};

struct SyntheticData {
  SpikedCovParams truth;
  Matrix covariance;
  Matrix samples;  // count x p
};

/// X from the QR factor of a Gaussian matrix, d1 and d2 log-uniform,
/// samples N(0, X D1 X^T + D2).
SyntheticData make_synthetic(const SyntheticSpec& spec);

}  // namespace mhmc
