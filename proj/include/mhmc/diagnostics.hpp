#pragma once

#include "mhmc/types.hpp"

#include "json.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mhmc {

enum class AutocovMethod { direct, fft, automatic };

struct Autocovariance {
  std::vector<double> values;  // c_f(0..M)
  bool constant = false;       // c_f(0) == 0
};

/// c_f(i) = 1/(N-i) sum_{n} (f_n - mu)(f_{n+i} - mu), mu the full-series mean.
/// Throws Error if max_lag >= N.
Autocovariance autocovariance(std::span<const double> series, Index max_lag,
                              AutocovMethod method = AutocovMethod::direct);

struct IacEstimate {
  double tau = 1.0;
  Index lag_cap = 0;
  std::vector<double> autocov;
  double ess = 0.0;
  bool constant = false;
};

struct IacOptions {
  std::optional<Index> max_lag;  // default N / 50
  double tau_floor = 0.01;
  AutocovMethod method = AutocovMethod::direct;
};

/// tau = 1 + 2 sum_{i=1}^{M} c_f(i)/c_f(0), ESS = N / tau.
IacEstimate iac(std::span<const double> series, const IacOptions& opts = {});

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  double tau = 1.0;
  double ess = 0.0;
};

/// Mean with IAC-corrected standard error sqrt(tau var / N).
McEstimate mc_average_with_error(std::span<const double> series, const IacOptions& opts = {});

/// sqrt(sum ln^2 lambda_i) over the generalized eigenvalues det(lambda A - B) = 0.
double forstner_metric(const Matrix& A, const Matrix& B);

/// ||A - B||_F / ||A||_F.
double rel_frobenius(const Matrix& A, const Matrix& B);

struct DiagnosticRecord {
  std::string observable;
  double tau = 1.0;
  double ess = 0.0;
  double mean = 0.0;
  double std_error = 0.0;
  Index n = 0;
  Index lag_cap = 0;
};

DiagnosticRecord diagnose_series(const std::string& observable, std::span<const double> series,
                                 const IacOptions& opts = {});
nlohmann::json to_json(const DiagnosticRecord& r);

/// Spearman rank correlation (average ranks for ties).
double spearman(std::span<const double> a, std::span<const double> b);

}  // namespace mhmc
