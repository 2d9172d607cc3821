#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "taanp/common.hpp"

namespace taanp::metrics {

// Valid-entry view over aligned series; metrics never look at masked-out
// entries, so corrupting invalid cells cannot change any result.
struct MaskedSeries {
  std::vector<double> y_true;
  std::vector<double> y_pred;
  std::vector<std::uint8_t> mask;  // empty = all valid

  std::vector<std::size_t> valid_indices() const {
    check(y_true.size() == y_pred.size(), "MaskedSeries: length mismatch");
    check(mask.empty() || mask.size() == y_true.size(),
          "MaskedSeries: mask length mismatch");
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < y_true.size(); ++i)
      if (mask.empty() || mask[i]) idx.push_back(i);
    return idx;
  }
};

inline double mae(const MaskedSeries& s) {
  auto idx = s.valid_indices();
  if (idx.empty()) throw UndefinedMetric("mae: no valid entries");
  double acc = 0.0;
  for (auto i : idx) acc += std::abs(s.y_true[i] - s.y_pred[i]);
  return acc / static_cast<double>(idx.size());
}

inline double rmse(const MaskedSeries& s) {
  auto idx = s.valid_indices();
  if (idx.empty()) throw UndefinedMetric("rmse: no valid entries");
  double acc = 0.0;
  for (auto i : idx) {
    double d = s.y_true[i] - s.y_pred[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(idx.size()));
}

// 1 - SSE/SST; can be negative. Undefined when y_true has zero variance.
inline double r2(const MaskedSeries& s) {
  auto idx = s.valid_indices();
  if (idx.empty()) throw UndefinedMetric("r2: no valid entries");
  double mean = 0.0;
  for (auto i : idx) mean += s.y_true[i];
  mean /= static_cast<double>(idx.size());
  double sse = 0.0, sst = 0.0;
  for (auto i : idx) {
    double d = s.y_true[i] - s.y_pred[i];
    double c = s.y_true[i] - mean;
    sse += d * d;
    sst += c * c;
  }
  if (sst == 0.0) throw UndefinedMetric("r2: zero variance in y_true");
  return 1.0 - sse / sst;
}

// Percent. 0/0 terms contribute 0.
inline double smape(const MaskedSeries& s) {
  auto idx = s.valid_indices();
  if (idx.empty()) throw UndefinedMetric("smape: no valid entries");
  double acc = 0.0;
  for (auto i : idx) {
    double denom = (std::abs(s.y_true[i]) + std::abs(s.y_pred[i])) / 2.0;
    if (denom > 0.0) acc += std::abs(s.y_true[i] - s.y_pred[i]) / denom;
  }
  return 100.0 * acc / static_cast<double>(idx.size());
}

// RMSE over the mean of y_true, in percent.
inline double rrmse(const MaskedSeries& s) {
  auto idx = s.valid_indices();
  if (idx.empty()) throw UndefinedMetric("rrmse: no valid entries");
  double mean = 0.0;
  for (auto i : idx) mean += s.y_true[i];
  mean /= static_cast<double>(idx.size());
  if (!(mean > 0.0))
    throw UndefinedMetric("rrmse: mean of y_true must be positive");
  return 100.0 * rmse(s) / mean;
}

inline double normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

inline double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

// Closed form for a Gaussian forecast:
// sigma * [ z (2 Phi(z) - 1) + 2 phi(z) - 1/sqrt(pi) ].
inline double crps_gaussian(double mu, double sigma, double y) {
  if (!(sigma > 0.0)) throw NumericError("crps_gaussian: sigma must be > 0");
  double z = (y - mu) / sigma;
  return sigma * (z * (2.0 * normal_cdf(z) - 1.0) + 2.0 * normal_pdf(z) -
                  1.0 / std::sqrt(std::numbers::pi));
}

// Energy form over draws from the predictive distribution:
// mean|X_i - y| - 1/2 mean|X_i - X_j|. The pairwise term is computed via a
// sort, which matches the full double sum exactly.
inline double crps_samples(std::vector<double> xs, double y) {
  check(!xs.empty(), "crps_samples: needs at least one sample");
  double n = static_cast<double>(xs.size());
  double term1 = 0.0;
  for (double x : xs) term1 += std::abs(x - y);
  term1 /= n;
  std::sort(xs.begin(), xs.end());
  double pair_sum = 0.0;  // sum over ordered pairs of |x_i - x_j|
  double prefix = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    pair_sum += static_cast<double>(k) * xs[k] - prefix;
    prefix += xs[k];
  }
  double term2 = 2.0 * pair_sum / (n * n);
  return term1 - 0.5 * term2;
}

// Fraction of valid truths inside [lower, upper]; bounds inclusive.
inline double picp(const std::vector<double>& lower,
                   const std::vector<double>& upper,
                   const std::vector<double>& y,
                   const std::vector<std::uint8_t>& mask = {}) {
  check(lower.size() == upper.size() && lower.size() == y.size(),
        "picp: length mismatch");
  std::size_t n = 0, hit = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    ++n;
    if (y[i] >= lower[i] && y[i] <= upper[i]) ++hit;
  }
  if (n == 0) throw UndefinedMetric("picp: no valid entries");
  return static_cast<double>(hit) / static_cast<double>(n);
}

// Bin index of a PIT value under N equal-probability intervals,
// half-open [q_{n-1}, q_n) with the last interval closed.
inline int pit_bin(double pit, int n_bins) {
  int b = static_cast<int>(std::floor(pit * n_bins));
  if (b >= n_bins) b = n_bins - 1;
  if (b < 0) b = 0;
  return b;
}

inline std::vector<std::size_t> pit_histogram(const std::vector<double>& pits,
                                              int bins) {
  if (bins < 2) throw ConfigError("pit_histogram: bins must be >= 2");
  std::vector<std::size_t> counts(static_cast<std::size_t>(bins), 0);
  for (double p : pits) counts[static_cast<std::size_t>(pit_bin(p, bins))]++;
  return counts;
}

// Mean absolute deviation of per-interval coverage from 1/N. Membership of
// y in the n-th quantile interval is equivalent to its PIT value landing in
// [ (n-1)/N, n/N ), since the predictive CDF is continuous and increasing.
inline double qice(const std::vector<double>& pits, int n_intervals) {
  if (n_intervals < 2) throw ConfigError("qice: N must be >= 2");
  if (pits.empty()) throw UndefinedMetric("qice: no valid entries");
  auto counts = pit_histogram(pits, n_intervals);
  double total = static_cast<double>(pits.size());
  double acc = 0.0;
  for (auto c : counts)
    acc += std::abs(static_cast<double>(c) / total - 1.0 / n_intervals);
  return acc / n_intervals;
}

// (1/RRMSE) / (1/RRMSE_base) = RRMSE_base / RRMSE_now.
inline double retention_ratio(double rrmse_now, double rrmse_base) {
  if (!(rrmse_now > 0.0) || !(rrmse_base > 0.0))
    throw NumericError("retention_ratio: inputs must be positive");
  return rrmse_base / rrmse_now;
}

struct MetricReport {
  std::string task = "all";
  int horizon = 0;  // 0 = pooled over horizons
  std::size_t n_valid = 0;
  std::optional<double> mae, rmse, smape, rrmse, r2;
  std::optional<double> crps, picp, qice;
};

}  // namespace taanp::metrics
