#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "taanp/metrics.hpp"
#include "taanp/model.hpp"

namespace taanp {

// K stochastic forward passes: per target, K (mu_i, sigma_i) snapshots.
struct McSampleSet {
  std::size_t n_targets = 0;
  std::vector<Tensor> mu;     // K tensors of shape [m x 1]
  std::vector<Tensor> sigma;  // K tensors of shape [m x 1]

  std::size_t k() const { return mu.size(); }
};

// Each pass draws a fresh dropout mask and latent sample from its own
// stream (stream id = base + pass index), so passes are order-independent
// and reproducible.
inline McSampleSet mc_infer(const ModelParams& params, const Episode& ep,
                            int k, std::uint64_t seed) {
  if (k < 1) throw ConfigError("mc_infer: K must be >= 1");
  McSampleSet out;
  out.n_targets = ep.targets.size();
  for (int i = 0; i < k; ++i) {
    RngStream rng(seed, stream_id::mc_pass_base + static_cast<std::uint64_t>(i));
    Graph g;
    ForwardOutput fo = forward(g, params, ep, rng, RunMode::InferMc);
    out.mu.push_back(std::move(fo.mu));
    out.sigma.push_back(std::move(fo.sigma));
  }
  return out;
}

inline McSampleSet plain_infer(const ModelParams& params, const Episode& ep) {
  McSampleSet out;
  out.n_targets = ep.targets.size();
  RngStream rng(0, 0);
  Graph g;
  ForwardOutput fo = forward(g, params, ep, rng, RunMode::InferPlain);
  out.mu.push_back(std::move(fo.mu));
  out.sigma.push_back(std::move(fo.sigma));
  return out;
}

// Total-variance split per target: au = mean of predictive variances,
// eu = dispersion of predictive means, total = au + eu by construction.
struct UncertaintyDecomposition {
  std::vector<double> mean;
  std::vector<double> au;
  std::vector<double> eu;
  std::vector<double> total_var;
  std::vector<std::optional<double>> pcv;  // percent; empty near-zero means

  std::size_t size() const { return mean.size(); }
};

// Targets whose predictive mean is at or below this flow level report PCV
// as undefined and stay out of PCV-ranked analyses.
constexpr double kPcvMeanFloor = 1.0;

inline UncertaintyDecomposition decompose(const McSampleSet& set) {
  check(set.k() >= 1, "decompose: empty sample set");
  std::size_t m = set.n_targets;
  double k = static_cast<double>(set.k());
  UncertaintyDecomposition d;
  d.mean.resize(m);
  d.au.resize(m);
  d.eu.resize(m);
  d.total_var.resize(m);
  d.pcv.resize(m);
  for (std::size_t t = 0; t < m; ++t) {
    double mu_bar = 0.0;
    for (std::size_t i = 0; i < set.k(); ++i) mu_bar += set.mu[i](t, 0);
    mu_bar /= k;
    double au = 0.0, eu = 0.0;
    for (std::size_t i = 0; i < set.k(); ++i) {
      double s = set.sigma[i](t, 0);
      double dm = set.mu[i](t, 0) - mu_bar;
      au += s * s;
      eu += dm * dm;
    }
    au /= k;
    eu /= k;
    d.mean[t] = mu_bar;
    d.au[t] = au;
    d.eu[t] = eu;
    d.total_var[t] = au + eu;
    if (mu_bar > kPcvMeanFloor)
      d.pcv[t] = 100.0 * std::sqrt(au + eu) / mu_bar;
  }
  return d;
}

enum class PredictiveForm {
  Mixture,        // equal-weight Gaussian mixture over the K passes
  MomentMatched,  // single Gaussian with mean mu_bar and variance au + eu
};

inline double predictive_cdf(const McSampleSet& set, std::size_t target,
                             double y,
                             PredictiveForm form = PredictiveForm::Mixture) {
  check(target < set.n_targets, "predictive_cdf: target out of range");
  if (form == PredictiveForm::MomentMatched) {
    double mu_bar = 0.0, au = 0.0, eu = 0.0;
    double k = static_cast<double>(set.k());
    for (std::size_t i = 0; i < set.k(); ++i) mu_bar += set.mu[i](target, 0);
    mu_bar /= k;
    for (std::size_t i = 0; i < set.k(); ++i) {
      double s = set.sigma[i](target, 0);
      double dm = set.mu[i](target, 0) - mu_bar;
      au += s * s;
      eu += dm * dm;
    }
    double var = (au + eu) / k;
    return metrics::normal_cdf((y - mu_bar) / std::sqrt(var));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < set.k(); ++i)
    acc += metrics::normal_cdf((y - set.mu[i](target, 0)) /
                               set.sigma[i](target, 0));
  return acc / static_cast<double>(set.k());
}

struct PredictionInterval {
  double lower = 0.0;
  double upper = 0.0;
};

// Quantile of the predictive distribution by bisection on the CDF. The
// bracket shrinks far below double resolution, pinning the quantile to
// within 1e-9 in probability.
inline double predictive_quantile(const McSampleSet& set, std::size_t target,
                                  double p,
                                  PredictiveForm form = PredictiveForm::Mixture) {
  check(p > 0.0 && p < 1.0, "predictive_quantile: p must be in (0,1)");
  double lo = set.mu[0](target, 0), hi = lo;
  for (std::size_t i = 0; i < set.k(); ++i) {
    lo = std::min(lo, set.mu[i](target, 0) - 40.0 * set.sigma[i](target, 0));
    hi = std::max(hi, set.mu[i](target, 0) + 40.0 * set.sigma[i](target, 0));
  }
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    if (predictive_cdf(set, target, mid, form) < p)
      lo = mid;
    else
      hi = mid;
    if (hi - lo <= 1e-14 * (1.0 + std::abs(lo) + std::abs(hi))) break;
  }
  return 0.5 * (lo + hi);
}

inline PredictionInterval interval(const McSampleSet& set, std::size_t target,
                                   double alpha,
                                   PredictiveForm form = PredictiveForm::Mixture) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw ConfigError("interval: alpha must be in (0,1)");
  PredictionInterval out;
  out.lower = predictive_quantile(set, target, alpha / 2.0, form);
  out.upper = predictive_quantile(set, target, 1.0 - alpha / 2.0, form);
  return out;
}

struct RejectionPoint {
  double fraction;  // rejected share
  double rrmse;     // on the retained set
  std::size_t retained;
};

// Drop the top-f fraction ranked by score (PCV) descending, recompute
// RRMSE on the rest. Callers pass only entries with defined scores.
inline std::vector<RejectionPoint> error_rejection_curve(
    const std::vector<double>& scores, const std::vector<double>& y_true,
    const std::vector<double>& y_pred, const std::vector<double>& fractions) {
  check(scores.size() == y_true.size() && scores.size() == y_pred.size(),
        "error_rejection_curve: misaligned inputs");
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });
  std::vector<RejectionPoint> curve;
  for (double f : fractions) {
    check(f >= 0.0 && f < 1.0, "error_rejection_curve: fraction out of [0,1)");
    auto drop = static_cast<std::size_t>(
        std::floor(f * static_cast<double>(order.size())));
    metrics::MaskedSeries s;
    for (std::size_t r = drop; r < order.size(); ++r) {
      s.y_true.push_back(y_true[order[r]]);
      s.y_pred.push_back(y_pred[order[r]]);
    }
    curve.push_back(RejectionPoint{f, metrics::rrmse(s), s.y_true.size()});
  }
  return curve;
}

}  // namespace taanp
