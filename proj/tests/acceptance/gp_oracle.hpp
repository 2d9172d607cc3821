#pragma once

// Exact Gaussian-process regression on small 1-D problems, used as an
// independent oracle: dense Cholesky, direct solves, no iterative parts.

#include <cmath>
#include <vector>

#include "taanp/rng.hpp"
#include "taanp/tensor.hpp"

namespace gp_oracle {

struct RbfGp {
  double length_scale = 0.5;
  double signal_var = 1.0;
  double noise_sd = 0.15;
  double prior_mean = 10.0;

  double kernel(double a, double b) const {
    double d = (a - b) / length_scale;
    return signal_var * std::exp(-0.5 * d * d);
  }
};

// Lower-triangular Cholesky of a symmetric positive definite matrix.
inline taanp::Tensor cholesky(const taanp::Tensor& a) {
  std::size_t n = a.rows;
  taanp::Tensor l(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      if (i == j) {
        taanp::check(s > 0.0, "cholesky: matrix not positive definite");
        l(i, j) = std::sqrt(s);
      } else {
        l(i, j) = s / l(j, j);
      }
    }
  }
  return l;
}

inline std::vector<double> solve_lower(const taanp::Tensor& l,
                                       std::vector<double> b) {
  std::size_t n = l.rows;
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * b[k];
    b[i] = s / l(i, i);
  }
  return b;
}

inline std::vector<double> solve_upper_t(const taanp::Tensor& l,
                                         std::vector<double> b) {
  // Solves L^T x = b.
  std::size_t n = l.rows;
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= l(k, i) * b[k];
    b[i] = s / l(i, i);
  }
  return b;
}

// Draws one prior sample of f at the given inputs.
inline std::vector<double> sample_prior(const RbfGp& gp,
                                        const std::vector<double>& xs,
                                        taanp::RngStream& rng) {
  std::size_t n = xs.size();
  taanp::Tensor k(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) k(i, j) = gp.kernel(xs[i], xs[j]);
  for (std::size_t i = 0; i < n; ++i) k(i, i) += 1e-9;
  taanp::Tensor l = cholesky(k);
  std::vector<double> z(n);
  for (auto& v : z) v = rng.gaussian();
  std::vector<double> f(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j <= i; ++j) s += l(i, j) * z[j];
    f[i] = gp.prior_mean + s;
  }
  return f;
}

struct Posterior {
  std::vector<double> mean;
  std::vector<double> var;  // latent-f variance; add noise_sd^2 for y*
};

// Exact posterior at target inputs given noisy context observations.
inline Posterior posterior(const RbfGp& gp, const std::vector<double>& xc,
                           const std::vector<double>& yc,
                           const std::vector<double>& xt) {
  std::size_t n = xc.size();
  taanp::Tensor k(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) k(i, j) = gp.kernel(xc[i], xc[j]);
  for (std::size_t i = 0; i < n; ++i) k(i, i) += gp.noise_sd * gp.noise_sd;
  taanp::Tensor l = cholesky(k);
  std::vector<double> centered(n);
  for (std::size_t i = 0; i < n; ++i) centered[i] = yc[i] - gp.prior_mean;
  std::vector<double> alpha = solve_upper_t(l, solve_lower(l, centered));

  Posterior post;
  post.mean.resize(xt.size());
  post.var.resize(xt.size());
  for (std::size_t t = 0; t < xt.size(); ++t) {
    std::vector<double> ks(n);
    for (std::size_t i = 0; i < n; ++i) ks[i] = gp.kernel(xc[i], xt[t]);
    double mu = gp.prior_mean;
    for (std::size_t i = 0; i < n; ++i) mu += ks[i] * alpha[i];
    std::vector<double> v = solve_lower(l, ks);
    double reduction = 0.0;
    for (double x : v) reduction += x * x;
    post.mean[t] = mu;
    post.var[t] = std::max(1e-12, gp.kernel(xt[t], xt[t]) - reduction);
  }
  return post;
}

}  // namespace gp_oracle
