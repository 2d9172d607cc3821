#pragma once

#include <utility>
#include <vector>

#include "taanp/model.hpp"
#include "taanp/sampler.hpp"

namespace taanp {

struct TrainingConfig {
  double beta = 1.0;  // KL weight
  double lr = 1e-3;
  double weight_decay = 1e-4;
  int batch_episodes = 8;
  int episodes_per_epoch = 128;
  int max_epochs = 40;
  int patience = 6;
  int history = 4;
  int horizon = 4;
  std::pair<double, double> context_subsample_range{0.3, 0.9};
  double clip_norm = 5.0;
  int val_max_episodes = 64;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(beta >= 0.0)) throw ConfigError("training: beta must be >= 0");
    if (!(lr >= 0.0)) throw ConfigError("training: lr must be >= 0");
    if (batch_episodes < 1 || episodes_per_epoch < 1 || max_epochs < 1 ||
        patience < 0)
      throw ConfigError("training: loop sizes must be positive");
    if (history < 1 || horizon < 1)
      throw ConfigError("training: history and horizon must be >= 1");
    auto [lo, hi] = context_subsample_range;
    if (!(lo > 0.0 && lo <= hi && hi <= 1.0))
      throw ConfigError("training: need 0 < min_frac <= max_frac <= 1");
  }
};

struct LossBreakdown {
  double nll = 0.0;
  double kl = 0.0;
  double total = 0.0;
};

struct ElboResult {
  Graph graph;
  Var total;
  LossBreakdown values;
};

namespace detail {

inline Var latent_from_labeled(Graph& g, Binder& bind,
                               const ModelParams& params,
                               const std::vector<LabeledPoint>& pts,
                               RngStream* rng, bool drop, LatentVars& out) {
  check(!pts.empty(), "latent_from_labeled: empty point set");
  Tensor x = feature_matrix(params, pts);
  Tensor y(pts.size(), 1);
  for (std::size_t i = 0; i < pts.size(); ++i) y(i, 0) = pts[i].y;
  Var reps = encode_points(g, bind, params, x, y, rng, drop);
  Var summary = aggregate_mean(g, reps);
  out = latent_posterior(g, bind, params, summary);
  return summary;
}

}  // namespace detail

// Negative-ELBO pieces for one episode: NLL averaged over target points
// with a single reparameterized latent sample, plus the closed-form KL
// between the context posterior and the enlarged-set posterior. Latent-free
// variants (CNP) carry an identically zero KL.
inline ElboResult elbo_loss(const ModelParams& params, const Episode& ep,
                            const std::vector<LabeledPoint>& t_prime,
                            RngStream& rng, double beta,
                            RunMode mode = RunMode::Train) {
  check(!ep.targets.empty(), "elbo_loss: episode has no targets");
  ElboResult res;
  Graph& g = res.graph;
  Binder bind(g);
  bool drop = (mode != RunMode::InferPlain);

  ForwardOutput fo = forward(g, bind, params, ep, rng, mode);

  Var nll_sum;
  std::size_t m_total = 0;
  for (const GroupOutput& grp : fo.groups) {
    Tensor y(grp.target_indices.size(), 1);
    for (std::size_t r = 0; r < grp.target_indices.size(); ++r) {
      const TargetPoint& tp = ep.targets[grp.target_indices[r]];
      check(tp.y_true.has_value(), "elbo_loss: target without supervision");
      y(r, 0) = *tp.y_true;
    }
    Var terms = g.gaussian_nll_terms(grp.mu, grp.sigma, std::move(y));
    Var s = g.sum_all(terms);
    nll_sum = nll_sum.valid() ? g.add(nll_sum, s) : s;
    m_total += grp.target_indices.size();
  }
  Var nll = g.affine(nll_sum, 1.0 / static_cast<double>(m_total), 0.0);

  Var kl;
  if (has_latent_path(params.cfg.variant)) {
    check(!t_prime.empty(), "elbo_loss: latent variant needs the enlarged set");
    LatentVars q_t;
    detail::latent_from_labeled(g, bind, params, t_prime, &rng, drop, q_t);
    kl = g.kl_diag_gaussians(fo.latent_vars.mu, fo.latent_vars.sigma, q_t.mu,
                             q_t.sigma);
  } else {
    kl = g.constant(Tensor(1, 1));
  }

  res.total = g.add(nll, g.affine(kl, beta, 0.0));
  res.values.nll = g.val(nll)(0, 0);
  res.values.kl = g.val(kl)(0, 0);
  res.values.total = g.val(res.total)(0, 0);
  return res;
}

// Builds the enlarged supervised set from an episode whose targets all
// carry ground truth (context plus targets).
inline std::vector<LabeledPoint> enlarged_set_from_episode(const Episode& ep) {
  std::vector<LabeledPoint> pts;
  for (const ContextPoint& c : ep.context) {
    LabeledPoint p;
    p.x = c.x;
    p.y = c.y;
    p.segment = c.segment;
    p.t = c.t;
    p.observable = true;
    pts.push_back(std::move(p));
  }
  for (const TargetPoint& t : ep.targets) {
    if (!t.y_true.has_value()) continue;
    LabeledPoint p;
    p.x = t.x;
    p.y = *t.y_true;
    p.segment = t.segment;
    p.t = t.t;
    p.observable = false;
    pts.push_back(std::move(p));
  }
  return pts;
}

inline ElboResult elbo_loss(const ModelParams& params, const Episode& ep,
                            RngStream& rng, double beta,
                            RunMode mode = RunMode::Train) {
  return elbo_loss(params, ep, enlarged_set_from_episode(ep), rng, beta, mode);
}

}  // namespace taanp
