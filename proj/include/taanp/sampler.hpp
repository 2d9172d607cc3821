#pragma once

#include <algorithm>
#include <optional>
#include <utility>
#include <vector>

#include "taanp/episode.hpp"
#include "taanp/features.hpp"
#include "taanp/world.hpp"

namespace taanp {

// A supervised point (features, flow) used to build training episodes and
// the enlarged set for the KL regularizer.
struct LabeledPoint {
  std::vector<double> x;
  double y = 0.0;
  int segment = -1;
  int t = -1;
  bool observable = false;  // can serve as context (history window)
};

// Uniform subset of the observable part of the pool: count is
// floor(fraction * |observable|), at least 1, fraction drawn from `range`.
inline std::vector<std::size_t> subsample_for_kl(
    const std::vector<LabeledPoint>& pool, RngStream& rng,
    std::pair<double, double> range) {
  check(range.first > 0.0 && range.first <= range.second &&
            range.second <= 1.0,
        "subsample_for_kl: need 0 < min_frac <= max_frac <= 1");
  std::vector<std::size_t> observable;
  for (std::size_t i = 0; i < pool.size(); ++i)
    if (pool[i].observable) observable.push_back(i);
  check(!observable.empty(), "subsample_for_kl: no observable points");
  double frac = range.first == range.second
                    ? range.first
                    : rng.uniform(range.first, range.second);
  auto count = static_cast<std::size_t>(
      std::floor(frac * static_cast<double>(observable.size())));
  count = std::max<std::size_t>(1, std::min(count, observable.size()));
  std::vector<int> pick = rng.sample_without_replacement(
      static_cast<int>(observable.size()), static_cast<int>(count));
  std::vector<std::size_t> out;
  out.reserve(pick.size());
  for (int i : pick) out.push_back(observable[static_cast<std::size_t>(i)]);
  std::sort(out.begin(), out.end());
  return out;
}

// A training episode plus the full supervised pool backing the KL term
// (context plus all supervised targets).
struct TrainEpisode {
  Episode episode;
  std::vector<LabeledPoint> t_prime;
};

struct SamplerConfig {
  int history = 4;
  int horizon = 4;
  double train_frac = 0.6;  // 6:4 time split
  double val_frac = 0.1;    // of training-period windows
  std::uint64_t seed = 0;
};

// Builds episodes over a world with a sliding window of step 1. Validation
// windows are drawn once per run from the training period; test windows are
// the disjoint later block.
class EpisodeSampler {
 public:
  EpisodeSampler(const world::World& w, FeatureCodec codec, SamplerConfig cfg)
      : world_(w), codec_(std::move(codec)), cfg_(cfg) {
    check(cfg_.history >= 1 && cfg_.horizon >= 1,
          "sampler: history and horizon must be >= 1");
    observed_ = w.sensors.observed_ids();
    check(!observed_.empty(), "sampler: no observed segments");
    int steps = w.n_steps();
    train_t_end_ = static_cast<int>(steps * cfg_.train_frac);
    int lo = cfg_.history - 1;
    int hi = steps - cfg_.horizon;  // exclusive upper bound for t0
    check(lo < hi, "sampler: world too short for the window");

    std::vector<int> train_pool;
    for (int t0 = lo; t0 < train_t_end_ - cfg_.horizon; ++t0)
      train_pool.push_back(t0);
    for (int t0 = std::max(lo, train_t_end_ + cfg_.history - 1); t0 < hi; ++t0)
      test_t0s_.push_back(t0);
    check(!train_pool.empty(), "sampler: empty training window");

    RngStream vrng(cfg_.seed, stream_id::sampler_val);
    auto n_val = static_cast<std::size_t>(
        std::max(1.0, std::floor(cfg_.val_frac *
                                 static_cast<double>(train_pool.size()))));
    std::vector<int> pick = vrng.sample_without_replacement(
        static_cast<int>(train_pool.size()), static_cast<int>(n_val));
    std::vector<std::uint8_t> is_val(train_pool.size(), 0);
    for (int i : pick) is_val[static_cast<std::size_t>(i)] = 1;
    for (std::size_t i = 0; i < train_pool.size(); ++i) {
      if (is_val[i])
        val_t0s_.push_back(train_pool[i]);
      else
        train_t0s_.push_back(train_pool[i]);
    }
    std::sort(val_t0s_.begin(), val_t0s_.end());

    // Fixed pseudo-split of observed segments for validation episodes, so
    // the validation loss covers all three task tags deterministically.
    int n_obs = static_cast<int>(observed_.size());
    int n_ctx = std::max(1, (n_obs * 7) / 10);
    if (n_ctx == n_obs && n_obs > 1) n_ctx = n_obs - 1;
    std::vector<int> perm = vrng.permutation(n_obs);
    val_context_segments_.assign(perm.begin(), perm.begin() + n_ctx);
    std::vector<int> ctx_ids;
    for (int i : val_context_segments_)
      ctx_ids.push_back(observed_[static_cast<std::size_t>(i)]);
    val_context_segments_ = std::move(ctx_ids);
    std::sort(val_context_segments_.begin(), val_context_segments_.end());
  }

  const world::World& world() const { return world_; }
  const FeatureCodec& codec() const { return codec_; }
  const SamplerConfig& config() const { return cfg_; }
  const std::vector<int>& observed_segments() const { return observed_; }
  const std::vector<int>& train_t0s() const { return train_t0s_; }
  const std::vector<int>& val_t0s() const { return val_t0s_; }
  const std::vector<int>& test_t0s() const { return test_t0s_; }
  int train_t_end() const { return train_t_end_; }

  // Overrides the observed set (sensor placement / lifecycle scenarios).
  void set_observed_segments(std::vector<int> observed) {
    check(!observed.empty(), "sampler: observed set must be non-empty");
    std::sort(observed.begin(), observed.end());
    observed_ = std::move(observed);
  }

  // Evaluation episode: context = observed segments x history (missing
  // entries dropped); targets = unobserved x history, observed x future,
  // unobserved x future, with y_true wherever a valid measurement exists.
  std::optional<Episode> build_eval_episode(int t0) const {
    Episode ep = skeleton(t0);
    const world::World& w = world_;
    std::vector<std::uint8_t> is_observed(w.n_segments(), 0);
    for (int s : observed_) is_observed[static_cast<std::size_t>(s)] = 1;

    for (int s : observed_)
      for (int t = t0 - cfg_.history + 1; t <= t0; ++t)
        if (w.observation_valid(s, t))
          ep.context.push_back(make_context(s, t));
    if (ep.context.empty()) return std::nullopt;  // unusable episode

    for (int s = 0; s < w.n_segments(); ++s) {
      if (is_observed[static_cast<std::size_t>(s)]) continue;
      for (int t = t0 - cfg_.history + 1; t <= t0; ++t)
        ep.targets.push_back(
            make_target(s, t, SubTask::EstimateUnobserved, 0));
    }
    for (int h = 1; h <= cfg_.horizon; ++h) {
      int t = t0 + h;
      for (int s = 0; s < w.n_segments(); ++s) {
        SubTask task = is_observed[static_cast<std::size_t>(s)]
                           ? SubTask::ForecastObserved
                           : SubTask::ForecastUnobserved;
        ep.targets.push_back(make_target(s, t, task, h));
      }
    }
    return ep;
  }

  // Training episode per the episode-training recipe: T' = all supervised
  // points of the window on observed segments, C' = subsampled observable
  // subset; targets = T' minus C', tagged relative to the segments that
  // actually contribute context.
  std::optional<TrainEpisode> build_train_episode(
      int t0, RngStream& rng, std::pair<double, double> subsample_range) const {
    std::vector<LabeledPoint> pool = supervised_pool(t0, observed_);
    bool any_observable = false;
    for (const auto& p : pool) any_observable |= p.observable;
    if (!any_observable) return std::nullopt;

    std::vector<std::size_t> ctx_idx = subsample_for_kl(pool, rng, subsample_range);
    std::vector<std::uint8_t> in_ctx(pool.size(), 0);
    for (auto i : ctx_idx) in_ctx[i] = 1;
    std::vector<std::uint8_t> seg_has_ctx(world_.n_segments(), 0);
    for (auto i : ctx_idx)
      seg_has_ctx[static_cast<std::size_t>(pool[i].segment)] = 1;

    TrainEpisode te;
    te.episode = skeleton(t0);
    for (auto i : ctx_idx) {
      const LabeledPoint& p = pool[i];
      te.episode.context.push_back(ContextPoint{p.x, p.y, p.segment, p.t});
    }
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (in_ctx[i]) continue;
      const LabeledPoint& p = pool[i];
      TargetPoint tp;
      tp.x = p.x;
      tp.y_true = p.y;
      tp.segment = p.segment;
      tp.t = p.t;
      if (p.t <= t0) {
        tp.task = SubTask::EstimateUnobserved;
        tp.horizon = 0;
      } else {
        tp.task = seg_has_ctx[static_cast<std::size_t>(p.segment)]
                      ? SubTask::ForecastObserved
                      : SubTask::ForecastUnobserved;
        tp.horizon = p.t - t0;
      }
      te.episode.targets.push_back(std::move(tp));
    }
    te.t_prime = std::move(pool);
    if (te.episode.targets.empty()) return std::nullopt;
    return te;
  }

  // Validation episode: deterministic pseudo-split of the observed set so
  // all three tags appear; supervision only from observed segments.
  std::optional<Episode> build_val_episode(int t0) const {
    std::vector<std::uint8_t> is_ctx_seg(world_.n_segments(), 0);
    for (int s : val_context_segments_)
      is_ctx_seg[static_cast<std::size_t>(s)] = 1;
    Episode ep = skeleton(t0);
    for (int s : val_context_segments_)
      for (int t = t0 - cfg_.history + 1; t <= t0; ++t)
        if (world_.observation_valid(s, t))
          ep.context.push_back(make_context(s, t));
    if (ep.context.empty()) return std::nullopt;
    for (int s : observed_) {
      bool ctx_seg = is_ctx_seg[static_cast<std::size_t>(s)];
      for (int t = t0 - cfg_.history + 1; t <= t0 + cfg_.horizon; ++t) {
        if (!world_.observation_valid(s, t)) continue;
        bool past = t <= t0;
        if (ctx_seg && past) continue;  // already context
        TargetPoint tp;
        tp.x = codec_.features(world_, s, t);
        tp.y_true = world_.flow.y_obs(s, t);
        tp.segment = s;
        tp.t = t;
        tp.horizon = past ? 0 : t - t0;
        tp.task = past ? SubTask::EstimateUnobserved
                       : (ctx_seg ? SubTask::ForecastObserved
                                  : SubTask::ForecastUnobserved);
        ep.targets.push_back(std::move(tp));
      }
    }
    if (ep.targets.empty()) return std::nullopt;
    return ep;
  }

  std::vector<LabeledPoint> supervised_pool(
      int t0, const std::vector<int>& segments) const {
    std::vector<LabeledPoint> pool;
    for (int s : segments) {
      for (int t = t0 - cfg_.history + 1; t <= t0 + cfg_.horizon; ++t) {
        if (!world_.observation_valid(s, t)) continue;
        LabeledPoint p;
        p.x = codec_.features(world_, s, t);
        p.y = world_.flow.y_obs(s, t);
        p.segment = s;
        p.t = t;
        p.observable = t <= t0;
        pool.push_back(std::move(p));
      }
    }
    return pool;
  }

 private:
  Episode skeleton(int t0) const {
    check(t0 - cfg_.history + 1 >= 0 && t0 + cfg_.horizon < world_.n_steps(),
          "sampler: t0 leaves no room for history/horizon");
    Episode ep;
    ep.t0 = t0;
    ep.history = cfg_.history;
    ep.horizon = cfg_.horizon;
    return ep;
  }

  ContextPoint make_context(int s, int t) const {
    ContextPoint c;
    c.x = codec_.features(world_, s, t);
    c.y = world_.flow.y_obs(s, t);
    c.segment = s;
    c.t = t;
    return c;
  }

  TargetPoint make_target(int s, int t, SubTask task, int horizon) const {
    TargetPoint tp;
    tp.x = codec_.features(world_, s, t);
    tp.task = task;
    tp.segment = s;
    tp.t = t;
    tp.horizon = horizon;
    if (world_.observation_valid(s, t)) tp.y_true = world_.flow.y_obs(s, t);
    return tp;
  }

  const world::World& world_;
  FeatureCodec codec_;
  SamplerConfig cfg_;
  std::vector<int> observed_;
  std::vector<int> val_context_segments_;
  std::vector<int> train_t0s_, val_t0s_, test_t0s_;
  int train_t_end_ = 0;
};

}  // namespace taanp
