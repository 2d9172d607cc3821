#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "taanp/metrics.hpp"
#include "taanp/sampler.hpp"
#include "taanp/uncertainty.hpp"

namespace taanp {

struct EvalConfig {
  int k_samples = 10;
  double alpha = 0.05;
  int qice_bins = 10;
  int max_episodes = 64;
  PredictiveForm form = PredictiveForm::Mixture;
  std::uint64_t seed = 0;
  int crps_draws_per_component = 100;
  bool with_intervals = true;  // PICP costs a bisection per target
  bool with_crps = true;
  bool mc_inference = true;  // false: one deterministic pass (plain dropout)
};

struct TargetRecord {
  SubTask task = SubTask::EstimateUnobserved;
  int horizon = 0;
  int segment = -1;
  int t = -1;
  bool valid = false;  // ground truth available (not originally missing)
  double y_true = 0.0;
  double mean = 0.0;
  double au = 0.0, eu = 0.0, total_var = 0.0;
  std::optional<double> pcv;
  std::optional<double> pit;
  std::optional<double> lower, upper;
  std::optional<double> crps;
};

struct EvalOutput {
  std::vector<metrics::MetricReport> reports;
  std::vector<TargetRecord> records;
};

namespace detail {

struct GroupAccum {
  metrics::MaskedSeries series;
  std::vector<double> pits;
  std::vector<double> crps_vals;
  std::size_t covered = 0;
  std::size_t with_interval = 0;
};

inline metrics::MetricReport finish_group(const std::string& task, int horizon,
                                          const GroupAccum& g, int qice_bins) {
  metrics::MetricReport r;
  r.task = task;
  r.horizon = horizon;
  r.n_valid = g.series.y_true.size();
  if (r.n_valid == 0) return r;
  r.mae = metrics::mae(g.series);
  r.rmse = metrics::rmse(g.series);
  try {
    r.r2 = metrics::r2(g.series);
  } catch (const UndefinedMetric&) {
  }
  r.smape = metrics::smape(g.series);
  try {
    r.rrmse = metrics::rrmse(g.series);
  } catch (const UndefinedMetric&) {
  }
  if (!g.crps_vals.empty()) {
    double acc = 0.0;
    for (double c : g.crps_vals) acc += c;
    r.crps = acc / static_cast<double>(g.crps_vals.size());
  }
  if (g.with_interval > 0)
    r.picp = static_cast<double>(g.covered) /
             static_cast<double>(g.with_interval);
  if (g.pits.size() >= 2)
    r.qice = metrics::qice(g.pits, qice_bins);
  return r;
}

}  // namespace detail

// Runs K-sample MC inference over evaluation episodes and aggregates the
// full metric block per subtask and per (subtask, horizon).
inline EvalOutput evaluate_model(const ModelParams& params,
                                 const EpisodeSampler& sampler,
                                 const std::vector<int>& t0s,
                                 const EvalConfig& cfg) {
  EvalOutput out;
  RngStream crps_rng(cfg.seed, stream_id::crps_draws);
  std::size_t done = 0;
  for (std::size_t idx = 0; idx < t0s.size(); ++idx) {
    if (static_cast<int>(done) >= cfg.max_episodes) break;
    auto ep = sampler.build_eval_episode(t0s[idx]);
    if (!ep) continue;
    ++done;
    McSampleSet set = cfg.mc_inference
                          ? mc_infer(params, *ep, cfg.k_samples,
                                     derive_seed(cfg.seed, idx))
                          : plain_infer(params, *ep);
    UncertaintyDecomposition dec = decompose(set);
    for (std::size_t i = 0; i < ep->targets.size(); ++i) {
      const TargetPoint& tp = ep->targets[i];
      TargetRecord rec;
      rec.task = tp.task;
      rec.horizon = tp.horizon;
      rec.segment = tp.segment;
      rec.t = tp.t;
      rec.mean = dec.mean[i];
      rec.au = dec.au[i];
      rec.eu = dec.eu[i];
      rec.total_var = dec.total_var[i];
      rec.pcv = dec.pcv[i];
      if (tp.y_true.has_value()) {
        rec.valid = true;
        rec.y_true = *tp.y_true;
        rec.pit = predictive_cdf(set, i, rec.y_true, cfg.form);
        if (cfg.with_intervals) {
          PredictionInterval pi = interval(set, i, cfg.alpha, cfg.form);
          rec.lower = pi.lower;
          rec.upper = pi.upper;
        }
        if (cfg.with_crps) {
          std::vector<double> draws;
          draws.reserve(static_cast<std::size_t>(cfg.k_samples) *
                        cfg.crps_draws_per_component);
          if (cfg.form == PredictiveForm::MomentMatched) {
            double sd = std::sqrt(dec.total_var[i]);
            for (int d = 0;
                 d < cfg.k_samples * cfg.crps_draws_per_component; ++d)
              draws.push_back(crps_rng.gaussian(dec.mean[i], sd));
          } else {
            for (std::size_t k = 0; k < set.k(); ++k)
              for (int d = 0; d < cfg.crps_draws_per_component; ++d)
                draws.push_back(
                    crps_rng.gaussian(set.mu[k](i, 0), set.sigma[k](i, 0)));
          }
          rec.crps = metrics::crps_samples(std::move(draws), rec.y_true);
        }
      }
      out.records.push_back(std::move(rec));
    }
  }

  // Aggregate: "all", one block per task, and one per (task, horizon>0).
  std::map<std::pair<std::string, int>, detail::GroupAccum> groups;
  auto feed = [&](const std::string& task, int horizon,
                  const TargetRecord& r) {
    detail::GroupAccum& g = groups[{task, horizon}];
    if (!r.valid) return;
    g.series.y_true.push_back(r.y_true);
    g.series.y_pred.push_back(r.mean);
    if (r.pit) g.pits.push_back(*r.pit);
    if (r.crps) g.crps_vals.push_back(*r.crps);
    if (r.lower && r.upper) {
      ++g.with_interval;
      if (r.y_true >= *r.lower && r.y_true <= *r.upper) ++g.covered;
    }
  };
  for (const TargetRecord& r : out.records) {
    feed("all", 0, r);
    feed(subtask_name(r.task), 0, r);
    if (r.horizon > 0) feed(subtask_name(r.task), r.horizon, r);
  }
  for (const auto& [key, g] : groups)
    out.reports.push_back(
        detail::finish_group(key.first, key.second, g, cfg.qice_bins));
  return out;
}

inline std::vector<int> strided_subset(const std::vector<int>& t0s,
                                       int max_count) {
  if (max_count <= 0 || static_cast<int>(t0s.size()) <= max_count) return t0s;
  std::vector<int> out;
  double step = static_cast<double>(t0s.size()) / max_count;
  for (int i = 0; i < max_count; ++i)
    out.push_back(t0s[static_cast<std::size_t>(i * step)]);
  return out;
}

}  // namespace taanp
