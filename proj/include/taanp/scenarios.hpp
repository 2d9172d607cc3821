#pragma once

#include <algorithm>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "taanp/eval.hpp"
#include "taanp/trainer.hpp"

namespace taanp::scenario {

enum class PlacementKind {
  UncertaintyDesc,
  UncertaintyAsc,
  BetweennessDesc,
  ClosenessDesc,
  Random,
};

inline const char* placement_kind_name(PlacementKind k) {
  switch (k) {
    case PlacementKind::UncertaintyDesc: return "uncertainty_desc";
    case PlacementKind::UncertaintyAsc: return "uncertainty_asc";
    case PlacementKind::BetweennessDesc: return "betweenness_desc";
    case PlacementKind::ClosenessDesc: return "closeness_desc";
    case PlacementKind::Random: return "random";
  }
  throw ContractError("unknown PlacementKind");
}

inline PlacementKind placement_kind_from_name(const std::string& s) {
  if (s == "uncertainty_desc") return PlacementKind::UncertaintyDesc;
  if (s == "uncertainty_asc") return PlacementKind::UncertaintyAsc;
  if (s == "betweenness_desc") return PlacementKind::BetweennessDesc;
  if (s == "closeness_desc") return PlacementKind::ClosenessDesc;
  if (s == "random") return PlacementKind::Random;
  throw ConfigError("unknown placement strategy: " + s);
}

struct PlacementStrategy {
  PlacementKind kind = PlacementKind::UncertaintyDesc;
  int batch_size = 4;
};

// Time-averaged total predictive std per unobserved segment, from MC
// inference over the given evaluation windows.
inline std::map<int, double> segment_uncertainty_scores(
    const ModelParams& params, const EpisodeSampler& sampler,
    const std::vector<int>& t0s, int k_samples, std::uint64_t seed,
    int max_episodes) {
  std::map<int, double> acc;
  std::map<int, std::size_t> counts;
  int done = 0;
  for (std::size_t idx = 0; idx < t0s.size() && done < max_episodes; ++idx) {
    auto ep = sampler.build_eval_episode(t0s[idx]);
    if (!ep) continue;
    ++done;
    McSampleSet set =
        mc_infer(params, *ep, k_samples, derive_seed(seed, idx));
    UncertaintyDecomposition dec = decompose(set);
    for (std::size_t i = 0; i < ep->targets.size(); ++i) {
      int seg = ep->targets[i].segment;
      acc[seg] += std::sqrt(dec.total_var[i]);
      counts[seg] += 1;
    }
  }
  for (auto& [seg, v] : acc) v /= static_cast<double>(counts[seg]);
  return acc;
}

// Candidate ranking over currently unobserved segments. Deterministic
// strategies break ties by ascending segment id; uncertainty_asc is the
// exact reverse of uncertainty_desc.
inline std::vector<int> rank_candidates(
    const ModelParams& params, const world::World& w,
    const std::vector<int>& observed, const EpisodeSampler& sampler,
    const PlacementStrategy& strategy, const std::vector<int>& eval_t0s,
    int k_samples, std::uint64_t seed, RngStream& scenario_rng,
    int max_episodes = 12) {
  std::set<int> obs(observed.begin(), observed.end());
  std::vector<int> pool;
  for (int s = 0; s < w.n_segments(); ++s)
    if (!obs.count(s)) pool.push_back(s);
  check(!pool.empty(), "rank_candidates: no unobserved segments");

  auto sort_desc = [&](auto score_of) {
    std::stable_sort(pool.begin(), pool.end(), [&](int a, int b) {
      double sa = score_of(a), sb = score_of(b);
      if (sa != sb) return sa > sb;
      return a < b;
    });
  };

  switch (strategy.kind) {
    case PlacementKind::UncertaintyDesc:
    case PlacementKind::UncertaintyAsc: {
      std::map<int, double> scores = segment_uncertainty_scores(
          params, sampler, eval_t0s, k_samples, seed, max_episodes);
      sort_desc([&](int s) {
        auto it = scores.find(s);
        return it == scores.end() ? 0.0 : it->second;
      });
      if (strategy.kind == PlacementKind::UncertaintyAsc)
        std::reverse(pool.begin(), pool.end());
      break;
    }
    case PlacementKind::BetweennessDesc:
      sort_desc([&](int s) {
        return w.graph.segments[static_cast<std::size_t>(s)].betweenness;
      });
      break;
    case PlacementKind::ClosenessDesc:
      sort_desc([&](int s) {
        return w.graph.segments[static_cast<std::size_t>(s)].closeness;
      });
      break;
    case PlacementKind::Random: {
      std::vector<int> perm =
          scenario_rng.permutation(static_cast<int>(pool.size()));
      std::vector<int> shuffled;
      shuffled.reserve(pool.size());
      for (int i : perm) shuffled.push_back(pool[static_cast<std::size_t>(i)]);
      pool = std::move(shuffled);
      break;
    }
  }
  return pool;
}

struct PlacementRound {
  int round = 0;
  int n_observed = 0;
  double unobserved_ratio = 0.0;
  std::uint64_t param_checksum = 0;
  bool fine_tuned = false;
  std::optional<double> r2_joint;
  std::optional<double> rmse_joint;
  std::optional<double> mae_joint;
  std::vector<int> added;
};

struct PlacementReport {
  std::string strategy;
  bool fine_tune = false;
  std::vector<PlacementRound> rounds;
};

struct PlacementConfig {
  PlacementStrategy strategy;
  int rounds = 8;
  int k_samples = 10;
  int eval_max_episodes = 12;
  // Off by default: the whole point is adapting without retraining. When
  // > 0, each round runs this many fine-tune epochs on the new context and
  // the report flags it.
  int fine_tune_epochs = 0;
  TrainingConfig fine_tune_training;
  std::uint64_t seed = 0;
};

// Incremental deployment without retraining: per round, evaluate the
// current sensing configuration, rank the remaining candidates, and add a
// batch. The model checkpoint is frozen throughout (meta-adaptation).
inline PlacementReport run_placement(const ModelParams& params,
                                     const world::World& w,
                                     const FeatureCodec& codec,
                                     const SamplerConfig& scfg,
                                     const PlacementConfig& pcfg) {
  EpisodeSampler sampler(w, codec, scfg);
  std::vector<int> observed = w.sensors.observed_ids();
  RngStream scenario_rng(pcfg.seed, stream_id::scenario);

  PlacementReport report;
  report.strategy = placement_kind_name(pcfg.strategy.kind);
  report.fine_tune = pcfg.fine_tune_epochs > 0;
  std::vector<int> eval_t0s =
      strided_subset(sampler.test_t0s(), pcfg.eval_max_episodes);

  EvalConfig ecfg;
  ecfg.k_samples = pcfg.k_samples;
  ecfg.max_episodes = pcfg.eval_max_episodes;
  ecfg.seed = pcfg.seed;
  ecfg.with_intervals = false;
  ecfg.with_crps = false;

  ModelParams active = params;
  for (int round = 0; round <= pcfg.rounds; ++round) {
    sampler.set_observed_segments(observed);
    if (report.fine_tune && round > 0) {
      TrainingConfig ft = pcfg.fine_tune_training;
      ft.max_epochs = pcfg.fine_tune_epochs;
      ft.patience = 0;
      ft.seed = pcfg.seed + static_cast<std::uint64_t>(round);
      TrainState st = make_train_state(std::move(active));
      run_training(st, sampler, ft);
      active = std::move(st.params);
    }
    PlacementRound row;
    row.round = round;
    row.n_observed = static_cast<int>(observed.size());
    row.unobserved_ratio =
        1.0 - static_cast<double>(observed.size()) / w.n_segments();
    row.param_checksum = active.checksum();
    row.fine_tuned = report.fine_tune && round > 0;

    EvalOutput ev = evaluate_model(active, sampler, eval_t0s, ecfg);
    for (const auto& rep : ev.reports) {
      if (rep.task == "all" && rep.horizon == 0) {
        row.r2_joint = rep.r2;
        row.rmse_joint = rep.rmse;
        row.mae_joint = rep.mae;
      }
    }

    if (round < pcfg.rounds &&
        static_cast<int>(observed.size()) < w.n_segments()) {
      std::vector<int> ranked = rank_candidates(
          active, w, observed, sampler, pcfg.strategy, eval_t0s,
          pcfg.k_samples, pcfg.seed, scenario_rng, pcfg.eval_max_episodes);
      int take = std::min<int>(pcfg.strategy.batch_size,
                               static_cast<int>(ranked.size()));
      for (int i = 0; i < take; ++i) {
        observed.push_back(ranked[static_cast<std::size_t>(i)]);
        row.added.push_back(ranked[static_cast<std::size_t>(i)]);
      }
      std::sort(observed.begin(), observed.end());
    }
    report.rounds.push_back(std::move(row));
    if (static_cast<int>(observed.size()) >= w.n_segments()) break;
  }
  return report;
}

// ---- Damage / Repair / Addition lifecycle ----

enum class StageKind { Damage, Repair, Add };

inline const char* stage_kind_name(StageKind k) {
  switch (k) {
    case StageKind::Damage: return "damage";
    case StageKind::Repair: return "repair";
    case StageKind::Add: return "add";
  }
  throw ContractError("unknown StageKind");
}

inline StageKind stage_kind_from_name(const std::string& s) {
  if (s == "damage") return StageKind::Damage;
  if (s == "repair") return StageKind::Repair;
  if (s == "add") return StageKind::Add;
  throw ConfigError("unknown lifecycle stage: " + s);
}

struct LifecycleStage {
  StageKind kind = StageKind::Damage;
  int days = 0;
  int per_day = 0;
};

struct LifecycleSchedule {
  std::vector<LifecycleStage> stages;

  // Repairs never exceed accumulated damage at any prefix of the schedule.
  void validate() const {
    long damage = 0, repair = 0;
    for (const auto& st : stages) {
      if (st.days < 0 || st.per_day < 0)
        throw ConfigError("lifecycle: days and per_day must be >= 0");
      long count = static_cast<long>(st.days) * st.per_day;
      if (st.kind == StageKind::Damage) damage += count;
      if (st.kind == StageKind::Repair) {
        repair += count;
        if (repair > damage)
          throw ConfigError("lifecycle: repairs exceed accumulated damage");
      }
    }
  }
};

struct LifecycleDayRow {
  int day = 0;
  std::string stage = "baseline";
  int n_observed = 0;
  std::uint64_t param_checksum = 0;
  double rrmse = 0.0;
  double rrmse_base = 0.0;
  double retention = 1.0;
};

struct LifecycleReport {
  std::vector<LifecycleDayRow> days;
  std::vector<int> original_observed;
  std::vector<int> final_observed;
};

struct LifecycleConfig {
  LifecycleSchedule schedule;
  int k_samples = 10;
  int eval_episodes_per_day = 8;
  std::uint64_t seed = 0;
};

namespace detail {

inline double joint_rrmse(const ModelParams& params, EpisodeSampler& sampler,
                          const std::vector<int>& t0s, const EvalConfig& ecfg) {
  EvalOutput ev = evaluate_model(params, sampler, t0s, ecfg);
  for (const auto& rep : ev.reports)
    if (rep.task == "all" && rep.horizon == 0 && rep.rrmse) return *rep.rrmse;
  throw NumericError("lifecycle: joint RRMSE undefined on this window");
}

}  // namespace detail

// Daily event application with uniform victim/addition selection and FIFO
// repair; no retraining at any point. Retention compares against the
// undisturbed configuration on the same day's windows.
inline LifecycleReport run_lifecycle(const ModelParams& params,
                                     const world::World& w,
                                     const FeatureCodec& codec,
                                     const SamplerConfig& scfg,
                                     const LifecycleConfig& lcfg) {
  lcfg.schedule.validate();
  EpisodeSampler sampler(w, codec, scfg);
  const std::vector<int> test_t0s = sampler.test_t0s();
  check(!test_t0s.empty(), "lifecycle: no evaluation windows");
  int spd = w.flow.steps_per_day;

  // Group evaluation windows by data day, wrapping if the schedule is
  // longer than the evaluation period.
  std::map<int, std::vector<int>> by_day;
  for (int t0 : test_t0s) by_day[t0 / spd].push_back(t0);
  std::vector<std::vector<int>> day_windows;
  for (auto& [d, v] : by_day)
    day_windows.push_back(strided_subset(v, lcfg.eval_episodes_per_day));

  EvalConfig ecfg;
  ecfg.k_samples = lcfg.k_samples;
  ecfg.max_episodes = lcfg.eval_episodes_per_day;
  ecfg.seed = lcfg.seed;
  ecfg.with_intervals = false;
  ecfg.with_crps = false;

  std::vector<int> original = w.sensors.observed_ids();
  std::vector<int> observed = original;
  std::set<int> instrumented_ever(original.begin(), original.end());
  std::deque<int> damaged;  // FIFO
  RngStream rng(lcfg.seed, stream_id::scenario);

  LifecycleReport report;
  auto eval_day = [&](int day, const std::string& stage) {
    const std::vector<int>& t0s =
        day_windows[static_cast<std::size_t>(day) % day_windows.size()];
    sampler.set_observed_segments(original);
    double base = detail::joint_rrmse(params, sampler, t0s, ecfg);
    sampler.set_observed_segments(observed);
    double now = detail::joint_rrmse(params, sampler, t0s, ecfg);
    LifecycleDayRow row;
    row.day = day;
    row.stage = stage;
    row.n_observed = static_cast<int>(observed.size());
    row.param_checksum = params.checksum();
    row.rrmse = now;
    row.rrmse_base = base;
    row.retention = metrics::retention_ratio(now, base);
    report.days.push_back(row);
  };

  int day = 0;
  eval_day(day++, "baseline");
  for (const LifecycleStage& st : lcfg.schedule.stages) {
    for (int d = 0; d < st.days; ++d) {
      switch (st.kind) {
        case StageKind::Damage: {
          int k = std::min<int>(st.per_day,
                                static_cast<int>(observed.size()) - 1);
          for (int i = 0; i < k; ++i) {
            std::size_t pick = rng.below(observed.size());
            int victim = observed[pick];
            observed.erase(observed.begin() + static_cast<long>(pick));
            damaged.push_back(victim);
          }
          break;
        }
        case StageKind::Repair: {
          int k = std::min<int>(st.per_day, static_cast<int>(damaged.size()));
          for (int i = 0; i < k; ++i) {
            observed.push_back(damaged.front());
            damaged.pop_front();
          }
          std::sort(observed.begin(), observed.end());
          break;
        }
        case StageKind::Add: {
          std::vector<int> pool;
          for (int s = 0; s < w.n_segments(); ++s)
            if (!instrumented_ever.count(s)) pool.push_back(s);
          int k = std::min<int>(st.per_day, static_cast<int>(pool.size()));
          for (int i = 0; i < k; ++i) {
            std::size_t pick = rng.below(pool.size());
            int add = pool[pick];
            pool.erase(pool.begin() + static_cast<long>(pick));
            observed.push_back(add);
            instrumented_ever.insert(add);
          }
          std::sort(observed.begin(), observed.end());
          break;
        }
      }
      eval_day(day++, stage_kind_name(st.kind));
    }
  }
  report.original_observed = original;
  report.final_observed = observed;
  return report;
}

// ---- density sweep and FCD ablation (train per configuration) ----

struct SweepRow {
  double ratio = 0.0;
  std::string task;
  std::optional<double> mae, smape, crps;
};

struct DensitySweepConfig {
  std::vector<double> ratios;
  ModelConfig model;
  TrainingConfig training;
  int k_samples = 10;
  int eval_max_episodes = 16;
  std::uint64_t seed = 0;
};

inline ModelParams train_on_world(const world::World& w,
                                  const FeatureCodec& codec,
                                  const ModelConfig& mcfg,
                                  const TrainingConfig& tcfg) {
  SamplerConfig scfg;
  scfg.history = tcfg.history;
  scfg.horizon = tcfg.horizon;
  scfg.seed = tcfg.seed;
  EpisodeSampler sampler(w, codec, scfg);
  ModelParams params = ModelParams::init(mcfg, tcfg.seed);
  fit_normalization(params, w, codec, sampler.observed_segments(), 0,
                    sampler.train_t_end());
  TrainState st = make_train_state(std::move(params));
  run_training(st, sampler, tcfg);
  return st.best;
}

inline std::vector<SweepRow> eval_subtask_rows(const ModelParams& params,
                                               const world::World& w,
                                               const FeatureCodec& codec,
                                               const TrainingConfig& tcfg,
                                               int k_samples, int max_episodes,
                                               std::uint64_t seed,
                                               double ratio_tag) {
  SamplerConfig scfg;
  scfg.history = tcfg.history;
  scfg.horizon = tcfg.horizon;
  scfg.seed = tcfg.seed;
  EpisodeSampler sampler(w, codec, scfg);
  EvalConfig ecfg;
  ecfg.k_samples = k_samples;
  ecfg.max_episodes = max_episodes;
  ecfg.seed = seed;
  ecfg.with_intervals = false;
  EvalOutput ev = evaluate_model(
      params, sampler, strided_subset(sampler.test_t0s(), max_episodes), ecfg);
  std::vector<SweepRow> rows;
  for (const auto& rep : ev.reports) {
    if (rep.horizon != 0 || rep.task == "all") continue;
    SweepRow row;
    row.ratio = ratio_tag;
    row.task = rep.task;
    row.mae = rep.mae;
    row.smape = rep.smape;
    row.crps = rep.crps;
    rows.push_back(std::move(row));
  }
  return rows;
}

// For each unobserved ratio: fresh sensor split off a common seed base,
// train from scratch, evaluate the three subtasks.
inline std::vector<SweepRow> run_density_sweep(const world::World& base,
                                               const FeatureCodec& codec,
                                               const DensitySweepConfig& cfg) {
  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < cfg.ratios.size(); ++i) {
    double ratio = cfg.ratios[i];
    if (!(ratio > 0.0 && ratio < 1.0))
      throw ConfigError("density sweep: ratios must be in (0,1)");
    world::World w = base;
    w.sensors =
        world::assign_sensors(w.graph, ratio, derive_seed(cfg.seed, i));
    ModelParams trained = train_on_world(w, codec, cfg.model, cfg.training);
    auto part = eval_subtask_rows(trained, w, codec, cfg.training,
                                  cfg.k_samples, cfg.eval_max_episodes,
                                  cfg.seed, ratio);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  return rows;
}

struct AblationRow {
  std::string drop;
  std::string task;
  std::optional<double> mae, smape, crps;
};

struct FcdAblationConfig {
  FcdDrop drop;
  ModelConfig model;
  TrainingConfig training;
  int k_samples = 10;
  int eval_max_episodes = 16;
  std::uint64_t seed = 0;
};

inline std::string drop_label(const FcdDrop& d) {
  if (d.flow && d.speed) return "fcd_flow+fcd_speed";
  if (d.flow) return "fcd_flow";
  if (d.speed) return "fcd_speed";
  return "none";
}

// Zeroes the dropped FCD features at both training and evaluation time.
inline std::vector<AblationRow> run_fcd_ablation(const world::World& w,
                                                 const FcdAblationConfig& cfg) {
  FeatureCodec codec(cfg.drop);
  ModelParams trained = train_on_world(w, codec, cfg.model, cfg.training);
  auto rows = eval_subtask_rows(trained, w, codec, cfg.training, cfg.k_samples,
                                cfg.eval_max_episodes, cfg.seed, 0.0);
  std::vector<AblationRow> out;
  for (const auto& r : rows) {
    AblationRow a;
    a.drop = drop_label(cfg.drop);
    a.task = r.task;
    a.mae = r.mae;
    a.smape = r.smape;
    a.crps = r.crps;
    out.push_back(std::move(a));
  }
  return out;
}

struct PenetrationBinRow {
  double lo = 0.0, hi = 0.0;
  std::size_t count = 0;
  std::optional<double> median, q1, q3;
};

inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  check(!sorted.empty(), "quantile of empty set");
  double pos = q * static_cast<double>(sorted.size() - 1);
  auto lo = static_cast<std::size_t>(std::floor(pos));
  auto hi = static_cast<std::size_t>(std::ceil(pos));
  double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

// Distribution summary of per-sample RRMSE within penetration-rate bins.
// Empty bins are reported with count 0.
inline std::vector<PenetrationBinRow> penetration_binning(
    const std::vector<double>& penetration, const std::vector<double>& rrmse,
    const std::vector<double>& bin_edges) {
  check(penetration.size() == rrmse.size(),
        "penetration_binning: misaligned inputs");
  check(bin_edges.size() >= 2, "penetration_binning: need at least one bin");
  for (std::size_t i = 1; i < bin_edges.size(); ++i)
    check(bin_edges[i] > bin_edges[i - 1],
          "penetration_binning: edges must increase");
  std::vector<PenetrationBinRow> rows(bin_edges.size() - 1);
  std::vector<std::vector<double>> members(rows.size());
  for (std::size_t b = 0; b < rows.size(); ++b) {
    rows[b].lo = bin_edges[b];
    rows[b].hi = bin_edges[b + 1];
  }
  for (std::size_t i = 0; i < penetration.size(); ++i) {
    double p = penetration[i];
    if (p < bin_edges.front() || p > bin_edges.back()) continue;
    std::size_t b = rows.size() - 1;
    for (std::size_t k = 0; k + 1 < bin_edges.size(); ++k)
      if (p >= bin_edges[k] && (p < bin_edges[k + 1] || k + 2 == bin_edges.size())) {
        b = k;
        break;
      }
    members[b].push_back(rrmse[i]);
  }
  for (std::size_t b = 0; b < rows.size(); ++b) {
    rows[b].count = members[b].size();
    if (!members[b].empty()) {
      std::sort(members[b].begin(), members[b].end());
      rows[b].median = quantile_sorted(members[b], 0.5);
      rows[b].q1 = quantile_sorted(members[b], 0.25);
      rows[b].q3 = quantile_sorted(members[b], 0.75);
    }
  }
  return rows;
}

}  // namespace taanp::scenario
