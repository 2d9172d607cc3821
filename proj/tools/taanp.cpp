// Command-line entry points: synth, train, eval, place, resilience, sweep.
// Every run writes a resolved-config snapshot and a manifest so results can
// be regenerated byte-identically from the manifest plus input files.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "taanp/checkpoint.hpp"
#include "taanp/dataset.hpp"
#include "taanp/eval.hpp"
#include "taanp/report.hpp"
#include "taanp/scenarios.hpp"
#include "taanp/trainer.hpp"

namespace fs = std::filesystem;
using taanp::Json;

namespace {

Json default_config() {
  Json c;
  c["seed"] = 0;
  c["ablation"] = "full";
  c["world"] = {
      {"n_segments", 60},     {"days", 14},
      {"steps_per_day", 96},  {"epoch_dow", 0},
      {"noise_sigma", 8.0},   {"unobserved_ratio", 0.6},
      {"penetration_lo", 0.02}, {"penetration_hi", 0.10},
      {"missing_rate", 0.0976},
  };
  c["model"] = {
      {"variant", "taanp"}, {"rep_dim", 64},   {"latent_dim", 32},
      {"n_heads", 4},       {"enc_width", 64}, {"dec_width", 64},
      {"lat_width", 64},    {"dropout_rate", 0.1},
      {"sigma_floor", 1e-3},
  };
  c["training"] = {
      {"beta", 1.0},
      {"lr", 1e-3},
      {"weight_decay", 1e-4},
      {"batch_episodes", 8},
      {"episodes_per_epoch", 128},
      {"max_epochs", 40},
      {"patience", 6},
      {"history", 4},
      {"horizon", 4},
      {"subsample_min", 0.3},
      {"subsample_max", 0.9},
      {"clip_norm", 5.0},
      {"val_max_episodes", 48},
      {"val_frac", 0.1},
      {"train_frac", 0.6},
  };
  c["uncertainty"] = {
      {"k_samples", 10},
      {"alpha", 0.05},
      {"qice_bins", 10},
      {"predictive_form", "mixture"},
      {"crps_draws_per_component", 100},
  };
  c["eval"] = {
      {"max_episodes", 48},
      {"pcv_bins", true},
      {"error_rejection", true},
      {"penetration_bins", true},
      {"target_records", false},
  };
  c["scenario"] = {
      {"strategy", "uncertainty_desc"},
      {"batch_size", 4},
      {"rounds", 8},
      {"fine_tune_epochs", 0},
      {"eval_max_episodes", 12},
      {"stages",
       Json::array({
           Json{{"kind", "damage"}, {"days", 3}, {"per_day", 2}},
           Json{{"kind", "repair"}, {"days", 3}, {"per_day", 2}},
           Json{{"kind", "add"}, {"days", 3}, {"per_day", 2}},
       })},
      {"eval_episodes_per_day", 8},
      {"kind", "density"},
      {"ratios", Json::array({0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9})},
      {"drop", Json::array()},
  };
  return c;
}

void deep_merge(Json& base, const Json& over) {
  for (auto it = over.begin(); it != over.end(); ++it) {
    if (it->is_object() && base.contains(it.key()) &&
        base[it.key()].is_object()) {
      deep_merge(base[it.key()], *it);
    } else {
      base[it.key()] = *it;
    }
  }
}

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  std::optional<long long> seed;
  std::optional<std::string> variant;
  std::optional<int> k_samples;
  std::optional<std::string> ablation;
  std::string world_dir;
  std::string checkpoint;
  std::string resume;
};

void add_common_flags(CLI::App* cmd, CommonFlags& f, bool needs_world,
                      bool needs_checkpoint) {
  cmd->add_option("--config", f.config_path, "JSON config file");
  cmd->add_option("--out", f.out_dir,
                  "output directory (default: $TAANP_OUT_ROOT/<command>)");
  cmd->add_option_function<long long>(
      "--seed", [&f](long long v) { f.seed = v; }, "override config seed");
  cmd->add_option_function<std::string>(
      "--variant", [&f](const std::string& v) { f.variant = v; },
      "model variant: cnp|lnp|anp|taanp");
  cmd->add_option_function<int>(
      "--k-samples", [&f](int v) { f.k_samples = v; },
      "MC forward passes at inference");
  cmd->add_option_function<std::string>(
      "--ablation", [&f](const std::string& v) { f.ablation = v; },
      "full|no_tamqm|no_dropout|plain_dropout");
  if (needs_world)
    cmd->add_option("--world", f.world_dir,
                    "dataset directory (default: synthesize from config)");
  if (needs_checkpoint)
    cmd->add_option("--checkpoint", f.checkpoint,
                    "model checkpoint path (or 'checkpoint' in config)");
}

std::string checkpoint_from(const Json& c) {
  if (!c.contains("checkpoint"))
    throw taanp::ConfigError("no checkpoint: pass --checkpoint or set it in the config");
  return c.at("checkpoint").get<std::string>();
}

Json resolve_config(const CommonFlags& f, const std::string& command) {
  Json c = default_config();
  if (!f.config_path.empty()) {
    Json over = Json::parse(taanp::read_text_file(f.config_path));
    deep_merge(c, over);
  }
  if (f.seed) c["seed"] = *f.seed;
  if (f.variant) c["model"]["variant"] = *f.variant;
  if (f.k_samples) c["uncertainty"]["k_samples"] = *f.k_samples;
  if (f.ablation) c["ablation"] = *f.ablation;
  c["command"] = command;
  if (!f.world_dir.empty()) c["world_dir"] = f.world_dir;
  if (!f.checkpoint.empty()) c["checkpoint"] = f.checkpoint;
  return c;
}

std::string resolve_out_dir(const CommonFlags& f, const std::string& command) {
  if (!f.out_dir.empty()) return f.out_dir;
  const char* root = std::getenv("TAANP_OUT_ROOT");
  if (!root || !*root)
    throw taanp::ConfigError(
        "no output directory: pass --out or set TAANP_OUT_ROOT");
  return (fs::path(root) / command).string();
}

taanp::world::WorldConfig world_config_from(const Json& c) {
  const Json& w = c.at("world");
  taanp::world::WorldConfig wc;
  wc.n_segments = w.at("n_segments").get<int>();
  wc.days = w.at("days").get<int>();
  wc.steps_per_day = w.at("steps_per_day").get<int>();
  wc.epoch_dow = w.at("epoch_dow").get<int>();
  wc.noise_sigma = w.at("noise_sigma").get<double>();
  wc.unobserved_ratio = w.at("unobserved_ratio").get<double>();
  wc.penetration_lo = w.at("penetration_lo").get<double>();
  wc.penetration_hi = w.at("penetration_hi").get<double>();
  wc.missing_rate = w.at("missing_rate").get<double>();
  wc.seed = c.at("seed").get<std::uint64_t>();
  return wc;
}

taanp::world::World acquire_world(const Json& c) {
  if (c.contains("world_dir")) {
    taanp::world::World w =
        taanp::world::load_world(c.at("world_dir").get<std::string>());
    w.sensors = taanp::world::assign_sensors(
        w.graph, c.at("world").at("unobserved_ratio").get<double>(),
        c.at("seed").get<std::uint64_t>());
    w.config.seed = c.at("seed").get<std::uint64_t>();
    return w;
  }
  return taanp::world::generate_world(world_config_from(c));
}

taanp::ModelConfig model_config_from(const Json& c) {
  const Json& m = c.at("model");
  taanp::ModelConfig mc;
  mc.variant = taanp::variant_from_name(m.at("variant").get<std::string>());
  mc.x_dim = taanp::FeatureCodec::kDim;
  mc.rep_dim = m.at("rep_dim").get<int>();
  mc.latent_dim = m.at("latent_dim").get<int>();
  mc.n_heads = m.at("n_heads").get<int>();
  mc.enc_width = m.at("enc_width").get<int>();
  mc.dec_width = m.at("dec_width").get<int>();
  mc.lat_width = m.at("lat_width").get<int>();
  mc.dropout_rate = m.at("dropout_rate").get<double>();
  mc.sigma_floor = m.at("sigma_floor").get<double>();
  return mc;
}

taanp::TrainingConfig training_config_from(const Json& c) {
  const Json& t = c.at("training");
  taanp::TrainingConfig tc;
  tc.beta = t.at("beta").get<double>();
  tc.lr = t.at("lr").get<double>();
  tc.weight_decay = t.at("weight_decay").get<double>();
  tc.batch_episodes = t.at("batch_episodes").get<int>();
  tc.episodes_per_epoch = t.at("episodes_per_epoch").get<int>();
  tc.max_epochs = t.at("max_epochs").get<int>();
  tc.patience = t.at("patience").get<int>();
  tc.history = t.at("history").get<int>();
  tc.horizon = t.at("horizon").get<int>();
  tc.context_subsample_range = {t.at("subsample_min").get<double>(),
                                t.at("subsample_max").get<double>()};
  tc.clip_norm = t.at("clip_norm").get<double>();
  tc.val_max_episodes = t.at("val_max_episodes").get<int>();
  tc.seed = c.at("seed").get<std::uint64_t>();
  return tc;
}

taanp::SamplerConfig sampler_config_from(const Json& c) {
  const Json& t = c.at("training");
  taanp::SamplerConfig sc;
  sc.history = t.at("history").get<int>();
  sc.horizon = t.at("horizon").get<int>();
  sc.train_frac = t.at("train_frac").get<double>();
  sc.val_frac = t.at("val_frac").get<double>();
  sc.seed = c.at("seed").get<std::uint64_t>();
  return sc;
}

taanp::EvalConfig eval_config_from(const Json& c) {
  const Json& u = c.at("uncertainty");
  taanp::EvalConfig ec;
  ec.k_samples = u.at("k_samples").get<int>();
  ec.alpha = u.at("alpha").get<double>();
  ec.qice_bins = u.at("qice_bins").get<int>();
  ec.crps_draws_per_component = u.at("crps_draws_per_component").get<int>();
  ec.form = u.at("predictive_form").get<std::string>() == "moment_matched"
                ? taanp::PredictiveForm::MomentMatched
                : taanp::PredictiveForm::Mixture;
  ec.max_episodes = c.at("eval").at("max_episodes").get<int>();
  ec.seed = c.at("seed").get<std::uint64_t>();
  return ec;
}

taanp::AblationPlan ablation_plan_from(const Json& c,
                                       const taanp::ModelConfig& base) {
  return taanp::ablation_variant(
      base, taanp::ablation_switch_from_name(c.at("ablation").get<std::string>()));
}

Json metric_report_json(const taanp::metrics::MetricReport& r) {
  Json j;
  j["record"] = "metrics";
  j["task"] = r.task;
  j["horizon"] = r.horizon;
  j["n_valid"] = r.n_valid;
  auto put = [&](const char* k, const std::optional<double>& v) {
    if (v) j[k] = *v;
  };
  put("mae", r.mae);
  put("rmse", r.rmse);
  put("smape", r.smape);
  put("rrmse", r.rrmse);
  put("r2", r.r2);
  put("crps", r.crps);
  put("picp", r.picp);
  put("qice", r.qice);
  return j;
}

// ---- command bodies; each returns the list of produced files ----

std::vector<std::string> cmd_synth(const Json& c, const std::string& out) {
  taanp::world::World w = taanp::world::generate_world(world_config_from(c));
  std::string dir = (fs::path(out) / "world").string();
  taanp::world::save_world(w, dir);
  return {"world/manifest.txt", "world/segments.csv", "world/adjacency.csv",
          "world/series.csv"};
}

std::vector<std::string> cmd_train(const Json& c, const std::string& out,
                                   const std::string& resume) {
  taanp::world::World w = acquire_world(c);
  taanp::AblationPlan plan = ablation_plan_from(c, model_config_from(c));
  taanp::TrainingConfig tc = training_config_from(c);
  taanp::FeatureCodec codec;
  taanp::EpisodeSampler sampler(w, codec, sampler_config_from(c));

  taanp::TrainState st = [&] {
    if (!resume.empty()) return taanp::load_training_state(resume);
    taanp::ModelParams params = taanp::ModelParams::init(plan.model, tc.seed);
    taanp::fit_normalization(params, w, codec, sampler.observed_segments(), 0,
                             sampler.train_t_end());
    return taanp::make_train_state(std::move(params));
  }();
  taanp::run_training(st, sampler, tc);

  taanp::save_model((fs::path(out) / "model.ckpt").string(), st.best);
  taanp::save_training_state((fs::path(out) / "train_state.ckpt").string(), st);

  taanp::ReportWriter log((fs::path(out) / "train_log.jsonl").string(),
                          "train_log");
  taanp::ReportWriter summary((fs::path(out) / "train_summary.jsonl").string(),
                              "train_summary");
  for (const auto& rec : st.history) {
    Json row;
    row["record"] = "epoch";
    row["epoch"] = rec.epoch;
    row["train_nll"] = rec.train_nll;
    row["train_kl"] = rec.train_kl;
    row["train_total"] = rec.train_total;
    row["val_total"] = rec.val_total;
    summary.add(row);
    row["wall_ms"] = rec.wall_ms;
    log.add(row);
  }
  Json fin;
  fin["record"] = "final";
  fin["epochs_run"] = st.history.size();
  fin["best_epoch"] = st.best_epoch;
  fin["best_val"] = st.best_val;
  fin["early_stopped"] = st.stopped;
  fin["param_checksum"] = st.best.checksum();
  summary.add(fin);
  log.add(fin);
  summary.close();
  log.close();
  // train_log.jsonl carries wall-clock timings; it is a diagnostic, not a
  // report artifact, so it stays out of the manifest's reproducible set.
  return {"model.ckpt", "train_state.ckpt", "train_summary.jsonl"};
}

std::vector<std::string> cmd_eval(const Json& c, const std::string& out) {
  taanp::world::World w = acquire_world(c);
  taanp::ModelParams params =
      taanp::load_model(checkpoint_from(c));
  taanp::AblationPlan plan = ablation_plan_from(c, params.cfg);
  taanp::FeatureCodec codec;
  taanp::EpisodeSampler sampler(w, codec, sampler_config_from(c));
  taanp::EvalConfig ec = eval_config_from(c);
  if (!plan.mc_inference) {
    ec.mc_inference = false;
    ec.k_samples = 1;
  }

  taanp::EvalOutput ev = taanp::evaluate_model(
      params, sampler, taanp::strided_subset(sampler.test_t0s(),
                                             ec.max_episodes),
      ec);

  std::vector<std::string> files;
  taanp::ReportWriter rep((fs::path(out) / "report.jsonl").string(), "eval");
  std::vector<taanp::metrics::MetricReport> sorted = ev.reports;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    return std::tie(a.task, a.horizon) < std::tie(b.task, b.horizon);
  });
  for (const auto& r : sorted) rep.add(metric_report_json(r));
  rep.close();
  files.push_back("report.jsonl");

  if (c.at("eval").at("pcv_bins").get<bool>()) {
    // Sample-level relative error distribution per PCV bin.
    double truth_mean = 0.0;
    std::size_t n = 0;
    for (const auto& r : ev.records)
      if (r.valid) {
        truth_mean += r.y_true;
        ++n;
      }
    truth_mean /= std::max<std::size_t>(1, n);
    std::vector<double> pcv, relerr;
    for (const auto& r : ev.records) {
      if (!r.valid || !r.pcv) continue;
      pcv.push_back(*r.pcv);
      relerr.push_back(100.0 * std::abs(r.y_true - r.mean) / truth_mean);
    }
    taanp::ReportWriter pw((fs::path(out) / "pcv_bins.jsonl").string(),
                           "pcv_bins");
    if (!pcv.empty()) {
      double mx = *std::max_element(pcv.begin(), pcv.end());
      std::vector<double> edges;
      int nbins = 8;
      for (int i = 0; i <= nbins; ++i) edges.push_back(mx * i / nbins);
      auto rows = taanp::scenario::penetration_binning(pcv, relerr, edges);
      for (const auto& b : rows) {
        Json j;
        j["record"] = "pcv_bin";
        j["pcv_lo"] = b.lo;
        j["pcv_hi"] = b.hi;
        j["count"] = b.count;
        if (b.median) j["relerr_median"] = *b.median;
        if (b.q1) j["relerr_q1"] = *b.q1;
        if (b.q3) j["relerr_q3"] = *b.q3;
        pw.add(j);
      }
    }
    pw.close();
    files.push_back("pcv_bins.jsonl");
  }

  if (c.at("eval").at("error_rejection").get<bool>()) {
    std::vector<double> scores, yt, yp;
    for (const auto& r : ev.records) {
      if (!r.valid || !r.pcv) continue;
      scores.push_back(*r.pcv);
      yt.push_back(r.y_true);
      yp.push_back(r.mean);
    }
    taanp::ReportWriter rw((fs::path(out) / "error_rejection.jsonl").string(),
                           "error_rejection");
    if (!scores.empty()) {
      std::vector<double> fr;
      for (int i = 0; i < 10; ++i) fr.push_back(0.1 * i);
      for (const auto& pt :
           taanp::error_rejection_curve(scores, yt, yp, fr)) {
        Json j;
        j["record"] = "rejection";
        j["fraction"] = pt.fraction;
        j["rrmse"] = pt.rrmse;
        j["retained"] = pt.retained;
        rw.add(j);
      }
    }
    rw.close();
    files.push_back("error_rejection.jsonl");
  }

  if (c.at("eval").at("penetration_bins").get<bool>()) {
    // Per-segment forecast RRMSE at the longest horizon, stratified by the
    // segment's (time-averaged) probe penetration rate.
    int hmax = c.at("training").at("horizon").get<int>();
    std::map<int, taanp::metrics::MaskedSeries> per_seg;
    for (const auto& r : ev.records) {
      if (!r.valid || r.horizon != hmax) continue;
      per_seg[r.segment].y_true.push_back(r.y_true);
      per_seg[r.segment].y_pred.push_back(r.mean);
    }
    std::vector<double> pen, rr;
    for (const auto& [seg, series] : per_seg) {
      if (series.y_true.size() < 3) continue;
      try {
        double v = taanp::metrics::rrmse(series);
        pen.push_back(w.fcd.penetration[static_cast<std::size_t>(seg)]);
        rr.push_back(v);
      } catch (const taanp::UndefinedMetric&) {
      }
    }
    taanp::ReportWriter bw((fs::path(out) / "penetration_bins.jsonl").string(),
                           "penetration_bins");
    if (!pen.empty()) {
      double lo = *std::min_element(pen.begin(), pen.end());
      double hi = *std::max_element(pen.begin(), pen.end());
      if (hi <= lo) hi = lo + 1e-6;
      std::vector<double> edges;
      int nbins = 6;
      for (int i = 0; i <= nbins; ++i)
        edges.push_back(lo + (hi - lo) * i / nbins);
      for (const auto& b :
           taanp::scenario::penetration_binning(pen, rr, edges)) {
        Json j;
        j["record"] = "penetration_bin";
        j["penetration_lo"] = b.lo;
        j["penetration_hi"] = b.hi;
        j["count"] = b.count;
        if (b.median) j["rrmse_median"] = *b.median;
        if (b.q1) j["rrmse_q1"] = *b.q1;
        if (b.q3) j["rrmse_q3"] = *b.q3;
        bw.add(j);
      }
    }
    bw.close();
    files.push_back("penetration_bins.jsonl");
  }

  if (c.at("eval").at("target_records").get<bool>()) {
    taanp::ReportWriter tw((fs::path(out) / "targets.jsonl").string(),
                           "targets");
    for (const auto& r : ev.records) {
      Json j;
      j["record"] = "target";
      j["task"] = taanp::subtask_name(r.task);
      j["horizon"] = r.horizon;
      j["segment"] = r.segment;
      j["t"] = r.t;
      j["valid"] = r.valid;
      if (r.valid) j["y_true"] = r.y_true;
      j["mean"] = r.mean;
      j["au"] = r.au;
      j["eu"] = r.eu;
      j["total_var"] = r.total_var;
      if (r.pcv) j["pcv"] = *r.pcv;
      if (r.pit) j["pit"] = *r.pit;
      if (r.lower) j["lower"] = *r.lower;
      if (r.upper) j["upper"] = *r.upper;
      if (r.crps) j["crps"] = *r.crps;
      tw.add(j);
    }
    tw.close();
    files.push_back("targets.jsonl");
  }
  return files;
}

std::vector<std::string> cmd_place(const Json& c, const std::string& out) {
  taanp::world::World w = acquire_world(c);
  taanp::ModelParams params =
      taanp::load_model(checkpoint_from(c));
  const Json& s = c.at("scenario");
  taanp::scenario::PlacementConfig pc;
  pc.strategy.kind = taanp::scenario::placement_kind_from_name(
      s.at("strategy").get<std::string>());
  pc.strategy.batch_size = s.at("batch_size").get<int>();
  pc.rounds = s.at("rounds").get<int>();
  pc.k_samples = c.at("uncertainty").at("k_samples").get<int>();
  pc.eval_max_episodes = s.at("eval_max_episodes").get<int>();
  pc.fine_tune_epochs = s.value("fine_tune_epochs", 0);
  pc.fine_tune_training = training_config_from(c);
  pc.seed = c.at("seed").get<std::uint64_t>();

  taanp::scenario::PlacementReport rep = taanp::scenario::run_placement(
      params, w, taanp::FeatureCodec(), sampler_config_from(c), pc);

  taanp::ReportWriter pw((fs::path(out) / "place.jsonl").string(), "place");
  for (const auto& r : rep.rounds) {
    Json j;
    j["record"] = "placement_round";
    j["scenario_id"] = rep.strategy;
    j["round"] = r.round;
    j["n_observed"] = r.n_observed;
    j["unobserved_ratio"] = r.unobserved_ratio;
    j["param_checksum"] = r.param_checksum;
    j["fine_tuned"] = r.fine_tuned;
    if (r.r2_joint) j["r2"] = *r.r2_joint;
    if (r.rmse_joint) j["rmse"] = *r.rmse_joint;
    if (r.mae_joint) j["mae"] = *r.mae_joint;
    j["added"] = r.added;
    pw.add(j);
  }
  pw.close();
  return {"place.jsonl"};
}

std::vector<std::string> cmd_resilience(const Json& c, const std::string& out) {
  taanp::world::World w = acquire_world(c);
  taanp::ModelParams params =
      taanp::load_model(checkpoint_from(c));
  const Json& s = c.at("scenario");
  taanp::scenario::LifecycleConfig lc;
  for (const Json& st : s.at("stages")) {
    taanp::scenario::LifecycleStage stage;
    stage.kind = taanp::scenario::stage_kind_from_name(
        st.at("kind").get<std::string>());
    stage.days = st.at("days").get<int>();
    stage.per_day = st.at("per_day").get<int>();
    lc.schedule.stages.push_back(stage);
  }
  lc.schedule.validate();
  lc.k_samples = c.at("uncertainty").at("k_samples").get<int>();
  lc.eval_episodes_per_day = s.at("eval_episodes_per_day").get<int>();
  lc.seed = c.at("seed").get<std::uint64_t>();

  taanp::scenario::LifecycleReport rep = taanp::scenario::run_lifecycle(
      params, w, taanp::FeatureCodec(), sampler_config_from(c), lc);

  taanp::ReportWriter rw((fs::path(out) / "resilience.jsonl").string(),
                         "resilience");
  for (const auto& d : rep.days) {
    Json j;
    j["record"] = "lifecycle_day";
    j["scenario_id"] = "damage_repair_addition";
    j["day"] = d.day;
    j["stage"] = d.stage;
    j["n_observed"] = d.n_observed;
    j["param_checksum"] = d.param_checksum;
    j["rrmse"] = d.rrmse;
    j["rrmse_base"] = d.rrmse_base;
    j["retention"] = d.retention;
    rw.add(j);
  }
  rw.close();
  return {"resilience.jsonl"};
}

std::vector<std::string> cmd_sweep(const Json& c, const std::string& out) {
  taanp::world::World w = acquire_world(c);
  const Json& s = c.at("scenario");
  std::string kind = s.at("kind").get<std::string>();
  taanp::ReportWriter sw((fs::path(out) / "sweep.jsonl").string(), "sweep");

  taanp::AblationPlan plan = ablation_plan_from(c, model_config_from(c));
  if (kind == "density") {
    taanp::scenario::DensitySweepConfig dc;
    dc.ratios = s.at("ratios").get<std::vector<double>>();
    dc.model = plan.model;
    dc.training = training_config_from(c);
    dc.k_samples = c.at("uncertainty").at("k_samples").get<int>();
    dc.eval_max_episodes = s.at("eval_max_episodes").get<int>();
    dc.seed = c.at("seed").get<std::uint64_t>();
    auto rows = taanp::scenario::run_density_sweep(w, taanp::FeatureCodec(), dc);
    for (const auto& r : rows) {
      Json j;
      j["record"] = "density_point";
      j["scenario_id"] = "density_sweep";
      j["unobserved_ratio"] = r.ratio;
      j["task"] = r.task;
      if (r.mae) j["mae"] = *r.mae;
      if (r.smape) j["smape"] = *r.smape;
      if (r.crps) j["crps"] = *r.crps;
      sw.add(j);
    }
  } else if (kind == "fcd") {
    std::vector<std::string> drop = s.at("drop").get<std::vector<std::string>>();
    taanp::scenario::FcdAblationConfig fc;
    for (const std::string& d : drop) {
      if (d == "fcd_flow") fc.drop.flow = true;
      else if (d == "fcd_speed") fc.drop.speed = true;
      else throw taanp::ConfigError("unknown FCD feature to drop: " + d);
    }
    fc.model = plan.model;
    fc.training = training_config_from(c);
    fc.k_samples = c.at("uncertainty").at("k_samples").get<int>();
    fc.eval_max_episodes = s.at("eval_max_episodes").get<int>();
    fc.seed = c.at("seed").get<std::uint64_t>();
    auto rows = taanp::scenario::run_fcd_ablation(w, fc);
    for (const auto& r : rows) {
      Json j;
      j["record"] = "fcd_ablation";
      j["scenario_id"] = "fcd_ablation";
      j["drop"] = r.drop;
      j["task"] = r.task;
      if (r.mae) j["mae"] = *r.mae;
      if (r.smape) j["smape"] = *r.smape;
      if (r.crps) j["crps"] = *r.crps;
      sw.add(j);
    }
  } else {
    throw taanp::ConfigError("unknown sweep kind: " + kind);
  }
  sw.close();
  return {"sweep.jsonl"};
}

int run_command(const std::string& command, const CommonFlags& flags) {
  auto t_start = std::chrono::steady_clock::now();
  Json resolved = resolve_config(flags, command);
  std::string out = resolve_out_dir(flags, command);
  fs::create_directories(out);

  std::string cfg_path = (fs::path(out) / "config.resolved.json").string();
  std::string cfg_body = resolved.dump(2) + "\n";
  taanp::write_text_file(cfg_path, cfg_body);

  taanp::RunManifest manifest;
  manifest.command = command;
  manifest.seed = resolved.at("seed").get<std::uint64_t>();
  manifest.config_path = cfg_path;
  manifest.config_hash = taanp::fnv1a64(cfg_body);

  try {
    if (command == "synth") manifest.files = cmd_synth(resolved, out);
    else if (command == "train")
      manifest.files = cmd_train(resolved, out, flags.resume);
    else if (command == "eval") manifest.files = cmd_eval(resolved, out);
    else if (command == "place") manifest.files = cmd_place(resolved, out);
    else if (command == "resilience")
      manifest.files = cmd_resilience(resolved, out);
    else if (command == "sweep") manifest.files = cmd_sweep(resolved, out);
    else throw taanp::ConfigError("unknown command: " + command);
  } catch (const std::exception& e) {
    manifest.status = std::string("error: ") + e.what();
    manifest.wall_ms = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - t_start)
                           .count();
    taanp::write_manifest(out, manifest);
    throw;
  }
  manifest.wall_ms = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - t_start)
                         .count();
  taanp::write_manifest(out, manifest);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"probabilistic traffic state inference toolkit"};
  app.require_subcommand(1);

  struct Sub {
    const char* name;
    const char* help;
    bool world;
    bool ckpt;
  };
  const std::vector<Sub> subs = {
      {"synth", "generate and save a synthetic world", false, false},
      {"train", "train a model variant on a world", true, false},
      {"eval", "evaluate a checkpoint on held-out data", true, true},
      {"place", "uncertainty-guided incremental sensor placement", true, true},
      {"resilience", "damage-repair-addition lifecycle", true, true},
      {"sweep", "density or FCD-ablation sweep", true, false},
  };
  std::vector<CommonFlags> flags(subs.size());
  std::vector<CLI::App*> cmds;
  for (std::size_t i = 0; i < subs.size(); ++i) {
    CLI::App* cmd = app.add_subcommand(subs[i].name, subs[i].help);
    add_common_flags(cmd, flags[i], subs[i].world, subs[i].ckpt);
    if (std::string(subs[i].name) == "train")
      cmd->add_option("--resume", flags[i].resume,
                      "resume from a training-state checkpoint");
    cmds.push_back(cmd);
  }

  CLI11_PARSE(app, argc, argv);

  try {
    for (std::size_t i = 0; i < subs.size(); ++i)
      if (cmds[i]->parsed()) return run_command(subs[i].name, flags[i]);
    std::cerr << "no command given\n";
    return 1;
  } catch (const taanp::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const taanp::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const taanp::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const taanp::ContractError& e) {
    std::cerr << "internal contract violation: " << e.what() << "\n";
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
