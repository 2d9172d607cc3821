#pragma once

#include <chrono>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "taanp/checkpoint.hpp"
#include "taanp/elbo.hpp"
#include "taanp/optim.hpp"
#include "taanp/sampler.hpp"

namespace taanp {

struct EpochRecord {
  int epoch = 0;
  double train_nll = 0.0;
  double train_kl = 0.0;
  double train_total = 0.0;
  double val_total = 0.0;
  double wall_ms = 0.0;  // diagnostic only; never part of report artifacts
};

// Full resumable training state: parameters, optimizer moments, early
// stopping bookkeeping and the best-validation snapshot.
struct TrainState {
  ModelParams params;
  ModelParams best;
  std::vector<Tensor> adam_m, adam_v;
  long adam_step = 0;
  int next_epoch = 0;
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  int wait = 0;
  bool stopped = false;
  std::vector<EpochRecord> history;
};

inline TrainState make_train_state(ModelParams params) {
  TrainState st;
  st.best = params;
  st.params = std::move(params);
  return st;
}

// Mean validation loss with the latent at its posterior mean and dropout
// off, so the curve is deterministic and comparable across epochs.
inline LossBreakdown validation_loss(const ModelParams& params,
                                     const EpisodeSampler& sampler,
                                     const TrainingConfig& cfg) {
  LossBreakdown acc;
  std::size_t n = 0;
  RngStream unused(0, 0);
  for (int t0 : sampler.val_t0s()) {
    if (static_cast<int>(n) >= cfg.val_max_episodes) break;
    auto ep = sampler.build_val_episode(t0);
    if (!ep) continue;
    ElboResult r =
        elbo_loss(params, *ep, unused, cfg.beta, RunMode::InferPlain);
    acc.nll += r.values.nll;
    acc.kl += r.values.kl;
    acc.total += r.values.total;
    ++n;
  }
  check(n > 0, "validation_loss: no usable validation episodes");
  acc.nll /= static_cast<double>(n);
  acc.kl /= static_cast<double>(n);
  acc.total /= static_cast<double>(n);
  return acc;
}

// Episode-batched negative-ELBO minimization with AdamW, gradient clipping
// and early stopping on validation loss. All stochastic draws for epoch e
// come from the stream (seed, epoch_base + e), which is what makes a
// resumed run continue bit-identically.
inline void run_training(TrainState& st, const EpisodeSampler& sampler,
                         const TrainingConfig& cfg) {
  cfg.validate();
  std::vector<Parameter*> trainable = st.params.trainable();
  AdamWConfig opt;
  opt.lr = cfg.lr;
  opt.weight_decay = cfg.weight_decay;

  const auto& pool = sampler.train_t0s();
  check(!pool.empty(), "run_training: empty training pool");
  int steps = std::max(1, cfg.episodes_per_epoch / cfg.batch_episodes);

  for (int epoch = st.next_epoch; epoch < cfg.max_epochs; ++epoch) {
    auto t_start = std::chrono::steady_clock::now();
    RngStream rng(cfg.seed, stream_id::train_epoch_base +
                                static_cast<std::uint64_t>(epoch));
    LossBreakdown epoch_acc;
    std::size_t episodes_done = 0;

    for (int step = 0; step < steps; ++step) {
      st.params.zero_grad();
      int in_batch = 0;
      for (int b = 0; b < cfg.batch_episodes; ++b) {
        std::optional<TrainEpisode> te;
        for (int attempt = 0; attempt < 100 && !te; ++attempt) {
          int t0 = pool[rng.below(pool.size())];
          te = sampler.build_train_episode(t0, rng,
                                           cfg.context_subsample_range);
        }
        check(te.has_value(), "run_training: could not draw a usable episode");
        ElboResult r = elbo_loss(st.params, te->episode, te->t_prime, rng,
                                 cfg.beta, RunMode::Train);
        if (!std::isfinite(r.values.total))
          throw NumericError("training diverged (non-finite loss) at epoch " +
                             std::to_string(epoch));
        Var scaled = r.graph.affine(
            r.total, 1.0 / static_cast<double>(cfg.batch_episodes), 0.0);
        r.graph.backward(scaled);
        epoch_acc.nll += r.values.nll;
        epoch_acc.kl += r.values.kl;
        epoch_acc.total += r.values.total;
        ++episodes_done;
        ++in_batch;
      }
      (void)in_batch;
      clip_gradients(trainable, cfg.clip_norm);
      adamw_step(trainable, st.adam_m, st.adam_v, st.adam_step, opt);
    }

    LossBreakdown val = validation_loss(st.params, sampler, cfg);
    if (!std::isfinite(val.total))
      throw NumericError("training diverged (non-finite validation loss)");

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_nll = epoch_acc.nll / static_cast<double>(episodes_done);
    rec.train_kl = epoch_acc.kl / static_cast<double>(episodes_done);
    rec.train_total = epoch_acc.total / static_cast<double>(episodes_done);
    rec.val_total = val.total;
    rec.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - t_start)
                      .count();
    st.history.push_back(rec);
    st.next_epoch = epoch + 1;

    if (val.total < st.best_val) {
      st.best_val = val.total;
      st.best_epoch = epoch;
      st.best = st.params;
      st.wait = 0;
    } else {
      ++st.wait;
      if (st.wait >= cfg.patience && cfg.patience > 0) {
        st.stopped = true;
        break;
      }
    }
  }
}

// Ablation switches over the model/inference pair. `full` keeps the
// task-aware queries plus MC sampling at inference; `no_tamqm` collapses to
// the shared-query variant; `no_dropout` zeroes the rate everywhere;
// `plain_dropout` keeps training-time dropout but infers deterministically.
enum class AblationSwitch { Full, NoTamqm, NoDropout, PlainDropout };

inline AblationSwitch ablation_switch_from_name(const std::string& s) {
  if (s == "full") return AblationSwitch::Full;
  if (s == "no_tamqm") return AblationSwitch::NoTamqm;
  if (s == "no_dropout") return AblationSwitch::NoDropout;
  if (s == "plain_dropout") return AblationSwitch::PlainDropout;
  throw ConfigError("unknown ablation switch: " + s);
}

struct AblationPlan {
  ModelConfig model;
  bool mc_inference = true;  // false: single deterministic forward pass
};

inline AblationPlan ablation_variant(ModelConfig base, AblationSwitch sw) {
  AblationPlan plan;
  plan.model = base;
  switch (sw) {
    case AblationSwitch::Full:
      break;
    case AblationSwitch::NoTamqm:
      if (plan.model.variant == Variant::TAANP)
        plan.model.variant = Variant::ANP;
      break;
    case AblationSwitch::NoDropout:
      plan.model.dropout_rate = 0.0;
      break;
    case AblationSwitch::PlainDropout:
      plan.mc_inference = false;
      break;
  }
  return plan;
}

// ---- training-state persistence (float64 payload, resume-exact) ----

inline CheckpointFile train_state_to_checkpoint(const TrainState& st) {
  CheckpointFile ck = model_to_checkpoint(st.params, "f64");
  ck.meta.emplace_back("adam_step", std::to_string(st.adam_step));
  ck.meta.emplace_back("next_epoch", std::to_string(st.next_epoch));
  ck.meta.emplace_back("best_val", format_double(st.best_val));
  ck.meta.emplace_back("best_epoch", std::to_string(st.best_epoch));
  ck.meta.emplace_back("wait", std::to_string(st.wait));
  std::vector<Parameter*> trainable = st.params.trainable();
  for (std::size_t i = 0; i < trainable.size(); ++i) {
    ck.tensors.emplace_back("adam_m." + trainable[i]->name, st.adam_m.empty()
                                ? Tensor(trainable[i]->value.rows,
                                         trainable[i]->value.cols)
                                : st.adam_m[i]);
    ck.tensors.emplace_back("adam_v." + trainable[i]->name, st.adam_v.empty()
                                ? Tensor(trainable[i]->value.rows,
                                         trainable[i]->value.cols)
                                : st.adam_v[i]);
  }
  for (const Parameter* p : st.best.parameters())
    ck.tensors.emplace_back("best." + p->name, p->value);
  return ck;
}

inline TrainState train_state_from_checkpoint(const CheckpointFile& ck) {
  TrainState st = make_train_state(model_from_checkpoint(ck));
  auto meta_num = [&](const std::string& key) {
    const std::string* v = ck.find_meta(key);
    if (!v) throw IoError("training state missing meta key: " + key);
    bool ok = false;
    double d = parse_double(*v, ok);
    if (!ok) throw IoError("bad training-state meta: " + key);
    return d;
  };
  st.adam_step = static_cast<long>(meta_num("adam_step"));
  st.next_epoch = static_cast<int>(meta_num("next_epoch"));
  st.best_val = meta_num("best_val");
  st.best_epoch = static_cast<int>(meta_num("best_epoch"));
  st.wait = static_cast<int>(meta_num("wait"));
  std::vector<Parameter*> trainable = st.params.trainable();
  for (Parameter* p : trainable) {
    const Tensor* m = ck.find_tensor("adam_m." + p->name);
    const Tensor* v = ck.find_tensor("adam_v." + p->name);
    if (!m || !v) throw IoError("training state missing moments for " + p->name);
    st.adam_m.push_back(*m);
    st.adam_v.push_back(*v);
  }
  for (Parameter* p : st.best.parameters()) {
    const Tensor* t = ck.find_tensor("best." + p->name);
    if (!t) throw IoError("training state missing best snapshot for " + p->name);
    p->value = *t;
  }
  st.best.norm = st.params.norm;
  return st;
}

inline void save_training_state(const std::string& path, const TrainState& st) {
  write_checkpoint(path, train_state_to_checkpoint(st));
}

inline TrainState load_training_state(const std::string& path) {
  return train_state_from_checkpoint(read_checkpoint(path));
}

}  // namespace taanp
