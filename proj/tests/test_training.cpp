#include <gtest/gtest.h>

#include <cmath>

#include "taanp/trainer.hpp"
#include "test_util.hpp"

using namespace taanp;

namespace {

TrainingConfig tiny_training_cfg(int epochs = 3) {
  TrainingConfig c;
  c.beta = 1.0;
  c.lr = 1e-3;
  c.weight_decay = 1e-4;
  c.batch_episodes = 4;
  c.episodes_per_epoch = 16;
  c.max_epochs = epochs;
  c.patience = 0;  // run all epochs
  c.history = 4;
  c.horizon = 4;
  c.val_max_episodes = 6;
  c.seed = 0;
  return c;
}

world::World small_world(std::uint64_t seed = 0, int n_segments = 20) {
  world::WorldConfig wc;
  wc.n_segments = n_segments;
  wc.days = 4;
  wc.noise_sigma = 6.0;
  wc.unobserved_ratio = 0.5;
  wc.missing_rate = 0.05;
  wc.seed = seed;
  return world::generate_world(wc);
}

TrainState fresh_state(const world::World& w, const EpisodeSampler& sampler,
                       Variant v, std::uint64_t seed) {
  ModelConfig cfg = testutil::tiny_model_config(v);
  ModelParams params = ModelParams::init(cfg, seed);
  fit_normalization(params, w, FeatureCodec(), sampler.observed_segments(), 0,
                    sampler.train_t_end());
  return make_train_state(std::move(params));
}

}  // namespace

TEST(Elbo, IdenticalPosteriorsGiveZeroKl) {
  // With dropout off and T' equal to the context, both posteriors coincide.
  ModelConfig cfg = testutil::tiny_model_config(Variant::LNP, 6);
  cfg.dropout_rate = 0.0;
  ModelParams params = ModelParams::init(cfg, 2);
  RngStream erng(1, 1);
  Episode ep = testutil::random_episode(erng, 6, 5, 2);
  std::vector<LabeledPoint> tp;
  for (const auto& c : ep.context) {
    LabeledPoint p;
    p.x = c.x;
    p.y = c.y;
    p.observable = true;
    tp.push_back(p);
  }
  RngStream rng(3, 3);
  ElboResult r = elbo_loss(params, ep, tp, rng, 1.0, RunMode::Train);
  EXPECT_NEAR(r.values.kl, 0.0, 1e-12);
}

TEST(Elbo, KlIsNonNegativeOnRandomPairs) {
  ModelConfig cfg = testutil::tiny_model_config(Variant::TAANP, 6);
  ModelParams params = ModelParams::init(cfg, 4);
  RngStream erng(2, 2);
  RngStream rng(5, 5);
  for (int rep = 0; rep < 50; ++rep) {
    Episode ep = testutil::random_episode(erng, 6, 4 + rep % 5, 2);
    ElboResult r = elbo_loss(params, ep, rng, 1.0, RunMode::Train);
    EXPECT_GE(r.values.kl, -1e-9);
  }
}

TEST(Elbo, CnpHasIdenticallyZeroKl) {
  ModelConfig cfg = testutil::tiny_model_config(Variant::CNP, 6);
  ModelParams params = ModelParams::init(cfg, 4);
  RngStream erng(3, 3);
  RngStream rng(6, 6);
  Episode ep = testutil::random_episode(erng, 6, 5, 2);
  ElboResult r = elbo_loss(params, ep, rng, 1.0, RunMode::Train);
  EXPECT_EQ(r.values.kl, 0.0);
  EXPECT_EQ(r.values.total, r.values.nll);
}

TEST(Elbo, UnitSigmaReducesToHalfMeanSquaredError) {
  // Frozen unit sigma: floor = 1 - softplus(0), zeroed sigma head.
  ModelConfig cfg = testutil::tiny_model_config(Variant::CNP, 6);
  cfg.dropout_rate = 0.0;
  cfg.sigma_floor = 1.0 - std::log(2.0);
  ModelParams params = ModelParams::init(cfg, 5);
  params.dec_sigma_w->value.fill(0.0);
  params.dec_sigma_b->value.fill(0.0);
  RngStream erng(4, 4);
  Episode ep = testutil::random_episode(erng, 6, 5, 2);
  RngStream rng(7, 7);
  ElboResult r = elbo_loss(params, ep, rng, 0.0, RunMode::Train);

  RngStream rng2(7, 7);
  Graph g;
  ForwardOutput fo = forward(g, params, ep, rng2, RunMode::Train);
  double mse_half = 0.0;
  for (std::size_t i = 0; i < ep.targets.size(); ++i) {
    double d = *ep.targets[i].y_true - fo.mu(i, 0);
    mse_half += 0.5 * d * d;
  }
  mse_half /= static_cast<double>(ep.targets.size());
  EXPECT_NEAR(r.values.nll, mse_half, 1e-10);
}

TEST(Training, ZeroLearningRateLeavesParametersUnchanged) {
  world::World w = small_world();
  EpisodeSampler sampler(w, FeatureCodec(), SamplerConfig{4, 4, 0.6, 0.1, 0});
  TrainState st = fresh_state(w, sampler, Variant::TAANP, 1);
  std::uint64_t before = st.params.checksum();
  TrainingConfig cfg = tiny_training_cfg(1);
  cfg.lr = 0.0;
  cfg.weight_decay = 0.0;
  run_training(st, sampler, cfg);
  EXPECT_EQ(st.params.checksum(), before);
}

TEST(Training, SeededRunsAreBitIdentical) {
  world::World w = small_world();
  EpisodeSampler sampler(w, FeatureCodec(), SamplerConfig{4, 4, 0.6, 0.1, 0});
  TrainingConfig cfg = tiny_training_cfg(2);
  TrainState a = fresh_state(w, sampler, Variant::TAANP, 1);
  TrainState b = fresh_state(w, sampler, Variant::TAANP, 1);
  run_training(a, sampler, cfg);
  run_training(b, sampler, cfg);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    EXPECT_EQ(a.history[i].train_total, b.history[i].train_total);
    EXPECT_EQ(a.history[i].val_total, b.history[i].val_total);
  }
  EXPECT_EQ(a.params.checksum(), b.params.checksum());
}

TEST(Training, ValidationImprovesOnSmallWorld) {
  world::World w = small_world(0, 20);
  EpisodeSampler sampler(w, FeatureCodec(), SamplerConfig{4, 4, 0.6, 0.1, 0});
  TrainState st = fresh_state(w, sampler, Variant::TAANP, 7);
  TrainingConfig cfg = tiny_training_cfg(8);
  cfg.episodes_per_epoch = 32;
  LossBreakdown init_val = validation_loss(st.params, sampler, cfg);
  run_training(st, sampler, cfg);
  LossBreakdown trained_val = validation_loss(st.best, sampler, cfg);
  EXPECT_LT(trained_val.nll, init_val.nll);
  EXPECT_LT(st.best_val, init_val.total);
}

TEST(Training, EarlyStopReturnsMinimumValidationSnapshot) {
  world::World w = small_world();
  EpisodeSampler sampler(w, FeatureCodec(), SamplerConfig{4, 4, 0.6, 0.1, 0});
  TrainState st = fresh_state(w, sampler, Variant::LNP, 3);
  TrainingConfig cfg = tiny_training_cfg(10);
  cfg.patience = 2;
  run_training(st, sampler, cfg);
  double min_val = std::numeric_limits<double>::infinity();
  for (const auto& rec : st.history) min_val = std::min(min_val, rec.val_total);
  EXPECT_EQ(st.best_val, min_val);
  LossBreakdown check = validation_loss(st.best, sampler, cfg);
  EXPECT_NEAR(check.total, min_val, 1e-9);
}

TEST(Training, NonFiniteLossAborts) {
  world::World w = small_world();
  EpisodeSampler sampler(w, FeatureCodec(), SamplerConfig{4, 4, 0.6, 0.1, 0});
  TrainState st = fresh_state(w, sampler, Variant::TAANP, 1);
  st.params.parameters()[0]->value(0, 0) =
      std::numeric_limits<double>::quiet_NaN();
  TrainingConfig cfg = tiny_training_cfg(1);
  EXPECT_THROW(run_training(st, sampler, cfg), NumericError);
}

TEST(Training, ResumeContinuesBitIdentically) {
  world::World w = small_world();
  EpisodeSampler sampler(w, FeatureCodec(), SamplerConfig{4, 4, 0.6, 0.1, 0});
  TrainingConfig cfg2 = tiny_training_cfg(2);
  TrainingConfig cfg4 = tiny_training_cfg(4);

  // Continuous 4-epoch run.
  TrainState full = fresh_state(w, sampler, Variant::TAANP, 9);
  run_training(full, sampler, cfg4);

  // 2 epochs, checkpoint through the float64 state file, then 2 more.
  TrainState half = fresh_state(w, sampler, Variant::TAANP, 9);
  run_training(half, sampler, cfg2);
  auto dir = std::filesystem::temp_directory_path() / "taanp_resume_test";
  std::filesystem::create_directories(dir);
  std::string path = (dir / "state.ckpt").string();
  save_training_state(path, half);
  TrainState resumed = load_training_state(path);
  EXPECT_EQ(resumed.params.checksum(), half.params.checksum());
  run_training(resumed, sampler, cfg4);

  ASSERT_EQ(resumed.history.size() + 2, full.history.size());
  for (std::size_t i = 0; i < resumed.history.size(); ++i) {
    EXPECT_EQ(resumed.history[i].train_total, full.history[i + 2].train_total);
    EXPECT_EQ(resumed.history[i].val_total, full.history[i + 2].val_total);
  }
  EXPECT_EQ(resumed.params.checksum(), full.params.checksum());
}

TEST(Training, FrozenUnitSigmaMatchesDedicatedMseLoop) {
  // beta = 0 and sigma frozen at 1: the negative ELBO is exactly half-MSE,
  // so the training trajectory must match an MSE implementation step by
  // step.
  world::World w = small_world(0, 12);
  EpisodeSampler sampler(w, FeatureCodec(), SamplerConfig{4, 4, 0.6, 0.1, 0});
  ModelConfig cfg = testutil::tiny_model_config(Variant::CNP);
  cfg.dropout_rate = 0.0;
  cfg.sigma_floor = 1.0 - std::log(2.0);
  TrainingConfig tc = tiny_training_cfg(2);
  tc.beta = 0.0;
  tc.weight_decay = 0.0;

  // Identity y-normalization keeps sigma = floor + softplus(0) = 1 exactly.
  auto make_frozen = [&] {
    ModelParams params = ModelParams::init(cfg, 21);
    params.dec_sigma_w->value.fill(0.0);
    params.dec_sigma_b->value.fill(0.0);
    params.dec_sigma_w->trainable = false;
    params.dec_sigma_b->trainable = false;
    return make_train_state(ModelParams(params));
  };

  TrainState elbo_state = make_frozen();
  run_training(elbo_state, sampler, tc);

  // Dedicated MSE loop with the same episode stream and optimizer.
  TrainState mse_state = make_frozen();
  std::vector<Parameter*> trainable = mse_state.params.trainable();
  AdamWConfig oc;
  oc.lr = tc.lr;
  oc.weight_decay = 0.0;
  std::vector<Tensor> m, v;
  long step = 0;
  std::vector<double> mse_epoch_losses;
  int steps = std::max(1, tc.episodes_per_epoch / tc.batch_episodes);
  for (int epoch = 0; epoch < tc.max_epochs; ++epoch) {
    RngStream rng(tc.seed, stream_id::train_epoch_base +
                               static_cast<std::uint64_t>(epoch));
    double acc = 0.0;
    int n_done = 0;
    for (int s = 0; s < steps; ++s) {
      mse_state.params.zero_grad();
      for (int b = 0; b < tc.batch_episodes; ++b) {
        std::optional<TrainEpisode> te;
        for (int attempt = 0; attempt < 100 && !te; ++attempt) {
          int t0 = sampler.train_t0s()[rng.below(sampler.train_t0s().size())];
          te = sampler.build_train_episode(t0, rng,
                                           tc.context_subsample_range);
        }
        Graph g;
        Binder bind(g);
        ForwardOutput fo =
            forward(g, bind, mse_state.params, te->episode, rng, RunMode::Train);
        Var loss;
        std::size_t m_total = te->episode.targets.size();
        for (const GroupOutput& grp : fo.groups) {
          Tensor y(grp.target_indices.size(), 1);
          for (std::size_t r = 0; r < grp.target_indices.size(); ++r)
            y(r, 0) = *te->episode.targets[grp.target_indices[r]].y_true;
          Var diff = g.sub(grp.mu, g.constant(std::move(y)));
          Var sq = g.affine(g.sum_all(g.mul(diff, diff)), 0.5, 0.0);
          loss = loss.valid() ? g.add(loss, sq) : sq;
        }
        loss = g.affine(loss, 1.0 / static_cast<double>(m_total), 0.0);
        acc += g.val(loss)(0, 0);
        ++n_done;
        Var scaled =
            g.affine(loss, 1.0 / static_cast<double>(tc.batch_episodes), 0.0);
        g.backward(scaled);
      }
      clip_gradients(trainable, tc.clip_norm);
      adamw_step(trainable, m, v, step, oc);
    }
    mse_epoch_losses.push_back(acc / n_done);
  }

  ASSERT_EQ(elbo_state.history.size(), mse_epoch_losses.size());
  for (std::size_t e = 0; e < mse_epoch_losses.size(); ++e)
    EXPECT_NEAR(elbo_state.history[e].train_nll, mse_epoch_losses[e], 1e-8);
  double max_diff = 0.0;
  auto pa = elbo_state.params.parameters();
  auto pb = mse_state.params.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i)
    for (std::size_t k = 0; k < pa[i]->value.size(); ++k)
      max_diff = std::max(max_diff, std::abs(pa[i]->value.data[k] -
                                             pb[i]->value.data[k]));
  EXPECT_LT(max_diff, 1e-10);
}
