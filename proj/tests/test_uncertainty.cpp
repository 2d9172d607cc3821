#include <gtest/gtest.h>

#include "taanp/uncertainty.hpp"
#include "test_util.hpp"

using namespace taanp;

namespace {

McSampleSet make_set(const std::vector<std::vector<std::pair<double, double>>>&
                         per_target_samples) {
  // per_target_samples[t][k] = (mu, sigma); all targets need equal K.
  McSampleSet set;
  set.n_targets = per_target_samples.size();
  std::size_t k = per_target_samples.front().size();
  for (std::size_t i = 0; i < k; ++i) {
    Tensor mu(set.n_targets, 1), sg(set.n_targets, 1);
    for (std::size_t t = 0; t < set.n_targets; ++t) {
      mu(t, 0) = per_target_samples[t][i].first;
      sg(t, 0) = per_target_samples[t][i].second;
    }
    set.mu.push_back(mu);
    set.sigma.push_back(sg);
  }
  return set;
}

}  // namespace

TEST(Decompose, ArithmeticCase) {
  // Samples {(0,1),(2,sqrt 3)}: mean 1, au 2, eu 1, total 3.
  McSampleSet set =
      make_set({{{0.0, 1.0}, {2.0, std::sqrt(3.0)}}});
  UncertaintyDecomposition d = decompose(set);
  EXPECT_DOUBLE_EQ(d.mean[0], 1.0);
  EXPECT_DOUBLE_EQ(d.au[0], 2.0);
  EXPECT_DOUBLE_EQ(d.eu[0], 1.0);
  EXPECT_DOUBLE_EQ(d.total_var[0], 3.0);
}

TEST(Decompose, EqualMeansGiveZeroEu) {
  McSampleSet set = make_set({{{5.0, 1.0}, {5.0, 2.0}, {5.0, 0.5}}});
  UncertaintyDecomposition d = decompose(set);
  EXPECT_EQ(d.eu[0], 0.0);
  EXPECT_DOUBLE_EQ(d.total_var[0], d.au[0]);
}

TEST(Decompose, TotalIsExactSumByConstruction) {
  RngStream rng(1, 1);
  std::vector<std::vector<std::pair<double, double>>> samples(50);
  for (auto& t : samples)
    for (int k = 0; k < 10; ++k)
      t.emplace_back(rng.gaussian(20, 5), 0.5 + std::abs(rng.gaussian()));
  UncertaintyDecomposition d = decompose(make_set(samples));
  for (std::size_t t = 0; t < d.size(); ++t)
    EXPECT_EQ(d.total_var[t], d.au[t] + d.eu[t]);
}

TEST(Decompose, MonteCarloValidatesTotalVariance) {
  // Draw outcomes from the mixture; empirical variance must match au + eu
  // within 2%.
  RngStream rng(7, 7);
  std::vector<std::vector<std::pair<double, double>>> samples(1);
  for (int k = 0; k < 10; ++k)
    samples[0].emplace_back(rng.gaussian(50, 4), 1.0 + rng.uniform() * 3.0);
  McSampleSet set = make_set(samples);
  UncertaintyDecomposition d = decompose(set);

  const int n = 100000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    std::size_t comp = rng.below(set.k());
    double y = rng.gaussian(set.mu[comp](0, 0), set.sigma[comp](0, 0));
    sum += y;
    sq += y * y;
  }
  double mean = sum / n;
  double var = sq / n - mean * mean;
  EXPECT_NEAR(var, d.total_var[0], 0.02 * d.total_var[0]);
  EXPECT_NEAR(mean, d.mean[0], 0.05);
}

TEST(Decompose, PcvGuardExcludesNearZeroMeans) {
  McSampleSet set = make_set({{{0.5, 1.0}}, {{100.0, 5.0}}});
  UncertaintyDecomposition d = decompose(set);
  EXPECT_FALSE(d.pcv[0].has_value());
  ASSERT_TRUE(d.pcv[1].has_value());
  EXPECT_NEAR(*d.pcv[1], 5.0, 1e-12);  // 5/100 * 100%
}

TEST(PredictiveCdf, SingleGaussianCases) {
  McSampleSet set = make_set({{{0.0, 1.0}}});
  EXPECT_DOUBLE_EQ(predictive_cdf(set, 0, 0.0), 0.5);
  EXPECT_NEAR(predictive_cdf(set, 0, 1.6449), 0.95, 1e-4);
  EXPECT_NEAR(predictive_cdf(set, 0, 1e9), 1.0, 1e-15);
  EXPECT_NEAR(predictive_cdf(set, 0, -1e9), 0.0, 1e-15);
}

TEST(PredictiveCdf, MonotoneAndBounded) {
  RngStream rng(3, 3);
  std::vector<std::vector<std::pair<double, double>>> samples(1);
  for (int k = 0; k < 7; ++k)
    samples[0].emplace_back(rng.gaussian(10, 6), 0.3 + rng.uniform() * 2);
  McSampleSet set = make_set(samples);
  double prev = -1.0;
  for (double y = -30.0; y <= 50.0; y += 0.5) {
    double c = predictive_cdf(set, 0, y);
    EXPECT_GE(c, 0.0);
    EXPECT_LE(c, 1.0);
    EXPECT_GE(c, prev);
    prev = c;
  }
}

TEST(Interval, StandardNormalQuantiles) {
  McSampleSet set = make_set({{{0.0, 1.0}}});
  PredictionInterval pi = interval(set, 0, 0.05);
  EXPECT_NEAR(pi.lower, -1.9599639845400545, 1e-6);
  EXPECT_NEAR(pi.upper, 1.9599639845400545, 1e-6);
}

TEST(Interval, MixtureOfIdenticalComponentsReduces) {
  McSampleSet one = make_set({{{3.0, 2.0}}});
  McSampleSet many = make_set({{{3.0, 2.0}, {3.0, 2.0}, {3.0, 2.0}}});
  PredictionInterval a = interval(one, 0, 0.1);
  PredictionInterval b = interval(many, 0, 0.1);
  EXPECT_NEAR(a.lower, b.lower, 1e-9);
  EXPECT_NEAR(a.upper, b.upper, 1e-9);
}

TEST(Interval, DegenerateAlphaNarrowsToMedian) {
  McSampleSet set = make_set({{{5.0, 1.5}}});
  PredictionInterval pi = interval(set, 0, 0.999);
  EXPECT_NEAR(pi.lower, 5.0, 1e-2);
  EXPECT_NEAR(pi.upper, 5.0, 1e-2);
  EXPECT_LE(pi.lower, pi.upper);
}

TEST(Interval, CoverageSelfConsistency) {
  RngStream rng(9, 9);
  std::vector<std::vector<std::pair<double, double>>> samples(1);
  for (int k = 0; k < 10; ++k)
    samples[0].emplace_back(rng.gaussian(0, 3), 0.5 + rng.uniform());
  McSampleSet set = make_set(samples);
  for (double alpha : {0.05, 0.1, 0.5}) {
    PredictionInterval pi = interval(set, 0, alpha);
    double mass =
        predictive_cdf(set, 0, pi.upper) - predictive_cdf(set, 0, pi.lower);
    EXPECT_NEAR(mass, 1.0 - alpha, 1e-6);
  }
}

TEST(Interval, BadAlphaThrows) {
  McSampleSet set = make_set({{{0.0, 1.0}}});
  EXPECT_THROW(interval(set, 0, 0.0), ConfigError);
  EXPECT_THROW(interval(set, 0, 1.0), ConfigError);
}

TEST(McInfer, KBelowOneThrowsAndSeedsReproduce) {
  ModelConfig cfg = testutil::tiny_model_config(Variant::TAANP, 6);
  ModelParams params = ModelParams::init(cfg, 3);
  RngStream erng(5, 5);
  Episode ep = testutil::random_episode(erng, 6, 4, 2);
  EXPECT_THROW(mc_infer(params, ep, 0, 1), ConfigError);

  McSampleSet a = mc_infer(params, ep, 5, 42);
  McSampleSet b = mc_infer(params, ep, 5, 42);
  for (std::size_t k = 0; k < a.k(); ++k) EXPECT_EQ(a.mu[k].data, b.mu[k].data);

  McSampleSet single = mc_infer(params, ep, 1, 42);
  UncertaintyDecomposition d = decompose(single);
  for (std::size_t t = 0; t < d.size(); ++t) EXPECT_EQ(d.eu[t], 0.0);
}

TEST(McInfer, ZeroDropoutRateCollapsesToPlainInference) {
  ModelConfig cfg = testutil::tiny_model_config(Variant::CNP, 6);
  cfg.dropout_rate = 0.0;
  ModelParams params = ModelParams::init(cfg, 8);
  RngStream erng(6, 6);
  Episode ep = testutil::random_episode(erng, 6, 4, 2);
  McSampleSet mc = mc_infer(params, ep, 4, 9);
  McSampleSet plain = plain_infer(params, ep);
  for (std::size_t k = 0; k < mc.k(); ++k) {
    EXPECT_EQ(mc.mu[k].data, plain.mu[0].data);
    EXPECT_EQ(mc.sigma[k].data, plain.sigma[0].data);
  }
  UncertaintyDecomposition d = decompose(mc);
  for (std::size_t t = 0; t < d.size(); ++t) EXPECT_EQ(d.eu[t], 0.0);
}

TEST(RejectionCurve, NoRejectionRecoversFullRrmse) {
  std::vector<double> scores{3, 1, 2, 5, 4};
  std::vector<double> yt{10, 12, 9, 11, 10};
  std::vector<double> yp{11, 12, 9, 14, 10};
  auto curve = error_rejection_curve(scores, yt, yp, {0.0});
  metrics::MaskedSeries s{yt, yp, {}};
  EXPECT_DOUBLE_EQ(curve[0].rrmse, metrics::rrmse(s));
  EXPECT_EQ(curve[0].retained, yt.size());
}

TEST(RejectionCurve, PerfectRankingIsMonotoneDecreasing) {
  // Score equals the absolute error: rejecting high-score first can only
  // shrink RRMSE.
  RngStream rng(4, 4);
  std::vector<double> yt, yp, scores;
  for (int i = 0; i < 400; ++i) {
    double y = 50.0 + rng.uniform() * 10.0;
    double err = rng.uniform() * 20.0;
    yt.push_back(y);
    yp.push_back(y + err);
    scores.push_back(err);
  }
  std::vector<double> fr;
  for (int i = 0; i < 9; ++i) fr.push_back(0.1 * i);
  auto curve = error_rejection_curve(scores, yt, yp, fr);
  for (std::size_t i = 1; i < curve.size(); ++i)
    EXPECT_LE(curve[i].rrmse, curve[i - 1].rrmse + 1e-12);
}

TEST(RejectionCurve, RandomScoresGiveFlatCurve) {
  RngStream rng(5, 5);
  std::vector<double> yt, yp, scores;
  for (int i = 0; i < 5000; ++i) {
    double y = 100.0 + rng.gaussian() * 5.0;
    yt.push_back(y);
    yp.push_back(y + rng.gaussian() * 8.0);
    scores.push_back(rng.uniform());  // independent of the error
  }
  auto curve = error_rejection_curve(scores, yt, yp, {0.0, 0.3, 0.6});
  for (std::size_t i = 1; i < curve.size(); ++i)
    EXPECT_NEAR(curve[i].rrmse, curve[0].rrmse, 0.08 * curve[0].rrmse);
}

TEST(RejectionCurve, MisalignedInputsThrow) {
  EXPECT_THROW(error_rejection_curve({1.0}, {1.0, 2.0}, {1.0}, {0.0}),
               ContractError);
}
