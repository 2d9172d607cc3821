#include <gtest/gtest.h>

#include <cmath>

#include "taanp/metrics.hpp"
#include "taanp/rng.hpp"
#include "taanp/uncertainty.hpp"

using namespace taanp;
using namespace taanp::metrics;

namespace {

// Numerical integration of the defining integral
// crps = int (F(x) - 1(x >= y))^2 dx, split at the kink.
double crps_by_quadrature(double mu, double sigma, double y) {
  auto integrand_left = [&](double x) {
    double f = normal_cdf((x - mu) / sigma);
    return f * f;
  };
  auto integrand_right = [&](double x) {
    double f = normal_cdf((x - mu) / sigma) - 1.0;
    return f * f;
  };
  auto simpson = [](auto f, double a, double b, int n) {
    if (b <= a) return 0.0;
    if (n % 2) ++n;
    double h = (b - a) / n;
    double acc = f(a) + f(b);
    for (int i = 1; i < n; ++i) acc += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
    return acc * h / 3.0;
  };
  double lo = std::min(mu - 14.0 * sigma, y - 14.0 * sigma);
  double hi = std::max(mu + 14.0 * sigma, y + 14.0 * sigma);
  return simpson(integrand_left, lo, y, 4000) +
         simpson(integrand_right, y, hi, 4000);
}

}  // namespace

TEST(BasicMetrics, PerfectPrediction) {
  MaskedSeries s{{1, 2, 3}, {1, 2, 3}, {}};
  EXPECT_DOUBLE_EQ(mae(s), 0.0);
  EXPECT_DOUBLE_EQ(rmse(s), 0.0);
  EXPECT_DOUBLE_EQ(r2(s), 1.0);
  EXPECT_DOUBLE_EQ(smape(s), 0.0);
  EXPECT_DOUBLE_EQ(rrmse(s), 0.0);
}

TEST(BasicMetrics, ArithmeticCase) {
  MaskedSeries s{{0, 2}, {1, 1}, {}};
  EXPECT_DOUBLE_EQ(mae(s), 1.0);
  EXPECT_DOUBLE_EQ(rmse(s), 1.0);
  EXPECT_DOUBLE_EQ(r2(s), 0.0);
}

TEST(BasicMetrics, ConstantPredictorHasZeroR2) {
  MaskedSeries s{{1, 2, 3, 6}, {3, 3, 3, 3}, {}};
  EXPECT_DOUBLE_EQ(r2(s), 0.0);
}

TEST(BasicMetrics, UndefinedCases) {
  MaskedSeries empty{{1.0}, {1.0}, {0}};
  EXPECT_THROW(mae(empty), UndefinedMetric);
  MaskedSeries flat{{2, 2, 2}, {1, 2, 3}, {}};
  EXPECT_THROW(r2(flat), UndefinedMetric);
  MaskedSeries zero_mean{{0, 0}, {1, 1}, {}};
  EXPECT_THROW(rrmse(zero_mean), UndefinedMetric);
}

TEST(Smape, AnalyticCases) {
  MaskedSeries one_term{{0}, {5}, {}};
  EXPECT_DOUBLE_EQ(smape(one_term), 200.0);
  MaskedSeries hundred{{100}, {50}, {}};
  EXPECT_NEAR(smape(hundred), 66.66666666666667, 1e-12);
  MaskedSeries zero_zero{{0, 10}, {0, 10}, {}};
  EXPECT_DOUBLE_EQ(smape(zero_zero), 0.0);  // 0/0 terms contribute 0
}

TEST(Rrmse, ArithmeticAndScaleInvariance) {
  MaskedSeries s{{10, 10}, {9, 11}, {}};
  EXPECT_DOUBLE_EQ(rrmse(s), 10.0);
  MaskedSeries scaled{{30, 30}, {27, 33}, {}};
  EXPECT_DOUBLE_EQ(rrmse(scaled), rrmse(s));
}

TEST(CrpsGaussian, MatchesQuadratureOnGrid) {
  for (double mu : {-2.0, 0.0, 1.5}) {
    for (double sigma : {0.3, 1.0, 4.0}) {
      for (double y : {-3.0, 0.0, 0.7, 5.0}) {
        double closed = crps_gaussian(mu, sigma, y);
        double quad = crps_by_quadrature(mu, sigma, y);
        EXPECT_NEAR(closed, quad, 1e-6)
            << "mu=" << mu << " sigma=" << sigma << " y=" << y;
      }
    }
  }
}

TEST(CrpsGaussian, ReferenceValueAndLimits) {
  EXPECT_NEAR(crps_gaussian(0, 1, 0), 0.23369497725510928, 1e-9);
  // Degenerate forecast tends to absolute error.
  EXPECT_NEAR(crps_gaussian(0, 1e-9, 2.5), 2.5, 1e-6);
  // Symmetry in the residual.
  EXPECT_DOUBLE_EQ(crps_gaussian(0, 1, 0.8), crps_gaussian(0, 1, -0.8));
  EXPECT_THROW(crps_gaussian(0, 0.0, 1), NumericError);
  EXPECT_GE(crps_gaussian(3, 2, -10), 0.0);
}

TEST(CrpsSamples, DegenerateAndPerfect) {
  EXPECT_DOUBLE_EQ(crps_samples({4.0}, 1.0), 3.0);
  EXPECT_DOUBLE_EQ(crps_samples({2.0, 2.0, 2.0}, 2.0), 0.0);
}

TEST(CrpsSamples, SortTrickMatchesNaiveDoubleSum) {
  RngStream rng(1, 1);
  std::vector<double> xs;
  for (int i = 0; i < 200; ++i) xs.push_back(rng.gaussian(3, 2));
  double y = 2.0;
  double naive1 = 0.0, naive2 = 0.0;
  for (double a : xs) naive1 += std::abs(a - y);
  for (double a : xs)
    for (double b : xs) naive2 += std::abs(a - b);
  double n = static_cast<double>(xs.size());
  double naive = naive1 / n - 0.5 * naive2 / (n * n);
  EXPECT_NEAR(crps_samples(xs, y), naive, 1e-12);
}

TEST(CrpsSamples, ConvergesToClosedForm) {
  RngStream rng(2, 2);
  std::vector<double> xs;
  for (int i = 0; i < 10000; ++i) xs.push_back(rng.gaussian());
  EXPECT_NEAR(crps_samples(xs, 0.0), 0.2337, 0.01);
}

TEST(Picp, DegenerateCoverage) {
  std::vector<double> y{1, 2, 3};
  EXPECT_DOUBLE_EQ(picp({-1e308, -1e308, -1e308}, {1e308, 1e308, 1e308}, y),
                   1.0);
  EXPECT_DOUBLE_EQ(picp({10, 10, 10}, {20, 20, 20}, y), 0.0);
  // Bounds are inclusive.
  EXPECT_DOUBLE_EQ(picp({1, 2, 3}, {1, 2, 3}, y), 1.0);
}

TEST(Picp, CalibratedGaussianCoverage) {
  RngStream rng(3, 3);
  const int n = 100000;
  const double z = 1.9599639845400545;
  std::vector<double> lo(n), hi(n), y(n);
  for (int i = 0; i < n; ++i) {
    double mu = rng.gaussian(50, 20);
    double sigma = 0.5 + rng.uniform() * 5.0;
    y[static_cast<std::size_t>(i)] = rng.gaussian(mu, sigma);
    lo[static_cast<std::size_t>(i)] = mu - z * sigma;
    hi[static_cast<std::size_t>(i)] = mu + z * sigma;
  }
  double cov = picp(lo, hi, y);
  EXPECT_GE(cov, 0.947);
  EXPECT_LE(cov, 0.953);
}

TEST(Qice, UniformPitIsZero) {
  std::vector<double> pits;
  for (int b = 0; b < 10; ++b)
    for (int i = 0; i < 7; ++i) pits.push_back(b / 10.0 + 0.05);
  EXPECT_DOUBLE_EQ(qice(pits, 10), 0.0);
}

TEST(Qice, SingleBinPileupHitsDegenerateMaximum) {
  // Every truth below the first decile: r1 = 1, others 0 -> 0.18 for N=10,
  // which equals the 2(N-1)/N^2 bound.
  std::vector<double> pits(500, 0.03);
  EXPECT_NEAR(qice(pits, 10), 0.18, 1e-12);
  EXPECT_NEAR(qice(pits, 10), 2.0 * 9.0 / 100.0, 1e-12);
}

TEST(Qice, CalibratedSamplesAreNearZero) {
  RngStream rng(4, 4);
  std::vector<double> pits;
  for (int i = 0; i < 100000; ++i) {
    double mu = rng.gaussian(0, 3);
    double sigma = 0.5 + rng.uniform();
    double y = rng.gaussian(mu, sigma);
    pits.push_back(normal_cdf((y - mu) / sigma));
  }
  EXPECT_LT(qice(pits, 10), 0.01);
}

TEST(PitHistogram, ShapesDiagnoseMiscalibration) {
  RngStream rng(5, 5);
  std::vector<double> calibrated, overconfident, shifted;
  for (int i = 0; i < 40000; ++i) {
    double y = rng.gaussian();
    calibrated.push_back(normal_cdf(y));
    // Predictive sigma half the truth: U-shaped PIT.
    overconfident.push_back(normal_cdf(y / 0.5));
    // Forecast mean shifted below the truth: right-skewed PIT.
    shifted.push_back(normal_cdf((y + 1.0)));
  }
  auto flat = pit_histogram(calibrated, 10);
  auto ushape = pit_histogram(overconfident, 10);
  auto right = pit_histogram(shifted, 10);

  double expect_flat = 4000.0;
  for (auto c : flat) EXPECT_NEAR(c, expect_flat, 0.06 * expect_flat);
  EXPECT_GT(ushape.front(), 1.5 * expect_flat);
  EXPECT_GT(ushape.back(), 1.5 * expect_flat);
  EXPECT_GT(right.back(), 2.0 * right.front());
  double mass_top =
      static_cast<double>(right[8] + right[9]) / shifted.size();
  EXPECT_GT(mass_top, 0.4);
}

TEST(Retention, RatioCases) {
  EXPECT_DOUBLE_EQ(retention_ratio(25.0, 25.0), 1.0);
  EXPECT_DOUBLE_EQ(retention_ratio(50.0, 25.0), 0.5);
  EXPECT_THROW(retention_ratio(0.0, 1.0), NumericError);
  EXPECT_THROW(retention_ratio(1.0, -2.0), NumericError);
}

TEST(Masking, InvalidEntriesNeverTouchMetrics) {
  MaskedSeries base{{10, 20, 30}, {11, 19, 33}, {}};
  MaskedSeries noisy{{10, 1e9, 20, -777, 30},
                     {11, -1e9, 19, 42, 33},
                     {1, 0, 1, 0, 1}};
  EXPECT_DOUBLE_EQ(mae(base), mae(noisy));
  EXPECT_DOUBLE_EQ(rmse(base), rmse(noisy));
  EXPECT_DOUBLE_EQ(smape(base), smape(noisy));
  EXPECT_DOUBLE_EQ(rrmse(base), rrmse(noisy));
  EXPECT_DOUBLE_EQ(r2(base), r2(noisy));
}

TEST(Grouping, PooledMaeIsCountWeightedMeanOfGroups) {
  MaskedSeries g1{{10, 20}, {12, 21}, {}};
  MaskedSeries g2{{5, 5, 5}, {7, 4, 5}, {}};
  MaskedSeries pooled{{10, 20, 5, 5, 5}, {12, 21, 7, 4, 5}, {}};
  double w = (mae(g1) * 2 + mae(g2) * 3) / 5.0;
  EXPECT_NEAR(mae(pooled), w, 1e-12);
}
