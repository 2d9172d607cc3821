#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "taanp/common.hpp"

namespace taanp {

// Counter-based stream: output i is a pure function of (seed, stream_id, i),
// so a stream can be reconstructed at any point and distinct stream ids are
// statistically independent. The mix is SplitMix64's finalizer over a
// Weyl-sequence counter.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id)
      : base_(mix(mix(seed + 0x9e3779b97f4a7c15ull) ^
                  mix(stream_id + 0xbf58476d1ce4e5b9ull))),
        counter_(0) {}

  std::uint64_t seed_base() const { return base_; }

  std::uint64_t next_u64() {
    std::uint64_t x = base_ + (counter_++) * 0x9e3779b97f4a7c15ull;
    return mix(x);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in (0, 1].
  double uniform_open() { return 1.0 - uniform(); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller without caching; consumes two uniforms per draw so the
  // stream position stays a simple function of the number of calls.
  double gaussian() {
    double u1 = uniform_open();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  double gaussian(double mu, double sigma) { return mu + sigma * gaussian(); }

  // Unbiased integer in [0, n) via Lemire's multiply-shift with rejection.
  std::uint64_t below(std::uint64_t n) {
    check(n > 0, "RngStream::below requires n > 0");
    while (true) {
      std::uint64_t x = next_u64();
      __uint128_t m = static_cast<__uint128_t>(x) * n;
      auto lo = static_cast<std::uint64_t>(m);
      if (lo >= n || lo >= (0ull - n) % n) {
        return static_cast<std::uint64_t>(m >> 64);
      }
    }
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Count of successes in n Bernoulli(p) trials.
  long binomial(long n, double p) {
    long k = 0;
    for (long i = 0; i < n; ++i) k += bernoulli(p) ? 1 : 0;
    return k;
  }

  // Fisher-Yates over indices [0, n).
  std::vector<int> permutation(int n) {
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    for (int i = n - 1; i > 0; --i) {
      int j = static_cast<int>(below(static_cast<std::uint64_t>(i) + 1));
      std::swap(idx[i], idx[j]);
    }
    return idx;
  }

  // k distinct values from [0, n), in draw order.
  std::vector<int> sample_without_replacement(int n, int k) {
    check(k >= 0 && k <= n, "sample_without_replacement: k out of range");
    std::vector<int> idx = permutation(n);
    idx.resize(static_cast<std::size_t>(k));
    return idx;
  }

 private:
  static std::uint64_t mix(std::uint64_t x) {
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ull;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebull;
    x ^= x >> 31;
    return x;
  }

  std::uint64_t base_;
  std::uint64_t counter_;
};

// Deterministic seed derivation for nested jobs (per-episode, per-pass).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
  RngStream s(seed, salt ^ 0xa5a5a5a5deadbeefull);
  return s.next_u64();
}

// Stream-id registry. Keeping ids disjoint here is what makes the sensor
// split, missingness, and FCD draws independent of one another.
namespace stream_id {
constexpr std::uint64_t world_graph = 1;
constexpr std::uint64_t world_flow = 2;
constexpr std::uint64_t world_fcd = 3;
constexpr std::uint64_t world_sensors = 4;
constexpr std::uint64_t world_missing = 5;
constexpr std::uint64_t sampler_val = 10;
constexpr std::uint64_t train_epoch_base = 1000;
constexpr std::uint64_t param_init = 20;
constexpr std::uint64_t mc_pass_base = 100000;
constexpr std::uint64_t scenario = 30;
constexpr std::uint64_t crps_draws = 40;
}  // namespace stream_id

}  // namespace taanp
