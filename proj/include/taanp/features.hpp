#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "taanp/model.hpp"
#include "taanp/world.hpp"

namespace taanp {

struct FcdDrop {
  bool flow = false;
  bool speed = false;

  bool both() const { return flow && speed; }
};

// Builds the per-point identity vector: temporal encoding, static road
// attributes, and FCD-derived dynamic features. Layout (19 columns):
//   0 sin(time of day)      1 cos(time of day)
//   2..8 day-of-week one-hot
//   9..11 road class one-hot
//   12 lanes  13 length_m  14 betweenness  15 closeness
//   16 fcd_flow  17 fcd_speed  18 fcd availability flag
class FeatureCodec {
 public:
  static constexpr int kDim = 19;
  static constexpr int kFcdFlowCol = 16;
  static constexpr int kFcdSpeedCol = 17;
  static constexpr int kFcdAvailCol = 18;

  FeatureCodec() = default;
  explicit FeatureCodec(FcdDrop drop) : drop_(drop) {}

  const FcdDrop& drop() const { return drop_; }

  std::vector<double> features(const world::World& w, int seg, int t) const {
    const world::Segment& s = w.graph.segments[static_cast<std::size_t>(seg)];
    int spd = w.flow.steps_per_day;
    double tod = 2.0 * std::numbers::pi * (t % spd) / spd;
    int dow = ((t / spd) + w.config.epoch_dow) % 7;

    std::vector<double> x(kDim, 0.0);
    x[0] = std::sin(tod);
    x[1] = std::cos(tod);
    x[2 + dow] = 1.0;
    x[9 + static_cast<int>(s.cls)] = 1.0;
    x[12] = static_cast<double>(s.lanes);
    x[13] = s.length_m;
    x[14] = s.betweenness;
    x[15] = s.closeness;

    double avail = w.fcd.availability(seg, t);
    double fflow = w.fcd.fcd_flow(seg, t);
    double fspeed = w.fcd.fcd_speed(seg, t);
    if (drop_.flow) fflow = 0.0;
    if (drop_.speed) fspeed = 0.0;
    if (drop_.both()) avail = 0.0;
    x[kFcdFlowCol] = avail > 0 ? fflow : 0.0;
    x[kFcdSpeedCol] = avail > 0 ? fspeed : 0.0;
    x[kFcdAvailCol] = avail > 0 ? 1.0 : 0.0;
    return x;
  }

  // Columns whose raw value this codec forces to zero.
  std::vector<int> zeroed_columns() const {
    std::vector<int> cols;
    if (drop_.flow) cols.push_back(kFcdFlowCol);
    if (drop_.speed) cols.push_back(kFcdSpeedCol);
    if (drop_.both()) cols.push_back(kFcdAvailCol);
    return cols;
  }

 private:
  FcdDrop drop_;
};

// Fits input/output normalization from observed segments over the training
// window. One-hot, sin/cos and flag columns stay untouched; FCD magnitudes
// are scaled without centering so a masked zero stays exactly zero.
inline void fit_normalization(ModelParams& params, const world::World& w,
                              const FeatureCodec& codec,
                              const std::vector<int>& observed, int t_begin,
                              int t_end) {
  check(params.cfg.x_dim == FeatureCodec::kDim,
        "fit_normalization: model x_dim does not match codec");
  check(t_begin < t_end, "fit_normalization: empty window");
  int d = FeatureCodec::kDim;
  std::vector<double> sum(d, 0.0), sq(d, 0.0);
  double y_sum = 0.0, y_sq = 0.0;
  std::size_t n = 0, ny = 0;
  for (int seg : observed) {
    for (int t = t_begin; t < t_end; ++t) {
      std::vector<double> x = codec.features(w, seg, t);
      for (int j = 0; j < d; ++j) {
        sum[j] += x[j];
        sq[j] += x[j] * x[j];
      }
      ++n;
      if (w.observation_valid(seg, t)) {
        double y = w.flow.y_obs(seg, t);
        y_sum += y;
        y_sq += y * y;
        ++ny;
      }
    }
  }
  check(n > 0 && ny > 0, "fit_normalization: no observations in window");

  params.norm.x_offset.assign(d, 0.0);
  params.norm.x_scale.assign(d, 1.0);
  auto stddev = [&](int j) {
    double mean = sum[j] / static_cast<double>(n);
    double var = sq[j] / static_cast<double>(n) - mean * mean;
    return std::sqrt(std::max(var, 0.0));
  };
  for (int j : {12, 13, 14, 15}) {
    double mean = sum[j] / static_cast<double>(n);
    double sd = stddev(j);
    params.norm.x_offset[j] = mean;
    params.norm.x_scale[j] = sd > 1e-9 ? sd : 1.0;
  }
  for (int j : {FeatureCodec::kFcdFlowCol, FeatureCodec::kFcdSpeedCol}) {
    double sd = stddev(j);
    params.norm.x_scale[j] = sd > 1e-9 ? sd : 1.0;
  }
  double y_mean = y_sum / static_cast<double>(ny);
  double y_var = y_sq / static_cast<double>(ny) - y_mean * y_mean;
  params.norm.y_mean = y_mean;
  params.norm.y_scale = y_var > 1e-12 ? std::sqrt(y_var) : 1.0;
}

}  // namespace taanp
