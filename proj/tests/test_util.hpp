#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "taanp/episode.hpp"
#include "taanp/model.hpp"
#include "taanp/world.hpp"

namespace testutil {

inline double rel_err(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Central finite differences over every element of every parameter.
// `loss` must rebuild its graph from the current parameter values; the
// analytic gradients must already sit in each parameter's grad field.
inline double max_grad_rel_err(const std::vector<taanp::Parameter*>& params,
                               const std::function<double()>& loss,
                               double step = 1e-5, double floor = 1e-4) {
  double worst = 0.0;
  for (taanp::Parameter* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      double saved = p->value.data[i];
      p->value.data[i] = saved + step;
      double up = loss();
      p->value.data[i] = saved - step;
      double down = loss();
      p->value.data[i] = saved;
      double fd = (up - down) / (2.0 * step);
      double an = p->grad.data[i];
      worst = std::max(worst, std::abs(fd - an) /
                                  std::max({std::abs(fd), std::abs(an), floor}));
    }
  }
  return worst;
}

// Hand-built world with constant structure, handy for counting tests.
// Segments form a path graph; flows are a simple deterministic pattern.
inline taanp::world::World make_toy_world(int n_segments, int n_steps,
                                          std::vector<int> observed,
                                          double flow_base = 50.0) {
  using namespace taanp::world;
  World w;
  w.config.n_segments = n_segments;
  w.config.steps_per_day = 96;
  w.config.days = std::max(1, n_steps / 96);
  w.flow.steps_per_day = 96;
  for (int i = 0; i < n_segments; ++i) {
    Segment s;
    s.id = i;
    s.cls = RoadClass::Collector;
    s.lanes = 2;
    s.length_m = 300.0;
    s.px = i;
    s.py = 0;
    w.graph.segments.push_back(s);
  }
  for (int i = 0; i + 1 < n_segments; ++i) w.graph.add_undirected_edge(i, i + 1);
  compute_centralities(w.graph);

  auto ns = static_cast<std::size_t>(n_segments);
  auto nt = static_cast<std::size_t>(n_steps);
  w.flow.f_true = taanp::Tensor(ns, nt);
  w.flow.y_obs = taanp::Tensor(ns, nt);
  w.fcd.fcd_flow = taanp::Tensor(ns, nt);
  w.fcd.fcd_speed = taanp::Tensor(ns, nt);
  w.fcd.availability = taanp::Tensor(ns, nt);
  w.fcd.penetration.assign(ns, 0.05);
  for (int s = 0; s < n_segments; ++s)
    for (int t = 0; t < n_steps; ++t) {
      double v = flow_base + 5.0 * s + 0.5 * (t % 96);
      w.flow.f_true(s, t) = v;
      w.flow.y_obs(s, t) = v;
      w.fcd.fcd_flow(s, t) = std::floor(0.05 * v);
      w.fcd.fcd_speed(s, t) = 40.0;
      w.fcd.availability(s, t) = w.fcd.fcd_flow(s, t) > 0 ? 1.0 : 0.0;
    }

  w.sensors.observed.assign(ns, 0);
  for (int s : observed) w.sensors.observed[static_cast<std::size_t>(s)] = 1;
  w.sensors.unobserved_ratio =
      1.0 - static_cast<double>(observed.size()) / n_segments;
  w.missing.n_segments = ns;
  w.missing.n_steps = nt;
  w.missing.valid.assign(ns * nt, 1);
  return w;
}

inline taanp::ModelConfig tiny_model_config(taanp::Variant v,
                                            int x_dim = 19) {
  taanp::ModelConfig cfg;
  cfg.variant = v;
  cfg.x_dim = x_dim;
  cfg.rep_dim = 8;
  cfg.latent_dim = 4;
  cfg.n_heads = 2;
  cfg.enc_width = 8;
  cfg.dec_width = 8;
  cfg.lat_width = 8;
  cfg.dropout_rate = 0.1;
  cfg.sigma_floor = 1e-3;
  return cfg;
}

// Random episode over abstract features, spanning all three task tags.
inline taanp::Episode random_episode(taanp::RngStream& rng, int x_dim,
                                     int n_ctx, int per_task) {
  taanp::Episode ep;
  ep.t0 = 10;
  ep.history = 4;
  ep.horizon = 4;
  auto rand_x = [&] {
    std::vector<double> x(static_cast<std::size_t>(x_dim));
    for (auto& v : x) v = rng.gaussian();
    return x;
  };
  for (int i = 0; i < n_ctx; ++i) {
    taanp::ContextPoint c;
    c.x = rand_x();
    c.y = std::abs(rng.gaussian(50.0, 10.0));
    c.segment = i;
    c.t = 7 + (i % 4);
    ep.context.push_back(std::move(c));
  }
  for (int task = 0; task < 3; ++task)
    for (int i = 0; i < per_task; ++i) {
      taanp::TargetPoint t;
      t.x = rand_x();
      t.task = static_cast<taanp::SubTask>(task);
      t.y_true = std::abs(rng.gaussian(50.0, 10.0));
      t.segment = 100 + i;
      t.t = task == 0 ? 9 : 12;
      t.horizon = task == 0 ? 0 : 2;
      ep.targets.push_back(std::move(t));
    }
  return ep;
}

}  // namespace testutil
