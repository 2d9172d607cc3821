#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "taanp/rng.hpp"
#include "taanp/tensor.hpp"

namespace taanp::world {

enum class RoadClass { Arterial = 0, Collector = 1, Local = 2 };

inline const char* road_class_name(RoadClass c) {
  switch (c) {
    case RoadClass::Arterial: return "arterial";
    case RoadClass::Collector: return "collector";
    case RoadClass::Local: return "local";
  }
  throw ContractError("unknown RoadClass");
}

inline RoadClass road_class_from_name(const std::string& s) {
  if (s == "arterial") return RoadClass::Arterial;
  if (s == "collector") return RoadClass::Collector;
  if (s == "local") return RoadClass::Local;
  throw ConfigError("unknown road class: " + s);
}

struct Segment {
  int id = 0;
  RoadClass cls = RoadClass::Local;
  int lanes = 1;
  double length_m = 0.0;
  double betweenness = 0.0;
  double closeness = 0.0;
  double px = 0.0, py = 0.0;  // layout position (not persisted)
};

struct RoadGraph {
  std::vector<Segment> segments;
  std::vector<std::pair<int, int>> edges;  // directed
  std::vector<std::vector<int>> out;       // adjacency by segment id

  int n() const { return static_cast<int>(segments.size()); }

  void rebuild_adjacency() {
    out.assign(segments.size(), {});
    for (auto [a, b] : edges) out[static_cast<std::size_t>(a)].push_back(b);
  }

  void add_undirected_edge(int a, int b) {
    edges.emplace_back(a, b);
    edges.emplace_back(b, a);
  }
};

// Brandes betweenness plus closeness = (n-1)/sum(dist), both on unweighted
// shortest paths over the directed adjacency.
inline void compute_centralities(RoadGraph& g) {
  g.rebuild_adjacency();
  int n = g.n();
  std::vector<double> bc(n, 0.0);
  for (int s = 0; s < n; ++s) {
    std::vector<std::vector<int>> preds(n);
    std::vector<double> sigma(n, 0.0);
    std::vector<int> dist(n, -1);
    std::vector<int> order;
    sigma[s] = 1.0;
    dist[s] = 0;
    std::deque<int> q{s};
    while (!q.empty()) {
      int v = q.front();
      q.pop_front();
      order.push_back(v);
      for (int w : g.out[static_cast<std::size_t>(v)]) {
        if (dist[w] < 0) {
          dist[w] = dist[v] + 1;
          q.push_back(w);
        }
        if (dist[w] == dist[v] + 1) {
          sigma[w] += sigma[v];
          preds[static_cast<std::size_t>(w)].push_back(v);
        }
      }
    }
    std::vector<double> delta(n, 0.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      int w = *it;
      for (int v : preds[static_cast<std::size_t>(w)])
        delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
      if (w != s) bc[w] += delta[w];
    }
    long long dsum = 0;
    bool reachable_all = true;
    for (int v = 0; v < n; ++v) {
      if (v == s) continue;
      if (dist[v] < 0) {
        reachable_all = false;
        break;
      }
      dsum += dist[v];
    }
    g.segments[static_cast<std::size_t>(s)].closeness =
        (n > 1 && reachable_all && dsum > 0)
            ? static_cast<double>(n - 1) / static_cast<double>(dsum)
            : 1.0;
  }
  for (int v = 0; v < n; ++v)
    g.segments[static_cast<std::size_t>(v)].betweenness = bc[v];
}

// Random geometric layout: each node links to its nearest neighbors, then
// components are stitched by their closest pairs so the graph is connected.
inline RoadGraph generate_graph(int n_segments, std::uint64_t seed) {
  if (n_segments < 4)
    throw ConfigError("generate_graph: need at least 4 segments");
  RngStream rng(seed, stream_id::world_graph);
  RoadGraph g;
  g.segments.resize(static_cast<std::size_t>(n_segments));
  for (int i = 0; i < n_segments; ++i) {
    Segment& s = g.segments[static_cast<std::size_t>(i)];
    s.id = i;
    s.px = rng.uniform();
    s.py = rng.uniform();
    double u = rng.uniform();
    s.cls = u < 0.2 ? RoadClass::Arterial
                    : (u < 0.5 ? RoadClass::Collector : RoadClass::Local);
    switch (s.cls) {
      case RoadClass::Arterial:
        s.lanes = 2 + static_cast<int>(rng.below(3));
        break;
      case RoadClass::Collector:
        s.lanes = 1 + static_cast<int>(rng.below(3));
        break;
      case RoadClass::Local:
        s.lanes = 1 + static_cast<int>(rng.below(2));
        break;
    }
    s.length_m = rng.uniform(100.0, 800.0);
  }

  auto dist2 = [&](int a, int b) {
    double dx = g.segments[a].px - g.segments[b].px;
    double dy = g.segments[a].py - g.segments[b].py;
    return dx * dx + dy * dy;
  };

  std::vector<std::pair<int, int>> undirected;
  auto has_edge = [&](int a, int b) {
    for (auto [x, y] : undirected)
      if ((x == a && y == b) || (x == b && y == a)) return true;
    return false;
  };
  const int k_near = 3;
  for (int i = 0; i < n_segments; ++i) {
    std::vector<int> others;
    for (int j = 0; j < n_segments; ++j)
      if (j != i) others.push_back(j);
    std::sort(others.begin(), others.end(),
              [&](int a, int b) { return dist2(i, a) < dist2(i, b); });
    for (int k = 0; k < k_near && k < static_cast<int>(others.size()); ++k)
      if (!has_edge(i, others[static_cast<std::size_t>(k)]))
        undirected.emplace_back(i, others[static_cast<std::size_t>(k)]);
  }

  // Union-find to stitch components.
  std::vector<int> parent(static_cast<std::size_t>(n_segments));
  for (int i = 0; i < n_segments; ++i) parent[static_cast<std::size_t>(i)] = i;
  std::function<int(int)> find = [&](int x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      parent[static_cast<std::size_t>(x)] =
          parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      x = parent[static_cast<std::size_t>(x)];
    }
    return x;
  };
  for (auto [a, b] : undirected) parent[static_cast<std::size_t>(find(a))] = find(b);
  while (true) {
    bool single = true;
    for (int i = 1; i < n_segments; ++i)
      if (find(i) != find(0)) {
        single = false;
        break;
      }
    if (single) break;
    int best_a = -1, best_b = -1;
    double best = 1e18;
    for (int a = 0; a < n_segments; ++a)
      for (int b = a + 1; b < n_segments; ++b)
        if (find(a) != find(b) && dist2(a, b) < best) {
          best = dist2(a, b);
          best_a = a;
          best_b = b;
        }
    undirected.emplace_back(best_a, best_b);
    parent[static_cast<std::size_t>(find(best_a))] = find(best_b);
  }

  for (auto [a, b] : undirected) g.add_undirected_edge(a, b);
  compute_centralities(g);
  return g;
}

struct FlowField {
  Tensor f_true;  // [n_segments x n_steps], latent noiseless flow
  Tensor y_obs;   // f_true + noise, clipped at 0
  double noise_sigma = 0.0;
  int steps_per_day = 96;

  int n_steps() const { return static_cast<int>(f_true.cols); }
};

inline double diurnal_profile(int step_of_day, int steps_per_day) {
  double hour = 24.0 * step_of_day / steps_per_day;
  auto bump = [](double h, double c, double w) {
    double d = (h - c) / w;
    return std::exp(-0.5 * d * d);
  };
  return 0.25 + 1.0 * bump(hour, 8.5, 1.8) + 0.9 * bump(hour, 18.0, 2.2);
}

inline double class_base_flow(RoadClass c) {
  switch (c) {
    case RoadClass::Arterial: return 110.0;
    case RoadClass::Collector: return 60.0;
    case RoadClass::Local: return 25.0;
  }
  throw ContractError("unknown RoadClass");
}

// Smooth a per-segment field by graph diffusion.
inline std::vector<double> graph_smooth(const RoadGraph& g,
                                        std::vector<double> x, int iters,
                                        double mix = 0.5) {
  std::vector<double> next(x.size());
  for (int it = 0; it < iters; ++it) {
    for (std::size_t v = 0; v < x.size(); ++v) {
      double nb = 0.0;
      const auto& outs = g.out[v];
      if (outs.empty()) {
        next[v] = x[v];
        continue;
      }
      for (int w : outs) nb += x[static_cast<std::size_t>(w)];
      nb /= static_cast<double>(outs.size());
      next[v] = (1.0 - mix) * x[v] + mix * nb;
    }
    x.swap(next);
  }
  return x;
}

// Latent flow = class/lane base x diurnal profile x spatially smooth field
// x per-segment day-to-day AR(1); observations add Gaussian noise, clipped
// at zero since flows are counts.
inline FlowField generate_flow(const RoadGraph& g, int horizon_days,
                               std::uint64_t seed, double noise_sigma,
                               int steps_per_day = 96, int epoch_dow = 0) {
  if (horizon_days < 1) throw ConfigError("generate_flow: need >= 1 day");
  RngStream rng(seed, stream_id::world_flow);
  int n = g.n();
  int steps = horizon_days * steps_per_day;
  FlowField f;
  f.noise_sigma = noise_sigma;
  f.steps_per_day = steps_per_day;
  f.f_true = Tensor(static_cast<std::size_t>(n), static_cast<std::size_t>(steps));
  f.y_obs = Tensor(static_cast<std::size_t>(n), static_cast<std::size_t>(steps));

  std::vector<double> spatial(static_cast<std::size_t>(n));
  for (auto& v : spatial) v = rng.gaussian();
  spatial = graph_smooth(g, spatial, 12);
  double mean = 0.0, var = 0.0;
  for (double v : spatial) mean += v;
  mean /= n;
  for (double v : spatial) var += (v - mean) * (v - mean);
  double sd = std::sqrt(var / n);
  for (auto& v : spatial)
    v = std::exp(0.30 * (sd > 0 ? (v - mean) / sd : 0.0));

  const double rho = 0.5, eta_sd = 0.04;
  Tensor day_mod(static_cast<std::size_t>(n),
                 static_cast<std::size_t>(horizon_days), 1.0);
  for (int s = 0; s < n; ++s)
    for (int d = 1; d < horizon_days; ++d) {
      double prev = day_mod(s, d - 1);
      double nxt = 1.0 + rho * (prev - 1.0) + rng.gaussian(0.0, eta_sd);
      day_mod(s, d) = std::max(0.5, nxt);
    }

  for (int s = 0; s < n; ++s) {
    const Segment& seg = g.segments[static_cast<std::size_t>(s)];
    double base = class_base_flow(seg.cls) * (0.75 + 0.25 * seg.lanes);
    for (int t = 0; t < steps; ++t) {
      int day = t / steps_per_day;
      int dow = (day + epoch_dow) % 7;
      double weekend = dow >= 5 ? 0.75 : 1.0;
      double ft = base * diurnal_profile(t % steps_per_day, steps_per_day) *
                  spatial[static_cast<std::size_t>(s)] * day_mod(s, day) *
                  weekend;
      f.f_true(s, t) = ft;
    }
  }
  // Noise pass is separate so the latent field does not depend on sigma.
  for (int s = 0; s < n; ++s)
    for (int t = 0; t < steps; ++t) {
      double eps = noise_sigma > 0.0 ? rng.gaussian(0.0, noise_sigma) : 0.0;
      f.y_obs(s, t) = std::max(0.0, f.f_true(s, t) + eps);
    }
  return f;
}

struct FcdProcess {
  std::vector<double> penetration;  // per segment
  Tensor fcd_flow;                  // [n x steps]
  Tensor fcd_speed;
  Tensor availability;  // 0/1; zero implies fcd fields are zero
};

inline double free_flow_speed(RoadClass c) {
  switch (c) {
    case RoadClass::Arterial: return 60.0;
    case RoadClass::Collector: return 45.0;
    case RoadClass::Local: return 30.0;
  }
  throw ContractError("unknown RoadClass");
}

inline double lane_capacity(RoadClass c) {
  switch (c) {
    case RoadClass::Arterial: return 140.0;
    case RoadClass::Collector: return 110.0;
    case RoadClass::Local: return 80.0;
  }
  throw ContractError("unknown RoadClass");
}

// Probe counts are binomial thinning of the latent flow at a spatially
// smoothed per-segment penetration rate; probe speed follows a congestion
// factor in flow/capacity with small noise.
inline FcdProcess simulate_fcd(const FlowField& field, const RoadGraph& g,
                               double pen_lo, double pen_hi,
                               std::uint64_t seed, double speed_noise = 1.5) {
  if (!(pen_lo > 0.0 && pen_lo <= pen_hi && pen_hi <= 1.0))
    throw ConfigError("simulate_fcd: penetration range must be within (0,1]");
  RngStream rng(seed, stream_id::world_fcd);
  int n = g.n();
  int steps = field.n_steps();
  FcdProcess fcd;
  fcd.penetration.resize(static_cast<std::size_t>(n));
  std::vector<double> u(static_cast<std::size_t>(n));
  for (auto& v : u) v = rng.uniform();
  u = graph_smooth(g, u, 6);
  double lo = *std::min_element(u.begin(), u.end());
  double hi = *std::max_element(u.begin(), u.end());
  for (int s = 0; s < n; ++s) {
    double t = hi > lo ? (u[static_cast<std::size_t>(s)] - lo) / (hi - lo) : 0.5;
    fcd.penetration[static_cast<std::size_t>(s)] = pen_lo + (pen_hi - pen_lo) * t;
  }

  fcd.fcd_flow = Tensor(static_cast<std::size_t>(n), static_cast<std::size_t>(steps));
  fcd.fcd_speed = Tensor(static_cast<std::size_t>(n), static_cast<std::size_t>(steps));
  fcd.availability = Tensor(static_cast<std::size_t>(n), static_cast<std::size_t>(steps));
  for (int s = 0; s < n; ++s) {
    const Segment& seg = g.segments[static_cast<std::size_t>(s)];
    double p = fcd.penetration[static_cast<std::size_t>(s)];
    double vf = free_flow_speed(seg.cls);
    double cap = seg.lanes * lane_capacity(seg.cls);
    for (int t = 0; t < steps; ++t) {
      long total = std::lround(field.f_true(s, t));
      long probes = rng.binomial(total, p);
      double util = std::min(1.0, field.f_true(s, t) / cap);
      double speed = vf * (1.0 - 0.6 * util) +
                     (speed_noise > 0.0 ? rng.gaussian(0.0, speed_noise) : 0.0);
      speed = std::clamp(speed, 5.0, vf + 5.0);
      if (probes > 0) {
        fcd.fcd_flow(s, t) = static_cast<double>(probes);
        fcd.fcd_speed(s, t) = speed;
        fcd.availability(s, t) = 1.0;
      }
    }
  }
  return fcd;
}

struct SensorAssignment {
  std::vector<std::uint8_t> observed;  // per segment
  double unobserved_ratio = 0.0;

  std::vector<int> observed_ids() const {
    std::vector<int> ids;
    for (std::size_t i = 0; i < observed.size(); ++i)
      if (observed[i]) ids.push_back(static_cast<int>(i));
    return ids;
  }
};

inline SensorAssignment assign_sensors(const RoadGraph& g,
                                       double unobserved_ratio,
                                       std::uint64_t seed) {
  if (!(unobserved_ratio > 0.0 && unobserved_ratio < 1.0))
    throw ConfigError("assign_sensors: unobserved_ratio must be in (0,1)");
  int n = g.n();
  int observed_count =
      static_cast<int>(std::lround((1.0 - unobserved_ratio) * n));
  observed_count = std::clamp(observed_count, 1, n - 1);
  RngStream rng(seed, stream_id::world_sensors);
  std::vector<int> pick = rng.sample_without_replacement(n, observed_count);
  SensorAssignment a;
  a.unobserved_ratio = unobserved_ratio;
  a.observed.assign(static_cast<std::size_t>(n), 0);
  for (int id : pick) a.observed[static_cast<std::size_t>(id)] = 1;
  return a;
}

struct MissingnessMask {
  std::size_t n_segments = 0;
  std::size_t n_steps = 0;
  std::vector<std::uint8_t> valid;  // row-major [segment][t]
  double target_rate = 0.0;

  bool at(std::size_t s, std::size_t t) const {
    return valid[s * n_steps + t] != 0;
  }
  void set(std::size_t s, std::size_t t, bool v) {
    valid[s * n_steps + t] = v ? 1 : 0;
  }
  double realized_rate() const {
    std::size_t missing = 0;
    for (auto v : valid) missing += v ? 0 : 1;
    return static_cast<double>(missing) / static_cast<double>(valid.size());
  }
};

// Blockwise outages (runs of 1-8 intervals) accumulated until the target
// rate is reached; applies to sensor observations only, never ground truth.
inline MissingnessMask inject_missing(std::size_t n_segments,
                                      std::size_t n_steps, double rate,
                                      std::uint64_t seed) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw ConfigError("inject_missing: rate must be in [0,1)");
  MissingnessMask m;
  m.n_segments = n_segments;
  m.n_steps = n_steps;
  m.target_rate = rate;
  m.valid.assign(n_segments * n_steps, 1);
  if (rate == 0.0) return m;
  RngStream rng(seed, stream_id::world_missing);
  auto target =
      static_cast<std::size_t>(std::llround(rate * static_cast<double>(m.valid.size())));
  std::size_t marked = 0;
  while (marked < target) {
    std::size_t s = rng.below(n_segments);
    std::size_t len = 1 + rng.below(8);
    std::size_t start = rng.below(n_steps);
    for (std::size_t t = start; t < std::min(start + len, n_steps); ++t) {
      if (m.at(s, t)) {
        m.set(s, t, false);
        if (++marked >= target) break;
      }
    }
  }
  return m;
}

struct WorldConfig {
  int n_segments = 60;
  int days = 14;
  int steps_per_day = 96;
  int epoch_dow = 0;  // day-of-week of the first day
  std::string epoch_iso = "2024-01-01T00:00";
  double noise_sigma = 8.0;
  double unobserved_ratio = 0.6;
  double penetration_lo = 0.02;
  double penetration_hi = 0.10;
  double missing_rate = 0.0976;
  std::uint64_t seed = 0;
};

struct World {
  WorldConfig config;
  RoadGraph graph;
  FlowField flow;
  FcdProcess fcd;
  SensorAssignment sensors;
  MissingnessMask missing;
  bool has_truth = true;

  int n_segments() const { return graph.n(); }
  int n_steps() const { return flow.n_steps(); }

  bool observation_valid(int seg, int t) const {
    return missing.at(static_cast<std::size_t>(seg), static_cast<std::size_t>(t));
  }
};

// Full generation is a pure function of (config, seed); the sub-streams are
// independent so changing e.g. the missing rate leaves everything else
// bit-identical.
inline World generate_world(const WorldConfig& cfg) {
  World w;
  w.config = cfg;
  w.graph = generate_graph(cfg.n_segments, cfg.seed);
  w.flow = generate_flow(w.graph, cfg.days, cfg.seed, cfg.noise_sigma,
                         cfg.steps_per_day, cfg.epoch_dow);
  w.fcd = simulate_fcd(w.flow, w.graph, cfg.penetration_lo, cfg.penetration_hi,
                       cfg.seed);
  w.sensors = assign_sensors(w.graph, cfg.unobserved_ratio, cfg.seed);
  w.missing = inject_missing(static_cast<std::size_t>(cfg.n_segments),
                             static_cast<std::size_t>(w.flow.n_steps()),
                             cfg.missing_rate, cfg.seed);
  return w;
}

}  // namespace taanp::world
