#pragma once

#include <array>
#include <cmath>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "taanp/autodiff.hpp"
#include "taanp/episode.hpp"

namespace taanp {

enum class Variant { CNP, LNP, ANP, TAANP };

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::CNP: return "cnp";
    case Variant::LNP: return "lnp";
    case Variant::ANP: return "anp";
    case Variant::TAANP: return "taanp";
  }
  throw ContractError("unknown Variant");
}

inline Variant variant_from_name(const std::string& s) {
  if (s == "cnp") return Variant::CNP;
  if (s == "lnp") return Variant::LNP;
  if (s == "anp") return Variant::ANP;
  if (s == "taanp") return Variant::TAANP;
  throw ConfigError("unknown variant: " + s);
}

inline bool has_latent_path(Variant v) { return v != Variant::CNP; }
inline bool has_attention_path(Variant v) {
  return v == Variant::ANP || v == Variant::TAANP;
}

enum class RunMode { Train, InferMc, InferPlain };

struct ModelConfig {
  Variant variant = Variant::TAANP;
  int x_dim = 19;
  int rep_dim = 64;
  int latent_dim = 32;
  int n_heads = 4;
  int enc_width = 64;
  int dec_width = 64;
  int lat_width = 64;
  double dropout_rate = 0.1;
  double sigma_floor = 1e-3;

  int head_dim() const { return rep_dim / n_heads; }

  void validate() const {
    if (x_dim < 1 || rep_dim < 1 || latent_dim < 1 || n_heads < 1 ||
        enc_width < 1 || dec_width < 1 || lat_width < 1)
      throw ConfigError("model config: dimensions must be positive");
    if (rep_dim % n_heads != 0)
      throw ConfigError("model config: rep_dim must be divisible by n_heads");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
      throw ConfigError("model config: dropout_rate must be in [0, 1)");
    if (!(sigma_floor >= 0.0))
      throw ConfigError("model config: sigma_floor must be >= 0");
  }

  int decoder_input_dim() const {
    switch (variant) {
      case Variant::CNP: return x_dim + rep_dim;
      case Variant::LNP: return x_dim + latent_dim;
      case Variant::ANP:
      case Variant::TAANP: return x_dim + latent_dim + rep_dim;
    }
    throw ContractError("unknown Variant");
  }
};

// Per-feature affine input normalization and flow-unit scaling, stored with
// the model so a checkpoint is self-contained.
struct Normalization {
  std::vector<double> x_offset;
  std::vector<double> x_scale;
  double y_mean = 0.0;
  double y_scale = 1.0;
};

struct LatentState {
  Tensor mu;     // 1 x latent_dim
  Tensor sigma;  // 1 x latent_dim, all > 0
  Tensor z;      // drawn or mode, 1 x latent_dim
  bool active = false;
};

// All learnable tensors of a variant. For variants other than TAANP the
// three per-task query projections alias one shared set of matrices.
class ModelParams {
 public:
  ModelConfig cfg;
  Normalization norm;

  std::vector<Parameter*> enc_w, enc_b;
  Parameter* lat_w1 = nullptr;
  Parameter* lat_b1 = nullptr;
  Parameter* lat_w2 = nullptr;
  Parameter* lat_b2 = nullptr;
  std::vector<Parameter*> attn_wk, attn_wv;           // one per head
  std::array<std::vector<Parameter*>, 3> attn_wq;     // [task][head]
  Parameter* attn_wo = nullptr;
  Parameter* attn_bo = nullptr;
  std::vector<Parameter*> dec_w, dec_b;  // hidden layers
  Parameter* dec_mu_w = nullptr;
  Parameter* dec_mu_b = nullptr;
  Parameter* dec_sigma_w = nullptr;
  Parameter* dec_sigma_b = nullptr;

  ModelParams() = default;
  ModelParams(const ModelParams& o) { copy_from(o); }
  ModelParams& operator=(const ModelParams& o) {
    if (this != &o) copy_from(o);
    return *this;
  }
  ModelParams(ModelParams&&) = default;
  ModelParams& operator=(ModelParams&&) = default;

  const std::vector<Parameter*>& parameters() const { return order_; }

  std::vector<Parameter*> trainable() const {
    std::vector<Parameter*> out;
    for (Parameter* p : order_)
      if (p->trainable) out.push_back(p);
    return out;
  }

  void zero_grad() {
    for (Parameter* p : order_) p->zero_grad();
  }

  std::uint64_t checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const Parameter* p : order_) h = tensor_checksum(p->value, h);
    return h;
  }

  Parameter* find(const std::string& name) const {
    for (Parameter* p : order_)
      if (p->name == name) return p;
    return nullptr;
  }

  static ModelParams init(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ModelParams p;
    p.cfg = cfg;
    p.norm.x_offset.assign(cfg.x_dim, 0.0);
    p.norm.x_scale.assign(cfg.x_dim, 1.0);
    RngStream rng(seed, stream_id::param_init);

    auto xavier = [&](const std::string& name, int in, int out) {
      double lim = std::sqrt(6.0 / (in + out));
      Tensor t(in, out);
      for (auto& v : t.data) v = rng.uniform(-lim, lim);
      return p.add(name, std::move(t));
    };
    auto zeros = [&](const std::string& name, int r, int c) {
      return p.add(name, Tensor(r, c));
    };

    // Encoder: (x, y) -> rep, 3 linear layers with tanh between.
    int enc_in = cfg.x_dim + 1;
    p.enc_w = {xavier("enc.w0", enc_in, cfg.enc_width),
               xavier("enc.w1", cfg.enc_width, cfg.enc_width),
               xavier("enc.w2", cfg.enc_width, cfg.rep_dim)};
    p.enc_b = {zeros("enc.b0", 1, cfg.enc_width),
               zeros("enc.b1", 1, cfg.enc_width),
               zeros("enc.b2", 1, cfg.rep_dim)};

    // Latent head: R -> (mu_z, raw sigma_z).
    p.lat_w1 = xavier("lat.w1", cfg.rep_dim, cfg.lat_width);
    p.lat_b1 = zeros("lat.b1", 1, cfg.lat_width);
    p.lat_w2 = xavier("lat.w2", cfg.lat_width, 2 * cfg.latent_dim);
    p.lat_b2 = zeros("lat.b2", 1, 2 * cfg.latent_dim);

    // Attention: shared key/value projections per head; query projections
    // per task for TAANP, one shared set otherwise.
    int dh = cfg.head_dim();
    for (int h = 0; h < cfg.n_heads; ++h) {
      p.attn_wk.push_back(
          xavier("attn.wk." + std::to_string(h), cfg.x_dim, dh));
      p.attn_wv.push_back(
          xavier("attn.wv." + std::to_string(h), cfg.rep_dim, dh));
    }
    if (cfg.variant == Variant::TAANP) {
      // The three task projections start from one shared draw; task
      // gradients differentiate them from there.
      static const char* tag[3] = {"s", "t", "st"};
      std::vector<Tensor> shared_init;
      for (int h = 0; h < cfg.n_heads; ++h) {
        double lim = std::sqrt(6.0 / (cfg.x_dim + dh));
        Tensor t(cfg.x_dim, dh);
        for (auto& v : t.data) v = rng.uniform(-lim, lim);
        shared_init.push_back(std::move(t));
      }
      for (int task = 0; task < kNumSubTasks; ++task)
        for (int h = 0; h < cfg.n_heads; ++h)
          p.attn_wq[task].push_back(
              p.add(std::string("attn.wq_") + tag[task] + "." +
                        std::to_string(h),
                    shared_init[static_cast<std::size_t>(h)]));
    } else {
      std::vector<Parameter*> shared;
      for (int h = 0; h < cfg.n_heads; ++h)
        shared.push_back(
            xavier("attn.wq." + std::to_string(h), cfg.x_dim, dh));
      for (int task = 0; task < kNumSubTasks; ++task) p.attn_wq[task] = shared;
    }
    p.attn_wo = xavier("attn.wo", cfg.n_heads * dh, cfg.rep_dim);
    p.attn_bo = zeros("attn.bo", 1, cfg.rep_dim);

    // Decoder: variant-specific input -> two hidden layers -> separate
    // mu / raw-sigma heads.
    int dec_in = cfg.decoder_input_dim();
    p.dec_w = {xavier("dec.w0", dec_in, cfg.dec_width),
               xavier("dec.w1", cfg.dec_width, cfg.dec_width)};
    p.dec_b = {zeros("dec.b0", 1, cfg.dec_width),
               zeros("dec.b1", 1, cfg.dec_width)};
    p.dec_mu_w = xavier("dec.mu_w", cfg.dec_width, 1);
    p.dec_mu_b = zeros("dec.mu_b", 1, 1);
    p.dec_sigma_w = xavier("dec.sigma_w", cfg.dec_width, 1);
    p.dec_sigma_b = zeros("dec.sigma_b", 1, 1);
    return p;
  }

 private:
  Parameter* add(const std::string& name, Tensor t) {
    store_.push_back(std::make_unique<Parameter>(name, std::move(t)));
    order_.push_back(store_.back().get());
    return store_.back().get();
  }

  void copy_from(const ModelParams& o) {
    ModelParams fresh = init(o.cfg, 0);
    *this = std::move(fresh);
    norm = o.norm;
    check(order_.size() == o.order_.size(), "ModelParams copy: layout drift");
    for (std::size_t i = 0; i < order_.size(); ++i) {
      order_[i]->value = o.order_[i]->value;
      order_[i]->grad = o.order_[i]->grad;
      order_[i]->trainable = o.order_[i]->trainable;
    }
  }

  std::vector<std::unique_ptr<Parameter>> store_;
  std::vector<Parameter*> order_;
};

// Task-aware query projection lookup: TAANP keeps three independent sets,
// all other variants hand back the same shared set for every tag.
inline const std::vector<Parameter*>& select_query_projection(
    const ModelParams& params, SubTask task) {
  int t = static_cast<int>(task);
  if (t < 0 || t >= kNumSubTasks)
    throw ContractError("select_query_projection: unknown task tag");
  return params.attn_wq[static_cast<std::size_t>(t)];
}

// Binds external Parameters into a graph once, on demand.
class Binder {
 public:
  explicit Binder(Graph& g) : g_(g) {}
  Var operator()(Parameter* p) {
    auto it = bound_.find(p);
    if (it != bound_.end()) return it->second;
    Var v = g_.leaf(*p);
    bound_.emplace(p, v);
    return v;
  }

 private:
  Graph& g_;
  std::unordered_map<const Parameter*, Var> bound_;
};

namespace detail {

inline Tensor normalize_features(const ModelParams& params,
                                 const std::vector<double>& x) {
  if (static_cast<int>(x.size()) != params.cfg.x_dim)
    throw ConfigError("feature dimension " + std::to_string(x.size()) +
                      " does not match model x_dim " +
                      std::to_string(params.cfg.x_dim));
  Tensor t(1, x.size());
  for (std::size_t j = 0; j < x.size(); ++j)
    t(0, j) = (x[j] - params.norm.x_offset[j]) / params.norm.x_scale[j];
  return t;
}

template <typename PointRange>
Tensor feature_matrix(const ModelParams& params, const PointRange& pts) {
  Tensor out(pts.size(), params.cfg.x_dim);
  std::size_t r = 0;
  for (const auto& pt : pts) {
    Tensor row = normalize_features(params, pt.x);
    for (int c = 0; c < params.cfg.x_dim; ++c) out(r, c) = row(0, c);
    ++r;
  }
  return out;
}

inline Var mlp3(Graph& g, Binder& bind, const std::vector<Parameter*>& ws,
                const std::vector<Parameter*>& bs, Var in, double drop_rate,
                RngStream* rng, bool drop_active) {
  Var h = in;
  for (std::size_t l = 0; l < ws.size(); ++l) {
    h = g.add_rowvec(g.matmul(h, bind(ws[l])), bind(bs[l]));
    if (l + 1 < ws.size()) {
      h = g.tanh_op(h);
      if (drop_active && rng) h = g.dropout(h, drop_rate, *rng, true);
    }
  }
  return h;
}

}  // namespace detail

// Encoder: maps each (x, y) context pair to a representation vector.
// Returns an [n x rep_dim] node.
inline Var encode_points(Graph& g, Binder& bind, const ModelParams& params,
                         const Tensor& x_norm, const Tensor& y_raw,
                         RngStream* rng, bool drop_active) {
  check(x_norm.rows >= 1, "encode: needs at least one point");
  Tensor in(x_norm.rows, x_norm.cols + 1);
  for (std::size_t r = 0; r < x_norm.rows; ++r) {
    for (std::size_t c = 0; c < x_norm.cols; ++c) in(r, c) = x_norm(r, c);
    in(r, x_norm.cols) =
        (y_raw(r, 0) - params.norm.y_mean) / params.norm.y_scale;
  }
  Var input = g.constant(std::move(in));
  return detail::mlp3(g, bind, params.enc_w, params.enc_b, input,
                      params.cfg.dropout_rate, rng, drop_active);
}

inline Var encode_context(Graph& g, Binder& bind, const ModelParams& params,
                          const std::vector<ContextPoint>& context,
                          RngStream* rng, bool drop_active) {
  check(!context.empty(), "encode_context: context must be non-empty");
  Tensor x = detail::feature_matrix(params, context);
  Tensor y(context.size(), 1);
  for (std::size_t i = 0; i < context.size(); ++i) y(i, 0) = context[i].y;
  return encode_points(g, bind, params, x, y, rng, drop_active);
}

// Permutation-invariant mean over per-point representations.
inline Var aggregate_mean(Graph& g, Var reps) {
  check(g.val(reps).rows >= 1, "aggregate_mean: empty representation set");
  return g.mean_rows_canonical(reps);
}

struct LatentVars {
  Var mu;
  Var sigma;
};

// Parameterizes the diagonal Gaussian q(z | .) from a global summary.
inline LatentVars latent_posterior(Graph& g, Binder& bind,
                                   const ModelParams& params, Var summary) {
  Var h = g.tanh_op(g.add_rowvec(g.matmul(summary, bind(params.lat_w1)),
                                 bind(params.lat_b1)));
  Var raw = g.add_rowvec(g.matmul(h, bind(params.lat_w2)), bind(params.lat_b2));
  int L = params.cfg.latent_dim;
  LatentVars out;
  out.mu = g.slice_cols(raw, 0, L);
  out.sigma = g.softplus(g.slice_cols(raw, L, L));
  return out;
}

// Reparameterized draw z = mu + sigma * eps.
inline Var sample_latent(Graph& g, const LatentVars& lat, RngStream& rng) {
  const Tensor& mu = g.val(lat.mu);
  Tensor eps(1, mu.cols);
  for (auto& e : eps.data) e = rng.gaussian();
  return g.add(lat.mu, g.mul_elem_const(lat.sigma, std::move(eps)));
}

// Multi-head cross-attention for one task group. Queries and keys are
// feature-side; values are the encoded context representations.
inline Var cross_attention(Graph& g, Binder& bind, const ModelParams& params,
                           SubTask task, const Tensor& query_x_norm,
                           const Tensor& key_x_norm, Var context_reps) {
  check(key_x_norm.rows >= 1, "cross_attention: needs at least one context point");
  const auto& wq = select_query_projection(params, task);
  Var q = g.constant(query_x_norm);
  Var k = g.constant(key_x_norm);
  double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(params.cfg.head_dim()));
  std::vector<Var> heads;
  for (int h = 0; h < params.cfg.n_heads; ++h) {
    Var qh = g.matmul(q, bind(wq[h]));
    Var kh = g.matmul(k, bind(params.attn_wk[h]));
    Var vh = g.matmul(context_reps, bind(params.attn_wv[h]));
    Var scores = g.affine(g.matmul_bt(qh, kh), inv_sqrt_dh, 0.0);
    Var weights = g.softmax_lastdim(scores);
    heads.push_back(g.matmul(weights, vh));
  }
  Var cat = params.cfg.n_heads == 1 ? heads[0] : g.concat_cols(heads);
  return g.add_rowvec(g.matmul(cat, bind(params.attn_wo)), bind(params.attn_bo));
}

struct DecodeVars {
  Var mu;     // [m x 1], flow units
  Var sigma;  // [m x 1], >= sigma_floor
};

// Gaussian decoder head. `path` is the variant-specific conditioning block
// already assembled next to the target features.
inline DecodeVars decode(Graph& g, Binder& bind, const ModelParams& params,
                         const Tensor& target_x_norm, Var path,
                         RngStream* rng, bool drop_active) {
  Var x = g.constant(target_x_norm);
  Var in = g.concat_cols({x, path});
  if (g.val(in).cols != static_cast<std::size_t>(params.cfg.decoder_input_dim()))
    throw ContractError("decode: conditioning block does not match variant");
  Var h = in;
  for (std::size_t l = 0; l < params.dec_w.size(); ++l) {
    h = g.tanh_op(g.add_rowvec(g.matmul(h, bind(params.dec_w[l])),
                               bind(params.dec_b[l])));
    if (drop_active && rng)
      h = g.dropout(h, params.cfg.dropout_rate, *rng, true);
  }
  Var mu_raw =
      g.add_rowvec(g.matmul(h, bind(params.dec_mu_w)), bind(params.dec_mu_b));
  Var sigma_raw = g.add_rowvec(g.matmul(h, bind(params.dec_sigma_w)),
                               bind(params.dec_sigma_b));
  DecodeVars d;
  d.mu = g.affine(mu_raw, params.norm.y_scale, params.norm.y_mean);
  d.sigma = g.affine(g.softplus(sigma_raw), params.norm.y_scale,
                     params.cfg.sigma_floor);
  return d;
}

struct GroupOutput {
  SubTask task;
  std::vector<std::size_t> target_indices;
  Var mu;
  Var sigma;
};

struct ForwardOutput {
  Tensor mu;     // [m x 1] in episode target order
  Tensor sigma;  // [m x 1]
  std::vector<GroupOutput> groups;
  LatentState latent;
  LatentVars latent_vars;  // valid when latent path active
  Var context_summary;     // aggregated R
  Var context_reps;
};

// Full forward pass: encode -> aggregate -> latent -> per-task attention ->
// decode. Dropout is live in Train and InferMc modes only.
inline ForwardOutput forward(Graph& g, Binder& bind, const ModelParams& params,
                             const Episode& ep, RngStream& rng, RunMode mode) {
  ep.validate();
  const ModelConfig& cfg = params.cfg;
  bool drop = (mode != RunMode::InferPlain);
  ForwardOutput out;

  Var reps = encode_context(g, bind, params, ep.context, &rng, drop);
  out.context_reps = reps;
  Var summary = aggregate_mean(g, reps);
  out.context_summary = summary;

  Var z;
  if (has_latent_path(cfg.variant)) {
    out.latent_vars = latent_posterior(g, bind, params, summary);
    out.latent.mu = g.val(out.latent_vars.mu);
    out.latent.sigma = g.val(out.latent_vars.sigma);
    out.latent.active = true;
    z = (mode == RunMode::InferPlain)
            ? out.latent_vars.mu
            : sample_latent(g, out.latent_vars, rng);
    out.latent.z = g.val(z);
  }

  Tensor key_x = detail::feature_matrix(params, ep.context);
  out.mu = Tensor(ep.targets.size(), 1);
  out.sigma = Tensor(ep.targets.size(), 1);

  for (int t = 0; t < kNumSubTasks; ++t) {
    SubTask task = static_cast<SubTask>(t);
    std::vector<std::size_t> idx = ep.targets_with_task(task);
    if (idx.empty()) continue;
    std::vector<TargetPoint> pts;
    pts.reserve(idx.size());
    for (std::size_t i : idx) pts.push_back(ep.targets[i]);
    Tensor xg = detail::feature_matrix(params, pts);

    Var path;
    switch (cfg.variant) {
      case Variant::CNP:
        path = g.repeat_row(summary, idx.size());
        break;
      case Variant::LNP:
        path = g.repeat_row(z, idx.size());
        break;
      case Variant::ANP:
      case Variant::TAANP: {
        Var rt = cross_attention(g, bind, params, task, xg, key_x, reps);
        path = g.concat_cols({g.repeat_row(z, idx.size()), rt});
        break;
      }
    }

    DecodeVars dv = decode(g, bind, params, xg, path, &rng, drop);
    out.groups.push_back(GroupOutput{task, idx, dv.mu, dv.sigma});
    const Tensor& mu = g.val(dv.mu);
    const Tensor& sg = g.val(dv.sigma);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      out.mu(idx[r], 0) = mu(r, 0);
      out.sigma(idx[r], 0) = sg(r, 0);
    }
  }
  return out;
}

inline ForwardOutput forward(Graph& g, const ModelParams& params,
                             const Episode& ep, RngStream& rng, RunMode mode) {
  Binder b(g);
  return forward(g, b, params, ep, rng, mode);
}

}  // namespace taanp
