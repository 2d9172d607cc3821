#pragma once

#include <cmath>
#include <vector>

#include "taanp/autodiff.hpp"

namespace taanp {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

inline double global_grad_norm(const std::vector<Parameter*>& params) {
  double sq = 0.0;
  for (const Parameter* p : params)
    for (double gv : p->grad.data) sq += gv * gv;
  return std::sqrt(sq);
}

// Scales gradients in place when the global norm exceeds max_norm.
inline double clip_gradients(const std::vector<Parameter*>& params,
                             double max_norm) {
  double norm = global_grad_norm(params);
  if (max_norm > 0.0 && norm > max_norm) {
    double scale = max_norm / norm;
    for (Parameter* p : params)
      for (double& gv : p->grad.data) gv *= scale;
  }
  return norm;
}

// Adaptive moment estimation with decoupled weight decay. Moment tensors
// are owned by the caller so training state can be checkpointed and
// resumed bit-exactly.
inline void adamw_step(const std::vector<Parameter*>& params,
                       std::vector<Tensor>& m, std::vector<Tensor>& v,
                       long& step, const AdamWConfig& cfg) {
  if (m.empty()) {
    for (const Parameter* p : params) {
      m.emplace_back(p->value.rows, p->value.cols);
      v.emplace_back(p->value.rows, p->value.cols);
    }
  }
  check(m.size() == params.size() && v.size() == params.size(),
        "adamw_step: moment state does not match parameter list");
  ++step;
  double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      double gv = p.grad.data[k];
      double& mk = m[i].data[k];
      double& vk = v[i].data[k];
      mk = cfg.beta1 * mk + (1.0 - cfg.beta1) * gv;
      vk = cfg.beta2 * vk + (1.0 - cfg.beta2) * gv * gv;
      double mhat = mk / bc1;
      double vhat = vk / bc2;
      p.value.data[k] -= cfg.lr * (mhat / (std::sqrt(vhat) + cfg.eps) +
                                   cfg.weight_decay * p.value.data[k]);
    }
  }
}

}  // namespace taanp
