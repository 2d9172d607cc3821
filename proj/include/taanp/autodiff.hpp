#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "taanp/rng.hpp"
#include "taanp/tensor.hpp"

namespace taanp {

// A named trainable (or buffer) tensor living outside any graph. Gradients
// accumulate across backward() calls until zero_grad().
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Tensor v, bool train = true)
      : name(std::move(n)),
        value(std::move(v)),
        grad(value.rows, value.cols),
        trainable(train) {}

  void zero_grad() { grad.fill(0.0); }
};

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

inline double gaussian_logpdf(double y, double mu, double sigma) {
  if (!(sigma > 0.0)) throw NumericError("gaussian_logpdf: sigma must be > 0");
  double d = (y - mu) / sigma;
  return -0.5 * d * d - std::log(sigma) - 0.5 * std::log(2.0 * std::numbers::pi);
}

// Reverse-mode tape over 2-D tensors. One graph per episode forward/backward;
// node creation order is the topological order, so backward() is a single
// reverse sweep. Leaves bound to Parameters push their gradient out to the
// parameter when the sweep finishes.
class Graph {
 public:
  Var constant(Tensor t) { return push(std::move(t), false, nullptr); }

  Var leaf(Parameter& p) { return push(p.value, p.trainable, &p); }

  const Tensor& val(Var v) const { return nodes_[idx(v)].val; }

  Tensor& grad_of(Var v) {
    Node& n = nodes_[idx(v)];
    ensure_grad(n);
    return n.grad;
  }

  std::size_t size() const { return nodes_.size(); }

  // ---- arithmetic ----

  Var matmul(Var a, Var b) {
    Tensor out = matmul_plain(val(a), val(b));
    return binary(std::move(out), a, b, [](Graph& g, Node& n, int ia, int ib) {
      if (g.wants(ia))
        g.accumulate(ia, matmul_bt_plain(n.grad, g.nodes_[ib].val));
      if (g.wants(ib))
        g.accumulate(ib, matmul_at_plain(g.nodes_[ia].val, n.grad));
    });
  }

  // a * b^T
  Var matmul_bt(Var a, Var b) {
    Tensor out = matmul_bt_plain(val(a), val(b));
    return binary(std::move(out), a, b, [](Graph& g, Node& n, int ia, int ib) {
      if (g.wants(ia))
        g.accumulate(ia, matmul_plain(n.grad, g.nodes_[ib].val));
      if (g.wants(ib))
        g.accumulate(ib, matmul_at_plain(n.grad, g.nodes_[ia].val));
    });
  }

  Var add(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    check(ta.same_shape(tb), "add: shape mismatch");
    Tensor out = ta;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += tb.data[i];
    return binary(std::move(out), a, b, [](Graph& g, Node& n, int ia, int ib) {
      if (g.wants(ia)) g.accumulate(ia, n.grad);
      if (g.wants(ib)) g.accumulate(ib, n.grad);
    });
  }

  Var sub(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    check(ta.same_shape(tb), "sub: shape mismatch");
    Tensor out = ta;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= tb.data[i];
    return binary(std::move(out), a, b, [](Graph& g, Node& n, int ia, int ib) {
      if (g.wants(ia)) g.accumulate(ia, n.grad);
      if (g.wants(ib)) {
        Tensor neg = n.grad;
        for (auto& v : neg.data) v = -v;
        g.accumulate(ib, neg);
      }
    });
  }

  Var mul(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    check(ta.same_shape(tb), "mul: shape mismatch");
    Tensor out = ta;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= tb.data[i];
    return binary(std::move(out), a, b, [](Graph& g, Node& n, int ia, int ib) {
      if (g.wants(ia)) {
        Tensor d = n.grad;
        const Tensor& other = g.nodes_[ib].val;
        for (std::size_t i = 0; i < d.size(); ++i) d.data[i] *= other.data[i];
        g.accumulate(ia, d);
      }
      if (g.wants(ib)) {
        Tensor d = n.grad;
        const Tensor& other = g.nodes_[ia].val;
        for (std::size_t i = 0; i < d.size(); ++i) d.data[i] *= other.data[i];
        g.accumulate(ib, d);
      }
    });
  }

  // x [n x d] + b [1 x d], broadcast over rows.
  Var add_rowvec(Var x, Var b) {
    const Tensor& tx = val(x);
    const Tensor& tb = val(b);
    check(tb.rows == 1 && tb.cols == tx.cols, "add_rowvec: shape mismatch");
    Tensor out = tx;
    for (std::size_t r = 0; r < out.rows; ++r)
      for (std::size_t c = 0; c < out.cols; ++c) out(r, c) += tb(0, c);
    return binary(std::move(out), x, b, [](Graph& g, Node& n, int ix, int ib) {
      if (g.wants(ix)) g.accumulate(ix, n.grad);
      if (g.wants(ib)) {
        Tensor d(1, n.grad.cols);
        for (std::size_t r = 0; r < n.grad.rows; ++r)
          for (std::size_t c = 0; c < n.grad.cols; ++c)
            d(0, c) += n.grad(r, c);
        g.accumulate(ib, d);
      }
    });
  }

  // k * x + c, elementwise with scalar constants.
  Var affine(Var x, double k, double c) {
    Tensor out = val(x);
    for (auto& v : out.data) v = k * v + c;
    return unary(std::move(out), x, [k](Graph& g, Node& n, int ix) {
      if (!g.wants(ix)) return;
      Tensor d = n.grad;
      for (auto& v : d.data) v *= k;
      g.accumulate(ix, d);
    });
  }

  Var mul_elem_const(Var x, Tensor w) {
    const Tensor& tx = val(x);
    check(tx.same_shape(w), "mul_elem_const: shape mismatch");
    Tensor out = tx;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= w.data[i];
    Tensor wc = std::move(w);
    return unary(std::move(out), x, [wc](Graph& g, Node& n, int ix) {
      if (!g.wants(ix)) return;
      Tensor d = n.grad;
      for (std::size_t i = 0; i < d.size(); ++i) d.data[i] *= wc.data[i];
      g.accumulate(ix, d);
    });
  }

  Var tanh_op(Var x) {
    Tensor out = val(x);
    for (auto& v : out.data) v = std::tanh(v);
    Tensor saved = out;
    return unary(std::move(out), x, [saved](Graph& g, Node& n, int ix) {
      if (!g.wants(ix)) return;
      Tensor d = n.grad;
      for (std::size_t i = 0; i < d.size(); ++i)
        d.data[i] *= 1.0 - saved.data[i] * saved.data[i];
      g.accumulate(ix, d);
    });
  }

  static double softplus_scalar(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  }

  Var softplus(Var x) {
    Tensor out = val(x);
    for (auto& v : out.data) v = softplus_scalar(v);
    Tensor in = val(x);
    return unary(std::move(out), x, [in](Graph& g, Node& n, int ix) {
      if (!g.wants(ix)) return;
      Tensor d = n.grad;
      for (std::size_t i = 0; i < d.size(); ++i)
        d.data[i] *= 1.0 / (1.0 + std::exp(-in.data[i]));
      g.accumulate(ix, d);
    });
  }

  // Row-wise softmax with max subtraction.
  Var softmax_lastdim(Var x) {
    Tensor out = val(x);
    for (std::size_t r = 0; r < out.rows; ++r) {
      double mx = out(r, 0);
      for (std::size_t c = 1; c < out.cols; ++c) mx = std::max(mx, out(r, c));
      double sum = 0.0;
      for (std::size_t c = 0; c < out.cols; ++c) {
        double e = std::exp(out(r, c) - mx);
        out(r, c) = e;
        sum += e;
      }
      for (std::size_t c = 0; c < out.cols; ++c) out(r, c) /= sum;
    }
    Tensor s = out;
    return unary(std::move(out), x, [s](Graph& g, Node& n, int ix) {
      if (!g.wants(ix)) return;
      Tensor d = n.grad;
      for (std::size_t r = 0; r < d.rows; ++r) {
        double dot = 0.0;
        for (std::size_t c = 0; c < d.cols; ++c) dot += d(r, c) * s(r, c);
        for (std::size_t c = 0; c < d.cols; ++c)
          d(r, c) = (d(r, c) - dot) * s(r, c);
      }
      g.accumulate(ix, d);
    });
  }

  // Inverted dropout: survivors scale by 1/(1-rate) when active, identity
  // otherwise. The mask comes off the caller's stream so inference passes
  // are reproducible per stream id.
  Var dropout(Var x, double rate, RngStream& rng, bool active) {
    if (!(rate >= 0.0 && rate < 1.0))
      throw ConfigError("dropout: rate must be in [0, 1)");
    if (!active || rate == 0.0) {
      Tensor out = val(x);
      return unary(std::move(out), x, [](Graph& g, Node& n, int ix) {
        if (g.wants(ix)) g.accumulate(ix, n.grad);
      });
    }
    const Tensor& tx = val(x);
    Tensor mask(tx.rows, tx.cols);
    double scale = 1.0 / (1.0 - rate);
    for (auto& m : mask.data) m = rng.bernoulli(rate) ? 0.0 : scale;
    Tensor out = tx;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= mask.data[i];
    return unary(std::move(out), x, [mask](Graph& g, Node& n, int ix) {
      if (!g.wants(ix)) return;
      Tensor d = n.grad;
      for (std::size_t i = 0; i < d.size(); ++i) d.data[i] *= mask.data[i];
      g.accumulate(ix, d);
    });
  }

  Var concat_cols(const std::vector<Var>& parts) {
    check(!parts.empty(), "concat_cols: empty input");
    std::size_t rows = val(parts[0]).rows;
    std::size_t cols = 0;
    for (Var p : parts) {
      check(val(p).rows == rows, "concat_cols: row mismatch");
      cols += val(p).cols;
    }
    Tensor out(rows, cols);
    std::vector<std::size_t> offs;
    std::size_t off = 0;
    for (Var p : parts) {
      const Tensor& t = val(p);
      offs.push_back(off);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < t.cols; ++c) out(r, off + c) = t(r, c);
      off += t.cols;
    }
    std::vector<int> pids;
    for (Var p : parts) pids.push_back(p.id);
    Var v = push(std::move(out), false, nullptr);
    Node& n = nodes_[idx(v)];
    n.requires_grad = false;
    for (Var p : parts) n.requires_grad |= nodes_[idx(p)].requires_grad;
    n.back = [pids, offs](Graph& g, Node& self) {
      for (std::size_t k = 0; k < pids.size(); ++k) {
        int ip = pids[k];
        if (!g.wants(ip)) continue;
        const Tensor& pv = g.nodes_[ip].val;
        Tensor d(pv.rows, pv.cols);
        for (std::size_t r = 0; r < pv.rows; ++r)
          for (std::size_t c = 0; c < pv.cols; ++c)
            d(r, c) = self.grad(r, offs[k] + c);
        g.accumulate(ip, d);
      }
    };
    return v;
  }

  Var slice_cols(Var x, std::size_t start, std::size_t len) {
    const Tensor& tx = val(x);
    check(start + len <= tx.cols, "slice_cols: out of range");
    Tensor out(tx.rows, len);
    for (std::size_t r = 0; r < tx.rows; ++r)
      for (std::size_t c = 0; c < len; ++c) out(r, c) = tx(r, start + c);
    return unary(std::move(out), x, [start, len](Graph& g, Node& n, int ix) {
      if (!g.wants(ix)) return;
      const Tensor& pv = g.nodes_[ix].val;
      Tensor d(pv.rows, pv.cols);
      for (std::size_t r = 0; r < pv.rows; ++r)
        for (std::size_t c = 0; c < len; ++c) d(r, start + c) = n.grad(r, c);
      g.accumulate(ix, d);
    });
  }

  Var gather_rows(Var x, std::vector<std::size_t> rows) {
    const Tensor& tx = val(x);
    Tensor out(rows.size(), tx.cols);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      check(rows[r] < tx.rows, "gather_rows: index out of range");
      for (std::size_t c = 0; c < tx.cols; ++c) out(r, c) = tx(rows[r], c);
    }
    std::vector<std::size_t> ridx = std::move(rows);
    return unary(std::move(out), x, [ridx](Graph& g, Node& n, int ix) {
      if (!g.wants(ix)) return;
      const Tensor& pv = g.nodes_[ix].val;
      Tensor d(pv.rows, pv.cols);
      for (std::size_t r = 0; r < ridx.size(); ++r)
        for (std::size_t c = 0; c < pv.cols; ++c)
          d(ridx[r], c) += n.grad(r, c);
      g.accumulate(ix, d);
    });
  }

  // x [1 x d] replicated n times.
  Var repeat_row(Var x, std::size_t n) {
    const Tensor& tx = val(x);
    check(tx.rows == 1, "repeat_row: input must be a row vector");
    Tensor out(n, tx.cols);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < tx.cols; ++c) out(r, c) = tx(0, c);
    return unary(std::move(out), x, [](Graph& g, Node& n, int ix) {
      if (!g.wants(ix)) return;
      Tensor d(1, n.grad.cols);
      for (std::size_t r = 0; r < n.grad.rows; ++r)
        for (std::size_t c = 0; c < n.grad.cols; ++c) d(0, c) += n.grad(r, c);
      g.accumulate(ix, d);
    });
  }

  // Column means with canonical (sorted) accumulation order, so the result
  // is bit-identical under any permutation of the rows.
  Var mean_rows_canonical(Var x) {
    const Tensor& tx = val(x);
    check(tx.rows >= 1, "mean_rows_canonical: needs at least one row");
    Tensor out(1, tx.cols);
    std::vector<double> col(tx.rows);
    for (std::size_t c = 0; c < tx.cols; ++c) {
      for (std::size_t r = 0; r < tx.rows; ++r) col[r] = tx(r, c);
      std::sort(col.begin(), col.end());
      double s = 0.0;
      for (double v : col) s += v;
      out(0, c) = s / static_cast<double>(tx.rows);
    }
    return unary(std::move(out), x, [](Graph& g, Node& n, int ix) {
      if (!g.wants(ix)) return;
      const Tensor& pv = g.nodes_[ix].val;
      double inv = 1.0 / static_cast<double>(pv.rows);
      Tensor d(pv.rows, pv.cols);
      for (std::size_t r = 0; r < pv.rows; ++r)
        for (std::size_t c = 0; c < pv.cols; ++c)
          d(r, c) = n.grad(0, c) * inv;
      g.accumulate(ix, d);
    });
  }

  Var sum_all(Var x) {
    const Tensor& tx = val(x);
    Tensor out(1, 1);
    double s = 0.0;
    for (double v : tx.data) s += v;
    out(0, 0) = s;
    return unary(std::move(out), x, [](Graph& g, Node& n, int ix) {
      if (!g.wants(ix)) return;
      const Tensor& pv = g.nodes_[ix].val;
      Tensor d(pv.rows, pv.cols, n.grad(0, 0));
      g.accumulate(ix, d);
    });
  }

  Var mean_all(Var x) {
    std::size_t n = val(x).size();
    return affine(sum_all(x), 1.0 / static_cast<double>(n), 0.0);
  }

  // Per-element (y - mu)^2 / (2 sigma^2) + log(sigma); the Gaussian NLL up
  // to its additive constant. Differentiable in mu and sigma.
  Var gaussian_nll_terms(Var mu, Var sigma, Tensor y) {
    const Tensor& tm = val(mu);
    const Tensor& ts = val(sigma);
    check(tm.same_shape(ts) && tm.same_shape(y),
          "gaussian_nll_terms: shape mismatch");
    for (double s : ts.data)
      if (!(s > 0.0)) throw NumericError("gaussian_nll_terms: sigma must be > 0");
    Tensor out = tm;
    for (std::size_t i = 0; i < out.size(); ++i) {
      double d = y.data[i] - tm.data[i];
      out.data[i] = d * d / (2.0 * ts.data[i] * ts.data[i]) +
                    std::log(ts.data[i]);
    }
    Tensor yc = std::move(y);
    return binary(std::move(out), mu, sigma,
                  [yc](Graph& g, Node& n, int im, int is) {
                    const Tensor& m = g.nodes_[im].val;
                    const Tensor& s = g.nodes_[is].val;
                    if (g.wants(im)) {
                      Tensor d = n.grad;
                      for (std::size_t i = 0; i < d.size(); ++i)
                        d.data[i] *= (m.data[i] - yc.data[i]) /
                                     (s.data[i] * s.data[i]);
                      g.accumulate(im, d);
                    }
                    if (g.wants(is)) {
                      Tensor d = n.grad;
                      for (std::size_t i = 0; i < d.size(); ++i) {
                        double r = yc.data[i] - m.data[i];
                        double sg = s.data[i];
                        d.data[i] *= 1.0 / sg - r * r / (sg * sg * sg);
                      }
                      g.accumulate(is, d);
                    }
                  });
  }

  // Elementwise log N(y | mu, sigma^2).
  Var gaussian_logpdf_op(Var mu, Var sigma, Tensor y) {
    Var terms = gaussian_nll_terms(mu, sigma, std::move(y));
    return affine(terms, -1.0, -0.5 * std::log(2.0 * std::numbers::pi));
  }

  // KL( N(mu1, diag s1^2) || N(mu2, diag s2^2) ), summed over dimensions.
  Var kl_diag_gaussians(Var mu1, Var s1, Var mu2, Var s2) {
    const Tensor& m1 = val(mu1);
    const Tensor& t1 = val(s1);
    const Tensor& m2 = val(mu2);
    const Tensor& t2 = val(s2);
    check(m1.same_shape(t1) && m1.same_shape(m2) && m1.same_shape(t2),
          "kl_diag_gaussians: shape mismatch");
    Tensor out(1, 1);
    double kl = 0.0;
    for (std::size_t i = 0; i < m1.size(); ++i) {
      double a = t1.data[i], b = t2.data[i];
      double dm = m1.data[i] - m2.data[i];
      kl += std::log(b / a) + (a * a + dm * dm) / (2.0 * b * b) - 0.5;
    }
    out(0, 0) = kl;
    std::vector<int> pids = {mu1.id, s1.id, mu2.id, s2.id};
    Var v = push(std::move(out), false, nullptr);
    Node& n = nodes_[idx(v)];
    for (int p : pids) n.requires_grad |= nodes_[p].requires_grad;
    n.back = [pids](Graph& g, Node& self) {
      double gg = self.grad(0, 0);
      const Tensor& m1v = g.nodes_[pids[0]].val;
      const Tensor& s1v = g.nodes_[pids[1]].val;
      const Tensor& m2v = g.nodes_[pids[2]].val;
      const Tensor& s2v = g.nodes_[pids[3]].val;
      Tensor dm1(m1v.rows, m1v.cols), ds1(s1v.rows, s1v.cols);
      Tensor dm2(m2v.rows, m2v.cols), ds2(s2v.rows, s2v.cols);
      for (std::size_t i = 0; i < m1v.size(); ++i) {
        double a = s1v.data[i], b = s2v.data[i];
        double dm = m1v.data[i] - m2v.data[i];
        dm1.data[i] = gg * dm / (b * b);
        dm2.data[i] = -gg * dm / (b * b);
        ds1.data[i] = gg * (a / (b * b) - 1.0 / a);
        ds2.data[i] = gg * (1.0 / b - (a * a + dm * dm) / (b * b * b));
      }
      if (g.wants(pids[0])) g.accumulate(pids[0], dm1);
      if (g.wants(pids[1])) g.accumulate(pids[1], ds1);
      if (g.wants(pids[2])) g.accumulate(pids[2], dm2);
      if (g.wants(pids[3])) g.accumulate(pids[3], ds2);
    };
    return v;
  }

  // Reverse sweep from a scalar loss. Node gradients are reset per call;
  // parameter gradients accumulate across calls.
  void backward(Var loss) {
    Node& ln = nodes_[idx(loss)];
    if (ln.val.rows != 1 || ln.val.cols != 1)
      throw ContractError("backward: loss must be scalar");
    for (Node& n : nodes_) {
      if (n.grad.size() != 0) n.grad.fill(0.0);
    }
    ensure_grad(ln);
    ln.grad(0, 0) = 1.0;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.size() == 0) continue;
      if (n.back) n.back(*this, n);
      if (n.leaf && n.leaf->trainable) {
        Tensor& pg = n.leaf->grad;
        for (std::size_t k = 0; k < pg.size(); ++k)
          pg.data[k] += n.grad.data[k];
      }
    }
  }

 private:
  struct Node {
    Tensor val;
    Tensor grad;
    bool requires_grad = false;
    Parameter* leaf = nullptr;
    std::function<void(Graph&, Node&)> back;
  };

  static std::size_t idx(Var v) {
    check(v.valid(), "invalid Var");
    return static_cast<std::size_t>(v.id);
  }

  bool wants(int id) const { return nodes_[id].requires_grad; }

  void ensure_grad(Node& n) {
    if (n.grad.size() == 0) n.grad = Tensor(n.val.rows, n.val.cols);
  }

  void accumulate(int id, const Tensor& d) {
    Node& n = nodes_[id];
    ensure_grad(n);
    for (std::size_t i = 0; i < d.size(); ++i) n.grad.data[i] += d.data[i];
  }

  Var push(Tensor t, bool req, Parameter* leaf) {
    Node n;
    n.val = std::move(t);
    n.requires_grad = req;
    n.leaf = leaf;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  template <typename F>
  Var unary(Tensor out, Var x, F&& back) {
    Var v = push(std::move(out), false, nullptr);
    Node& n = nodes_[idx(v)];
    n.requires_grad = nodes_[idx(x)].requires_grad;
    int ix = x.id;
    n.back = [ix, f = std::forward<F>(back)](Graph& g, Node& self) {
      f(g, self, ix);
    };
    return v;
  }

  template <typename F>
  Var binary(Tensor out, Var a, Var b, F&& back) {
    Var v = push(std::move(out), false, nullptr);
    Node& n = nodes_[idx(v)];
    n.requires_grad =
        nodes_[idx(a)].requires_grad || nodes_[idx(b)].requires_grad;
    int ia = a.id, ib = b.id;
    n.back = [ia, ib, f = std::forward<F>(back)](Graph& g, Node& self) {
      f(g, self, ia, ib);
    };
    return v;
  }

  // Deque: node creation must not invalidate value references handed out
  // by val().
  std::deque<Node> nodes_;
};

}  // namespace taanp
