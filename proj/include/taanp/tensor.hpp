#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "taanp/common.hpp"

namespace taanp {

// Dense row-major 2-D tensor of doubles. Everything the model touches is a
// matrix; vectors are 1xN or Nx1.
struct Tensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}
  Tensor(std::size_t r, std::size_t c, std::vector<double> d)
      : rows(r), cols(c), data(std::move(d)) {
    check(data.size() == rows * cols, "Tensor: data size mismatch");
  }

  static Tensor row(std::initializer_list<double> vals) {
    Tensor t(1, vals.size());
    std::size_t i = 0;
    for (double v : vals) t.data[i++] = v;
    return t;
  }

  static Tensor identity(std::size_t n) {
    Tensor t(n, n);
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
  }

  std::size_t size() const { return data.size(); }

  double& operator()(std::size_t r, std::size_t c) {
    return data[r * cols + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    return data[r * cols + c];
  }

  bool same_shape(const Tensor& o) const {
    return rows == o.rows && cols == o.cols;
  }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void fill(double v) {
    for (auto& x : data) x = v;
  }

  std::string shape_str() const {
    return std::to_string(rows) + "x" + std::to_string(cols);
  }
};

inline Tensor matmul_plain(const Tensor& a, const Tensor& b) {
  if (a.cols != b.rows)
    throw DimensionError("matmul: inner dimensions disagree (" +
                         a.shape_str() + " x " + b.shape_str() + ")");
  Tensor out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* arow = &a.data[i * a.cols];
    double* orow = &out.data[i * out.cols];
    for (std::size_t k = 0; k < a.cols; ++k) {
      double aik = arow[k];
      if (aik == 0.0) continue;
      const double* brow = &b.data[k * b.cols];
      for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

// a * b^T
inline Tensor matmul_bt_plain(const Tensor& a, const Tensor& b) {
  if (a.cols != b.cols)
    throw DimensionError("matmul_bt: inner dimensions disagree (" +
                         a.shape_str() + " x " + b.shape_str() + "^T)");
  Tensor out(a.rows, b.rows);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* arow = &a.data[i * a.cols];
    for (std::size_t j = 0; j < b.rows; ++j) {
      const double* brow = &b.data[j * b.cols];
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) s += arow[k] * brow[k];
      out(i, j) = s;
    }
  }
  return out;
}

// a^T * b
inline Tensor matmul_at_plain(const Tensor& a, const Tensor& b) {
  if (a.rows != b.rows)
    throw DimensionError("matmul_at: inner dimensions disagree");
  Tensor out(a.cols, b.cols);
  for (std::size_t k = 0; k < a.rows; ++k) {
    const double* arow = &a.data[k * a.cols];
    const double* brow = &b.data[k * b.cols];
    for (std::size_t i = 0; i < a.cols; ++i) {
      double aki = arow[i];
      if (aki == 0.0) continue;
      double* orow = &out.data[i * out.cols];
      for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aki * brow[j];
    }
  }
  return out;
}

inline std::uint64_t tensor_checksum(const Tensor& t,
                                     std::uint64_t h = 0xcbf29ce484222325ull) {
  return fnv1a64(t.data.data(), t.data.size() * sizeof(double), h);
}

}  // namespace taanp
