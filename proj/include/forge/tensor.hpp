#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace forge {

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense row-major array of doubles with a concrete shape.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s, double fill = 0.0)
      : shape(std::move(s)), values(element_count(shape), fill) {}
  Tensor(std::vector<std::size_t> s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
    if (values.size() != element_count(shape))
      throw ShapeError("tensor data length " + std::to_string(values.size()) +
                       " does not match shape " + shape_string());
  }

  static std::size_t element_count(const std::vector<std::size_t>& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
  }

  std::size_t size() const { return values.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t rows() const { return shape.empty() ? 0 : shape.front(); }
  /// Product of all but the first dimension.
  std::size_t cols() const { return shape.size() < 2 ? 1 : values.size() / std::max<std::size_t>(rows(), 1); }

  double& operator()(std::size_t r, std::size_t c) { return values[r * shape[1] + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * shape[1] + c]; }

  std::span<double> row(std::size_t r) { return {values.data() + r * cols(), cols()}; }
  std::span<const double> row(std::size_t r) const { return {values.data() + r * cols(), cols()}; }

  bool all_finite() const {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
  }

  std::string shape_string() const {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) out += (i ? ", " : "") + std::to_string(shape[i]);
    return out + "]";
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

namespace ops {

/// [m,k] x [k,n] -> [m,n]
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0])
    throw ShapeError("matmul " + a.shape_string() + " x " + b.shape_string());
  const std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double* dst = out.values.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a.values[i * k + p];
      if (av == 0.0) continue;
      const double* src = b.values.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) dst[j] += av * src[j];
    }
  }
  return out;
}

/// aᵀ x b: [k,m]ᵀ x [k,n] -> [m,n]
inline Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape[0] != b.shape[0])
    throw ShapeError("matmul_tn " + a.shape_string() + " x " + b.shape_string());
  const std::size_t k = a.shape[0], m = a.shape[1], n = b.shape[1];
  Tensor out({m, n});
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a.values.data() + p * m;
    const double* brow = b.values.data() + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* dst = out.values.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) dst[j] += av * brow[j];
    }
  }
  return out;
}

/// a x bᵀ: [m,k] x [n,k]ᵀ -> [m,n]
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[1])
    throw ShapeError("matmul_nt " + a.shape_string() + " x " + b.shape_string());
  const std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[0];
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a.values.data() + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b.values.data() + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      out.values[i * n + j] = acc;
    }
  }
  return out;
}

/// [m,n] + [n] broadcast over rows.
inline Tensor add_bias(const Tensor& a, const Tensor& bias) {
  if (a.rank() != 2 || bias.rank() != 1 || a.shape[1] != bias.shape[0])
    throw ShapeError("addbias " + a.shape_string() + " + " + bias.shape_string());
  Tensor out = a;
  const std::size_t n = a.shape[1];
  for (std::size_t i = 0; i < a.shape[0]; ++i)
    for (std::size_t j = 0; j < n; ++j) out.values[i * n + j] += bias.values[j];
  return out;
}

/// Column sums of a matrix.
inline Tensor column_sum(const Tensor& a) {
  const std::size_t n = a.shape[1];
  Tensor out({n});
  for (std::size_t i = 0; i < a.shape[0]; ++i)
    for (std::size_t j = 0; j < n; ++j) out.values[j] += a.values[i * n + j];
  return out;
}

inline Tensor relu(const Tensor& a) {
  Tensor out = a;
  for (double& v : out.values) v = v > 0.0 ? v : 0.0;
  return out;
}

/// Row-wise softmax with max subtraction.
inline Tensor softmax_rows(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("softmax needs a matrix, got " + a.shape_string());
  Tensor out = a;
  for (std::size_t i = 0; i < a.shape[0]; ++i) {
    auto row = out.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double total = 0.0;
    for (double& v : row) {
      v = std::exp(v - mx);
      total += v;
    }
    for (double& v : row) v /= total;
  }
  return out;
}

/// Row-wise log-softmax, log p = z - max - log Σ exp(z - max).
inline Tensor log_softmax_rows(const Tensor& a) {
  Tensor out = a;
  for (std::size_t i = 0; i < a.shape[0]; ++i) {
    auto row = out.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double total = 0.0;
    for (double v : row) total += std::exp(v - mx);
    const double lse = mx + std::log(total);
    for (double& v : row) v -= lse;
  }
  return out;
}

inline void axpy(double alpha, const Tensor& x, Tensor& y) {
  for (std::size_t i = 0; i < y.values.size(); ++i) y.values[i] += alpha * x.values[i];
}

}  // namespace ops
}  // namespace forge
