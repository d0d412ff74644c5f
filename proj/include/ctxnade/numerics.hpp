#pragma once

// Dense linear algebra, activations, log-domain softmax, optimizers and a
// central-difference gradient oracle. Everything is double precision.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ctxnade {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

using Vector = std::vector<double>;

/// Row-major dense matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

enum class Activation { Sigmoid, Tanh };

inline std::string to_string(Activation g) { return g == Activation::Sigmoid ? "sigmoid" : "tanh"; }

inline Activation parse_activation(const std::string& s) {
  if (s == "sigmoid") return Activation::Sigmoid;
  if (s == "tanh") return Activation::Tanh;
  throw Error("unknown activation '" + s + "' (expected sigmoid|tanh)");
}

inline double sigmoid(double x) {
  // Split on sign so exp never overflows.
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double z = std::exp(x);
  return z / (1.0 + z);
}

inline double activate(double x, Activation g) { return g == Activation::Sigmoid ? sigmoid(x) : std::tanh(x); }

/// Derivative of g expressed through its output y = g(x).
inline double activation_grad_from_output(double y, Activation g) {
  return g == Activation::Sigmoid ? y * (1.0 - y) : 1.0 - y * y;
}

inline Vector activate(std::span<const double> x, Activation g) {
  Vector out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = activate(x[i], g);
  return out;
}

/// Returns M x + b.
inline Vector affine(const Matrix& m, std::span<const double> x, std::span<const double> b) {
  if (m.cols() != x.size() || m.rows() != b.size()) {
    throw DimensionError("affine: matrix is " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                         ", x has " + std::to_string(x.size()) + ", b has " + std::to_string(b.size()));
  }
  Vector out(b.begin(), b.end());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    double acc = 0.0;
    for (std::size_t c = 0; c < row.size(); ++c) acc += row[c] * x[c];
    out[r] += acc;
  }
  return out;
}

/// out += M^T y
inline void add_transpose_product(const Matrix& m, std::span<const double> y, std::span<double> out) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double yr = y[r];
    if (yr == 0.0) continue;
    const auto row = m.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) out[c] += row[c] * yr;
  }
}

/// M += a b^T
inline void add_outer(Matrix& m, std::span<const double> a, std::span<const double> b) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double ar = a[r];
    if (ar == 0.0) continue;
    auto row = m.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += ar * b[c];
  }
}

inline Vector log_softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - mx);
  const double log_norm = mx + std::log(sum);
  Vector out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - log_norm;
  return out;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline bool all_finite(std::span<const double> a) {
  return std::all_of(a.begin(), a.end(), [](double x) { return std::isfinite(x); });
}

/// A named view of one trainable tensor and its gradient accumulator.
struct Parameter {
  std::string name;
  std::span<double> value;
  std::span<double> grad;
};

enum class OptimizerKind { SGD, Adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw Error("optimizer: learning rate must be > 0");
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
      throw Error("optimizer: Adam betas must lie in (0, 1)");
    }
  }
};

/// Descends on the accumulated gradients. Moments are allocated lazily and
/// keyed by parameter position, so the parameter list must keep its order.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg = {}) : cfg_(cfg) { cfg_.validate(); }

  const OptimizerConfig& config() const { return cfg_; }
  std::int64_t steps() const { return t_; }

  void step(std::span<const Parameter> params) {
    for (const auto& p : params) {
      if (!all_finite(p.grad)) throw NumericError("non-finite gradient in parameter '" + p.name + "'");
    }
    ++t_;
    if (cfg_.kind == OptimizerKind::SGD) {
      for (const auto& p : params) {
        for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] -= cfg_.learning_rate * p.grad[i];
      }
      return;
    }
    if (m_.size() < params.size()) {
      m_.resize(params.size());
      v_.resize(params.size());
    }
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      const auto& p = params[k];
      auto& m = m_[k];
      auto& v = v_[k];
      if (m.size() != p.value.size()) {
        m.assign(p.value.size(), 0.0);
        v.assign(p.value.size(), 0.0);
      }
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double g = p.grad[i];
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        p.value[i] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon);
      }
    }
  }

 private:
  OptimizerConfig cfg_;
  std::int64_t t_ = 0;
  std::vector<Vector> m_;
  std::vector<Vector> v_;
};

/// Central differences of f around theta, one coordinate at a time. theta is
/// perturbed in place and restored exactly before returning.
inline Vector finite_difference_gradient(const std::function<double()>& f, std::span<double> theta, double h = 1e-5) {
  Vector grad(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double saved = theta[i];
    theta[i] = saved + h;
    const double up = f();
    theta[i] = saved - h;
    const double down = f();
    theta[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("finite difference: objective is not finite at coordinate " + std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

/// |a-b| / max(1, |a|, |b|)
inline double gradient_relative_error(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace ctxnade
