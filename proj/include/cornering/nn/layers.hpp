#pragma once

// Dense, tanh and bounded-output layers. Activations are laid out as
// (features x batch): one column per sample.

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "cornering/error.hpp"

namespace cornering::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// A learnable tensor and its gradient buffer, viewed as flat arrays.
struct ParamView {
  double* value;
  double* grad;
  std::size_t size;
};

inline void append_params(std::vector<ParamView>& out, Matrix& value,
                          Matrix& grad) {
  out.push_back({value.data(), grad.data(), static_cast<std::size_t>(value.size())});
}

inline void append_params(std::vector<ParamView>& out, Vector& value,
                          Vector& grad) {
  out.push_back({value.data(), grad.data(), static_cast<std::size_t>(value.size())});
}

/// Glorot-uniform fill in row-major order.
inline void glorot_uniform(Matrix& w, std::mt19937_64& rng) {
  const double limit =
      std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = dist(rng);
  }
}

class DenseLayer {
 public:
  DenseLayer() = default;
  DenseLayer(Eigen::Index in, Eigen::Index out)
      : weights_(Matrix::Zero(out, in)),
        biases_(Vector::Zero(out)),
        grad_weights_(Matrix::Zero(out, in)),
        grad_biases_(Vector::Zero(out)) {}

  void initialize(std::mt19937_64& rng) {
    glorot_uniform(weights_, rng);
    biases_.setZero();
  }

  Eigen::Index in_size() const { return weights_.cols(); }
  Eigen::Index out_size() const { return weights_.rows(); }

  Matrix forward(const Matrix& x) {
    if (x.rows() != in_size()) {
      throw ShapeMismatch("dense layer expects " + std::to_string(in_size()) +
                          " input rows, got " + std::to_string(x.rows()));
    }
    input_ = x;
    cached_ = true;
    return (weights_ * x).colwise() + biases_;
  }

  /// Accumulates parameter gradients and returns dL/dx.
  Matrix backward(const Matrix& upstream) {
    if (!cached_) throw UsageError("dense backward called before forward");
    if (upstream.rows() != out_size() || upstream.cols() != input_.cols()) {
      throw ShapeMismatch("dense backward: upstream shape mismatch");
    }
    grad_weights_ += upstream * input_.transpose();
    grad_biases_ += upstream.rowwise().sum();
    return weights_.transpose() * upstream;
  }

  void zero_grad() {
    grad_weights_.setZero();
    grad_biases_.setZero();
  }

  void collect(std::vector<ParamView>& out) {
    append_params(out, weights_, grad_weights_);
    append_params(out, biases_, grad_biases_);
  }

  Matrix& weights() { return weights_; }
  const Matrix& weights() const { return weights_; }
  Vector& biases() { return biases_; }
  const Vector& biases() const { return biases_; }
  const Matrix& grad_weights() const { return grad_weights_; }
  const Vector& grad_biases() const { return grad_biases_; }

 private:
  Matrix weights_;
  Vector biases_;
  Matrix grad_weights_;
  Vector grad_biases_;
  Matrix input_;
  bool cached_ = false;
};

class TanhLayer {
 public:
  Matrix forward(const Matrix& x) {
    output_ = x.array().tanh().matrix();
    cached_ = true;
    return output_;
  }

  Matrix backward(const Matrix& upstream) const {
    if (!cached_) throw UsageError("tanh backward called before forward");
    return (upstream.array() * (1.0 - output_.array().square())).matrix();
  }

 private:
  Matrix output_;
  bool cached_ = false;
};

/// Z = z_mean * (1 + z_range * tanh(X)) per output row. The output is
/// confined to (z_mean (1 - z_range), z_mean (1 + z_range)).
struct BoundedOutput {
  Vector z_mean = Vector::Constant(2, 10.0);
  double z_range = 0.9;

  void validate() const {
    if (!(z_range > 0 && z_range < 1)) {
      throw InvalidParameter("z_range must lie in (0, 1)");
    }
    if (z_mean.size() == 0 || (z_mean.array() <= 0).any()) {
      throw InvalidParameter("z_mean must be positive");
    }
  }
};

inline Matrix bounded_forward(const BoundedOutput& cfg, const Matrix& x) {
  if (x.rows() != cfg.z_mean.size()) {
    throw ShapeMismatch("bounded output row count differs from z_mean size");
  }
  Matrix z = (1.0 + cfg.z_range * x.array().tanh()).matrix();
  return cfg.z_mean.asDiagonal() * z;
}

/// dL/dX = z_mean * z_range * dL/dZ * (1 - tanh(X)^2).
inline Matrix bounded_backward(const BoundedOutput& cfg, const Matrix& x,
                               const Matrix& upstream) {
  if (x.rows() != upstream.rows() || x.cols() != upstream.cols() ||
      x.rows() != cfg.z_mean.size()) {
    throw ShapeMismatch("bounded backward: shape mismatch");
  }
  const Matrix sech2 = (1.0 - x.array().tanh().square()).matrix();
  return cfg.z_range *
         (cfg.z_mean.asDiagonal() * upstream.cwiseProduct(sech2));
}

class BoundedLayer {
 public:
  BoundedLayer() = default;
  explicit BoundedLayer(BoundedOutput cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
  }

  Matrix forward(const Matrix& x) {
    input_ = x;
    cached_ = true;
    return bounded_forward(cfg_, x);
  }

  Matrix backward(const Matrix& upstream) const {
    if (!cached_) throw UsageError("bounded backward called before forward");
    return bounded_backward(cfg_, input_, upstream);
  }

  const BoundedOutput& config() const { return cfg_; }

 private:
  BoundedOutput cfg_;
  Matrix input_;
  bool cached_ = false;
};

}  // namespace cornering::nn
