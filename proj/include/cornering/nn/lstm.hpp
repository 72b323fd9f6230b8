#pragma once

#include <Eigen/Dense>

#include <random>
#include <vector>

#include "cornering/error.hpp"
#include "cornering/nn/layers.hpp"

namespace cornering::nn {

/// A sequence is a list of (features x batch) matrices, one per time step.
using Sequence = std::vector<Matrix>;

namespace detail {

inline Matrix sigmoid(const Matrix& x) {
  return (1.0 / (1.0 + (-x.array()).exp())).matrix();
}

}  // namespace detail

/// Single-direction LSTM with gate blocks stacked as [input, forget, cell,
/// output] along the rows of the weight matrices.
class LstmCell {
 public:
  LstmCell() = default;
  LstmCell(Eigen::Index in, Eigen::Index hidden)
      : hidden_(hidden),
        w_input_(Matrix::Zero(4 * hidden, in)),
        w_recurrent_(Matrix::Zero(4 * hidden, hidden)),
        bias_(Vector::Zero(4 * hidden)),
        g_input_(Matrix::Zero(4 * hidden, in)),
        g_recurrent_(Matrix::Zero(4 * hidden, hidden)),
        g_bias_(Vector::Zero(4 * hidden)) {}

  void initialize(std::mt19937_64& rng) {
    glorot_uniform(w_input_, rng);
    glorot_uniform(w_recurrent_, rng);
    bias_.setZero();
  }

  Eigen::Index hidden_size() const { return hidden_; }
  Eigen::Index in_size() const { return w_input_.cols(); }

  /// Runs the recurrence; `reverse` walks time from the last step to the
  /// first. Output h[t] is indexed by original time regardless of direction.
  Sequence forward(const Sequence& xs, bool reverse) {
    const std::size_t n = xs.size();
    if (n == 0) throw InsufficientData("LSTM needs at least one time step");
    const Eigen::Index batch = xs.front().cols();
    const Eigen::Index h = hidden_;
    reverse_ = reverse;
    steps_.assign(n, Step{});
    Sequence out(n);
    Matrix h_prev = Matrix::Zero(h, batch);
    Matrix c_prev = Matrix::Zero(h, batch);
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t t = reverse ? n - 1 - k : k;
      const Matrix& x = xs[t];
      if (x.rows() != in_size() || x.cols() != batch) {
        throw ShapeMismatch("LSTM input shape mismatch at step " +
                            std::to_string(t));
      }
      Matrix z = w_input_ * x + w_recurrent_ * h_prev;
      z.colwise() += bias_;
      Step& s = steps_[t];
      s.x = x;
      s.h_prev = h_prev;
      s.c_prev = c_prev;
      s.i = detail::sigmoid(z.topRows(h));
      s.f = detail::sigmoid(z.middleRows(h, h));
      s.g = z.middleRows(2 * h, h).array().tanh().matrix();
      s.o = detail::sigmoid(z.bottomRows(h));
      s.c = s.f.cwiseProduct(c_prev) + s.i.cwiseProduct(s.g);
      s.tanh_c = s.c.array().tanh().matrix();
      out[t] = s.o.cwiseProduct(s.tanh_c);
      h_prev = out[t];
      c_prev = s.c;
    }
    cached_ = true;
    return out;
  }

  /// Back-propagation through time. `dh[t]` is dL/dh at original time t.
  /// Accumulates parameter gradients and returns dL/dx per time step.
  Sequence backward(const Sequence& dh) {
    if (!cached_) throw UsageError("LSTM backward called before forward");
    const std::size_t n = steps_.size();
    if (dh.size() != n) throw ShapeMismatch("LSTM backward: length mismatch");
    const Eigen::Index h = hidden_;
    const Eigen::Index batch = steps_.front().x.cols();
    Sequence dx(n);
    Matrix dh_next = Matrix::Zero(h, batch);
    Matrix dc_next = Matrix::Zero(h, batch);
    Matrix dz(4 * h, batch);
    for (std::size_t k = n; k-- > 0;) {
      const std::size_t t = reverse_ ? n - 1 - k : k;
      const Step& s = steps_[t];
      const Matrix dht = dh[t] + dh_next;
      const Matrix d_o = dht.cwiseProduct(s.tanh_c);
      const Matrix dc =
          dht.cwiseProduct(s.o)
              .cwiseProduct((1.0 - s.tanh_c.array().square()).matrix()) +
          dc_next;
      const Matrix di = dc.cwiseProduct(s.g);
      const Matrix dg = dc.cwiseProduct(s.i);
      const Matrix df = dc.cwiseProduct(s.c_prev);
      dc_next = dc.cwiseProduct(s.f);
      dz.topRows(h) = (di.array() * s.i.array() * (1.0 - s.i.array())).matrix();
      dz.middleRows(h, h) =
          (df.array() * s.f.array() * (1.0 - s.f.array())).matrix();
      dz.middleRows(2 * h, h) =
          (dg.array() * (1.0 - s.g.array().square())).matrix();
      dz.bottomRows(h) =
          (d_o.array() * s.o.array() * (1.0 - s.o.array())).matrix();
      g_input_ += dz * s.x.transpose();
      g_recurrent_ += dz * s.h_prev.transpose();
      g_bias_ += dz.rowwise().sum();
      dx[t] = w_input_.transpose() * dz;
      dh_next = w_recurrent_.transpose() * dz;
    }
    return dx;
  }

  void zero_grad() {
    g_input_.setZero();
    g_recurrent_.setZero();
    g_bias_.setZero();
  }

  void collect(std::vector<ParamView>& out) {
    append_params(out, w_input_, g_input_);
    append_params(out, w_recurrent_, g_recurrent_);
    append_params(out, bias_, g_bias_);
  }

  Matrix& input_weights() { return w_input_; }
  const Matrix& input_weights() const { return w_input_; }
  Matrix& recurrent_weights() { return w_recurrent_; }
  const Matrix& recurrent_weights() const { return w_recurrent_; }
  Vector& bias() { return bias_; }
  const Vector& bias() const { return bias_; }

 private:
  struct Step {
    Matrix x, h_prev, c_prev, i, f, g, o, c, tanh_c;
  };

  Eigen::Index hidden_ = 0;
  Matrix w_input_;
  Matrix w_recurrent_;
  Vector bias_;
  Matrix g_input_;
  Matrix g_recurrent_;
  Vector g_bias_;
  std::vector<Step> steps_;
  bool reverse_ = false;
  bool cached_ = false;
};

/// Forward and backward LSTMs over the same sequence; step outputs are the
/// concatenation [h_forward; h_backward] (2 * hidden rows).
class BiLstmLayer {
 public:
  BiLstmLayer() = default;
  BiLstmLayer(Eigen::Index in, Eigen::Index hidden)
      : forward_cell_(in, hidden), backward_cell_(in, hidden) {}

  void initialize(std::mt19937_64& rng) {
    forward_cell_.initialize(rng);
    backward_cell_.initialize(rng);
  }

  Eigen::Index hidden_size() const { return forward_cell_.hidden_size(); }
  Eigen::Index in_size() const { return forward_cell_.in_size(); }

  Sequence forward(const Sequence& xs) {
    const Sequence hf = forward_cell_.forward(xs, false);
    const Sequence hb = backward_cell_.forward(xs, true);
    const Eigen::Index h = hidden_size();
    Sequence out(xs.size());
    for (std::size_t t = 0; t < xs.size(); ++t) {
      out[t].resize(2 * h, hf[t].cols());
      out[t].topRows(h) = hf[t];
      out[t].bottomRows(h) = hb[t];
    }
    return out;
  }

  Sequence backward(const Sequence& upstream) {
    const Eigen::Index h = hidden_size();
    Sequence df(upstream.size());
    Sequence db(upstream.size());
    for (std::size_t t = 0; t < upstream.size(); ++t) {
      df[t] = upstream[t].topRows(h);
      db[t] = upstream[t].bottomRows(h);
    }
    Sequence dx = forward_cell_.backward(df);
    const Sequence dxb = backward_cell_.backward(db);
    for (std::size_t t = 0; t < dx.size(); ++t) dx[t] += dxb[t];
    return dx;
  }

  void zero_grad() {
    forward_cell_.zero_grad();
    backward_cell_.zero_grad();
  }

  void collect(std::vector<ParamView>& out) {
    forward_cell_.collect(out);
    backward_cell_.collect(out);
  }

  LstmCell& forward_cell() { return forward_cell_; }
  const LstmCell& forward_cell() const { return forward_cell_; }
  LstmCell& backward_cell() { return backward_cell_; }
  const LstmCell& backward_cell() const { return backward_cell_; }

 private:
  LstmCell forward_cell_;
  LstmCell backward_cell_;
};

/// Convenience wrapper matching the single-sequence (N x features) layout.
inline Matrix bilstm_forward(BiLstmLayer& layer, const Matrix& sequence) {
  if (sequence.rows() < 1) throw InsufficientData("empty sequence");
  Sequence xs(static_cast<std::size_t>(sequence.rows()));
  for (Eigen::Index t = 0; t < sequence.rows(); ++t) {
    xs[static_cast<std::size_t>(t)] = sequence.row(t).transpose();
  }
  const Sequence out = layer.forward(xs);
  Matrix result(sequence.rows(), 2 * layer.hidden_size());
  for (Eigen::Index t = 0; t < sequence.rows(); ++t) {
    result.row(t) = out[static_cast<std::size_t>(t)].col(0).transpose();
  }
  return result;
}

}  // namespace cornering::nn
