#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "cornering/error.hpp"
#include "cornering/nn/layers.hpp"
#include "cornering/nn/lstm.hpp"

namespace cornering::nn {

struct MlpConfig {
  Eigen::Index inputs = 7;
  std::vector<Eigen::Index> hidden{20, 20, 20};
  Eigen::Index outputs = 2;
  BoundedOutput bounded;
  std::uint64_t seed = 0;
};

/// Fully connected tanh network ending in a bounded output activation.
class Mlp {
 public:
  Mlp() : Mlp(MlpConfig{}) {}
  explicit Mlp(MlpConfig cfg) : cfg_(std::move(cfg)), head_(cfg_.bounded) {
    if (cfg_.bounded.z_mean.size() != cfg_.outputs) {
      throw ShapeMismatch("z_mean size must equal the output count");
    }
    Eigen::Index prev = cfg_.inputs;
    for (Eigen::Index width : cfg_.hidden) {
      dense_.emplace_back(prev, width);
      prev = width;
    }
    dense_.emplace_back(prev, cfg_.outputs);
    activations_.resize(cfg_.hidden.size());
    std::mt19937_64 rng(cfg_.seed);
    for (auto& layer : dense_) layer.initialize(rng);
  }

  const MlpConfig& config() const { return cfg_; }

  Matrix forward(const Matrix& x) {
    Matrix h = x;
    for (std::size_t k = 0; k < activations_.size(); ++k) {
      h = activations_[k].forward(dense_[k].forward(h));
    }
    return head_.forward(dense_.back().forward(h));
  }

  /// Computes gradients of every weight and bias for the cached forward pass
  /// given dL/dZ at the bounded output. Returns dL/dx.
  Matrix backward(const Matrix& upstream) {
    zero_grad();
    Matrix g = dense_.back().backward(head_.backward(upstream));
    for (std::size_t k = activations_.size(); k-- > 0;) {
      g = dense_[k].backward(activations_[k].backward(g));
    }
    return g;
  }

  void zero_grad() {
    for (auto& layer : dense_) layer.zero_grad();
  }

  std::vector<ParamView> params() {
    std::vector<ParamView> out;
    for (auto& layer : dense_) layer.collect(out);
    return out;
  }

  std::vector<DenseLayer>& dense_layers() { return dense_; }
  const std::vector<DenseLayer>& dense_layers() const { return dense_; }

 private:
  MlpConfig cfg_;
  std::vector<DenseLayer> dense_;
  std::vector<TanhLayer> activations_;
  BoundedLayer head_;
};

struct SequenceRegressorConfig {
  Eigen::Index inputs = 7;
  Eigen::Index lstm_hidden = 20;
  Eigen::Index head_hidden = 20;
  Eigen::Index outputs = 2;
  BoundedOutput bounded;
  std::uint64_t seed = 0;
};

/// BiLSTM encoder, mean pooling over time, dense-tanh-dense head and the
/// bounded output activation.
class SequenceRegressor {
 public:
  SequenceRegressor() : SequenceRegressor(SequenceRegressorConfig{}) {}
  explicit SequenceRegressor(SequenceRegressorConfig cfg)
      : cfg_(std::move(cfg)),
        encoder_(cfg_.inputs, cfg_.lstm_hidden),
        hidden_(2 * cfg_.lstm_hidden, cfg_.head_hidden),
        output_(cfg_.head_hidden, cfg_.outputs),
        head_(cfg_.bounded) {
    if (cfg_.bounded.z_mean.size() != cfg_.outputs) {
      throw ShapeMismatch("z_mean size must equal the output count");
    }
    std::mt19937_64 rng(cfg_.seed);
    encoder_.initialize(rng);
    hidden_.initialize(rng);
    output_.initialize(rng);
  }

  const SequenceRegressorConfig& config() const { return cfg_; }

  /// `xs[t]` is (inputs x batch); returns (outputs x batch).
  Matrix forward(const Sequence& xs) {
    const Sequence hs = encoder_.forward(xs);
    Matrix pooled = Matrix::Zero(hs.front().rows(), hs.front().cols());
    for (const auto& h : hs) pooled += h;
    pooled /= static_cast<double>(hs.size());
    steps_ = hs.size();
    return head_.forward(output_.forward(act_.forward(hidden_.forward(pooled))));
  }

  void backward(const Matrix& upstream) {
    if (steps_ == 0) throw UsageError("backward called before forward");
    zero_grad();
    const Matrix dpooled = hidden_.backward(
        act_.backward(output_.backward(head_.backward(upstream))));
    const Sequence dh(steps_, dpooled / static_cast<double>(steps_));
    encoder_.backward(dh);
  }

  void zero_grad() {
    encoder_.zero_grad();
    hidden_.zero_grad();
    output_.zero_grad();
  }

  std::vector<ParamView> params() {
    std::vector<ParamView> out;
    encoder_.collect(out);
    hidden_.collect(out);
    output_.collect(out);
    return out;
  }

  BiLstmLayer& encoder() { return encoder_; }
  const BiLstmLayer& encoder() const { return encoder_; }
  DenseLayer& hidden_layer() { return hidden_; }
  const DenseLayer& hidden_layer() const { return hidden_; }
  DenseLayer& output_layer() { return output_; }
  const DenseLayer& output_layer() const { return output_; }

 private:
  SequenceRegressorConfig cfg_;
  BiLstmLayer encoder_;
  DenseLayer hidden_;
  TanhLayer act_;
  DenseLayer output_;
  BoundedLayer head_;
  std::size_t steps_ = 0;
};

}  // namespace cornering::nn
