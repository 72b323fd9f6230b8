#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "cornering/nn/adam.hpp"
#include "cornering/nn/layers.hpp"
#include "cornering/nn/lstm.hpp"
#include "cornering/nn/networks.hpp"
#include "cornering/nn/serialize.hpp"
#include "support.hpp"

using namespace cornering;
using namespace cornering::nn;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng,
                     double scale = 1.0) {
  std::uniform_real_distribution<double> d(-scale, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

Sequence random_sequence(std::size_t n, Eigen::Index rows, Eigen::Index batch,
                         std::mt19937_64& rng) {
  Sequence xs;
  for (std::size_t t = 0; t < n; ++t) xs.push_back(random_matrix(rows, batch, rng));
  return xs;
}

double weighted_sum(const Matrix& out, const Matrix& w) {
  return out.cwiseProduct(w).sum();
}

double weighted_sum(const Sequence& out, const Sequence& w) {
  double s = 0.0;
  for (std::size_t t = 0; t < out.size(); ++t) s += weighted_sum(out[t], w[t]);
  return s;
}

// Central difference agreement within `tol` relative, with a floor tied to
// the gradient scale so tiny components are compared absolutely.
bool grad_close(double analytic, double numeric, double scale, double tol = 1e-5) {
  return std::abs(analytic - numeric) <=
         tol * std::max({std::abs(analytic), std::abs(numeric), 1e-3 * scale});
}

// Checks every (or `limit` randomly chosen) parameter of `params` against
// central differences of `loss`. `grads` must run forward and backward.
void check_param_grads(const std::vector<ParamView>& params,
                       const std::function<double()>& loss,
                       const std::function<void()>& grads, std::mt19937_64& rng,
                       std::size_t limit = 0) {
  grads();
  std::vector<std::pair<std::size_t, std::size_t>> index;
  double scale = 0.0;
  for (std::size_t b = 0; b < params.size(); ++b) {
    for (std::size_t k = 0; k < params[b].size; ++k) {
      index.emplace_back(b, k);
      scale = std::max(scale, std::abs(params[b].grad[k]));
    }
  }
  if (limit && limit < index.size()) {
    std::shuffle(index.begin(), index.end(), rng);
    index.resize(limit);
  }
  std::vector<double> analytic;
  for (auto [b, k] : index) analytic.push_back(params[b].grad[k]);
  const double h = 1e-6;
  for (std::size_t n = 0; n < index.size(); ++n) {
    const auto [b, k] = index[n];
    double& p = params[b].value[k];
    const double saved = p;
    p = saved + h;
    const double up = loss();
    p = saved - h;
    const double down = loss();
    p = saved;
    const double numeric = (up - down) / (2 * h);
    EXPECT_TRUE(grad_close(analytic[n], numeric, scale))
        << analytic[n] << " vs " << numeric << ", block " << b << " entry " << k;
  }
}

}  // namespace

TEST(Dense, IdentityPassesInputThrough) {
  DenseLayer d(3, 3);
  d.weights() = Matrix::Identity(3, 3);
  Matrix x(3, 2);
  x << 1, 2, 3, 4, 5, 6;
  EXPECT_EQ(d.forward(x), x);
}

TEST(Dense, ZeroWeightsGiveBias) {
  DenseLayer d(2, 3);
  d.biases() << 1.5, -2.0, 0.25;
  const Matrix y = d.forward(Matrix::Random(2, 4));
  for (Eigen::Index j = 0; j < 4; ++j) {
    EXPECT_EQ(y(0, j), 1.5);
    EXPECT_EQ(y(1, j), -2.0);
    EXPECT_EQ(y(2, j), 0.25);
  }
}

TEST(Dense, MatchesBruteForceMultiply) {
  std::mt19937_64 rng(3);
  DenseLayer d(2, 3);
  d.weights() = random_matrix(3, 2, rng);
  d.biases() = random_matrix(3, 1, rng);
  const Matrix x = random_matrix(2, 5, rng);
  const Matrix y = d.forward(x);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 5; ++j) {
      double s = d.biases()(i);
      for (int k = 0; k < 2; ++k) s += d.weights()(i, k) * x(k, j);
      EXPECT_NEAR(y(i, j), s, 1e-15);
    }
  }
}

TEST(Dense, ShapeMismatch) {
  DenseLayer d(2, 3);
  EXPECT_THROW(d.forward(Matrix::Zero(3, 1)), ShapeMismatch);
}

TEST(Dense, HandComputedSquaredErrorGradient) {
  DenseLayer d(2, 2);
  d.weights() << 1.0, 2.0, -1.0, 0.5;
  d.biases() << 0.1, -0.2;
  Matrix x(2, 1);
  x << 3.0, -1.0;
  Matrix target(2, 1);
  target << 0.0, 1.0;
  const Matrix y = d.forward(x);
  // y = [1*3 - 2 + 0.1, -3 - 0.5 - 0.2] = [1.1, -3.7]; residual = [1.1, -4.7].
  EXPECT_NEAR(y(0), 1.1, 1e-15);
  EXPECT_NEAR(y(1), -3.7, 1e-15);
  d.zero_grad();
  const Matrix dx = d.backward(y - target);
  Matrix expected_w(2, 2);
  expected_w << 3.3, -1.1, -14.1, 4.7;
  EXPECT_LT((d.grad_weights() - expected_w).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_NEAR(d.grad_biases()(0), 1.1, 1e-15);
  EXPECT_NEAR(d.grad_biases()(1), -4.7, 1e-15);
  EXPECT_NEAR(dx(0), 1.0 * 1.1 + -1.0 * -4.7, 1e-14);
  EXPECT_NEAR(dx(1), 2.0 * 1.1 + 0.5 * -4.7, 1e-14);
}

TEST(Dense, GradientProperty) {
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> dim(1, 5);
  for (int trial = 0; trial < 50; ++trial) {
    DenseLayer d(dim(rng), dim(rng));
    d.initialize(rng);
    d.biases() = random_matrix(d.out_size(), 1, rng);
    Matrix x = random_matrix(d.in_size(), dim(rng), rng);
    const Matrix w = random_matrix(d.out_size(), x.cols(), rng);
    std::vector<ParamView> params;
    d.collect(params);
    auto loss = [&] { return weighted_sum(d.forward(x), w); };
    auto grads = [&] {
      d.forward(x);
      d.zero_grad();
      d.backward(w);
    };
    check_param_grads(params, loss, grads, rng);
    d.forward(x);
    const Matrix dx = d.backward(w);
    std::vector<ParamView> input{{x.data(), const_cast<double*>(dx.data()),
                                  static_cast<std::size_t>(x.size())}};
    check_param_grads(input, loss, [] {}, rng);
  }
}

TEST(Tanh, GradientProperty) {
  std::mt19937_64 rng(102);
  for (int trial = 0; trial < 50; ++trial) {
    TanhLayer layer;
    Matrix x = random_matrix(4, 3, rng, 3.0);
    const Matrix w = random_matrix(4, 3, rng);
    layer.forward(x);
    const Matrix dx = layer.backward(w);
    std::vector<ParamView> input{{x.data(), const_cast<double*>(dx.data()),
                                  static_cast<std::size_t>(x.size())}};
    check_param_grads(input, [&] { return weighted_sum(layer.forward(x), w); },
                      [] {}, rng);
  }
}

TEST(Bounded, ForwardExamples) {
  const BoundedOutput cfg;
  EXPECT_EQ(bounded_forward(cfg, Matrix::Zero(2, 1))(0), 10.0);
  EXPECT_NEAR(bounded_forward(cfg, Matrix::Constant(2, 1, 1.0))(0), 16.854, 1e-3);
  EXPECT_NEAR(bounded_forward(cfg, Matrix::Constant(2, 1, 1.0))(0),
              10.0 * (1.0 + 0.9 * std::tanh(1.0)), 1e-14);
  EXPECT_DOUBLE_EQ(bounded_forward(cfg, Matrix::Constant(2, 1, 100.0))(1), 19.0);
  EXPECT_DOUBLE_EQ(bounded_forward(cfg, Matrix::Constant(2, 1, -100.0))(1), 1.0);
}

TEST(Bounded, PerOutputMean) {
  BoundedOutput cfg;
  cfg.z_mean << 10.0, 5.0;
  const Matrix z = bounded_forward(cfg, Matrix::Constant(2, 1, 1.0));
  EXPECT_DOUBLE_EQ(z(1), 0.5 * z(0));
}

TEST(Bounded, BackwardExamples) {
  const BoundedOutput cfg;
  EXPECT_DOUBLE_EQ(bounded_backward(cfg, Matrix::Zero(2, 1), Matrix::Ones(2, 1))(0), 9.0);
  EXPECT_LT(std::abs(bounded_backward(cfg, Matrix::Constant(2, 1, 30.0),
                                      Matrix::Ones(2, 1))(0)),
            1e-20);
}

TEST(Bounded, BackwardMatchesFiniteDifference) {
  std::mt19937_64 rng(103);
  std::uniform_real_distribution<double> d(-4.0, 4.0);
  const BoundedOutput cfg;
  for (int trial = 0; trial < 200; ++trial) {
    Matrix x = Matrix::Constant(2, 1, d(rng));
    const double h = 1e-6;
    const double fd = (bounded_forward(cfg, x.array() + h)(0) -
                       bounded_forward(cfg, x.array() - h)(0)) /
                      (2 * h);
    const double an = bounded_backward(cfg, x, Matrix::Ones(2, 1))(0);
    EXPECT_LT(cornering::testing::rel_diff(an, fd, 1e-6), 1e-6) << "x=" << x(0);
  }
}

TEST(Bounded, GradientProperty) {
  std::mt19937_64 rng(104);
  std::uniform_real_distribution<double> mean(0.5, 20.0), range(0.05, 0.95);
  for (int trial = 0; trial < 50; ++trial) {
    BoundedOutput cfg;
    cfg.z_mean << mean(rng), mean(rng);
    cfg.z_range = range(rng);
    BoundedLayer layer(cfg);
    Matrix x = random_matrix(2, 4, rng, 3.0);
    const Matrix w = random_matrix(2, 4, rng);
    layer.forward(x);
    const Matrix dx = layer.backward(w);
    std::vector<ParamView> input{{x.data(), const_cast<double*>(dx.data()),
                                  static_cast<std::size_t>(x.size())}};
    check_param_grads(input, [&] { return weighted_sum(layer.forward(x), w); },
                      [] {}, rng);
  }
}

TEST(Bounded, OutputStaysInOpenInterval) {
  // tanh reaches exactly +-1 in double precision beyond |x| of about 19, so
  // strict bounds are checked below that and rounding-level bounds beyond.
  std::mt19937_64 rng(105);
  std::uniform_real_distribution<double> inner(-18.0, 18.0);
  std::normal_distribution<double> wide(0.0, 30.0);
  const BoundedOutput cfg;
  Matrix x(2, 1000);
  for (int batch = 0; batch < 500; ++batch) {
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = inner(rng);
    const Matrix z = bounded_forward(cfg, x);
    ASSERT_GT(z.minCoeff(), 1.0);
    ASSERT_LT(z.maxCoeff(), 19.0);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = wide(rng);
    const Matrix zw = bounded_forward(cfg, x);
    ASSERT_GE(zw.minCoeff(), 1.0 - 1e-12);
    ASSERT_LE(zw.maxCoeff(), 19.0 + 1e-12);
  }
}

TEST(Bounded, RejectsInvalidConfig) {
  BoundedOutput cfg;
  cfg.z_range = 1.0;
  EXPECT_THROW(BoundedLayer{cfg}, InvalidParameter);
  cfg.z_range = 0.9;
  cfg.z_mean << 10.0, 0.0;
  EXPECT_THROW(BoundedLayer{cfg}, InvalidParameter);
}

TEST(Lstm, GradientProperty) {
  std::mt19937_64 rng(106);
  std::uniform_int_distribution<int> dim(1, 3), len(1, 5);
  for (int trial = 0; trial < 50; ++trial) {
    LstmCell cell(dim(rng), dim(rng));
    cell.initialize(rng);
    cell.bias() = random_matrix(cell.bias().size(), 1, rng, 0.5);
    const Sequence xs = random_sequence(len(rng), cell.in_size(), dim(rng), rng);
    const Sequence w = random_sequence(xs.size(), cell.hidden_size(), xs[0].cols(), rng);
    const bool reverse = trial % 2 == 1;
    std::vector<ParamView> params;
    cell.collect(params);
    check_param_grads(
        params, [&] { return weighted_sum(cell.forward(xs, reverse), w); },
        [&] {
          cell.forward(xs, reverse);
          cell.zero_grad();
          cell.backward(w);
        },
        rng);
  }
}

TEST(BiLstm, GradientProperty) {
  std::mt19937_64 rng(107);
  std::uniform_int_distribution<int> dim(1, 3), len(1, 5);
  for (int trial = 0; trial < 50; ++trial) {
    BiLstmLayer layer(dim(rng), dim(rng));
    layer.initialize(rng);
    Sequence xs = random_sequence(len(rng), layer.in_size(), dim(rng), rng);
    const Sequence w =
        random_sequence(xs.size(), 2 * layer.hidden_size(), xs[0].cols(), rng);
    std::vector<ParamView> params;
    layer.collect(params);
    auto loss = [&] { return weighted_sum(layer.forward(xs), w); };
    check_param_grads(params, loss,
                      [&] {
                        layer.forward(xs);
                        layer.zero_grad();
                        layer.backward(w);
                      },
                      rng);
    layer.forward(xs);
    const Sequence dx = layer.backward(w);
    for (std::size_t t = 0; t < xs.size(); ++t) {
      std::vector<ParamView> input{{xs[t].data(), const_cast<double*>(dx[t].data()),
                                    static_cast<std::size_t>(xs[t].size())}};
      check_param_grads(input, loss, [] {}, rng);
    }
  }
}

TEST(BiLstm, ZeroWeightsGiveZeroOutput) {
  BiLstmLayer layer(3, 4);
  std::mt19937_64 rng(1);
  const Matrix out = bilstm_forward(layer, random_matrix(6, 3, rng));
  EXPECT_EQ(out.rows(), 6);
  EXPECT_EQ(out.cols(), 8);
  EXPECT_EQ(out.cwiseAbs().maxCoeff(), 0.0);
}

TEST(BiLstm, SingleStepMirroredWeights) {
  std::mt19937_64 rng(2);
  BiLstmLayer layer(3, 2);
  layer.initialize(rng);
  layer.forward_cell().bias() = random_matrix(8, 1, rng);
  layer.backward_cell().input_weights() = layer.forward_cell().input_weights();
  layer.backward_cell().recurrent_weights() = layer.forward_cell().recurrent_weights();
  layer.backward_cell().bias() = layer.forward_cell().bias();
  const Matrix out = bilstm_forward(layer, random_matrix(1, 3, rng));
  EXPECT_GT(out.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(out(0, 0), out(0, 2));
  EXPECT_EQ(out(0, 1), out(0, 3));
}

TEST(BiLstm, MatchesHandUnrolledRecurrence) {
  std::mt19937_64 rng(4);
  BiLstmLayer layer(2, 2);
  layer.initialize(rng);
  layer.forward_cell().bias() = random_matrix(8, 1, rng);
  layer.backward_cell().bias() = random_matrix(8, 1, rng);
  const Matrix seq = random_matrix(3, 2, rng);
  const Matrix out = bilstm_forward(layer, seq);

  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  auto run = [&](const LstmCell& cell, int t0, int step, int col) {
    double h[2] = {0, 0}, c[2] = {0, 0};
    for (int t = t0; t >= 0 && t < 3; t += step) {
      double z[8];
      for (int r = 0; r < 8; ++r) {
        z[r] = cell.bias()(r);
        for (int k = 0; k < 2; ++k) {
          z[r] += cell.input_weights()(r, k) * seq(t, k) +
                  cell.recurrent_weights()(r, k) * h[k];
        }
      }
      for (int u = 0; u < 2; ++u) {
        const double ig = sig(z[u]), fg = sig(z[2 + u]);
        const double gg = std::tanh(z[4 + u]), og = sig(z[6 + u]);
        c[u] = fg * c[u] + ig * gg;
        h[u] = og * std::tanh(c[u]);
      }
      for (int u = 0; u < 2; ++u) EXPECT_NEAR(out(t, col + u), h[u], 1e-15);
    }
  };
  run(layer.forward_cell(), 0, 1, 0);
  run(layer.backward_cell(), 2, -1, 2);
}

TEST(Networks, MlpGradientOnRandomParameters) {
  std::mt19937_64 rng(108);
  for (int trial = 0; trial < 5; ++trial) {
    MlpConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(trial);
    Mlp net(cfg);
    const Matrix x = random_matrix(7, 50, rng, 2.0);
    const Matrix w = random_matrix(2, 50, rng);
    check_param_grads(
        net.params(), [&] { return weighted_sum(net.forward(x), w); },
        [&] {
          net.forward(x);
          net.backward(w);
        },
        rng, 100);
  }
}

TEST(Networks, RegressorGradientOnRandomParameters) {
  std::mt19937_64 rng(109);
  SequenceRegressorConfig cfg;
  cfg.lstm_hidden = 5;
  cfg.head_hidden = 6;
  cfg.seed = 3;
  SequenceRegressor net(cfg);
  const Sequence xs = random_sequence(8, 7, 3, rng);
  const Matrix w = random_matrix(2, 3, rng);
  check_param_grads(
      net.params(), [&] { return weighted_sum(net.forward(xs), w); },
      [&] {
        net.forward(xs);
        net.backward(w);
      },
      rng, 100);
}

TEST(Networks, ZeroUpstreamGivesZeroGradients) {
  Mlp net;
  std::mt19937_64 rng(5);
  net.forward(random_matrix(7, 10, rng));
  net.backward(Matrix::Zero(2, 10));
  for (const auto& p : net.params()) {
    for (std::size_t k = 0; k < p.size; ++k) EXPECT_EQ(p.grad[k], 0.0);
  }
}

TEST(Networks, BackwardBeforeForwardIsUsageError) {
  EXPECT_THROW(DenseLayer(2, 2).backward(Matrix::Zero(2, 1)), UsageError);
  EXPECT_THROW(TanhLayer().backward(Matrix::Zero(2, 1)), UsageError);
  EXPECT_THROW(BoundedLayer().backward(Matrix::Zero(2, 1)), UsageError);
  EXPECT_THROW(LstmCell(2, 2).backward(Sequence{}), UsageError);
  Mlp mlp;
  EXPECT_THROW(mlp.backward(Matrix::Zero(2, 1)), UsageError);
  SequenceRegressor reg;
  EXPECT_THROW(reg.backward(Matrix::Zero(2, 1)), UsageError);
}

TEST(Networks, SeededInitializationIsBitwiseDeterministic) {
  MlpConfig cfg;
  cfg.seed = 42;
  Mlp a(cfg), b(cfg);
  cfg.seed = 43;
  Mlp c(cfg);
  const auto pa = a.params(), pb = b.params(), pc = c.params();
  bool any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    for (std::size_t k = 0; k < pa[i].size; ++k) {
      ASSERT_EQ(pa[i].value[k], pb[i].value[k]);
      any_diff |= pa[i].value[k] != pc[i].value[k];
    }
  }
  EXPECT_TRUE(any_diff);
  SequenceRegressorConfig rc;
  rc.seed = 9;
  SequenceRegressor ra(rc), rb(rc);
  const auto qa = ra.params(), qb = rb.params();
  for (std::size_t i = 0; i < qa.size(); ++i) {
    for (std::size_t k = 0; k < qa[i].size; ++k) ASSERT_EQ(qa[i].value[k], qb[i].value[k]);
  }
}

TEST(Networks, GlorotBounds) {
  MlpConfig cfg;
  cfg.seed = 1;
  Mlp net(cfg);
  for (const auto& d : net.dense_layers()) {
    const double limit = std::sqrt(6.0 / double(d.in_size() + d.out_size()));
    EXPECT_LE(d.weights().cwiseAbs().maxCoeff(), limit);
    EXPECT_EQ(d.biases().cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(Networks, JsonRoundTripPreservesOutputs) {
  std::mt19937_64 rng(6);
  MlpConfig cfg;
  cfg.seed = 17;
  cfg.bounded.z_mean << 8.0, 11.0;
  Mlp net(cfg);
  const Mlp back = mlp_from_json(json::parse(to_json(net).dump()));
  Mlp copy = back;
  const Matrix x = random_matrix(7, 20, rng);
  EXPECT_EQ(net.forward(x), copy.forward(x));

  SequenceRegressorConfig rc;
  rc.lstm_hidden = 4;
  rc.seed = 5;
  SequenceRegressor reg(rc);
  SequenceRegressor reg2 = regressor_from_json(json::parse(to_json(reg).dump()));
  const Sequence xs = random_sequence(6, 7, 2, rng);
  EXPECT_EQ(reg.forward(xs), reg2.forward(xs));
}

TEST(Networks, RejectsWrongModelKind) {
  Mlp net;
  json j = to_json(net);
  EXPECT_THROW(regressor_from_json(j), ParseError);
}

TEST(Adam, ZeroGradientLeavesParametersAndDecaysMoments) {
  AdamState st;
  std::vector<double> p{1.0, -2.0};
  adam_step(p, {0.5, 0.5}, st);
  const double m = st.first_moment[0][0], v = st.second_moment[0][0];
  adam_step(p, {0.0, 0.0}, st);
  EXPECT_NEAR(st.first_moment[0][0], 0.9 * m, 1e-18);
  EXPECT_NEAR(st.second_moment[0][0], 0.999 * v, 1e-18);
  std::vector<double> q{3.0, 4.0};
  AdamState fresh;
  for (int k = 0; k < 10; ++k) adam_step(q, {0.0, 0.0}, fresh);
  EXPECT_EQ(q, (std::vector<double>{3.0, 4.0}));
  EXPECT_EQ(fresh.step_count, 10u);
}

TEST(Adam, ConstantGradientStepApproachesRate) {
  AdamState st;
  st.decay = 0.0;
  std::vector<double> p{0.0, 0.0};
  for (int k = 0; k < 1000; ++k) {
    const std::vector<double> before = p;
    adam_step(p, {2.5, -0.1}, st);
    if (k > 100) {
      EXPECT_NEAR(before[0] - p[0], 0.001, 1e-8);
      EXPECT_NEAR(before[1] - p[1], -0.001, 1e-6);
    }
  }
}

TEST(Adam, DecaySchedule) {
  AdamState st;
  EXPECT_DOUBLE_EQ(st.effective_rate(), 0.001);
  st.step_count = 2000;
  EXPECT_DOUBLE_EQ(st.effective_rate(), 0.0005);
}

TEST(Adam, DecayedStepMagnitude) {
  AdamState st;
  std::vector<double> p{0.0};
  for (int k = 0; k < 2000; ++k) adam_step(p, {1.0}, st);
  const double before = p[0];
  adam_step(p, {1.0}, st);
  EXPECT_NEAR(before - p[0], 0.0005, 1e-9);
}

TEST(Adam, MatchesTextbookTrace) {
  AdamState st;
  st.decay = 0.0;
  st.lr = 0.01;
  std::vector<double> p{0.5, -1.5, 2.0};
  double ref[3] = {0.5, -1.5, 2.0}, m[3] = {}, v[3] = {};
  for (int t = 1; t <= 10; ++t) {
    std::vector<double> g(3);
    for (int i = 0; i < 3; ++i) g[i] = ref[i] * ref[i] - 0.3 * t;  // varying gradient
    adam_step(p, g, st);
    for (int i = 0; i < 3; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * g[i];
      v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(0.9, t));
      const double vh = v[i] / (1 - std::pow(0.999, t));
      ref[i] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    }
  }
  for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(p[i], ref[i]);
}

TEST(Adam, ShapeMismatch) {
  AdamState st;
  std::vector<double> p{1.0, 2.0};
  EXPECT_THROW(adam_step(p, {1.0}, st), ShapeMismatch);
  adam_step(p, {1.0, 1.0}, st);
  std::vector<double> q{1.0, 2.0, 3.0};
  EXPECT_THROW(adam_step(q, {1.0, 1.0, 1.0}, st), ShapeMismatch);
}
