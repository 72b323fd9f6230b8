#pragma once

// Physics-informed stiffness estimation: a small network maps each sample of
// a trajectory to a (C_af, C_ar) pair and is trained on the residual of the
// single-track equations of motion instead of labelled targets.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "cornering/dynamics.hpp"
#include "cornering/error.hpp"
#include "cornering/estimate.hpp"
#include "cornering/nn/adam.hpp"
#include "cornering/nn/networks.hpp"

namespace cornering {

struct PidlConfig {
  std::array<double, 2> alpha_weights{1.0, 10.0};
  double constancy_weight = 0.1;
  std::size_t iterations = 20000;
  double lr = 0.001;
  double decay = 0.0005;
  std::array<double, 2> z_mean{10.0, 10.0};
  double z_range = 0.9;
  std::uint64_t seed = 0;
  bool standardize = true;
  std::size_t early_stop_window = 500;
  double early_stop_tolerance = 1e-9;

  void validate() const {
    if (!(alpha_weights[0] > 0) || !(alpha_weights[1] > 0)) {
      throw InvalidParameter("alpha weights must be positive");
    }
    if (!(constancy_weight >= 0)) {
      throw InvalidParameter("constancy weight must be non-negative");
    }
    if (iterations < 1) throw InvalidParameter("iterations must be >= 1");
    if (!(lr > 0) || !(decay >= 0)) {
      throw InvalidParameter("invalid learning-rate settings");
    }
  }
};

// Feature assembly --------------------------------------------------------

inline constexpr std::array<const char*, 7> kFeatureNames{
    "r", "rdot", "vy", "vydot", "delta1", "delta2", "vx"};

struct Standardization {
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(7);
  Eigen::VectorXd scale = Eigen::VectorXd::Ones(7);

  nn::Matrix apply(const nn::Matrix& raw) const {
    return ((raw.rowwise() - mean.transpose()).array().rowwise() /
            scale.transpose().array())
        .matrix();
  }
  nn::Matrix invert(const nn::Matrix& standardized) const {
    return ((standardized.array().rowwise() * scale.transpose().array())
                .matrix()
                .rowwise() +
            mean.transpose());
  }

  /// Column means and population standard deviations; constant columns keep
  /// unit scale.
  static Standardization fit(const nn::Matrix& raw) {
    Standardization s;
    s.mean = raw.colwise().mean().transpose();
    for (Eigen::Index c = 0; c < raw.cols(); ++c) {
      const double var =
          (raw.col(c).array() - s.mean[c]).square().mean();
      const double sd = std::sqrt(var);
      s.scale[c] = sd > 1e-12 ? sd : 1.0;
    }
    return s;
  }

  /// Median and 1.4826 * MAD per column, insensitive to a minority of
  /// diverging sequences.
  static Standardization fit_robust(const nn::Matrix& raw) {
    Standardization s;
    auto median = [](std::vector<double> v) {
      const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
      std::nth_element(v.begin(), mid, v.end());
      return *mid;
    };
    for (Eigen::Index c = 0; c < raw.cols(); ++c) {
      std::vector<double> col(raw.col(c).data(), raw.col(c).data() + raw.rows());
      const double med = median(col);
      for (double& v : col) v = std::abs(v - med);
      const double sd = 1.4826 * median(col);
      s.mean[c] = med;
      s.scale[c] = sd > 1e-12 ? sd : 1.0;
    }
    return s;
  }
};

struct Features {
  nn::Matrix raw;  // N x 7, columns r, rdot, vy, vydot, delta1, delta2, vx
  Standardization standardization;

  nn::Matrix standardized() const { return standardization.apply(raw); }
};

inline nn::Matrix raw_features(const Trajectory& traj) {
  if (!traj.has_derived()) {
    throw MissingField(
        "feature assembly needs derived signals (vy, rdot, vydot)");
  }
  const auto n = static_cast<Eigen::Index>(traj.size());
  nn::Matrix raw(n, 7);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    raw(i, 0) = traj.r[k];
    raw(i, 1) = traj.r_dot[k];
    raw(i, 2) = traj.v_y[k];
    raw(i, 3) = traj.v_y_dot[k];
    raw(i, 4) = traj.delta1[k];
    raw(i, 5) = traj.delta2[k];
    raw(i, 6) = traj.v_x[k];
  }
  return raw;
}

inline Features assemble_features(const Trajectory& traj) {
  Features f;
  f.raw = raw_features(traj);
  f.standardization = Standardization::fit(f.raw);
  return f;
}

// Losses ------------------------------------------------------------------

struct LossAndGradient {
  double loss = 0.0;
  nn::Matrix gradient;  // same shape as the outputs (N x 2)
};

/// Residual loss of the state equations with per-sample stiffness
///   e_i = xdot_i - A(C_i) x_i - B(C_i) u_i,
///   loss = 1/(2N) sum_i (alpha_1 e_i1^2 + alpha_2 e_i2^2),
/// where A, B use v_0 = v_x at that sample.
inline LossAndGradient physics_loss(const nn::Matrix& outputs,
                                    const Trajectory& traj,
                                    const VehicleParams& p,
                                    const std::array<double, 2>& alpha) {
  if (!traj.has_derived()) {
    throw MissingField("physics_loss needs derived signals");
  }
  const auto n = static_cast<Eigen::Index>(traj.size());
  if (outputs.rows() != n || outputs.cols() != 2) {
    throw ShapeMismatch("physics_loss expects outputs of shape N x 2");
  }
  const double m = p.mass;
  const double iz = p.yaw_inertia;
  const double a = p.dist_front;
  const double b = p.dist_rear;
  LossAndGradient out;
  out.gradient.resize(n, 2);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const double caf = outputs(i, 0);
    const double car = outputs(i, 1);
    const double v = traj.v_x[k];
    const double vy = traj.v_y[k];
    const double r = traj.r[k];
    const double d1 = traj.delta1[k];
    const double d2 = traj.delta2[k];
    // Partial derivatives of (A x + B u) with respect to caf and car.
    const double f1_caf = (-vy - a * r) / (m * v) + d1 / m;
    const double f1_car = (-vy + b * r) / (m * v) + d2 / m;
    const double f2_caf = (-a * vy - a * a * r) / (iz * v) + a * d1 / iz;
    const double f2_car = (b * vy - b * b * r) / (iz * v) - b * d2 / iz;
    // A x + B u is affine in the stiffnesses; the offset is -v r in row 1.
    const double f1 = caf * f1_caf + car * f1_car - v * r;
    const double f2 = caf * f2_caf + car * f2_car;
    const double e1 = traj.v_y_dot[k] - f1;
    const double e2 = traj.r_dot[k] - f2;
    sum += alpha[0] * e1 * e1 + alpha[1] * e2 * e2;
    out.gradient(i, 0) = -(alpha[0] * e1 * f1_caf + alpha[1] * e2 * f2_caf);
    out.gradient(i, 1) = -(alpha[0] * e1 * f1_car + alpha[1] * e2 * f2_car);
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  out.loss = 0.5 * inv_n * sum;
  out.gradient *= inv_n;
  return out;
}

/// Mean squared deviation of each sample's stiffness pair from the column
/// means: (1/N) sum_i ||C_i - mean(C)||^2.
inline LossAndGradient constancy_loss(const nn::Matrix& outputs) {
  const auto n = outputs.rows();
  if (n < 1) throw InsufficientData("constancy_loss needs at least 1 sample");
  const Eigen::RowVectorXd mean = outputs.colwise().mean();
  const nn::Matrix dev = outputs.rowwise() - mean;
  LossAndGradient out;
  out.loss = dev.squaredNorm() / static_cast<double>(n);
  out.gradient = (2.0 / static_cast<double>(n)) * dev;
  return out;
}

// Training ----------------------------------------------------------------

struct ProgressRecord {
  std::size_t iteration = 0;
  double loss = 0.0;
};

/// A resumable training session. Each call to step() performs one
/// forward/backward/update cycle on the whole trajectory and reports the
/// loss of the forward pass.
class PidlSession {
 public:
  PidlSession(const VehicleParams& p, PidlConfig cfg)
      : params_(p), cfg_(cfg), net_(make_network(cfg)) {
    p.validate();
    cfg_.validate();
    reset_optimizer();
  }

  /// Installs a new trajectory; the network weights are kept.
  void set_data(const Trajectory& derived) {
    features_ = assemble_features(derived);
    if (!cfg_.standardize) {
      features_.standardization = Standardization{};
    }
    input_ = features_.standardized().transpose();
    data_ = derived;
    loss_curve_.clear();
    stopped_ = false;
  }

  void reset_optimizer() {
    adam_.reset();
    adam_.lr = cfg_.lr;
    adam_.decay = cfg_.decay;
  }

  /// Total loss and its gradient with respect to the network outputs.
  LossAndGradient evaluate(const nn::Matrix& outputs_n2) const {
    LossAndGradient phys =
        physics_loss(outputs_n2, data_, params_, cfg_.alpha_weights);
    if (cfg_.constancy_weight > 0) {
      const LossAndGradient cons = constancy_loss(outputs_n2);
      phys.loss += cfg_.constancy_weight * cons.loss;
      phys.gradient += cfg_.constancy_weight * cons.gradient;
    }
    return phys;
  }

  ProgressRecord step() {
    if (input_.size() == 0) throw UsageError("set_data must precede step");
    const nn::Matrix z = net_.forward(input_);
    const LossAndGradient lg = evaluate(z.transpose());
    const std::size_t it = loss_curve_.size();
    if (!std::isfinite(lg.loss)) {
      throw TrainingFailure(
          "physics-informed training diverged at iteration " +
              std::to_string(it),
          it);
    }
    net_.backward(lg.gradient.transpose());
    nn::adam_step(net_.params(), adam_);
    loss_curve_.push_back(lg.loss);
    const std::size_t w = cfg_.early_stop_window;
    if (w > 0 && loss_curve_.size() > w) {
      const double improvement =
          loss_curve_[loss_curve_.size() - 1 - w] - loss_curve_.back();
      if (improvement < cfg_.early_stop_tolerance) stopped_ = true;
    }
    return {it, lg.loss};
  }

  bool done() const {
    return stopped_ || loss_curve_.size() >= cfg_.iterations;
  }

  /// Runs until done() or `max_steps` more steps.
  void run(std::size_t max_steps = static_cast<std::size_t>(-1)) {
    for (std::size_t k = 0; k < max_steps && !done(); ++k) step();
  }

  /// Per-sample outputs (N x 2) of the current network.
  nn::Matrix outputs() { return net_.forward(input_).transpose(); }

  StiffnessEstimate estimate() {
    const nn::Matrix out = outputs();
    StiffnessEstimate est;
    est.caf = out.col(0).mean();
    est.car = out.col(1).mean();
    est.method = Method::kPidl;
    est.loss_curve = loss_curve_;
    return est;
  }

  const std::vector<double>& loss_curve() const { return loss_curve_; }
  nn::Mlp& network() { return net_; }
  const nn::Mlp& network() const { return net_; }
  const Features& features() const { return features_; }
  const PidlConfig& config() const { return cfg_; }

 private:
  static nn::Mlp make_network(const PidlConfig& cfg) {
    nn::MlpConfig mc;
    mc.inputs = 7;
    mc.hidden = {20, 20, 20};
    mc.outputs = 2;
    mc.bounded.z_mean = Eigen::Vector2d(cfg.z_mean[0], cfg.z_mean[1]);
    mc.bounded.z_range = cfg.z_range;
    mc.seed = cfg.seed;
    return nn::Mlp(mc);
  }

  VehicleParams params_;
  PidlConfig cfg_;
  nn::Mlp net_;
  nn::AdamState adam_;
  Features features_;
  nn::Matrix input_;
  Trajectory data_;
  std::vector<double> loss_curve_;
  bool stopped_ = false;
};

/// Trains a fresh network on one trajectory with derived signals. The
/// estimate is the time-mean of the per-sample outputs.
inline StiffnessEstimate train_pidl(const Trajectory& derived,
                                    const VehicleParams& p,
                                    const PidlConfig& cfg) {
  const bool excited = std::any_of(
      derived.delta1.begin(), derived.delta1.end(),
      [&](double d) { return d != derived.delta1.front(); }) ||
                       std::any_of(derived.delta2.begin(), derived.delta2.end(),
                                   [&](double d) {
                                     return d != derived.delta2.front();
                                   });
  if (!excited) {
    throw InsufficientData("trajectory has constant steering (no excitation)");
  }
  PidlSession session(p, cfg);
  session.set_data(derived);
  session.run();
  return session.estimate();
}

// Aggregation -------------------------------------------------------------

struct AggregateEstimate {
  double mean_caf = 0.0;
  double mean_car = 0.0;
  double rel_unc_caf = 0.0;  // fraction
  double rel_unc_car = 0.0;
};

/// Mean and half-range-over-mean relative uncertainty per coefficient.
inline AggregateEstimate aggregate(const std::vector<StiffnessEstimate>& ests) {
  if (ests.size() < 2) {
    throw InsufficientData("aggregate needs at least two estimates");
  }
  auto stats = [&](auto get) {
    double sum = 0.0;
    double lo = get(ests.front());
    double hi = lo;
    for (const auto& e : ests) {
      const double v = get(e);
      sum += v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const double mean = sum / static_cast<double>(ests.size());
    return std::pair{mean, (hi - lo) / (2.0 * mean)};
  };
  const auto [mf, uf] = stats([](const StiffnessEstimate& e) { return e.caf; });
  const auto [mr, ur] = stats([](const StiffnessEstimate& e) { return e.car; });
  return {mf, mr, uf, ur};
}

}  // namespace cornering
