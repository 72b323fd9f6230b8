#pragma once

// Yaw-rate regulation with a reference generator driven by the understeer
// coefficient, Riccati state-feedback synthesis and a closed-loop simulator
// that can refresh the reference from online stiffness estimates.

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstdio>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cornering/dynamics.hpp"
#include "cornering/error.hpp"
#include "cornering/pidl.hpp"

namespace cornering {

/// K_us = m b / ((a + b) C_af) - m a / ((a + b) C_ar), in s^2/m.
inline double understeer_coefficient(const VehicleParams& p, double caf,
                                     double car) {
  if (!(caf > 0) || !(car > 0)) {
    throw InvalidParameter("cornering stiffness must be positive");
  }
  const double l = p.wheelbase();
  return p.mass * p.dist_rear / (l * caf) - p.mass * p.dist_front / (l * car);
}

struct Reference {
  double r_ref = 0.0;   // rad/s
  double ay_ref = 0.0;  // m/s^2
};

inline Reference reference(double delta_in, double v_x, const VehicleParams& p,
                           double kus) {
  const double den = p.wheelbase() + kus * v_x * v_x;
  if (std::abs(den) < 1e-12) {
    throw SingularReference("reference generator denominator vanishes");
  }
  return {delta_in * v_x / den, delta_in * v_x * v_x / den};
}

struct ReferenceState {
  double caf = 0.0;
  double car = 0.0;
  double kus = 0.0;

  static ReferenceState from(const VehicleParams& p, double caf, double car) {
    return {caf, car, understeer_coefficient(p, caf, car)};
  }
};

// Gain synthesis ----------------------------------------------------------

/// Feedback u_fb = K * [v_y - v_y_ref, r - r_ref].
struct ControllerGain {
  Eigen::Matrix2d K = Eigen::Matrix2d::Zero();
  double design_caf = 0.0;
  double design_car = 0.0;
  Eigen::Vector2d state_weights = Eigen::Vector2d::Ones();
  Eigen::Vector2d input_weights = Eigen::Vector2d::Ones();
  double dt = 0.01;
};

/// exp(M) by scaling and squaring with a Taylor series summed until the
/// terms fall below machine precision.
inline Eigen::MatrixXd expm(const Eigen::MatrixXd& m) {
  const double norm = m.lpNorm<Eigen::Infinity>();
  int squarings = 0;
  if (norm > 0.5) {
    squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
  }
  const Eigen::MatrixXd scaled = m / std::pow(2.0, squarings);
  Eigen::MatrixXd result = Eigen::MatrixXd::Identity(m.rows(), m.cols());
  Eigen::MatrixXd term = result;
  for (int k = 1; k < 64; ++k) {
    term = term * scaled / static_cast<double>(k);
    result += term;
    if (term.lpNorm<Eigen::Infinity>() <
        1e-17 * result.lpNorm<Eigen::Infinity>()) {
      break;
    }
  }
  for (int s = 0; s < squarings; ++s) result = result * result;
  return result;
}

struct DiscreteModel {
  Eigen::Matrix2d A;
  Eigen::Matrix2d B;
};

/// Zero-order-hold discretization of (A, B) with sample period dt.
inline DiscreteModel discretize(const StateSpace& ss, double dt) {
  Eigen::Matrix4d aug = Eigen::Matrix4d::Zero();
  aug.topLeftCorner<2, 2>() = ss.A * dt;
  aug.topRightCorner<2, 2>() = ss.B * dt;
  const Eigen::MatrixXd e = expm(aug);
  return {e.topLeftCorner(2, 2), e.topRightCorner(2, 2)};
}

inline double spectral_radius(const Eigen::Matrix2d& m) {
  return m.eigenvalues().cwiseAbs().maxCoeff();
}

/// PBH test on every eigenvalue outside the open unit disc.
inline bool stabilizable(const DiscreteModel& dm) {
  const Eigen::Vector2cd eig = dm.A.eigenvalues();
  for (Eigen::Index k = 0; k < 2; ++k) {
    if (std::abs(eig[k]) < 1.0) continue;
    Eigen::Matrix<std::complex<double>, 2, 4> pbh;
    pbh.leftCols<2>() = dm.A.cast<std::complex<double>>() -
                        eig[k] * Eigen::Matrix2cd::Identity();
    pbh.rightCols<2>() = dm.B.cast<std::complex<double>>();
    Eigen::FullPivLU<Eigen::MatrixXcd> lu(pbh);
    lu.setThreshold(1e-10);
    if (lu.rank() < 2) return false;
  }
  return true;
}

inline ControllerGain synthesize_gain(const StateSpace& ss,
                                      const Eigen::Vector2d& state_weights,
                                      const Eigen::Vector2d& input_weights,
                                      double dt) {
  if (!(dt > 0)) throw InvalidParameter("dt must be positive");
  if ((state_weights.array() < 0).any()) {
    throw InvalidParameter("state weights must be non-negative");
  }
  if ((input_weights.array() <= 0).any()) {
    throw InvalidParameter("input weights must be strictly positive");
  }
  const DiscreteModel dm = discretize(ss, dt);
  if (!stabilizable(dm)) throw SynthesisError("plant is not stabilizable");
  const Eigen::Matrix2d Q = state_weights.asDiagonal();
  const Eigen::Matrix2d R = input_weights.asDiagonal();
  const Eigen::Matrix2d& A = dm.A;
  const Eigen::Matrix2d& B = dm.B;
  Eigen::Matrix2d P = Q;
  bool converged = false;
  for (int it = 0; it < 10000; ++it) {
    const Eigen::Matrix2d S = R + B.transpose() * P * B;
    const Eigen::Matrix2d next =
        Q + A.transpose() * P * A -
        A.transpose() * P * B * S.ldlt().solve(B.transpose() * P * A);
    const double change = (next - P).norm() / std::max(next.norm(), 1e-300);
    P = 0.5 * (next + next.transpose());
    if (change < 1e-12) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    throw SynthesisError("Riccati iteration did not converge in 10000 steps");
  }
  const Eigen::Matrix2d S = R + B.transpose() * P * B;
  ControllerGain g;
  g.K = -S.ldlt().solve(B.transpose() * P * A);
  g.state_weights = state_weights;
  g.input_weights = input_weights;
  g.dt = dt;
  if (!(spectral_radius(A + B * g.K) < 1.0)) {
    throw SynthesisError("synthesized gain does not stabilize the design plant");
  }
  return g;
}

inline ControllerGain synthesize_gain(const VehicleParams& p, double caf,
                                      double car, double v0,
                                      const Eigen::Vector2d& state_weights,
                                      const Eigen::Vector2d& input_weights,
                                      double dt) {
  ControllerGain g = synthesize_gain(build_state_space(p, caf, car, v0),
                                     state_weights, input_weights, dt);
  g.design_caf = caf;
  g.design_car = car;
  return g;
}

inline double closed_loop_radius(const ControllerGain& g,
                                 const VehicleParams& p, double caf,
                                 double car, double v0) {
  const DiscreteModel dm = discretize(build_state_space(p, caf, car, v0), g.dt);
  return spectral_radius(dm.A + dm.B * g.K);
}

struct StiffnessPoint {
  double caf;
  double car;
};

/// Grid corners at which the gain fails to keep the spectral radius below 1.
inline std::vector<StiffnessPoint> robustness_failures(
    const ControllerGain& g, const VehicleParams& p, double v0,
    double lo = 1.0, double hi = 19.0) {
  std::vector<StiffnessPoint> failing;
  for (double f : {lo, hi}) {
    for (double r : {lo, hi}) {
      if (!(closed_loop_radius(g, p, f, r, v0) < 1.0)) failing.push_back({f, r});
    }
  }
  return failing;
}

// Closed-loop simulation --------------------------------------------------

struct PlantSegment {
  double start = 0.0;  // s
  double caf = 0.0;
  double car = 0.0;
};

/// Piecewise-constant plant stiffness; segments sorted by start time and the
/// first one starting at 0.
struct PlantSchedule {
  std::vector<PlantSegment> segments;

  static PlantSchedule constant(double caf, double car) {
    return {{{0.0, caf, car}}};
  }

  void validate() const {
    if (segments.empty() || segments.front().start != 0.0) {
      throw InvalidParameter("plant schedule must start at t = 0");
    }
    for (std::size_t k = 0; k < segments.size(); ++k) {
      if (!(segments[k].caf > 0) || !(segments[k].car > 0)) {
        throw InvalidParameter("plant stiffness must be positive");
      }
      if (k > 0 && !(segments[k].start > segments[k - 1].start)) {
        throw InvalidParameter("plant segments must be strictly increasing");
      }
    }
  }

  std::size_t segment_at(double t) const {
    std::size_t k = 0;
    while (k + 1 < segments.size() && t >= segments[k + 1].start - 1e-9) ++k;
    return k;
  }
};

struct DriverCommand {
  double delta_in = 0.0;  // rad
  double v_x = 1.2;       // m/s
};

using DriverSchedule = std::function<DriverCommand(double)>;

inline DriverSchedule sine_driver(double amplitude = 0.1,
                                  double frequency_hz = 0.5, double v_x = 1.2) {
  return [=](double t) {
    return DriverCommand{amplitude * std::sin(2.0 * M_PI * frequency_hz * t),
                         v_x};
  };
}

/// Window of sensor-derived data -> stiffness pair. May throw.
using OnlineEstimator =
    std::function<std::pair<double, double>(const Trajectory&)>;

struct UpdatePolicy {
  double period = 2.0;   // s between refreshes
  double window = 4.0;   // s of trailing data handed to the estimator
  NoiseModel noise;      // sensor model applied to the logged states
  std::size_t smoothing_window = 5;
  OnlineEstimator estimator;
};

struct Event {
  double time = 0.0;
  std::string description;
};

struct ClosedLoopConfig {
  double dt = 0.01;
  double duration = 15.0;
};

struct ClosedLoopResult {
  Trajectory trajectory;
  std::vector<double> r_ref;
  std::vector<double> ay_ref;
  double yaw_iae = 0.0;
  std::vector<Event> events;
};

/// Online stiffness estimator that keeps one physics-informed network across
/// refreshes and trains it for a fixed iteration budget on each window.
class OnlinePidlEstimator {
 public:
  OnlinePidlEstimator(const VehicleParams& p, PidlConfig cfg)
      : session_(std::make_shared<PidlSession>(p, cfg)) {}

  std::pair<double, double> operator()(const Trajectory& window) {
    session_->set_data(window);
    session_->reset_optimizer();
    session_->run();
    const StiffnessEstimate e = session_->estimate();
    return {e.caf, e.car};
  }

 private:
  std::shared_ptr<PidlSession> session_;
};

inline PidlConfig online_pidl_config(std::uint64_t seed) {
  PidlConfig cfg;
  cfg.iterations = 2000;
  cfg.seed = seed;
  return cfg;
}

namespace detail {

inline std::string format_pair(double caf, double car) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "caf=%.4f car=%.4f", caf, car);
  return buf;
}

}  // namespace detail

/// Simulates the regulated vehicle. Each step computes the yaw-rate
/// reference from the current reference state, applies
/// u = [delta_in, 0] + K [v_y, r - r_ref] held over the step, and integrates
/// the plant with the scheduled stiffness. With an update policy, every
/// `period` seconds the estimator is run on the trailing window of
/// sensor-derived data and the reference state is refreshed.
inline ClosedLoopResult closed_loop_sim(
    const VehicleParams& p, const PlantSchedule& plant,
    const ControllerGain& gain, const DriverSchedule& driver,
    ReferenceState ref_state, const std::optional<UpdatePolicy>& policy,
    const ClosedLoopConfig& cfg = {}) {
  p.validate();
  plant.validate();
  const double dt = cfg.dt;
  const std::size_t n = sample_count(dt, cfg.duration);
  const auto period_steps =
      policy ? static_cast<std::size_t>(std::llround(policy->period / dt)) : 0;
  const auto window_steps =
      policy ? static_cast<std::size_t>(std::llround(policy->window / dt)) : 0;
  if (policy && (period_steps == 0 || window_steps < 2 || !policy->estimator)) {
    throw InvalidParameter("update policy needs period, window and estimator");
  }

  ClosedLoopResult res;
  Trajectory& tr = res.trajectory;
  tr.dt = dt;
  for (auto* s : {&tr.t, &tr.v_x, &tr.v_y, &tr.r, &tr.a_y, &tr.r_dot,
                  &tr.v_y_dot, &tr.delta1, &tr.delta2, &res.r_ref,
                  &res.ay_ref}) {
    s->resize(n);
  }

  Eigen::Vector2d x = Eigen::Vector2d::Zero();
  std::size_t segment = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) * dt;
    const std::size_t seg = plant.segment_at(t);
    if (seg != segment) {
      segment = seg;
      res.events.push_back(
          {t, "plant stiffness changed to " +
                  detail::format_pair(plant.segments[seg].caf,
                                      plant.segments[seg].car)});
    }

    if (policy && i > 0 && i % period_steps == 0) {
      const std::size_t begin = i > window_steps ? i - window_steps : 0;
      try {
        // v_y is reconstructed from the whole log so that integration starts
        // from the straight-driving initial condition.
        const Trajectory sensed =
            synthesize_sensors(tr.slice(0, i), policy->noise);
        const Trajectory derived =
            derive_signals(sensed, policy->smoothing_window);
        const auto [caf, car] =
            policy->estimator(derived.slice(begin, i));
        ref_state = ReferenceState::from(p, caf, car);
        char buf[64];
        std::snprintf(buf, sizeof buf, " kus=%.6f", ref_state.kus);
        res.events.push_back(
            {t, "reference refreshed: " + detail::format_pair(caf, car) + buf});
      } catch (const Error& e) {
        res.events.push_back({t, std::string("estimator failure: ") + e.what()});
      }
    }

    const DriverCommand cmd = driver(t);
    const Reference ref = reference(cmd.delta_in, cmd.v_x, p, ref_state.kus);
    const Eigen::Vector2d error(x[0], x[1] - ref.r_ref);
    const Eigen::Vector2d u =
        Eigen::Vector2d(cmd.delta_in, 0.0) + gain.K * error;
    const PlantSegment& ps = plant.segments[segment];

    tr.t[i] = t;
    tr.v_x[i] = cmd.v_x;
    tr.v_y[i] = x[0];
    tr.r[i] = x[1];
    tr.delta1[i] = u[0];
    tr.delta2[i] = u[1];
    res.r_ref[i] = ref.r_ref;
    res.ay_ref[i] = ref.ay_ref;
    const StateSpace ss = build_state_space(p, ps.caf, ps.car, cmd.v_x);
    fill_model_derivatives(tr, i, ss);

    if (i + 1 < n) {
      const Steering held{u[0], u[1]};
      x = rk4_step(p, ps.caf, ps.car, [held](double) { return held; },
                   constant_speed(cmd.v_x), t, dt, x);
      if (!x.allFinite()) {
        throw DivergenceError(
            "closed-loop simulation diverged at sample " + std::to_string(i + 1),
            i + 1);
      }
    }
  }

  double prev = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double cur = std::abs(tr.r[i] - res.r_ref[i]);
    if (i > 0) res.yaw_iae += 0.5 * dt * (prev + cur);
    prev = cur;
  }
  return res;
}

}  // namespace cornering
