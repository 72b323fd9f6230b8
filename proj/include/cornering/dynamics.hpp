#pragma once

// Linear single-track (bicycle) lateral model: state x = [v_y, r],
// input u = [delta1, delta2] (front and rear steering angles).

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "cornering/error.hpp"

namespace cornering {

struct VehicleParams {
  double mass = 2.15;          // kg
  double yaw_inertia = 0.085;  // kg m^2
  double dist_front = 0.17;    // m, centre of mass to front axle
  double dist_rear = 0.17;     // m, centre of mass to rear axle
  double nominal_speed = 1.2;  // m/s

  double wheelbase() const { return dist_front + dist_rear; }

  void validate() const {
    if (!(mass > 0) || !(yaw_inertia > 0) || !(dist_front > 0) ||
        !(dist_rear > 0) || !(nominal_speed > 0)) {
      throw InvalidParameter("vehicle parameters must be strictly positive");
    }
  }
};

/// The 1:8 scale test platform used throughout the examples and tests.
inline VehicleParams scale_test_vehicle() { return VehicleParams{}; }

struct StateSpace {
  Eigen::Matrix2d A;
  Eigen::Matrix2d B;
};

struct Steering {
  double front = 0.0;
  double rear = 0.0;
};

using SteeringSchedule = std::function<Steering(double)>;
using SpeedSchedule = std::function<double(double)>;

inline StateSpace build_state_space(const VehicleParams& p, double caf,
                                    double car, double v0) {
  p.validate();
  if (!(v0 > 0)) throw InvalidParameter("speed v0 must be positive");
  if (!(caf > 0) || !(car > 0)) {
    throw InvalidParameter("cornering stiffness must be positive");
  }
  const double m = p.mass;
  const double iz = p.yaw_inertia;
  const double a = p.dist_front;
  const double b = p.dist_rear;
  StateSpace ss;
  ss.A << -(caf + car) / (m * v0), (b * car - a * caf) / (m * v0) - v0,
      (b * car - a * caf) / (iz * v0), -(a * a * caf + b * b * car) / (iz * v0);
  ss.B << caf / m, car / m, a * caf / iz, -b * car / iz;
  return ss;
}

/// Uniformly sampled lateral-motion record. The kinematic channels t, v_x,
/// r, delta1 and delta2 are always present; v_y, a_y, r_dot and v_y_dot are
/// empty when the source did not provide them.
struct Trajectory {
  double dt = 0.0;
  std::vector<double> t;
  std::vector<double> v_x;
  std::vector<double> v_y;
  std::vector<double> r;
  std::vector<double> a_y;
  std::vector<double> r_dot;
  std::vector<double> v_y_dot;
  std::vector<double> delta1;
  std::vector<double> delta2;

  std::size_t size() const { return t.size(); }

  bool has_lateral_velocity() const { return !v_y.empty(); }
  bool has_lateral_acceleration() const { return !a_y.empty(); }
  bool has_derived() const {
    return !v_y.empty() && !r_dot.empty() && !v_y_dot.empty();
  }

  /// Checks shared lengths, N >= 2 and uniform sampling.
  void validate() const {
    const std::size_t n = t.size();
    if (n < 2) throw InsufficientData("trajectory needs at least 2 samples");
    auto check = [n](const std::vector<double>& s, const char* name,
                     bool optional) {
      if (optional && s.empty()) return;
      if (s.size() != n) {
        throw ShapeMismatch(std::string("series '") + name +
                            "' length differs from t");
      }
    };
    check(v_x, "vx", false);
    check(r, "r", false);
    check(delta1, "delta1", false);
    check(delta2, "delta2", false);
    check(v_y, "vy", true);
    check(a_y, "ay", true);
    check(r_dot, "rdot", true);
    check(v_y_dot, "vydot", true);
    if (!(dt > 0)) throw InvalidParameter("trajectory dt must be positive");
    for (std::size_t i = 1; i < n; ++i) {
      const double step = t[i] - t[i - 1];
      if (std::abs(step - dt) > 1e-6 * dt + 1e-9) {
        throw InvalidParameter("trajectory time base is not uniform at sample " +
                               std::to_string(i));
      }
    }
  }

  /// Copies samples [begin, end).
  Trajectory slice(std::size_t begin, std::size_t end) const {
    auto cut = [&](const std::vector<double>& s) {
      if (s.empty()) return std::vector<double>{};
      return std::vector<double>(s.begin() + static_cast<std::ptrdiff_t>(begin),
                                 s.begin() + static_cast<std::ptrdiff_t>(end));
    };
    Trajectory out;
    out.dt = dt;
    out.t = cut(t);
    out.v_x = cut(v_x);
    out.v_y = cut(v_y);
    out.r = cut(r);
    out.a_y = cut(a_y);
    out.r_dot = cut(r_dot);
    out.v_y_dot = cut(v_y_dot);
    out.delta1 = cut(delta1);
    out.delta2 = cut(delta2);
    return out;
  }
};

struct NoiseModel {
  double sigma_r = 0.01;   // rad/s
  double sigma_ay = 0.05;  // m/s^2
  double bias_r = 0.0;
  double bias_ay = 0.0;
  std::uint64_t seed = 1;

  static NoiseModel none() { return {0.0, 0.0, 0.0, 0.0, 0}; }
};

// Steering schedules -------------------------------------------------------

inline SteeringSchedule sine_steer(double amplitude = 0.1,
                                   double frequency_hz = 0.5) {
  return [=](double t) {
    return Steering{amplitude * std::sin(2.0 * M_PI * frequency_hz * t), 0.0};
  };
}

inline SteeringSchedule step_steer(double amplitude = 0.1,
                                   double t_step = 0.0) {
  return [=](double t) { return Steering{t >= t_step ? amplitude : 0.0, 0.0}; };
}

/// One full sine period of front steering starting at `start`.
inline SteeringSchedule lane_change_steer(double amplitude = 0.1,
                                          double period = 2.0,
                                          double start = 1.0) {
  return [=](double t) {
    if (t < start || t > start + period) return Steering{};
    return Steering{amplitude * std::sin(2.0 * M_PI * (t - start) / period),
                    0.0};
  };
}

inline SpeedSchedule constant_speed(double v_x) {
  return [=](double) { return v_x; };
}

namespace detail {

inline Eigen::Vector2d rhs(const StateSpace& ss, const Eigen::Vector2d& x,
                           const Steering& s) {
  return ss.A * x + ss.B * Eigen::Vector2d(s.front, s.rear);
}

}  // namespace detail

/// One classical RK4 step of x' = A x + B u(t) over [t, t + dt].
inline Eigen::Vector2d rk4_step(const VehicleParams& p, double caf, double car,
                                const SteeringSchedule& steer,
                                const SpeedSchedule& speed, double t, double dt,
                                const Eigen::Vector2d& x) {
  const StateSpace s0 = build_state_space(p, caf, car, speed(t));
  const StateSpace sh = build_state_space(p, caf, car, speed(t + 0.5 * dt));
  const StateSpace s1 = build_state_space(p, caf, car, speed(t + dt));
  const Steering u0 = steer(t);
  const Steering uh = steer(t + 0.5 * dt);
  const Steering u1 = steer(t + dt);
  const Eigen::Vector2d k1 = detail::rhs(s0, x, u0);
  const Eigen::Vector2d k2 = detail::rhs(sh, x + 0.5 * dt * k1, uh);
  const Eigen::Vector2d k3 = detail::rhs(sh, x + 0.5 * dt * k2, uh);
  const Eigen::Vector2d k4 = detail::rhs(s1, x + dt * k3, u1);
  return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// Fills the derivative and lateral-acceleration channels of sample i from
/// the model, given the state already stored there.
inline void fill_model_derivatives(Trajectory& tr, std::size_t i,
                                   const StateSpace& ss) {
  const Eigen::Vector2d x(tr.v_y[i], tr.r[i]);
  const Eigen::Vector2d xd =
      detail::rhs(ss, x, Steering{tr.delta1[i], tr.delta2[i]});
  tr.v_y_dot[i] = xd[0];
  tr.r_dot[i] = xd[1];
  tr.a_y[i] = xd[0] + tr.v_x[i] * tr.r[i];
}

/// Integrates the linear model over `n_samples` points spaced `dt` apart,
/// with speed-dependent state matrices.
inline Trajectory simulate_schedule(const VehicleParams& p, double caf,
                                    double car, const SteeringSchedule& steer,
                                    const SpeedSchedule& speed, double dt,
                                    std::size_t n_samples,
                                    const Eigen::Vector2d& x0) {
  p.validate();
  if (!(dt > 0)) throw InvalidParameter("dt must be positive");
  if (n_samples < 2) throw InvalidParameter("need at least two samples");
  Trajectory tr;
  tr.dt = dt;
  for (auto* s : {&tr.t, &tr.v_x, &tr.v_y, &tr.r, &tr.a_y, &tr.r_dot,
                  &tr.v_y_dot, &tr.delta1, &tr.delta2}) {
    s->resize(n_samples);
  }
  Eigen::Vector2d x = x0;
  for (std::size_t i = 0; i < n_samples; ++i) {
    const double t = static_cast<double>(i) * dt;
    if (i > 0) x = rk4_step(p, caf, car, steer, speed, t - dt, dt, x);
    if (!x.allFinite()) {
      throw DivergenceError(
          "simulation diverged at sample " + std::to_string(i), i);
    }
    const Steering u = steer(t);
    tr.t[i] = t;
    tr.v_x[i] = speed(t);
    tr.v_y[i] = x[0];
    tr.r[i] = x[1];
    tr.delta1[i] = u.front;
    tr.delta2[i] = u.rear;
    fill_model_derivatives(tr, i, build_state_space(p, caf, car, tr.v_x[i]));
  }
  return tr;
}

inline std::size_t sample_count(double dt, double duration) {
  if (!(dt > 0)) throw InvalidParameter("dt must be positive");
  if (!(duration >= dt)) throw InvalidParameter("duration must be >= dt");
  return static_cast<std::size_t>(std::llround(duration / dt)) + 1;
}

inline Trajectory simulate(const VehicleParams& p, double caf, double car,
                           const SteeringSchedule& steer, double v_x,
                           double dt, double duration,
                           const Eigen::Vector2d& x0 = Eigen::Vector2d::Zero()) {
  return simulate_schedule(p, caf, car, steer, constant_speed(v_x), dt,
                           sample_count(dt, duration), x0);
}

/// Piecewise-linear interpolation of a sampled series on a uniform grid.
inline double interpolate(const std::vector<double>& series, double dt,
                          double t) {
  if (series.empty()) return 0.0;
  const double pos = t / dt;
  if (pos <= 0) return series.front();
  const auto last = static_cast<double>(series.size() - 1);
  if (pos >= last) return series.back();
  const auto i = static_cast<std::size_t>(pos);
  const double w = pos - static_cast<double>(i);
  return (1.0 - w) * series[i] + w * series[i + 1];
}

/// Re-simulates the recorded inputs (steering and speed) of `measured` with
/// the given stiffness pair, starting from the measured initial state.
inline Trajectory replay(const VehicleParams& p, double caf, double car,
                         const Trajectory& measured) {
  const double t0 = measured.t.front();
  const double dt = measured.dt;
  auto steer = [&](double t) {
    return Steering{interpolate(measured.delta1, dt, t),
                    interpolate(measured.delta2, dt, t)};
  };
  auto speed = [&](double t) { return interpolate(measured.v_x, dt, t); };
  const Eigen::Vector2d x0(
      measured.has_lateral_velocity() ? measured.v_y.front() : 0.0,
      measured.r.front());
  Trajectory out =
      simulate_schedule(p, caf, car, steer, speed, dt, measured.size(), x0);
  for (auto& v : out.t) v += t0;
  return out;
}

/// Adds seeded Gaussian noise plus constant bias to the yaw-rate and
/// lateral-acceleration channels and drops everything a raw IMU would not
/// report (v_y, v_y_dot, r_dot).
inline Trajectory synthesize_sensors(const Trajectory& clean,
                                     const NoiseModel& nm) {
  if (clean.a_y.empty()) {
    throw MissingField("synthesize_sensors needs lateral acceleration");
  }
  if (nm.sigma_r < 0 || nm.sigma_ay < 0) {
    throw InvalidParameter("noise sigmas must be non-negative");
  }
  Trajectory out = clean;
  out.v_y.clear();
  out.v_y_dot.clear();
  out.r_dot.clear();
  std::mt19937_64 rng(nm.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const bool touch_r = nm.sigma_r != 0.0 || nm.bias_r != 0.0;
  const bool touch_ay = nm.sigma_ay != 0.0 || nm.bias_ay != 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double nr = normal(rng);
    const double nay = normal(rng);
    if (touch_r) out.r[i] += nm.sigma_r * nr + nm.bias_r;
    if (touch_ay) out.a_y[i] += nm.sigma_ay * nay + nm.bias_ay;
  }
  return out;
}

/// Centered moving average; the window shrinks symmetrically at the ends.
inline std::vector<double> moving_average(const std::vector<double>& x,
                                          std::size_t window) {
  if (window == 0 || window % 2 == 0) {
    throw InvalidParameter("smoothing window must be odd and >= 1");
  }
  const std::size_t n = x.size();
  const std::size_t half = window / 2;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t h = std::min({half, i, n - 1 - i});
    double sum = 0.0;
    for (std::size_t j = i - h; j <= i + h; ++j) sum += x[j];
    out[i] = sum / static_cast<double>(2 * h + 1);
  }
  return out;
}

/// Reconstructs v_y_dot, r_dot and v_y from raw yaw rate and lateral
/// acceleration. v_y is integrated from rest.
inline Trajectory derive_signals(const Trajectory& measured,
                                 std::size_t smoothing_window = 5) {
  if (measured.size() < 3) {
    throw InsufficientData("derive_signals needs at least 3 samples");
  }
  if (measured.a_y.empty()) {
    throw MissingField("derive_signals needs lateral acceleration");
  }
  measured.validate();
  const std::size_t n = measured.size();
  const double dt = measured.dt;
  Trajectory out = measured;
  out.v_y_dot.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.v_y_dot[i] = measured.a_y[i] - measured.v_x[i] * measured.r[i];
  }
  const std::vector<double> rs = moving_average(measured.r, smoothing_window);
  out.r_dot.resize(n);
  out.r_dot[0] = (-3.0 * rs[0] + 4.0 * rs[1] - rs[2]) / (2.0 * dt);
  out.r_dot[n - 1] =
      (3.0 * rs[n - 1] - 4.0 * rs[n - 2] + rs[n - 3]) / (2.0 * dt);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    out.r_dot[i] = (rs[i + 1] - rs[i - 1]) / (2.0 * dt);
  }
  out.v_y.resize(n);
  out.v_y[0] = 0.0;
  for (std::size_t i = 1; i < n; ++i) {
    out.v_y[i] =
        out.v_y[i - 1] + 0.5 * dt * (out.v_y_dot[i - 1] + out.v_y_dot[i]);
  }
  return out;
}

/// Integral of |v_y - v_y_sim| + |r - r_sim| over time (trapezoidal rule).
inline double trajectory_error(const Trajectory& measured,
                               const Trajectory& simulated) {
  if (measured.size() != simulated.size()) {
    throw ShapeMismatch("trajectory_error: length mismatch");
  }
  if (std::abs(measured.dt - simulated.dt) > 1e-12) {
    throw ShapeMismatch("trajectory_error: sample period mismatch");
  }
  if (!measured.has_lateral_velocity() || !simulated.has_lateral_velocity()) {
    throw MissingField("trajectory_error needs lateral velocity on both inputs");
  }
  const std::size_t n = measured.size();
  double e = 0.0;
  double prev = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double cur = std::abs(measured.v_y[i] - simulated.v_y[i]) +
                       std::abs(measured.r[i] - simulated.r[i]);
    if (i > 0) e += 0.5 * measured.dt * (prev + cur);
    prev = cur;
  }
  return e;
}

}  // namespace cornering
