#pragma once

// Magic-formula tire curves, slip/force reconstruction from trajectories and
// least-squares coefficient fitting.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "cornering/dynamics.hpp"
#include "cornering/error.hpp"
#include "cornering/estimate.hpp"

namespace cornering {

struct PacejkaCoeffs {
  double B = 1.0;   // 1/rad, stiffness factor
  double C = 1.30;  // shape factor
  double D = 1.0;   // N, peak
  double E = 0.0;   // curvature
};

enum class Axle { kFront, kRear };

struct AxleData {
  std::vector<double> alpha;  // rad
  std::vector<double> f_y;    // N
  Axle axle = Axle::kFront;
};

/// Sign convention for the front slip angle.
///
/// kModel uses alpha_f = delta1 - (v_y + a r)/v_x and
/// alpha_r = delta2 - (v_y - b r)/v_x, which are the slip angles implied by
/// the single-track state matrices. kPrinted uses the alternative
/// alpha_f = delta1 - (v_y - a r)/v_x, alpha_r = -(v_y - b r)/v_x form that
/// ignores rear steering; forces reconstructed from a model trajectory are
/// not proportional to it.
enum class SlipConvention { kModel, kPrinted };

struct AxleSeries {
  std::vector<double> front;
  std::vector<double> rear;
};

inline AxleSeries slip_angles(const Trajectory& traj, const VehicleParams& p,
                              SlipConvention conv = SlipConvention::kModel) {
  if (!traj.has_lateral_velocity()) {
    throw MissingField("slip_angles needs lateral velocity");
  }
  const std::size_t n = traj.size();
  AxleSeries out;
  out.front.resize(n);
  out.rear.resize(n);
  const double a = p.dist_front;
  const double b = p.dist_rear;
  for (std::size_t i = 0; i < n; ++i) {
    const double vx = traj.v_x[i];
    if (!(vx > 0)) {
      throw InvalidParameter("slip_angles requires v_x > 0 (sample " +
                             std::to_string(i) + ")");
    }
    const double vy = traj.v_y[i];
    const double r = traj.r[i];
    if (conv == SlipConvention::kModel) {
      out.front[i] = traj.delta1[i] - (vy + a * r) / vx;
      out.rear[i] = traj.delta2[i] - (vy - b * r) / vx;
    } else {
      out.front[i] = traj.delta1[i] - (vy - a * r) / vx;
      out.rear[i] = -(vy - b * r) / vx;
    }
  }
  return out;
}

/// Axle lateral forces from the planar rigid-body balance
///   m a_y = F_f + F_r,  I_z r_dot = a F_f - b F_r.
inline AxleSeries axle_forces(const Trajectory& traj, const VehicleParams& p) {
  if (traj.a_y.empty() || traj.r_dot.empty()) {
    throw MissingField("axle_forces needs lateral acceleration and r_dot");
  }
  const std::size_t n = traj.size();
  const double a = p.dist_front;
  const double b = p.dist_rear;
  const double l = a + b;
  AxleSeries out;
  out.front.resize(n);
  out.rear.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double may = p.mass * traj.a_y[i];
    const double izr = p.yaw_inertia * traj.r_dot[i];
    out.front[i] = (may * b + izr) / l;
    out.rear[i] = (may * a - izr) / l;
  }
  return out;
}

inline std::pair<AxleData, AxleData> axle_data(
    const Trajectory& traj, const VehicleParams& p,
    SlipConvention conv = SlipConvention::kModel) {
  AxleSeries alpha = slip_angles(traj, p, conv);
  AxleSeries force = axle_forces(traj, p);
  return {AxleData{std::move(alpha.front), std::move(force.front), Axle::kFront},
          AxleData{std::move(alpha.rear), std::move(force.rear), Axle::kRear}};
}

/// Least-squares slope of f_y against alpha through the origin.
inline double linear_stiffness(const AxleData& data) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < data.alpha.size(); ++i) {
    num += data.alpha[i] * data.f_y[i];
    den += data.alpha[i] * data.alpha[i];
  }
  if (!(den > 0)) throw IllConditionedFit("slip angles are identically zero");
  return num / den;
}

inline double pacejka_force(const PacejkaCoeffs& c, double alpha) {
  const double phi =
      (1.0 - c.E) * alpha + (c.E / c.B) * std::atan(c.B * alpha);
  return c.D * std::sin(c.C * std::atan(c.B * phi));
}

/// Slope of the magic-formula curve at zero slip.
inline double stiffness_from_fit(const PacejkaCoeffs& c) {
  return c.B * c.C * c.D;
}

struct PacejkaFit {
  PacejkaCoeffs coeffs;
  double residual_rms = 0.0;
};

namespace detail {

inline double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double w = pos - static_cast<double>(lo);
  return (1.0 - w) * v[lo] + w * v[hi];
}

inline double sum_squares(const AxleData& d, const PacejkaCoeffs& c) {
  double s = 0.0;
  for (std::size_t i = 0; i < d.alpha.size(); ++i) {
    const double e = pacejka_force(c, d.alpha[i]) - d.f_y[i];
    s += e * e;
  }
  return s;
}

// Partial derivatives of the magic formula with respect to (B, E, D).
inline Eigen::Vector3d pacejka_jacobian(const PacejkaCoeffs& c, double alpha) {
  const double at = std::atan(c.B * alpha);
  const double phi = (1.0 - c.E) * alpha + (c.E / c.B) * at;
  const double u = c.B * phi;
  const double dfdu =
      c.D * std::cos(c.C * std::atan(u)) * c.C / (1.0 + u * u);
  const double dphi_db = -c.E / (c.B * c.B) * at +
                         (c.E / c.B) * alpha / (1.0 + c.B * c.B * alpha * alpha);
  const double du_db = phi + c.B * dphi_db;
  const double du_de = -c.B * alpha + at;
  return {dfdu * du_db, dfdu * du_de, std::sin(c.C * std::atan(u))};
}

}  // namespace detail

inline constexpr double kMaxCurvature = 1.0 - 1e-9;

/// How the peak factor D is chosen. kMaxForce pins it to the largest
/// observed force magnitude; kFitted uses that only as the starting point
/// and refines D together with B and E.
enum class PeakRule { kMaxForce, kFitted };

/// Fits B and E by grid search followed by Gauss-Newton refinement. D starts
/// at the 99th-percentile force magnitude and C is pinned to `c_fixed`.
inline PacejkaFit fit_pacejka(const AxleData& data, double c_fixed = 1.30,
                              PeakRule rule = PeakRule::kMaxForce) {
  const std::size_t n = data.alpha.size();
  if (data.f_y.size() != n) throw ShapeMismatch("alpha and f_y lengths differ");
  if (n < 10) throw InsufficientData("fit_pacejka needs at least 10 points");

  double amin = data.alpha.front();
  double amax = data.alpha.front();
  for (double a : data.alpha) {
    amin = std::min(amin, a);
    amax = std::max(amax, a);
  }
  if (!(amin < 0 && amax > 0) || amax - amin < 1e-9) {
    throw IllConditionedFit(
        "slip angles must span both signs for a magic-formula fit");
  }
  std::vector<double> mag(n);
  for (std::size_t i = 0; i < n; ++i) mag[i] = std::abs(data.f_y[i]);
  const double peak = detail::percentile(mag, 0.99);
  if (!(peak > 0)) throw IllConditionedFit("lateral forces are all zero");

  PacejkaCoeffs best{1.0, c_fixed, peak, 0.0};
  double best_ss = std::numeric_limits<double>::infinity();
  constexpr int kGridB = 60;
  constexpr int kGridE = 31;
  for (int ib = 0; ib < kGridB; ++ib) {
    const double B = 0.5 * std::pow(100.0, ib / double(kGridB - 1));
    for (int ie = 0; ie < kGridE; ++ie) {
      const double E = -2.0 + 3.0 * ie / double(kGridE);
      const PacejkaCoeffs cand{B, c_fixed, peak, E};
      const double ss = detail::sum_squares(data, cand);
      if (ss < best_ss) {
        best_ss = ss;
        best = cand;
      }
    }
  }

  const Eigen::Index np = rule == PeakRule::kFitted ? 3 : 2;
  bool converged = false;
  for (int iter = 0; iter < 500 && !converged; ++iter) {
    Eigen::MatrixXd jtj = Eigen::MatrixXd::Zero(np, np);
    Eigen::VectorXd jtr = Eigen::VectorXd::Zero(np);
    for (std::size_t i = 0; i < n; ++i) {
      const Eigen::VectorXd j =
          detail::pacejka_jacobian(best, data.alpha[i]).head(np);
      const double res = pacejka_force(best, data.alpha[i]) - data.f_y[i];
      jtj += j * j.transpose();
      jtr += j * res;
    }
    const Eigen::VectorXd step = -jtj.ldlt().solve(jtr);
    if (!step.allFinite()) break;
    double scale = 1.0;
    bool improved = false;
    for (int k = 0; k < 40; ++k) {
      PacejkaCoeffs trial = best;
      trial.B = best.B + scale * step[0];
      trial.E = std::min(best.E + scale * step[1], kMaxCurvature);
      if (np == 3) trial.D = best.D + scale * step[2];
      if (trial.B > 0 && trial.D > 0) {
        const double ss = detail::sum_squares(data, trial);
        if (ss < best_ss) {
          const double rel = std::abs(trial.B - best.B) / best.B +
                             std::abs(trial.E - best.E) +
                             std::abs(trial.D - best.D) / best.D;
          best = trial;
          best_ss = ss;
          improved = true;
          converged = rel < 1e-13;
          break;
        }
      }
      scale *= 0.5;
    }
    if (!improved) break;
  }
  return PacejkaFit{best, std::sqrt(best_ss / static_cast<double>(n))};
}

/// Stiffness pair from magic-formula fits of both axles.
inline StiffnessEstimate estimate_pacejka(
    const Trajectory& derived, const VehicleParams& p,
    PacejkaFit* front_fit = nullptr, PacejkaFit* rear_fit = nullptr,
    SlipConvention conv = SlipConvention::kModel,
    PeakRule rule = PeakRule::kMaxForce) {
  const auto [front, rear] = axle_data(derived, p, conv);
  const PacejkaFit ff = fit_pacejka(front, 1.30, rule);
  const PacejkaFit rf = fit_pacejka(rear, 1.30, rule);
  if (front_fit) *front_fit = ff;
  if (rear_fit) *rear_fit = rf;
  StiffnessEstimate est;
  est.caf = stiffness_from_fit(ff.coeffs);
  est.car = stiffness_from_fit(rf.coeffs);
  est.method = Method::kPacejka;
  return est;
}

}  // namespace cornering
