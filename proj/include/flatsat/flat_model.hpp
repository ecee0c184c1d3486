#pragma once

// Translational quadcopter model, flatness-based input transform and exact
// discretization of the resulting double integrator.

#include "flatsat/types.hpp"

#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <utility>

namespace flatsat {

struct PhysicalParams {
  double g = 9.81;
  double t_max = 1.45 * 9.81;
  double eps_max = std::numbers::pi / 18.0;

  void validate() const {
    if (!(g > 0.0)) throw Error(ErrorKind::InvalidArgument, "gravity must be positive");
    if (!(t_max > g)) throw Error(ErrorKind::InfeasibleBall, "t_max must exceed g for hover to be feasible");
    if (!(eps_max > 0.0 && eps_max < std::numbers::pi / 2.0)) {
      throw Error(ErrorKind::InvalidArgument, "eps_max must lie in (0, pi/2)");
    }
  }
};

/// Normalized thrust T (m/s^2), roll phi and pitch theta (rad).
struct RealInput {
  double thrust = 0.0;
  double roll = 0.0;
  double pitch = 0.0;
};

/// Membership in the actuation set U: 0 <= T <= T_max, |phi|, |theta| <= eps_max.
inline bool in_input_set(const RealInput& u, const PhysicalParams& params) {
  return u.thrust >= 0.0 && u.thrust <= params.t_max && std::abs(u.roll) <= params.eps_max &&
         std::abs(u.pitch) <= params.eps_max;
}

/// Additive disturbance E w(t) on the state derivative, with ||w(t)|| <= 1.
struct DisturbanceChannel {
  Eigen::MatrixXd e_matrix;  // 6 x k
  std::function<Eigen::VectorXd(double)> signal;

  Vec6 apply(double t) const { return e_matrix * signal(t); }
};

/// Yaw matrix exactly as used by the model. It is a reflection (det = -1) and
/// its own inverse.
inline Mat3 yaw_matrix(double psi) {
  const double c = std::cos(psi);
  const double s = std::sin(psi);
  Mat3 r;
  r << c, s, 0.0,
       s, -c, 0.0,
       0.0, 0.0, 1.0;
  return r;
}

/// f(u) = T [cos(phi) sin(theta), sin(phi), cos(phi) cos(theta)].
inline Vec3 thrust_map(const RealInput& u) {
  const double cphi = std::cos(u.roll);
  return u.thrust * Vec3(cphi * std::sin(u.pitch), std::sin(u.roll), cphi * std::cos(u.pitch));
}

inline RealInput inverse_thrust_map(const Vec3& h) {
  const double norm = h.norm();
  if (norm == 0.0) throw Error(ErrorKind::ZeroThrust, "thrust vector has zero norm");
  if (!(h.z() > 0.0)) {
    throw Error(ErrorKind::SingularAttitude, "thrust vector requires an inclination of 90 degrees or more");
  }
  return RealInput{norm, std::asin(h.y() / norm), std::atan(h.x() / h.z())};
}

/// Phi(v): the real input producing virtual input v under yaw psi. Outputs
/// within a relative 1e-12 beyond a bound of U are snapped onto it, so that
/// boundary points of Vc map into U despite rounding.
inline RealInput linearizing_input(const VirtualInput& v, double psi, const PhysicalParams& params) {
  if (!(v.z() > -params.g)) {
    throw Error(ErrorKind::SingularAttitude, "v3 must be strictly greater than -g");
  }
  Vec3 h = v;
  h.z() += params.g;
  RealInput u = inverse_thrust_map(yaw_matrix(psi) * h);
  constexpr double kSnap = 1e-12;
  auto snap = [](double x, double bound) {
    if (std::abs(x) > bound && std::abs(x) <= bound * (1.0 + kSnap)) return std::copysign(bound, x);
    return x;
  };
  u.thrust = snap(u.thrust, params.t_max);
  u.roll = snap(u.roll, params.eps_max);
  u.pitch = snap(u.pitch, params.eps_max);
  return u;
}

/// Acceleration R_psi f(u) - g e3 realized by a real input.
inline VirtualInput realized_acceleration(const RealInput& u, double psi, const PhysicalParams& params) {
  Vec3 acc = yaw_matrix(psi) * thrust_map(u);
  acc.z() -= params.g;
  return acc;
}

inline Vec6 dynamics_rhs(const State& xi, const RealInput& u, double psi, const PhysicalParams& params,
                         const DisturbanceChannel* dist = nullptr, double t = 0.0) {
  Vec6 d;
  d.head<3>() = velocity(xi);
  d.tail<3>() = realized_acceleration(u, psi, params);
  if (dist != nullptr) d += dist->apply(t);
  return d;
}

struct DiscreteModel {
  Mat6 a_d;
  Mat63 b_d;
};

/// Zero-order-hold discretization of the double integrator (RK4 is exact here).
inline DiscreteModel discretize(double ts) {
  if (!(ts > 0.0)) throw Error(ErrorKind::NonPositiveSampling, "sampling time must be positive");
  DiscreteModel m;
  m.a_d = Mat6::Identity();
  m.a_d.topRightCorner<3, 3>() = ts * Mat3::Identity();
  m.b_d.topRows<3>() = 0.5 * ts * ts * Mat3::Identity();
  m.b_d.bottomRows<3>() = ts * Mat3::Identity();
  return m;
}

}  // namespace flatsat
