#pragma once

// Saturated gradient feedback with the non-decreasing adaptive gain, and the
// polytopic tracking variant.

#include "flatsat/flat_model.hpp"
#include "flatsat/geometry.hpp"
#include "flatsat/saturation.hpp"
#include "flatsat/types.hpp"

#include <cmath>
#include <sstream>

namespace flatsat {

struct AdaptiveState {
  double gamma = 1.0;
  double gamma0 = 1.0;
  double mu = 0.0;
  double v_inf = 0.05;

  void validate() const {
    if (!(gamma0 >= 1.0)) throw Error(ErrorKind::InvalidArgument, "gamma0 must be at least 1");
    if (!(gamma >= gamma0)) throw Error(ErrorKind::InvalidArgument, "gamma must not fall below gamma0");
    if (!(mu >= 0.0)) throw Error(ErrorKind::InvalidArgument, "mu must be non-negative");
    if (!(v_inf > 0.0)) throw Error(ErrorKind::InvalidArgument, "v_inf must be positive");
  }

  static AdaptiveState initial(double gamma0, double mu, double v_inf) {
    AdaptiveState s{gamma0, gamma0, mu, v_inf};
    s.validate();
    return s;
  }
};

struct ControlOutput {
  VirtualInput v = VirtualInput::Zero();
  RealInput u;
  double lambda_star = 1.0;
  bool saturated = false;
};

inline double lyapunov_value(const State& xi, const Mat6& p) { return xi.dot(p * xi); }

inline double threshold(double s, double v_inf) { return s <= v_inf ? 0.0 : s - v_inf; }

inline AdaptiveState gamma_step(const AdaptiveState& state, double v_value, double dt) {
  if (!(dt > 0.0)) throw Error(ErrorKind::NonPositiveSampling, "gamma step needs dt > 0");
  AdaptiveState next = state;
  next.gamma += dt * state.mu * threshold(v_value, state.v_inf);
  return next;
}

namespace detail {

// Phi(v) with v3 kept off the cone apex; aborts if the result leaves U.
inline RealInput admissible_input(VirtualInput v, double psi, const PhysicalParams& params) {
  const double floor = -params.g + 1e-9;
  if (v.z() <= floor) v.z() = floor;
  const RealInput u = linearizing_input(v, psi, params);
  if (!in_input_set(u, params)) {
    std::ostringstream msg;
    msg << "emitted input leaves U (T=" << u.thrust << ", phi=" << u.roll << ", theta=" << u.pitch << ")";
    throw Error(ErrorKind::InputConstraintViolated, msg.str());
  }
  return u;
}

}  // namespace detail

/// v = sat_vc(-gamma B' P xi), u = Phi(v, psi).
inline ControlOutput control(const State& xi, const Mat6& p, double gamma, double psi, const PhysicalParams& params) {
  if (!(gamma >= 1.0)) throw Error(ErrorKind::InvalidArgument, "gamma must be at least 1");
  const VirtualInput raw = -gamma * (input_matrix().transpose() * p * xi);
  const SaturationResult sat = sat_vc(raw, params);
  ControlOutput out;
  out.v = sat.v_sat;
  out.lambda_star = sat.lambda_star;
  out.saturated = sat.active;
  out.u = detail::admissible_input(out.v, psi, params);
  return out;
}

/// v = v_ref + sat_polytope(-gamma B' P (xi - xi_ref), v_tilde).
inline ControlOutput tracking_control(const State& xi, const State& xi_ref, const VirtualInput& v_ref, const Mat6& p,
                                      double gamma, const HPolytope& v_tilde, double psi,
                                      const PhysicalParams& params) {
  if (!(gamma >= 1.0)) throw Error(ErrorKind::InvalidArgument, "gamma must be at least 1");
  const Vec3 raw = -gamma * (input_matrix().transpose() * p * (xi - xi_ref));
  const SaturationResult sat = polytope_saturation(raw, v_tilde);
  ControlOutput out;
  out.v = v_ref + sat.v_sat;
  out.lambda_star = sat.lambda_star;
  out.saturated = sat.active;
  out.u = detail::admissible_input(out.v, psi, params);
  return out;
}

}  // namespace flatsat
