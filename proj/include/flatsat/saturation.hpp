#pragma once

// Explicit radial saturation onto Vc from the closed-form candidate roots,
// and its polytopic counterpart used for tracking.

#include "flatsat/geometry.hpp"
#include "flatsat/types.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

namespace flatsat {

struct SaturationResult {
  VirtualInput v_sat = VirtualInput::Zero();
  double lambda_star = 1.0;
  bool active = false;
};

namespace detail {

constexpr double kCandidateTol = 1e-12;
constexpr double kValidationTol = 1e-10;

inline void push_quadratic_roots(double a, double b, double c, std::vector<double>& out) {
  if (a == 0.0) {
    if (b != 0.0) out.push_back(-c / b);
    return;
  }
  double disc = b * b - 4.0 * a * c;
  if (disc < 0.0) {
    if (disc < -kCandidateTol * (b * b + std::abs(4.0 * a * c))) return;
    disc = 0.0;
  }
  const double sq = std::sqrt(disc);
  out.push_back((-b + sq) / (2.0 * a));
  out.push_back((-b - sq) / (2.0 * a));
}

// Membership in Vc with a relative slack, used to re-validate roots.
inline bool near_vc(const VirtualInput& v, const PhysicalParams& params) {
  const double h3 = v.z() + params.g;
  const double t2 = params.t_max * params.t_max;
  if (h3 < -kValidationTol * params.g) return false;
  const double lateral = v.x() * v.x() + v.y() * v.y();
  if (lateral + h3 * h3 > t2 * (1.0 + kValidationTol)) return false;
  const double tan_eps = std::tan(params.eps_max);
  return lateral - tan_eps * tan_eps * h3 * h3 <= kValidationTol * t2;
}

// Shrinks lambda by a few ulps at a time until `member(lambda * v)` holds exactly.
inline bool settle_inside(double& lambda, const std::function<bool(double)>& member) {
  double step = std::numeric_limits<double>::epsilon();
  for (int i = 0; i < 64; ++i) {
    if (member(lambda)) return true;
    lambda *= 1.0 - step;
    step *= 2.0;
  }
  return member(lambda);
}

}  // namespace detail

/// All real, finite candidates for the exit factor lambda of the ray t*v
/// through the boundary pieces of Vc.
inline std::vector<double> candidate_lambdas(const VirtualInput& v, const PhysicalParams& params) {
  if (v.isZero(0.0)) throw Error(ErrorKind::ZeroVector, "saturation candidates are undefined for v = 0");
  const double g = params.g;
  const double tan2 = std::tan(params.eps_max) * std::tan(params.eps_max);
  const double lateral = v.x() * v.x() + v.y() * v.y();
  const double a0 = params.t_max * std::cos(params.eps_max);

  std::vector<double> out;
  if (v.z() != 0.0) {
    out.push_back(-g / v.z());
    out.push_back((a0 - g) / v.z());
  }
  // cone: (v1^2 + v2^2) l^2 = tan^2(eps) (l v3 + g)^2
  detail::push_quadratic_roots(lateral - v.z() * v.z() * tan2, -2.0 * tan2 * v.z() * g, -tan2 * g * g, out);
  // ball: ||l v + g e3||^2 = T_max^2
  detail::push_quadratic_roots(lateral + v.z() * v.z(), 2.0 * v.z() * g, g * g - params.t_max * params.t_max, out);

  out.erase(std::remove_if(out.begin(), out.end(), [](double x) { return !std::isfinite(x); }), out.end());
  return out;
}

/// Scales v radially onto Vc by the largest admissible factor in (0, 1].
inline SaturationResult sat_vc(const VirtualInput& v, const PhysicalParams& params) {
  if (v.isZero(0.0) || vc_membership(v, params)) return SaturationResult{v, 1.0, false};

  auto candidates = candidate_lambdas(v, params);
  std::sort(candidates.begin(), candidates.end(), std::greater<>());
  const auto exact = [&](double l) { return vc_membership(l * v, params); };
  for (double lambda : candidates) {
    if (lambda <= detail::kCandidateTol || lambda > 1.0 + detail::kCandidateTol) continue;
    lambda = std::min(lambda, 1.0);
    if (!detail::near_vc(lambda * v, params)) continue;
    if (detail::settle_inside(lambda, exact)) return SaturationResult{lambda * v, lambda, true};
  }
  throw Error(ErrorKind::NoFeasibleScaling, "no candidate scaling factor keeps v inside Vc");
}

/// Closed-form saturation onto a polytope containing the origin strictly.
inline SaturationResult polytope_saturation(const Vec3& vt, const HPolytope& vset) {
  if (!vset.origin_interior()) {
    throw Error(ErrorKind::OriginNotInterior, "saturation polytope must contain the origin strictly");
  }
  if (vset.contains(vt)) return SaturationResult{vt, 1.0, false};
  const Eigen::VectorXd proj = vset.a_rows * vt;
  double lambda = std::numeric_limits<double>::infinity();
  for (int i = 0; i < vset.rows(); ++i) {
    if (proj(i) > 0.0) lambda = std::min(lambda, vset.b(i) / proj(i));
  }
  detail::settle_inside(lambda, [&](double l) { return vset.contains(l * vt); });
  return SaturationResult{lambda * vt, lambda, true};
}

inline Vec3 sat_polytope(const Vec3& vt, const HPolytope& vset) { return polytope_saturation(vt, vset).v_sat; }

}  // namespace flatsat
