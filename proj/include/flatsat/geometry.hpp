#pragma once

// Convex sets used by the controller: the convex input set Vc, ellipsoids,
// H/V polytopes, inscribed ball and box, inner polytopic approximation of Vc
// and the Pontryagin difference.

#include "flatsat/flat_model.hpp"
#include "flatsat/linalg.hpp"
#include "flatsat/types.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

namespace flatsat {

/// {x : x' P x <= level}. The shape matrix must be symmetric positive definite.
template <int N>
class Ellipsoid {
 public:
  using Matrix = Eigen::Matrix<double, N, N>;
  using Vector = Eigen::Matrix<double, N, 1>;

  Ellipsoid(Matrix shape, double level) : shape_(std::move(shape)), level_(level) {
    if (!linalg::is_symmetric(shape_, 1e-10)) {
      throw Error(ErrorKind::InvalidArgument, "ellipsoid shape matrix is not symmetric");
    }
    if (!(linalg::min_eigenvalue(shape_) > 0.0)) {
      throw Error(ErrorKind::InvalidArgument, "ellipsoid shape matrix is not positive definite");
    }
    if (!(level_ >= 0.0)) throw Error(ErrorKind::InvalidArgument, "ellipsoid level must be non-negative");
  }

  const Matrix& shape() const { return shape_; }
  double level() const { return level_; }

  double value(const Vector& x) const { return x.dot(shape_ * x); }
  bool contains(const Vector& x, double tol = 0.0) const { return value(x) <= level_ + tol; }

  /// Scales x radially onto the boundary.
  Vector project_to_boundary(const Vector& x) const { return x * std::sqrt(level_ / value(x)); }

 private:
  Matrix shape_;
  double level_;
};

/// {x : A x <= b}.
struct HPolytope {
  Eigen::MatrixXd a_rows;
  Eigen::VectorXd b;

  int dim() const { return static_cast<int>(a_rows.cols()); }
  int rows() const { return static_cast<int>(a_rows.rows()); }

  bool contains(const Eigen::VectorXd& x, double tol = 0.0) const {
    return ((a_rows * x - b).array() <= tol).all();
  }

  /// Largest row violation a_i' x - b_i (negative when strictly inside).
  double max_violation(const Eigen::VectorXd& x) const { return (a_rows * x - b).maxCoeff(); }

  bool origin_interior() const { return (b.array() > 0.0).all(); }
};

struct VPolytope {
  std::vector<Eigen::VectorXd> vertices;

  /// max over vertices of a' w.
  double support(const Eigen::VectorXd& direction) const {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& w : vertices) best = std::max(best, direction.dot(w));
    return best;
  }

  static VPolytope box(const Vec3& center, const Vec3& half_widths) {
    VPolytope out;
    for (int mask = 0; mask < 8; ++mask) {
      Vec3 corner = center;
      for (int i = 0; i < 3; ++i) corner(i) += ((mask >> i) & 1) ? half_widths(i) : -half_widths(i);
      out.vertices.emplace_back(corner);
    }
    return out;
  }
};

/// Symmetric box {|v_i| <= half_widths_i}.
struct Box {
  Vec3 half_widths = Vec3::Ones();

  std::array<Vec3, 8> corners() const {
    std::array<Vec3, 8> out;
    for (int mask = 0; mask < 8; ++mask) {
      for (int i = 0; i < 3; ++i) out[mask](i) = ((mask >> i) & 1) ? half_widths(i) : -half_widths(i);
    }
    return out;
  }

  bool contains(const Vec3& v) const { return (v.cwiseAbs().array() <= half_widths.array()).all(); }

  HPolytope to_hpolytope() const {
    HPolytope p;
    p.a_rows.resize(6, 3);
    p.a_rows.setZero();
    p.b.resize(6);
    for (int i = 0; i < 3; ++i) {
      p.a_rows(2 * i, i) = 1.0;
      p.a_rows(2 * i + 1, i) = -1.0;
      p.b(2 * i) = half_widths(i);
      p.b(2 * i + 1) = half_widths(i);
    }
    return p;
  }
};

/// Membership in Vc: norm ball ||v + g e3|| <= T_max, thrust cone of
/// half-angle eps_max, and v3 >= -g. Exact inequalities.
inline bool vc_membership(const VirtualInput& v, const PhysicalParams& params) {
  const double h3 = v.z() + params.g;
  if (h3 < 0.0) return false;
  const double lateral = v.x() * v.x() + v.y() * v.y();
  if (lateral + h3 * h3 > params.t_max * params.t_max) return false;
  const double tan_eps = std::tan(params.eps_max);
  return lateral <= tan_eps * tan_eps * h3 * h3;
}

/// Squared radius of the largest origin-centred ball inside Vc.
inline double max_ball_in_vc(const PhysicalParams& params) {
  if (!(params.t_max > params.g)) throw Error(ErrorKind::InfeasibleBall, "t_max must exceed g");
  const double radius = std::min(params.t_max - params.g, params.g * std::sin(params.eps_max));
  return radius * radius;
}

namespace detail {

inline bool box_feasible(const Box& box, const PhysicalParams& params) {
  for (const Vec3& c : box.corners()) {
    if (!vc_membership(c, params)) return false;
  }
  return true;
}

// Largest lateral half-width for a given vertical half-width.
inline double max_lateral_half_width(double vertical, const PhysicalParams& params) {
  double lo = 0.0;
  double hi = params.t_max;
  if (!box_feasible(Box{Vec3(0.0, 0.0, vertical)}, params)) return 0.0;
  for (int i = 0; i < 200 && hi - lo > 1e-13 * params.t_max; ++i) {
    const double mid = 0.5 * (lo + hi);
    (box_feasible(Box{Vec3(mid, mid, vertical)}, params) ? lo : hi) = mid;
  }
  return lo;
}

}  // namespace detail

/// Volume-maximal symmetric box with equal lateral half-widths whose corners
/// all lie in Vc. Golden-section search over the vertical half-width.
inline Box max_box_in_vc(const PhysicalParams& params, double tol = 1e-6) {
  if (!(params.t_max > params.g)) throw Error(ErrorKind::InfeasibleBall, "t_max must exceed g");
  const double c_hi = std::min(params.t_max - params.g, params.g);
  auto volume = [&](double c) {
    const double a = detail::max_lateral_half_width(c, params);
    return a * a * c;
  };

  constexpr int kGrid = 64;
  int best = 1;
  double best_vol = -1.0;
  for (int i = 1; i < kGrid; ++i) {
    const double vol = volume(c_hi * i / kGrid);
    if (vol > best_vol) {
      best_vol = vol;
      best = i;
    }
  }
  double lo = c_hi * (best - 1) / kGrid;
  double hi = c_hi * (best + 1) / kGrid;
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - inv_phi * (hi - lo);
  double x2 = lo + inv_phi * (hi - lo);
  double f1 = volume(x1);
  double f2 = volume(x2);
  while (hi - lo > tol) {
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + inv_phi * (hi - lo);
      f2 = volume(x2);
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - inv_phi * (hi - lo);
      f1 = volume(x1);
    }
  }
  const double c = 0.5 * (lo + hi);
  const double a = detail::max_lateral_half_width(c, params);
  return Box{Vec3(a, a, c)};
}

/// Points on the boundary of Vc: the cone apex, the cap pole, and n_el rings
/// of n_az points each on the spherical cap (the last ring being the
/// cap/cone junction). Rings are ordered from the pole downwards.
inline std::vector<Vec3> vc_boundary_vertices(const PhysicalParams& params, int n_az, int n_el) {
  std::vector<Vec3> out;
  out.reserve(static_cast<size_t>(n_az * n_el + 2));
  // Pull rounding-level excursions back inside so that every vertex is an exact member.
  auto push = [&](Vec3 v) {
    for (int it = 0; it < 1000 && !vc_membership(v, params); ++it) v *= 1.0 - 4.0 * std::numeric_limits<double>::epsilon();
    out.push_back(v);
  };
  push(Vec3(0.0, 0.0, params.t_max - params.g));  // pole
  for (int k = 1; k <= n_el; ++k) {
    const double polar = params.eps_max * k / n_el;
    for (int j = 0; j < n_az; ++j) {
      const double az = 2.0 * std::numbers::pi * j / n_az;
      push(Vec3(params.t_max * std::sin(polar) * std::cos(az), params.t_max * std::sin(polar) * std::sin(az),
                params.t_max * std::cos(polar) - params.g));
    }
  }
  out.emplace_back(0.0, 0.0, -params.g);  // apex
  return out;
}

/// Inner polytopic approximation of Vc in half-space form. Facets follow
/// the azimuth x elevation mesh of vc_boundary_vertices; each facet row is
/// normalized to a unit normal.
inline HPolytope polytope_approx_vc(const PhysicalParams& params, int n_az = 16, int n_el = 4) {
  if (n_az < 6 || n_el < 2) throw Error(ErrorKind::InvalidArgument, "polytope approximation needs n_az >= 6, n_el >= 2");
  const auto verts = vc_boundary_vertices(params, n_az, n_el);
  auto ring = [&](int k, int j) -> const Vec3& { return verts[1 + (k - 1) * n_az + (j % n_az)]; };
  const Vec3& pole = verts.front();
  const Vec3& apex = verts.back();

  std::vector<std::pair<Vec3, double>> facets;
  auto add_facet = [&](const Vec3& p0, const Vec3& p1, const Vec3& p2) {
    Vec3 n = (p1 - p0).cross(p2 - p0);
    n.normalize();
    double b = n.dot(p0);
    if (b < 0.0) {
      n = -n;
      b = -b;
    }
    facets.emplace_back(n, b);
  };
  for (int j = 0; j < n_az; ++j) {
    add_facet(pole, ring(1, j), ring(1, j + 1));
    for (int k = 1; k < n_el; ++k) add_facet(ring(k, j), ring(k, j + 1), ring(k + 1, j));
    add_facet(apex, ring(n_el, j), ring(n_el, j + 1));
  }

  HPolytope out;
  out.a_rows.resize(static_cast<Eigen::Index>(facets.size()), 3);
  out.b.resize(static_cast<Eigen::Index>(facets.size()));
  for (size_t i = 0; i < facets.size(); ++i) {
    out.a_rows.row(static_cast<Eigen::Index>(i)) = facets[i].first.transpose();
    out.b(static_cast<Eigen::Index>(i)) = facets[i].second;
  }
  const double scale = params.t_max;
  for (const Vec3& v : verts) {
    if (!out.contains(v, 1e-9 * scale)) {
      throw Error(ErrorKind::InvalidArgument, "polytope mesh is not convex for the requested resolution");
    }
  }
  return out;
}

/// outer (-) inner: keeps the normals of `outer` and tightens each offset by
/// the support of `inner` along that normal.
inline HPolytope pontryagin_diff(const HPolytope& outer, const VPolytope& inner) {
  if (inner.vertices.empty()) throw Error(ErrorKind::InvalidArgument, "inner polytope has no vertices");
  HPolytope out = outer;
  for (int i = 0; i < outer.rows(); ++i) {
    out.b(i) = outer.b(i) - inner.support(outer.a_rows.row(i).transpose());
    if (out.b(i) < 0.0) {
      throw Error(ErrorKind::EmptyDifference, "Pontryagin difference is empty along facet " + std::to_string(i));
    }
  }
  return out;
}

/// Whether x' P x <= eps implies ||B' P x||^2 <= rho, decided exactly as
/// eps * lambda_max(B' P B) <= rho.
inline bool check_input_ball_condition(const Mat6& p, double eps, double rho) {
  const Mat63 b = input_matrix();
  const Mat3 bpb = b.transpose() * p * b;
  return eps * linalg::max_eigenvalue(bpb) <= rho;
}

}  // namespace flatsat
