#pragma once

// Offline certificate synthesis for the saturated controller.
//
// All LMIs here are block-diagonal per axis once Q is restricted to the
// [p; p_dot] per-axis structure, so each search runs on a 2x2 block. A block
// is parameterized through the slack N = -(residual) >= 0, written as
// N = L L' with L lower triangular; every point of the search therefore
// satisfies the LMI by construction, and only positive definiteness of Q and
// the objective remain. The final 6x6 certificate is re-checked by exact
// symmetric eigenvalues.

#include "flatsat/geometry.hpp"
#include "flatsat/linalg.hpp"
#include "flatsat/types.hpp"

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>

namespace flatsat {

struct NominalDesign {
  Mat6 q_matrix = Mat6::Identity();
  Mat6 p_matrix = Mat6::Identity();
  double alpha = 0.0;
  double rho = 0.0;
  double eps = 0.0;
  // diagnostics
  double lmi_max_eig = 0.0;
  int iterations = 0;
};

struct RobustDesign {
  Mat6 qw_matrix = Mat6::Identity();
  Mat6 pw_matrix = Mat6::Identity();
  double beta = 0.0;
  Box box;
  Eigen::MatrixXd e_matrix;
  // diagnostics
  double lmi_max_eig = 0.0;
  Vec3 row_margins = Vec3::Zero();
  int iterations = 0;
};

struct AdaptiveBounds {
  double t_inf_bound = 0.0;
  double gamma_inf_bound = 0.0;
};

struct SynthesisOptions {
  /// Smallest admissible eigenvalue of a synthesized Q; bounds the search
  /// range and rejects numerically useless certificates.
  double q_min_eig = 1e-6;
  double feasibility_tol = 1e-9;
  double step_tol = 1e-10;
};

/// Q A' + A Q - 2 B B' + alpha Q, which must be negative semidefinite.
inline Mat6 nominal_lmi_residual(const Mat6& q, double alpha) {
  const Mat6 a = drift_matrix();
  const Mat63 b = input_matrix();
  return q * a.transpose() + a * q - 2.0 * b * b.transpose() + alpha * q;
}

/// Q_w A' + A Q_w - 2 B B' + beta Q_w + E E' / beta, which must be negative semidefinite.
inline Mat6 robust_lmi_residual(const Mat6& qw, double beta, const Eigen::MatrixXd& e_matrix) {
  Mat6 r = nominal_lmi_residual(qw, beta);
  if (e_matrix.size() > 0) r += (e_matrix * e_matrix.transpose()) / beta;
  return r;
}

/// Largest level eps such that x' P x <= eps implies ||B' P x||^2 <= rho.
inline double max_level_set(const Mat6& p, double rho) {
  if (!(rho > 0.0)) throw Error(ErrorKind::InvalidArgument, "rho must be positive");
  const Mat63 b = input_matrix();
  return rho / linalg::max_eigenvalue(Mat3(b.transpose() * p * b));
}

/// Per-row margins v_i^2 - r_i(B' P_w) Q_w r_i(B' P_w)'. Non-negative
/// margins certify that -B' P_w x stays in the box on x' P_w x <= 1.
inline Vec3 check_box_rows(const Mat6& qw, const Box& box) {
  const Mat6 pw = qw.inverse();
  const Mat36 rows = input_matrix().transpose() * pw;
  Vec3 margins;
  for (int i = 0; i < 3; ++i) {
    margins(i) = box.half_widths(i) * box.half_widths(i) - rows.row(i).dot(qw * rows.row(i).transpose());
  }
  return margins;
}

namespace detail {

struct BlockSearchResult {
  Mat2 q = Mat2::Zero();
  double objective = -std::numeric_limits<double>::infinity();
  int evaluations = 0;
  bool feasible = false;
};

// Q block whose LMI slack is L L' for L = [[t0, 0], [t1, t2]]: rate is the
// coefficient of Q and d the constant disturbance term of the residual.
inline Mat2 block_from_slack(const std::array<double, 3>& t, double rate, const Mat2& d) {
  const double n11 = t[0] * t[0];
  const double n12 = t[0] * t[1];
  const double n22 = t[1] * t[1] + t[2] * t[2];
  const double q3 = (2.0 - d(1, 1) - n22) / rate;
  const double q2 = (-n12 - d(0, 1) - q3) / rate;
  const double q1 = (-n11 - d(0, 0) - 2.0 * q2) / rate;
  Mat2 q;
  q << q1, q2, q2, q3;
  return q;
}

// Grid seeding followed by compass search with step halving. `objective`
// returns nullopt for inadmissible blocks.
inline BlockSearchResult search_block(double rate, const Mat2& d,
                                      const std::function<std::optional<double>(const Mat2&)>& objective,
                                      double step_tol) {
  BlockSearchResult best;
  std::array<double, 3> theta{0.0, 0.0, 0.0};
  auto eval = [&](const std::array<double, 3>& t) {
    ++best.evaluations;
    return objective(block_from_slack(t, rate, d));
  };

  constexpr int kGrid = 9;
  const double span = 1.6;
  for (int i = 0; i < kGrid; ++i) {
    for (int j = 0; j < kGrid; ++j) {
      for (int k = 0; k < kGrid; ++k) {
        const std::array<double, 3> t{span * (2.0 * i / (kGrid - 1) - 1.0), span * (2.0 * j / (kGrid - 1) - 1.0),
                                      span * (2.0 * k / (kGrid - 1) - 1.0)};
        if (auto val = eval(t); val && *val > best.objective) {
          best.objective = *val;
          best.feasible = true;
          theta = t;
        }
      }
    }
  }
  if (!best.feasible) return best;

  double step = span / (kGrid - 1);
  while (step > step_tol) {
    bool improved = false;
    for (int dim = 0; dim < 3; ++dim) {
      for (double sign : {1.0, -1.0}) {
        auto trial = theta;
        trial[dim] += sign * step;
        if (auto val = eval(trial); val && *val > best.objective) {
          best.objective = *val;
          theta = trial;
          improved = true;
        }
      }
    }
    if (!improved) step *= 0.5;
  }
  best.q = block_from_slack(theta, rate, d);
  return best;
}

inline double min_eig2(const Mat2& q) {
  const double tr = q.trace();
  const double det = q.determinant();
  return 0.5 * (tr - std::sqrt(std::max(0.0, tr * tr - 4.0 * det)));
}

}  // namespace detail

/// Checks externally supplied (Q, alpha) and completes it into a design.
inline NominalDesign verify_nominal(const PhysicalParams& params, const Mat6& q, double alpha) {
  if (!linalg::is_spd(q)) throw Error(ErrorKind::InvalidArgument, "Q must be symmetric positive definite");
  NominalDesign out;
  out.q_matrix = q;
  out.p_matrix = q.inverse();
  out.alpha = alpha;
  out.rho = max_ball_in_vc(params);
  out.eps = max_level_set(out.p_matrix, out.rho);
  out.lmi_max_eig = linalg::max_eigenvalue(nominal_lmi_residual(q, alpha));
  return out;
}

/// Synthesizes Q maximizing the volume of {x' Q^{-1} x <= eps}, with eps
/// the largest level satisfying the input-ball condition.
inline NominalDesign solve_nominal(const PhysicalParams& params, double alpha, const SynthesisOptions& opts = {}) {
  if (!(alpha > 0.0)) throw Error(ErrorKind::InvalidArgument, "decay rate alpha must be positive");
  double best_min_eig = -std::numeric_limits<double>::infinity();
  // Per axis, vol ~ eps^(1/1) * sqrt(det q) with eps ~ det(q) / q11; up to
  // constants the log-volume is 1.5 log det q - log q11.
  auto objective = [&](const Mat2& q) -> std::optional<double> {
    const double me = detail::min_eig2(q);
    best_min_eig = std::max(best_min_eig, me);
    if (!(me >= opts.q_min_eig)) return std::nullopt;
    return 1.5 * std::log(q.determinant()) - std::log(q(0, 0));
  };
  const auto res = detail::search_block(alpha, Mat2::Zero(), objective, opts.step_tol);
  if (!res.feasible) {
    std::ostringstream msg;
    msg << "no Q with min eigenvalue >= " << opts.q_min_eig << " satisfies the decay LMI for alpha = " << alpha
        << " (best min eigenvalue " << best_min_eig << ")";
    throw Error(ErrorKind::Infeasible, msg.str());
  }
  NominalDesign out = verify_nominal(params, from_axis_blocks(res.q, res.q, res.q), alpha);
  out.iterations = res.evaluations;
  if (out.lmi_max_eig > opts.feasibility_tol) {
    std::ostringstream msg;
    msg << "synthesized Q violates the decay LMI by " << out.lmi_max_eig;
    throw Error(ErrorKind::Infeasible, msg.str());
  }
  return out;
}

/// Checks externally supplied (Q_w, beta) against the box rows and the
/// disturbed decay LMI.
inline RobustDesign verify_robust(const Mat6& qw, double beta, const Box& box, const Eigen::MatrixXd& e_matrix) {
  if (!linalg::is_spd(qw)) throw Error(ErrorKind::InvalidArgument, "Q_w must be symmetric positive definite");
  if (!(beta > 0.0)) throw Error(ErrorKind::InvalidArgument, "beta must be positive");
  RobustDesign out;
  out.qw_matrix = qw;
  out.pw_matrix = qw.inverse();
  out.beta = beta;
  out.box = box;
  out.e_matrix = e_matrix;
  out.lmi_max_eig = linalg::max_eigenvalue(robust_lmi_residual(qw, beta, e_matrix));
  out.row_margins = check_box_rows(qw, box);
  return out;
}

/// Synthesizes the tightest (minimum-volume) robustly invariant ellipsoid
/// {x' Q_w^{-1} x <= 1} whose nominal feedback stays inside `box`. Axes the
/// disturbance does not reach take the largest admissible block instead.
/// beta is scanned on a log grid and refined by golden section.
inline RobustDesign solve_robust(const PhysicalParams& params, const Box& box, const Eigen::MatrixXd& e_matrix,
                                 const SynthesisOptions& opts = {}) {
  if (e_matrix.rows() != 6) throw Error(ErrorKind::InvalidArgument, "E must have 6 rows");
  for (const Vec3& c : box.corners()) {
    if (!vc_membership(c, params)) throw Error(ErrorKind::InvalidArgument, "box is not contained in Vc");
  }

  // Per-axis disturbance blocks; cross-axis coupling is bounded by
  // G <= 3 blockdiag(G) for a PSD G with three diagonal blocks.
  const Mat6 g_full = e_matrix.cols() > 0 ? Mat6(e_matrix * e_matrix.transpose()) : Mat6::Zero();
  bool coupled = false;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      if (i == j) continue;
      for (int r : {i, i + 3}) {
        for (int c : {j, j + 3}) coupled = coupled || g_full(r, c) != 0.0;
      }
    }
  }
  std::array<Mat2, 3> g_axis;
  for (int a = 0; a < 3; ++a) g_axis[a] = (coupled ? 3.0 : 1.0) * axis_block(g_full, a);

  struct Candidate {
    double objective = -std::numeric_limits<double>::infinity();
    std::array<Mat2, 3> blocks{};
    int evaluations = 0;
    bool feasible = false;
  };
  auto solve_for_beta = [&](double beta) {
    Candidate cand;
    cand.feasible = true;
    cand.objective = 0.0;
    for (int a = 0; a < 3; ++a) {
      const double vbar2 = box.half_widths(a) * box.half_widths(a);
      // Disturbed axes get the tightest ellipsoid; undisturbed axes the
      // largest one, since shrinking them buys nothing.
      const bool disturbed = !g_axis[a].isZero(0.0);
      auto objective = [&](const Mat2& q) -> std::optional<double> {
        if (!(detail::min_eig2(q) >= opts.q_min_eig)) return std::nullopt;
        const double det = q.determinant();
        if (q(0, 0) / det > vbar2) return std::nullopt;  // (Q^{-1})_{22} <= vbar^2
        return disturbed ? -std::log(det) : std::log(det);
      };
      const auto res = detail::search_block(beta, g_axis[a] / beta, objective, opts.step_tol);
      cand.evaluations += res.evaluations;
      if (!res.feasible) {
        cand.feasible = false;
        cand.objective = -std::numeric_limits<double>::infinity();
        return cand;
      }
      if (disturbed) cand.objective += res.objective;
      cand.blocks[a] = res.q;
    }
    return cand;
  };

  constexpr int kGrid = 41;
  const double log_lo = std::log(1e-3);
  const double log_hi = std::log(1e2);
  int best_idx = -1;
  Candidate best;
  int evaluations = 0;
  std::array<double, kGrid> grid_obj{};
  for (int i = 0; i < kGrid; ++i) {
    const double lb = log_lo + (log_hi - log_lo) * i / (kGrid - 1);
    auto cand = solve_for_beta(std::exp(lb));
    evaluations += cand.evaluations;
    grid_obj[i] = cand.objective;
    if (cand.feasible && cand.objective > best.objective) {
      best = cand;
      best_idx = i;
    }
  }
  if (best_idx < 0) throw Error(ErrorKind::Infeasible, "no beta on the search grid admits a robust certificate");

  const double h = (log_hi - log_lo) / (kGrid - 1);
  double lo = log_lo + h * std::max(0, best_idx - 1);
  double hi = log_lo + h * std::min(kGrid - 1, best_idx + 1);
  double best_log_beta = log_lo + h * best_idx;
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - inv_phi * (hi - lo);
  double x2 = lo + inv_phi * (hi - lo);
  Candidate c1 = solve_for_beta(std::exp(x1));
  Candidate c2 = solve_for_beta(std::exp(x2));
  evaluations += c1.evaluations + c2.evaluations;
  for (int it = 0; it < 40 && hi - lo > 1e-6; ++it) {
    if (c1.objective < c2.objective) {
      lo = x1;
      x1 = x2;
      c1 = c2;
      x2 = lo + inv_phi * (hi - lo);
      c2 = solve_for_beta(std::exp(x2));
      evaluations += c2.evaluations;
    } else {
      hi = x2;
      x2 = x1;
      c2 = c1;
      x1 = hi - inv_phi * (hi - lo);
      c1 = solve_for_beta(std::exp(x1));
      evaluations += c1.evaluations;
    }
    for (const auto* c : {&c1, &c2}) {
      if (c->feasible && c->objective > best.objective) {
        best = *c;
        best_log_beta = (c == &c1) ? x1 : x2;
      }
    }
  }

  const double beta = std::exp(best_log_beta);
  RobustDesign out =
      verify_robust(from_axis_blocks(best.blocks[0], best.blocks[1], best.blocks[2]), beta, box, e_matrix);
  out.iterations = evaluations;
  if (out.lmi_max_eig > opts.feasibility_tol || out.row_margins.minCoeff() < -opts.feasibility_tol) {
    std::ostringstream msg;
    msg << "robust certificate check failed: LMI max eigenvalue " << out.lmi_max_eig << ", min row margin "
        << out.row_margins.minCoeff();
    throw Error(ErrorKind::Infeasible, msg.str());
  }
  return out;
}

/// Upper bounds on the time for V to reach v_inf and on the final gain.
inline AdaptiveBounds adaptive_bounds(double gamma0, double mu, double v0, double v_inf, double alpha) {
  if (!(v_inf > 0.0) || !(alpha > 0.0)) throw Error(ErrorKind::InvalidArgument, "v_inf and alpha must be positive");
  if (v0 < v_inf) throw Error(ErrorKind::ThresholdAboveInitial, "initial Lyapunov value is below the threshold");
  AdaptiveBounds out;
  out.t_inf_bound = std::log(v0 / v_inf) / alpha;
  out.gamma_inf_bound =
      gamma0 + mu * (v_inf * out.t_inf_bound + v0 * (1.0 - std::exp(-alpha * out.t_inf_bound)) / alpha);
  return out;
}

}  // namespace flatsat
