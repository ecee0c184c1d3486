#pragma once

// Terminal ingredients of the discrete-time LMPC: local gain, terminal cost
// from the discrete Lyapunov equation, terminal level, and sampled checks of
// the invariance and cost-decrease conditions.

#include "flatsat/flat_model.hpp"
#include "flatsat/geometry.hpp"
#include "flatsat/linalg.hpp"
#include "flatsat/parallel.hpp"
#include "flatsat/types.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace flatsat {

struct StageWeights {
  Mat6 q_weight = Mat6::Identity();
  Mat3 r_weight = Mat3::Identity();
  State x_e = State::Zero();
  VirtualInput v_e = VirtualInput::Zero();

  void validate() const {
    if (!linalg::is_spd(q_weight)) throw Error(ErrorKind::InvalidArgument, "stage weight Q must be SPD");
    if (!linalg::is_symmetric(r_weight) || linalg::min_eigenvalue(r_weight) < 0.0) {
      throw Error(ErrorKind::InvalidArgument, "stage weight R must be symmetric PSD");
    }
  }
};

struct TerminalIngredients {
  double ts = 0.1;
  Vec3 k1 = Vec3::Zero();
  Vec3 k2 = Vec3::Zero();
  Mat36 gains = Mat36::Zero();
  Mat6 a_cl = Mat6::Identity();
  Mat6 m_matrix = Mat6::Identity();
  Mat6 p_terminal = Mat6::Identity();
  double alpha_t = 0.0;
};

struct TerminalReport {
  std::size_t samples = 0;
  double max_invariance_violation = -std::numeric_limits<double>::infinity();  // (i)
  double max_decrease_violation = -std::numeric_limits<double>::infinity();    // (ii)
  double max_input_violation = -std::numeric_limits<double>::infinity();       // (iii)
  double lyapunov_residual = 0.0;  // ||A' P A - P + M||_F / ||M||_F

  bool passes(double tol) const {
    return max_invariance_violation <= tol && max_decrease_violation <= tol && max_input_violation <= tol &&
           lyapunov_residual <= tol;
  }
};

/// Per-axis closed loop of the discretized double integrator under v = k1 p + k2 p_dot.
inline Mat2 axis_closed_loop(double k1, double k2, double ts) {
  Mat2 a;
  a << 1.0 + k1 * ts * ts / 2.0, ts + k2 * ts * ts / 2.0, k1 * ts, 1.0 + k2 * ts;
  return a;
}

/// The chain -2/ts < k2 < (ts/2) k1 < 0, confirmed by the spectral radius
/// of the per-axis closed loop.
inline bool check_gain_stability(double k1, double k2, double ts) {
  if (!(ts > 0.0)) throw Error(ErrorKind::NonPositiveSampling, "sampling time must be positive");
  const bool chain = -2.0 / ts < k2 && k2 < 0.5 * ts * k1 && 0.5 * ts * k1 < 0.0;
  return chain && linalg::spectral_radius(axis_closed_loop(k1, k2, ts)) < 1.0;
}

inline Mat36 gain_matrix(const Vec3& k1, const Vec3& k2) {
  Mat36 k = Mat36::Zero();
  k.leftCols<3>() = k1.asDiagonal();
  k.rightCols<3>() = k2.asDiagonal();
  return k;
}

/// Q* = Q + lambda_max(R) K' K.
inline Mat6 q_star(const StageWeights& weights, const Mat36& gains) {
  const double rmax = linalg::max_eigenvalue(weights.r_weight);
  Mat6 out = weights.q_weight + rmax * gains.transpose() * gains;
  return 0.5 * (out + out.transpose());
}

/// Solves A' P A - P + M = 0 through the 36-unknown Kronecker system.
inline Mat6 solve_discrete_lyapunov(const Mat6& a_cl, const Mat6& m) {
  if (!(linalg::spectral_radius(a_cl) < 1.0)) {
    throw Error(ErrorKind::UnstableAcl, "closed-loop matrix is not Schur stable");
  }
  constexpr int n = 6;
  const Mat6 at = a_cl.transpose();
  Eigen::Matrix<double, n * n, n * n> lhs = Eigen::Matrix<double, n * n, n * n>::Identity();
  // column-major vec: vec(A' P A) = (A' (x) A') vec(P)
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) lhs.block<n, n>(i * n, j * n) -= at(i, j) * at;
  }
  const Eigen::Matrix<double, n * n, 1> rhs = Eigen::Map<const Eigen::Matrix<double, n * n, 1>>(m.data());
  const Eigen::Matrix<double, n * n, 1> sol = lhs.partialPivLu().solve(rhs);
  Mat6 p = Eigen::Map<const Mat6>(sol.data());
  return 0.5 * (p + p.transpose());
}

/// Largest alpha with K x in vset for all x' P x <= alpha^2:
/// min_i b_i / ||P^{-1/2} (a_i K)'||.
inline double terminal_alpha(const Mat6& p, const Mat36& gains, const HPolytope& vset) {
  if (!vset.origin_interior()) throw Error(ErrorKind::OriginNotInterior, "terminal input set must contain the origin");
  const Mat6 e = linalg::inverse_sqrt(p);
  const Eigen::MatrixXd ak = vset.a_rows * gains;
  double alpha = std::numeric_limits<double>::infinity();
  for (int i = 0; i < vset.rows(); ++i) {
    const double norm = (e * ak.row(i).transpose()).norm();
    if (norm == 0.0) continue;
    alpha = std::min(alpha, vset.b(i) / norm);
  }
  if (!std::isfinite(alpha)) {
    throw Error(ErrorKind::DegenerateConstraint, "no input constraint binds on the terminal ellipsoid");
  }
  return alpha;
}

/// Builds the ingredients for gains K = [diag(k1), diag(k2)]; M defaults to Q*.
inline TerminalIngredients design_terminal(const StageWeights& weights, const Vec3& k1, const Vec3& k2, double ts,
                                           const HPolytope& vset, const std::optional<Mat6>& m_override = {}) {
  weights.validate();
  for (int i = 0; i < 3; ++i) {
    if (!check_gain_stability(k1(i), k2(i), ts)) {
      throw Error(ErrorKind::UnstableAcl, "gain pair of axis " + std::to_string(i) + " violates the stability chain");
    }
  }
  TerminalIngredients out;
  out.ts = ts;
  out.k1 = k1;
  out.k2 = k2;
  out.gains = gain_matrix(k1, k2);
  const DiscreteModel model = discretize(ts);
  out.a_cl = model.a_d + model.b_d * out.gains;
  out.m_matrix = m_override.value_or(q_star(weights, out.gains));
  if (!linalg::is_spd(out.m_matrix)) throw Error(ErrorKind::InvalidArgument, "M must be SPD");
  out.p_terminal = solve_discrete_lyapunov(out.a_cl, out.m_matrix);
  out.alpha_t = terminal_alpha(out.p_terminal, out.gains, vset);
  return out;
}

inline double lyapunov_residual(const TerminalIngredients& ing) {
  const Mat6 r = ing.a_cl.transpose() * ing.p_terminal * ing.a_cl - ing.p_terminal + ing.m_matrix;
  return r.norm() / ing.m_matrix.norm();
}

/// Uniform point in {x' P x <= alpha^2}: Gaussian direction, radius U^(1/6).
template <typename Rng>
State sample_in_ellipsoid(const Mat6& p_inv_sqrt, double alpha, Rng& rng) {
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif;
  Vec6 r;
  for (int i = 0; i < 6; ++i) r(i) = normal(rng);
  r *= std::pow(unif(rng), 1.0 / 6.0) / r.norm();
  return alpha * (p_inv_sqrt * r);
}

/// Violations of the terminal conditions at a single state, in the
/// coordinates shifted by the equilibrium.
inline std::array<double, 3> terminal_violations(const TerminalIngredients& ing, const StageWeights& weights,
                                                 const HPolytope& vset, const State& x) {
  const State dx = x - weights.x_e;
  const State next = ing.a_cl * dx;
  const VirtualInput v = ing.gains * dx;
  const double vf_next = next.dot(ing.p_terminal * next);
  const double vf_now = dx.dot(ing.p_terminal * dx);
  const double stage = v.dot(weights.r_weight * v) + dx.dot(weights.q_weight * dx);
  return {vf_next - ing.alpha_t * ing.alpha_t, vf_next + stage - vf_now, vset.max_violation(v)};
}

inline TerminalReport verify_terminal_conditions(const TerminalIngredients& ing, const StageWeights& weights,
                                                 const HPolytope& vset, std::size_t n_samples,
                                                 std::uint64_t seed = 1) {
  constexpr std::size_t kShards = 16;
  const Mat6 e = linalg::inverse_sqrt(ing.p_terminal);
  std::vector<std::array<double, 3>> worst(kShards, {-std::numeric_limits<double>::infinity(),
                                                     -std::numeric_limits<double>::infinity(),
                                                     -std::numeric_limits<double>::infinity()});
  parallel_shards(n_samples, kShards, [&](std::size_t shard, std::size_t begin, std::size_t end) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(shard)};
    std::mt19937_64 rng(seq);
    for (std::size_t i = begin; i < end; ++i) {
      const State x = weights.x_e + sample_in_ellipsoid(e, ing.alpha_t, rng);
      const auto v = terminal_violations(ing, weights, vset, x);
      for (int c = 0; c < 3; ++c) worst[shard][c] = std::max(worst[shard][c], v[c]);
    }
  });
  TerminalReport report;
  report.samples = n_samples;
  for (const auto& w : worst) {
    report.max_invariance_violation = std::max(report.max_invariance_violation, w[0]);
    report.max_decrease_violation = std::max(report.max_decrease_violation, w[1]);
    report.max_input_violation = std::max(report.max_input_violation, w[2]);
  }
  report.lyapunov_residual = lyapunov_residual(ing);
  return report;
}

}  // namespace flatsat
