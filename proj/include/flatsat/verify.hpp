#pragma once

// Property suites run against a design: saturation fuzzing, LMI margins,
// closed-loop invariance Monte-Carlo and terminal conditions. Each suite
// returns named checks with their measured value and limit.

#include "flatsat/adaptive.hpp"
#include "flatsat/geometry.hpp"
#include "flatsat/lmi.hpp"
#include "flatsat/parallel.hpp"
#include "flatsat/saturation.hpp"
#include "flatsat/simulator.hpp"
#include "flatsat/terminal.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace flatsat {

struct Check {
  std::string name;
  double value = 0.0;
  double limit = 0.0;
  bool passed = false;
};

struct SuiteReport {
  std::string suite;
  std::vector<Check> checks;

  bool passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
  }

  /// Records value <= limit.
  void at_most(std::string name, double value, double limit) {
    checks.push_back(Check{std::move(name), value, limit, value <= limit});
  }
  void at_least(std::string name, double value, double limit) {
    checks.push_back(Check{std::move(name), value, limit, value >= limit});
  }
};

/// Largest t in [0, 1] with t v in Vc, by bisection on exact membership.
inline double bisection_exit_factor(const VirtualInput& v, const PhysicalParams& params, int iterations = 100) {
  if (vc_membership(v, params)) return 1.0;
  double lo = 0.0;
  double hi = 1.0;
  for (int i = 0; i < iterations; ++i) {
    const double mid = 0.5 * (lo + hi);
    (vc_membership(mid * v, params) ? lo : hi) = mid;
  }
  return lo;
}

inline SuiteReport saturation_fuzz(const PhysicalParams& params, std::size_t n, std::uint64_t seed) {
  constexpr std::size_t kShards = 16;
  struct Tally {
    std::size_t membership = 0;
    std::size_t maximality = 0;
    std::size_t input_set = 0;
    double colinearity = 0.0;
    double idempotence = 0.0;
    double oracle = 0.0;
  };
  std::vector<Tally> tallies(kShards);
  const double span = 3.0 * params.t_max;
  parallel_shards(n, kShards, [&](std::size_t shard, std::size_t begin, std::size_t end) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(shard)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> coord(-span, span);
    std::uniform_real_distribution<double> yaw(-std::numbers::pi, std::numbers::pi);
    Tally& t = tallies[shard];
    for (std::size_t i = begin; i < end; ++i) {
      const VirtualInput v(coord(rng), coord(rng), coord(rng));
      const SaturationResult r = sat_vc(v, params);
      if (!vc_membership(r.v_sat, params)) ++t.membership;
      t.colinearity = std::max(t.colinearity, r.v_sat.cross(v).norm() / std::max(1.0, v.squaredNorm()));
      t.idempotence = std::max(t.idempotence, (sat_vc(r.v_sat, params).v_sat - r.v_sat).norm());
      if (r.active && vc_membership((1.0 + 1e-6) * r.v_sat, params)) ++t.maximality;
      t.oracle = std::max(t.oracle, std::abs(r.lambda_star - bisection_exit_factor(v, params)));
      if (r.v_sat.z() > -params.g) {
        if (!in_input_set(linearizing_input(r.v_sat, yaw(rng), params), params)) ++t.input_set;
      }
    }
  });
  Tally total;
  for (const auto& t : tallies) {
    total.membership += t.membership;
    total.maximality += t.maximality;
    total.input_set += t.input_set;
    total.colinearity = std::max(total.colinearity, t.colinearity);
    total.idempotence = std::max(total.idempotence, t.idempotence);
    total.oracle = std::max(total.oracle, t.oracle);
  }
  SuiteReport rep{"saturation-fuzz", {}};
  rep.at_most("membership failures", static_cast<double>(total.membership), 0.0);
  rep.at_most("colinearity |v_sat x v| / max(1, |v|^2)", total.colinearity, 1e-9);
  rep.at_most("idempotence |sat(sat(v)) - sat(v)|", total.idempotence, 1e-9);
  rep.at_most("maximality failures", static_cast<double>(total.maximality), 0.0);
  rep.at_most("bisection oracle |lambda - lambda_oracle|", total.oracle, 1e-9);
  rep.at_most("Phi(sat(v)) outside U", static_cast<double>(total.input_set), 0.0);
  return rep;
}

struct LmiTolerances {
  double nominal_eig = 1e-9;
  double robust_eig = 1e-9;
  double row_margin = -1e-9;
};

/// Tolerances for 3-digit rounded certificates.
inline LmiTolerances rounded_certificate_tolerances() { return LmiTolerances{1e-3, 0.15, -0.05}; }

inline SuiteReport lmi_margins(const NominalDesign& d, const LmiTolerances& tol = {}) {
  SuiteReport rep{"lmi-margins", {}};
  rep.at_most("decay LMI max eigenvalue", linalg::max_eigenvalue(nominal_lmi_residual(d.q_matrix, d.alpha)),
              tol.nominal_eig);
  rep.at_least("Q min eigenvalue", linalg::min_eigenvalue(d.q_matrix), std::numeric_limits<double>::min());
  rep.at_most("P asymmetry", (d.p_matrix - d.p_matrix.transpose()).cwiseAbs().maxCoeff(), 1e-10);
  rep.at_most("|Q P - I|", (d.q_matrix * d.p_matrix - Mat6::Identity()).cwiseAbs().maxCoeff(), 1e-8);
  const double ball = d.eps * linalg::max_eigenvalue(Mat3(input_matrix().transpose() * d.p_matrix * input_matrix()));
  rep.at_most("eps lambda_max(B'PB) / rho", ball / d.rho, 1.0 + 1e-8);
  return rep;
}

inline SuiteReport lmi_margins(const RobustDesign& d, const LmiTolerances& tol = {}) {
  SuiteReport rep{"lmi-margins", {}};
  rep.at_most("disturbance LMI max eigenvalue",
              linalg::max_eigenvalue(robust_lmi_residual(d.qw_matrix, d.beta, d.e_matrix)), tol.robust_eig);
  rep.at_least("Q_w min eigenvalue", linalg::min_eigenvalue(d.qw_matrix), std::numeric_limits<double>::min());
  rep.at_most("|Q_w P_w - I|", (d.qw_matrix * d.pw_matrix - Mat6::Identity()).cwiseAbs().maxCoeff(), 1e-8);
  const Vec3 margins = check_box_rows(d.qw_matrix, d.box);
  for (int i = 0; i < 3; ++i) rep.at_least("box row " + std::to_string(i + 1) + " margin", margins(i), tol.row_margin);
  return rep;
}

/// Uniform direction in R^6 mapped onto {x' P x = level}.
template <typename Rng>
State sample_on_ellipsoid(const Mat6& p, double level, Rng& rng) {
  std::normal_distribution<double> normal;
  State x;
  for (int i = 0; i < 6; ++i) x(i) = normal(rng);
  return x * std::sqrt(level / x.dot(p * x));
}

struct InvarianceOptions {
  std::size_t starts = 20;
  std::uint64_t seed = 7;
  double plant_dt = 0.002;
  double nominal_control_dt = 0.1;
  double robust_control_dt = 0.01;
  double robust_duration = 10.0;
  double v_inf = 0.05;
  std::vector<double> robust_gammas{1.0, 10.0};
};

/// Closed-loop runs from boundary points of the certified ellipsoid.
inline SuiteReport invariance_mc(const NominalDesign& d, const PhysicalParams& params,
                                 const InvarianceOptions& opt = {}) {
  SuiteReport rep{"invariance-mc", {}};
  std::mt19937_64 rng(opt.seed);
  std::vector<State> starts;
  for (std::size_t i = 0; i < opt.starts; ++i) starts.push_back(sample_on_ellipsoid(d.p_matrix, d.eps, rng));

  const double t_bound = adaptive_bounds(1.0, 0.0, d.eps, opt.v_inf, d.alpha).t_inf_bound;
  std::vector<double> max_rise(starts.size(), 0.0), max_ratio(starts.size(), 0.0), v_at_bound(starts.size(), 0.0),
      max_slope(starts.size(), -std::numeric_limits<double>::infinity());
  std::vector<std::size_t> u_viol(starts.size(), 0);
  parallel_shards(starts.size(), starts.size(), [&](std::size_t i, std::size_t, std::size_t) {
    Scenario s;
    s.mode = Mode::Stabilize;
    s.params = params;
    s.design = d;
    s.initial_state = starts[i];
    s.plant_dt = opt.plant_dt;
    s.control_dt = opt.nominal_control_dt;
    s.duration = std::ceil(t_bound / s.control_dt) * s.control_dt;
    const Trace tr = simulate(s);
    for (size_t k = 1; k < tr.fine_v.size(); ++k) {
      max_rise[i] = std::max(max_rise[i], tr.fine_v[k] - tr.fine_v[k - 1]);
    }
    for (double v : tr.fine_v) max_ratio[i] = std::max(max_ratio[i], v / d.eps);
    for (size_t k = 0; k < tr.fine_t.size(); ++k) {
      if (tr.fine_t[k] <= t_bound + 1e-12) v_at_bound[i] = tr.fine_v[k];
    }
    for (size_t k = 1; k < tr.records.size(); ++k) {
      const double v0 = tr.records[k - 1].lyapunov;
      const double v1 = tr.records[k].lyapunov;
      if (v1 > opt.v_inf) {
        max_slope[i] = std::max(max_slope[i], (std::log(v1) - std::log(v0)) / (tr.records[k].t - tr.records[k - 1].t));
      }
    }
    u_viol[i] = metrics(tr, params).input_violations;
  });
  rep.at_most("max V rise between plant steps", *std::max_element(max_rise.begin(), max_rise.end()), 1e-9);
  rep.at_most("max V / eps", *std::max_element(max_ratio.begin(), max_ratio.end()), 1.0 + 1e-9);
  rep.at_most("max V(t_inf bound) / V_inf", *std::max_element(v_at_bound.begin(), v_at_bound.end()) / opt.v_inf, 1.0);
  rep.at_most("max d log V / dt + alpha", *std::max_element(max_slope.begin(), max_slope.end()) + d.alpha, 0.05);
  rep.at_most("inputs outside U", static_cast<double>(std::accumulate(u_viol.begin(), u_viol.end(), std::size_t{0})),
              0.0);
  return rep;
}

inline SuiteReport invariance_mc(const RobustDesign& d, const PhysicalParams& params, const DisturbanceSpec& dist,
                                 const InvarianceOptions& opt = {}) {
  SuiteReport rep{"invariance-mc", {}};
  std::mt19937_64 rng(opt.seed);
  std::vector<State> starts;
  for (std::size_t i = 0; i < opt.starts; ++i) starts.push_back(sample_on_ellipsoid(d.pw_matrix, 1.0, rng));
  for (double gamma : opt.robust_gammas) {
    std::vector<double> peak(starts.size(), 0.0);
    std::vector<std::size_t> u_viol(starts.size(), 0);
    parallel_shards(starts.size(), starts.size(), [&](std::size_t i, std::size_t, std::size_t) {
      Scenario s;
      s.mode = Mode::Robust;
      s.params = params;
      s.design = d;
      s.gamma = gamma;
      s.disturbance = dist;
      s.initial_state = starts[i];
      s.plant_dt = opt.plant_dt;
      s.control_dt = opt.robust_control_dt;
      s.duration = opt.robust_duration;
      const Trace tr = simulate(s);
      peak[i] = *std::max_element(tr.fine_v.begin(), tr.fine_v.end());
      u_viol[i] = metrics(tr, params).input_violations;
    });
    char label[64];
    std::snprintf(label, sizeof(label), "gamma=%g max x' P_w x", gamma);
    rep.at_most(label, *std::max_element(peak.begin(), peak.end()), 1.0 + 1e-6);
    std::snprintf(label, sizeof(label), "gamma=%g inputs outside U", gamma);
    rep.at_most(label, static_cast<double>(std::accumulate(u_viol.begin(), u_viol.end(), std::size_t{0})), 0.0);
  }
  return rep;
}

inline SuiteReport terminal_conditions(const TerminalIngredients& ing, const StageWeights& weights,
                                       const HPolytope& vset, std::size_t samples, std::uint64_t seed) {
  SuiteReport rep{"terminal-conditions", {}};
  const TerminalReport r = verify_terminal_conditions(ing, weights, vset, samples, seed);
  rep.at_most("(i) x+ in X_f: max x+' P x+ - alpha_t^2", r.max_invariance_violation, 1e-8);
  rep.at_most("(ii) cost decrease: max V_f(x+) + V_s - V_f(x)", r.max_decrease_violation, 1e-8);
  rep.at_most("(iii) K x in V_c: max row violation", r.max_input_violation, 1e-8);
  rep.at_most("Lyapunov residual (relative Frobenius)", r.lyapunov_residual, 1e-8);
  rep.at_most("spectral radius of A_cl", linalg::spectral_radius(ing.a_cl), 1.0 - 1e-12);
  return rep;
}

}  // namespace flatsat
