#pragma once

// Fixed-step RK4 closed-loop simulation of the nonlinear translational model
// with zero-order-hold control, reference generation for tracking, trace
// metrics and CSV export.

#include "flatsat/adaptive.hpp"
#include "flatsat/flat_model.hpp"
#include "flatsat/geometry.hpp"
#include "flatsat/lmi.hpp"
#include "flatsat/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <variant>
#include <utility>
#include <vector>

namespace flatsat {

/// w_i(t) = amplitude * sin(frequency * t + phase).
struct SineSignal {
  double amplitude = 0.0;
  double frequency = 0.0;
  double phase = 0.0;

  double operator()(double t) const { return amplitude * std::sin(frequency * t + phase); }

  static SineSignal constant(double value) { return SineSignal{value, 0.0, std::numbers::pi / 2.0}; }
};

struct DisturbanceSpec {
  Eigen::MatrixXd e_matrix;  // 6 x k
  std::vector<SineSignal> channels;

  /// w(t), rescaled onto the unit ball when its norm exceeds 1.
  Eigen::VectorXd sample(double t, bool* clipped = nullptr) const {
    Eigen::VectorXd w(static_cast<Eigen::Index>(channels.size()));
    for (size_t i = 0; i < channels.size(); ++i) w(static_cast<Eigen::Index>(i)) = channels[i](t);
    const double n = w.norm();
    if (clipped != nullptr) *clipped = n > 1.0;
    if (n > 1.0) w /= n;
    return w;
  }

  DisturbanceChannel channel() const {
    if (e_matrix.rows() != 6 || e_matrix.cols() != static_cast<Eigen::Index>(channels.size())) {
      throw Error(ErrorKind::InvalidArgument, "disturbance E must be 6 x (number of channels)");
    }
    return DisturbanceChannel{e_matrix, [spec = *this](double t) { return spec.sample(t); }};
  }
};

/// 6 x 2 matrix injecting (w1, w2) on the x and y position rows.
inline Eigen::MatrixXd wind_e_matrix() {
  Eigen::MatrixXd e = Eigen::MatrixXd::Zero(6, 2);
  e(0, 0) = 1.0;
  e(1, 1) = 1.0;
  return e;
}

inline State rk4_step(const State& xi, const RealInput& u, double psi, const PhysicalParams& params,
                      const DisturbanceChannel* dist, double t, double dt) {
  if (!(dt > 0.0)) throw Error(ErrorKind::NonPositiveSampling, "integration step must be positive");
  const Vec6 k1 = dynamics_rhs(xi, u, psi, params, dist, t);
  const Vec6 k2 = dynamics_rhs(xi + 0.5 * dt * k1, u, psi, params, dist, t + 0.5 * dt);
  const Vec6 k3 = dynamics_rhs(xi + 0.5 * dt * k2, u, psi, params, dist, t + 0.5 * dt);
  const Vec6 k4 = dynamics_rhs(xi + dt * k3, u, psi, params, dist, t + dt);
  return xi + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

struct ReferencePlan {
  std::vector<Vec3> waypoints;
  std::vector<double> segment_durations;
  double vref_margin = 0.2;
};

struct ReferencePoint {
  State xi_ref = State::Zero();
  VirtualInput v_ref = VirtualInput::Zero();
};

/// Rest-to-rest quintic segments through the waypoints, held at the last
/// waypoint afterwards.
class Reference {
 public:
  Reference(ReferencePlan plan, VPolytope v_ref_set, HPolytope v_tilde)
      : plan_(std::move(plan)), v_ref_set_(std::move(v_ref_set)), v_tilde_(std::move(v_tilde)) {}

  ReferencePoint at(double t) const {
    double t0 = 0.0;
    const auto& wp = plan_.waypoints;
    for (size_t i = 0; i + 1 < wp.size(); ++i) {
      const double dur = plan_.segment_durations[i];
      if (t < t0 + dur) return segment(wp[i], wp[i + 1], dur, std::max(0.0, t - t0));
      t0 += dur;
    }
    ReferencePoint rest;
    rest.xi_ref.head<3>() = wp.back();
    return rest;
  }

  double duration() const {
    double sum = 0.0;
    for (double d : plan_.segment_durations) sum += d;
    return sum;
  }

  const ReferencePlan& plan() const { return plan_; }
  const VPolytope& v_ref_set() const { return v_ref_set_; }
  const HPolytope& v_tilde() const { return v_tilde_; }

  static ReferencePoint segment(const Vec3& from, const Vec3& to, double dur, double tau) {
    const Vec3 d = to - from;
    const double s = std::clamp(tau / dur, 0.0, 1.0);
    const double s2 = s * s;
    const double s3 = s2 * s;
    ReferencePoint out;
    out.xi_ref.head<3>() = from + d * (10.0 * s3 - 15.0 * s3 * s + 6.0 * s3 * s2);
    out.xi_ref.tail<3>() = d * (30.0 * s2 - 60.0 * s3 + 30.0 * s2 * s2) / dur;
    out.v_ref = d * (60.0 * s - 180.0 * s2 + 120.0 * s3) / (dur * dur);
    return out;
  }

 private:
  ReferencePlan plan_;
  VPolytope v_ref_set_;
  HPolytope v_tilde_;
};

/// Builds the reference and its tightened error-input set
/// v_tilde = vc_polytope (-) Vref, with Vref the bounding box of v_ref
/// inflated by the plan margin.
inline Reference make_reference(const ReferencePlan& plan, const HPolytope& vc_polytope) {
  if (plan.waypoints.size() < 2) throw Error(ErrorKind::InvalidArgument, "reference needs at least 2 waypoints");
  if (plan.segment_durations.size() != plan.waypoints.size() - 1) {
    throw Error(ErrorKind::InvalidArgument, "reference needs one duration per segment");
  }
  for (double d : plan.segment_durations) {
    if (!(d > 0.0)) throw Error(ErrorKind::InvalidArgument, "segment durations must be positive");
  }
  if (!(plan.vref_margin >= 0.0)) throw Error(ErrorKind::InvalidArgument, "vref margin must be non-negative");

  // |acc| peaks at s = 1/2 -+ sqrt(3)/6 with value (10/sqrt(3)) |d| / T^2 per axis.
  Vec3 peak = Vec3::Zero();
  for (size_t i = 0; i + 1 < plan.waypoints.size(); ++i) {
    const double dur = plan.segment_durations[i];
    peak = peak.cwiseMax((plan.waypoints[i + 1] - plan.waypoints[i]).cwiseAbs() * (10.0 / std::sqrt(3.0)) /
                         (dur * dur));
  }
  const VPolytope vref = VPolytope::box(Vec3::Zero(), peak + Vec3::Constant(plan.vref_margin));
  for (const auto& vertex : vref.vertices) {
    if (!vc_polytope.contains(vertex)) {
      throw Error(ErrorKind::ReferenceTooAggressive,
                  "reference input box leaves the input polytope; use longer segment durations");
    }
  }
  HPolytope v_tilde;
  try {
    v_tilde = pontryagin_diff(vc_polytope, vref);
  } catch (const Error& e) {
    throw Error(ErrorKind::ReferenceTooAggressive, std::string("no input budget left for error feedback: ") + e.what());
  }
  if (!v_tilde.origin_interior()) {
    throw Error(ErrorKind::ReferenceTooAggressive, "tightened input set does not contain the origin strictly");
  }
  return Reference(plan, vref, v_tilde);
}

enum class Mode { Stabilize, StabilizeAdaptive, Robust, Track };

inline std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::Stabilize: return "stabilize";
    case Mode::StabilizeAdaptive: return "stabilize-adaptive";
    case Mode::Robust: return "robust";
    case Mode::Track: return "track";
  }
  return "unknown";
}

inline Mode parse_mode(std::string_view s) {
  if (s == "stabilize") return Mode::Stabilize;
  if (s == "stabilize-adaptive") return Mode::StabilizeAdaptive;
  if (s == "robust") return Mode::Robust;
  if (s == "track") return Mode::Track;
  throw Error(ErrorKind::InvalidArgument, "unknown scenario mode '" + std::string(s) + "'");
}

struct Scenario {
  std::string name = "scenario";
  Mode mode = Mode::Stabilize;
  State initial_state = State::Zero();
  double duration = 5.0;
  double plant_dt = 0.002;
  double control_dt = 0.1;
  double psi = 0.0;
  PhysicalParams params;
  std::variant<NominalDesign, RobustDesign> design;
  /// Fixed gain, used when no adaptation is configured.
  double gamma = 1.0;
  std::optional<AdaptiveState> adaptive;
  std::optional<DisturbanceSpec> disturbance;
  std::optional<ReferencePlan> reference;
  int polytope_n_az = 16;
  int polytope_n_el = 4;
  std::uint64_t seed = 0;
};

inline const Mat6& design_p(const Scenario& s) {
  if (const auto* n = std::get_if<NominalDesign>(&s.design)) return n->p_matrix;
  return std::get<RobustDesign>(s.design).pw_matrix;
}

/// Level of the certified invariant set: eps for nominal designs, 1 for robust ones.
inline double design_level(const Scenario& s) {
  if (const auto* n = std::get_if<NominalDesign>(&s.design)) return n->eps;
  return 1.0;
}

struct TraceRecord {
  double t = 0.0;
  State xi = State::Zero();
  VirtualInput v = VirtualInput::Zero();
  RealInput u;
  double lyapunov = 0.0;
  double gamma = 1.0;
  double lambda_star = 1.0;
  std::optional<Eigen::VectorXd> w;
  std::optional<State> xi_ref;
  bool saturated = false;
};

struct Trace {
  std::vector<TraceRecord> records;
  /// Lyapunov value at every plant step, starting at t = 0.
  std::vector<double> fine_t;
  std::vector<double> fine_v;
  double level = 0.0;
  std::size_t clipped_disturbance_samples = 0;
};

namespace detail {

inline void validate_scenario(const Scenario& s) {
  s.params.validate();
  if (!(s.plant_dt > 0.0) || !(s.control_dt > 0.0)) {
    throw Error(ErrorKind::NonPositiveSampling, "plant_dt and control_dt must be positive");
  }
  if (s.plant_dt > s.control_dt) throw Error(ErrorKind::InvalidArgument, "plant_dt must not exceed control_dt");
  const double ratio = s.control_dt / s.plant_dt;
  if (std::abs(ratio - std::round(ratio)) > 1e-9 * ratio) {
    throw Error(ErrorKind::InvalidArgument, "control_dt must be an integer multiple of plant_dt");
  }
  if (!(s.duration >= 0.0)) throw Error(ErrorKind::InvalidArgument, "duration must be non-negative");
  if (!s.initial_state.allFinite()) throw Error(ErrorKind::InvalidArgument, "initial state must be finite");
  if (s.mode == Mode::Track && !s.reference) throw Error(ErrorKind::InvalidArgument, "track mode needs a reference");
  if (s.mode == Mode::StabilizeAdaptive && !s.adaptive) {
    throw Error(ErrorKind::InvalidArgument, "stabilize-adaptive mode needs an adaptive section");
  }
  if (s.mode == Mode::Robust && !std::holds_alternative<RobustDesign>(s.design)) {
    throw Error(ErrorKind::InvalidArgument, "robust mode needs a robust design");
  }
  if (s.adaptive) s.adaptive->validate();
  if (!(s.gamma >= 1.0)) throw Error(ErrorKind::InvalidArgument, "gamma must be at least 1");
}

}  // namespace detail

/// Runs the closed loop. Control and gain update are held over each
/// control period; the plant is integrated with RK4 at plant_dt. Gain
/// adaptation is disabled whenever a disturbance is configured.
inline Trace simulate(const Scenario& s) {
  detail::validate_scenario(s);
  const Mat6& p = design_p(s);
  const auto steps = static_cast<long>(std::llround(s.duration / s.control_dt));
  const auto substeps = static_cast<long>(std::llround(s.control_dt / s.plant_dt));

  std::optional<DisturbanceChannel> dist;
  if (s.disturbance) dist = s.disturbance->channel();
  std::optional<Reference> ref;
  if (s.mode == Mode::Track) {
    ref = make_reference(*s.reference, polytope_approx_vc(s.params, s.polytope_n_az, s.polytope_n_el));
  }
  const bool adapt = s.adaptive.has_value() && !s.disturbance.has_value();
  AdaptiveState gain = s.adaptive.value_or(AdaptiveState{s.gamma, s.gamma, 0.0, 1.0});
  if (!adapt) gain.mu = 0.0;

  auto error_of = [&](const State& xi, double t) -> State { return ref ? State(xi - ref->at(t).xi_ref) : xi; };

  Trace trace;
  trace.level = design_level(s);
  trace.records.reserve(static_cast<size_t>(steps + 1));
  State xi = s.initial_state;
  trace.fine_t.push_back(0.0);
  trace.fine_v.push_back(lyapunov_value(error_of(xi, 0.0), p));

  for (long k = 0;; ++k) {
    const double t = static_cast<double>(k) * s.control_dt;
    TraceRecord rec;
    rec.t = t;
    rec.xi = xi;
    rec.gamma = gain.gamma;
    ControlOutput ctl;
    if (ref) {
      const ReferencePoint rp = ref->at(t);
      ctl = tracking_control(xi, rp.xi_ref, rp.v_ref, p, gain.gamma, ref->v_tilde(), s.psi, s.params);
      rec.xi_ref = rp.xi_ref;
    } else {
      ctl = control(xi, p, gain.gamma, s.psi, s.params);
    }
    rec.v = ctl.v;
    rec.u = ctl.u;
    rec.lambda_star = ctl.lambda_star;
    rec.saturated = ctl.saturated;
    rec.lyapunov = lyapunov_value(error_of(xi, t), p);
    if (s.disturbance) {
      bool clipped = false;
      rec.w = s.disturbance->sample(t, &clipped);
      if (clipped) ++trace.clipped_disturbance_samples;
    }
    trace.records.push_back(rec);
    if (k == steps) break;

    for (long j = 0; j < substeps; ++j) {
      const double ts = t + static_cast<double>(j) * s.plant_dt;
      xi = rk4_step(xi, ctl.u, s.psi, s.params, dist ? &*dist : nullptr, ts, s.plant_dt);
      if (!xi.allFinite()) throw Error(ErrorKind::InvalidArgument, "state diverged to a non-finite value");
      const double tn = t + static_cast<double>(j + 1) * s.plant_dt;
      trace.fine_t.push_back(tn);
      trace.fine_v.push_back(lyapunov_value(error_of(xi, tn), p));
    }
    if (adapt) gain = gamma_step(gain, rec.lyapunov, s.control_dt);
  }
  return trace;
}

struct Metrics {
  double rms_error = 0.0;
  double max_v = 0.0;
  double final_gamma = 1.0;
  std::size_t invariance_violations = 0;
  double saturation_duty = 0.0;
  std::size_t input_violations = 0;
  bool has_reference = false;
};

/// Summary of a trace. Invariance violations count plant steps with
/// V > level (1 + tol); RMS is over the position error at control steps.
inline Metrics metrics(const Trace& trace, const PhysicalParams& params, double tol = 1e-6) {
  if (trace.records.empty()) throw Error(ErrorKind::InvalidArgument, "trace is empty");
  Metrics m;
  double sq = 0.0;
  std::size_t sat = 0;
  for (const auto& r : trace.records) {
    if (r.xi_ref) {
      m.has_reference = true;
      sq += (r.xi.head<3>() - r.xi_ref->head<3>()).squaredNorm();
    }
    if (r.saturated) ++sat;
    if (!in_input_set(r.u, params)) ++m.input_violations;
  }
  const auto n = static_cast<double>(trace.records.size());
  m.rms_error = m.has_reference ? std::sqrt(sq / n) : 0.0;
  m.saturation_duty = static_cast<double>(sat) / n;
  m.final_gamma = trace.records.back().gamma;
  const auto& values = trace.fine_v.empty() ? std::vector<double>{trace.records.front().lyapunov} : trace.fine_v;
  for (double v : values) {
    m.max_v = std::max(m.max_v, v);
    if (trace.level > 0.0 && v > trace.level * (1.0 + tol)) ++m.invariance_violations;
  }
  return m;
}

inline constexpr std::string_view kTraceHeader =
    "t,x,y,z,vx,vy,vz,v1,v2,v3,T,phi,theta,V,gamma,lambda,w1,w2,xr,yr,zr,sat_active";

inline void write_trace_csv(std::ostream& os, const Trace& trace) {
  char buf[32];
  auto num = [&](double x) {
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    os << buf;
  };
  os << kTraceHeader << '\n';
  for (const auto& r : trace.records) {
    num(r.t);
    for (int i = 0; i < 6; ++i) os << ',', num(r.xi(i));
    for (int i = 0; i < 3; ++i) os << ',', num(r.v(i));
    os << ',', num(r.u.thrust);
    os << ',', num(r.u.roll);
    os << ',', num(r.u.pitch);
    os << ',', num(r.lyapunov);
    os << ',', num(r.gamma);
    os << ',', num(r.lambda_star);
    for (Eigen::Index i = 0; i < 2; ++i) {
      os << ',';
      if (r.w && i < r.w->size()) num((*r.w)(i));
    }
    for (int i = 0; i < 3; ++i) {
      os << ',';
      if (r.xi_ref) num((*r.xi_ref)(i));
    }
    os << ',' << (r.saturated ? 1 : 0) << '\n';
  }
}

}  // namespace flatsat
