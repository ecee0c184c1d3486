#pragma once

// JSON project configuration and design reports. Matrices are stored as
// {"rows", "cols", "data"} with row-major data at full double precision.

#include "flatsat/flat_model.hpp"
#include "flatsat/geometry.hpp"
#include "flatsat/lmi.hpp"
#include "flatsat/simulator.hpp"
#include "flatsat/terminal.hpp"
#include "flatsat/types.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace flatsat::io {

using nlohmann::json;

/// Malformed or schema-violating configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items()) {
    if (!ok.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

inline json matrix_to_json(const Eigen::MatrixXd& m) {
  std::vector<double> data;
  data.reserve(static_cast<size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

inline Eigen::MatrixXd matrix_from_json(const json& j, const std::string& where) {
  check_keys(j, {"rows", "cols", "data"}, where);
  try {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(data.size()) != rows * cols) {
      throw ConfigError(where + ": data length does not match rows x cols");
    }
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[static_cast<size_t>(r * cols + c)];
    }
    return m;
  } catch (const json::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

template <int R, int C>
Eigen::Matrix<double, R, C> fixed_matrix_from_json(const json& j, const std::string& where) {
  const Eigen::MatrixXd m = matrix_from_json(j, where);
  if (m.rows() != R || m.cols() != C) {
    throw ConfigError(where + ": expected a " + std::to_string(R) + "x" + std::to_string(C) + " matrix");
  }
  return m;
}

inline json vector_to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

template <int N>
Eigen::Matrix<double, N, 1> vector_from_json(const json& j, const std::string& where) {
  std::vector<double> v;
  try {
    v = j.get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
  if (static_cast<int>(v.size()) != N) throw ConfigError(where + ": expected " + std::to_string(N) + " entries");
  return Eigen::Map<const Eigen::Matrix<double, N, 1>>(v.data());
}

// ---------------------------------------------------------------- config

struct SynthesisSection {
  std::string mode = "nominal";  // nominal | robust | terminal
  double alpha = 1.2;
  std::optional<Mat6> q_matrix;
  std::optional<Mat6> qw_matrix;
  std::optional<double> beta;
  std::optional<Vec3> box;
};

struct TerminalSection {
  double ts = 0.1;
  Vec3 k1 = Vec3::Constant(-10.0);
  Vec3 k2 = Vec3::Constant(-4.0);
  StageWeights weights;
  double m_scale = 1.0;
  int n_az = 16;
  int n_el = 4;
  std::size_t samples = 10000;
};

struct ProjectConfig {
  PhysicalParams params;
  SynthesisSection synthesis;
  AdaptiveState adaptive = AdaptiveState{1.0, 1.0, 0.0, 0.05};
  std::optional<DisturbanceSpec> disturbance;
  TerminalSection terminal;
  std::vector<Scenario> scenarios;  // design filled in at simulation time
  std::string output_dir = "out";
  json source;
};

inline PhysicalParams params_from_json(const json& j, const std::string& where) {
  check_keys(j, {"g", "t_max", "eps_max"}, where);
  PhysicalParams p;
  p.g = get_or(j, "g", p.g, where);
  p.t_max = get_or(j, "t_max", p.t_max, where);
  p.eps_max = get_or(j, "eps_max", p.eps_max, where);
  try {
    p.validate();
  } catch (const Error& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return p;
}

inline json params_to_json(const PhysicalParams& p) {
  return json{{"g", p.g}, {"t_max", p.t_max}, {"eps_max", p.eps_max}};
}

inline DisturbanceSpec disturbance_from_json(const json& j, const std::string& where) {
  check_keys(j, {"e_matrix", "channels"}, where);
  DisturbanceSpec d;
  d.e_matrix = j.contains("e_matrix") ? matrix_from_json(j.at("e_matrix"), where + ".e_matrix") : wind_e_matrix();
  if (!j.contains("channels") || !j.at("channels").is_array()) throw ConfigError(where + ".channels: expected an array");
  for (size_t i = 0; i < j.at("channels").size(); ++i) {
    const json& c = j.at("channels")[i];
    const std::string w = where + ".channels[" + std::to_string(i) + "]";
    check_keys(c, {"amplitude", "frequency", "phase"}, w);
    d.channels.push_back(SineSignal{get_or(c, "amplitude", 0.0, w), get_or(c, "frequency", 0.0, w),
                                    get_or(c, "phase", 0.0, w)});
  }
  if (d.e_matrix.rows() != 6 || d.e_matrix.cols() != static_cast<Eigen::Index>(d.channels.size())) {
    throw ConfigError(where + ": e_matrix must be 6 x (number of channels)");
  }
  return d;
}

inline json disturbance_to_json(const DisturbanceSpec& d) {
  json channels = json::array();
  for (const auto& c : d.channels) {
    channels.push_back(json{{"amplitude", c.amplitude}, {"frequency", c.frequency}, {"phase", c.phase}});
  }
  return json{{"e_matrix", matrix_to_json(d.e_matrix)}, {"channels", channels}};
}

inline AdaptiveState adaptive_from_json(const json& j, const AdaptiveState& base, const std::string& where) {
  check_keys(j, {"gamma0", "mu", "v_inf"}, where);
  AdaptiveState a = base;
  a.gamma0 = get_or(j, "gamma0", a.gamma0, where);
  a.mu = get_or(j, "mu", a.mu, where);
  a.v_inf = get_or(j, "v_inf", a.v_inf, where);
  a.gamma = a.gamma0;
  try {
    a.validate();
  } catch (const Error& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return a;
}

inline ReferencePlan reference_from_json(const json& j, const std::string& where) {
  check_keys(j, {"waypoints", "durations", "margin"}, where);
  ReferencePlan plan;
  if (!j.contains("waypoints") || !j.at("waypoints").is_array()) throw ConfigError(where + ".waypoints: expected an array");
  for (size_t i = 0; i < j.at("waypoints").size(); ++i) {
    plan.waypoints.push_back(vector_from_json<3>(j.at("waypoints")[i], where + ".waypoints[" + std::to_string(i) + "]"));
  }
  if (plan.waypoints.size() < 2) throw ConfigError(where + ".waypoints: need at least 2");
  const json& dur = j.contains("durations") ? j.at("durations") : json(4.0);
  if (dur.is_number()) {
    plan.segment_durations.assign(plan.waypoints.size() - 1, dur.get<double>());
  } else {
    plan.segment_durations = get_or(j, "durations", std::vector<double>{}, where);
  }
  plan.vref_margin = get_or(j, "margin", plan.vref_margin, where);
  if (plan.segment_durations.size() != plan.waypoints.size() - 1) {
    throw ConfigError(where + ".durations: need one duration per segment");
  }
  return plan;
}

inline Scenario scenario_from_json(const json& j, const ProjectConfig& cfg, const std::string& where) {
  check_keys(j, {"name", "mode", "initial_state", "duration", "plant_dt", "control_dt", "psi", "gamma", "adaptive",
                 "disturbed", "reference", "polytope_n_az", "polytope_n_el", "seed"},
             where);
  Scenario s;
  s.params = cfg.params;
  s.name = get_or(j, "name", s.name, where);
  try {
    s.mode = parse_mode(get_or(j, "mode", std::string("stabilize"), where));
  } catch (const Error& e) {
    throw ConfigError(where + ": " + e.what());
  }
  if (j.contains("initial_state")) s.initial_state = vector_from_json<6>(j.at("initial_state"), where + ".initial_state");
  s.duration = get_or(j, "duration", s.duration, where);
  s.plant_dt = get_or(j, "plant_dt", s.plant_dt, where);
  s.control_dt = get_or(j, "control_dt", s.control_dt, where);
  s.psi = get_or(j, "psi", s.psi, where);
  s.gamma = get_or(j, "gamma", s.gamma, where);
  if (s.mode == Mode::StabilizeAdaptive) {
    s.adaptive = adaptive_from_json(j.contains("adaptive") ? j.at("adaptive") : json::object(), cfg.adaptive,
                                    where + ".adaptive");
  } else if (j.contains("adaptive")) {
    throw ConfigError(where + ".adaptive: only valid in stabilize-adaptive mode");
  }
  if (get_or(j, "disturbed", false, where)) {
    if (!cfg.disturbance) throw ConfigError(where + ".disturbed: no disturbance section configured");
    s.disturbance = cfg.disturbance;
  }
  if (j.contains("reference")) s.reference = reference_from_json(j.at("reference"), where + ".reference");
  s.polytope_n_az = get_or(j, "polytope_n_az", s.polytope_n_az, where);
  s.polytope_n_el = get_or(j, "polytope_n_el", s.polytope_n_el, where);
  s.seed = get_or(j, "seed", s.seed, where);
  if (s.mode == Mode::Track && !s.reference) throw ConfigError(where + ": track mode needs a reference");
  return s;
}

inline ProjectConfig config_from_json(const json& j) {
  check_keys(j, {"params", "synthesis", "adaptive", "disturbance", "terminal", "scenarios", "output_dir"}, "config");
  ProjectConfig cfg;
  cfg.source = j;
  if (j.contains("params")) cfg.params = params_from_json(j.at("params"), "params");

  if (j.contains("synthesis")) {
    const json& s = j.at("synthesis");
    const std::string w = "synthesis";
    check_keys(s, {"mode", "alpha", "q_matrix", "qw_matrix", "beta", "box"}, w);
    cfg.synthesis.mode = get_or(s, "mode", cfg.synthesis.mode, w);
    if (cfg.synthesis.mode != "nominal" && cfg.synthesis.mode != "robust" && cfg.synthesis.mode != "terminal") {
      throw ConfigError(w + ".mode: expected nominal, robust or terminal");
    }
    cfg.synthesis.alpha = get_or(s, "alpha", cfg.synthesis.alpha, w);
    if (s.contains("q_matrix")) cfg.synthesis.q_matrix = fixed_matrix_from_json<6, 6>(s.at("q_matrix"), w + ".q_matrix");
    if (s.contains("qw_matrix")) {
      cfg.synthesis.qw_matrix = fixed_matrix_from_json<6, 6>(s.at("qw_matrix"), w + ".qw_matrix");
    }
    if (s.contains("beta")) cfg.synthesis.beta = get_or(s, "beta", 0.0, w);
    if (s.contains("box")) cfg.synthesis.box = vector_from_json<3>(s.at("box"), w + ".box");
    if (cfg.synthesis.qw_matrix.has_value() != cfg.synthesis.beta.has_value()) {
      throw ConfigError(w + ": qw_matrix and beta must be supplied together");
    }
  }

  if (j.contains("adaptive")) cfg.adaptive = adaptive_from_json(j.at("adaptive"), cfg.adaptive, "adaptive");
  if (j.contains("disturbance")) cfg.disturbance = disturbance_from_json(j.at("disturbance"), "disturbance");

  if (j.contains("terminal")) {
    const json& t = j.at("terminal");
    const std::string w = "terminal";
    check_keys(t, {"ts", "k1", "k2", "q_weight", "r_weight", "m_scale", "n_az", "n_el", "samples"}, w);
    auto& ts = cfg.terminal;
    ts.ts = get_or(t, "ts", ts.ts, w);
    if (t.contains("k1")) ts.k1 = vector_from_json<3>(t.at("k1"), w + ".k1");
    if (t.contains("k2")) ts.k2 = vector_from_json<3>(t.at("k2"), w + ".k2");
    if (t.contains("q_weight")) ts.weights.q_weight = fixed_matrix_from_json<6, 6>(t.at("q_weight"), w + ".q_weight");
    if (t.contains("r_weight")) ts.weights.r_weight = fixed_matrix_from_json<3, 3>(t.at("r_weight"), w + ".r_weight");
    ts.m_scale = get_or(t, "m_scale", ts.m_scale, w);
    ts.n_az = get_or(t, "n_az", ts.n_az, w);
    ts.n_el = get_or(t, "n_el", ts.n_el, w);
    ts.samples = get_or(t, "samples", ts.samples, w);
  }

  if (j.contains("scenarios")) {
    if (!j.at("scenarios").is_array()) throw ConfigError("scenarios: expected an array");
    for (size_t i = 0; i < j.at("scenarios").size(); ++i) {
      cfg.scenarios.push_back(
          scenario_from_json(j.at("scenarios")[i], cfg, "scenarios[" + std::to_string(i) + "]"));
    }
  }
  cfg.output_dir = get_or(j, "output_dir", cfg.output_dir, "config");
  return cfg;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

inline ProjectConfig load_config(const std::string& path) { return config_from_json(read_json_file(path)); }

/// FNV-1a (64 bit) of the compact JSON dump, as 16 hex digits.
inline std::string digest(const json& j) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// --------------------------------------------------------------- designs

struct DesignReport {
  std::string mode;  // nominal | robust | terminal
  /// "synthesized" or "supplied" (verify mode).
  std::string source = "synthesized";
  PhysicalParams params;
  std::optional<NominalDesign> nominal;
  std::optional<RobustDesign> robust;
  std::optional<TerminalIngredients> terminal;
  std::optional<StageWeights> weights;
  int polytope_n_az = 16;
  int polytope_n_el = 4;
  std::string config_digest;
};

inline json design_to_json(const DesignReport& r) {
  json j{{"mode", r.mode}, {"source", r.source}, {"params", params_to_json(r.params)}, {"config_digest", r.config_digest}};
  if (r.nominal) {
    const auto& n = *r.nominal;
    j["nominal"] = {{"q_matrix", matrix_to_json(n.q_matrix)},
                    {"p_matrix", matrix_to_json(n.p_matrix)},
                    {"alpha", n.alpha},
                    {"rho", n.rho},
                    {"eps", n.eps},
                    {"diagnostics", {{"lmi_max_eig", n.lmi_max_eig}, {"iterations", n.iterations}}}};
  }
  if (r.robust) {
    const auto& w = *r.robust;
    j["robust"] = {{"qw_matrix", matrix_to_json(w.qw_matrix)},
                   {"pw_matrix", matrix_to_json(w.pw_matrix)},
                   {"beta", w.beta},
                   {"box", vector_to_json(w.box.half_widths)},
                   {"e_matrix", matrix_to_json(w.e_matrix)},
                   {"diagnostics",
                    {{"lmi_max_eig", w.lmi_max_eig},
                     {"row_margins", vector_to_json(w.row_margins)},
                     {"iterations", w.iterations}}}};
  }
  if (r.terminal) {
    const auto& t = *r.terminal;
    j["terminal"] = {{"ts", t.ts},
                     {"k1", vector_to_json(t.k1)},
                     {"k2", vector_to_json(t.k2)},
                     {"gains", matrix_to_json(t.gains)},
                     {"m_matrix", matrix_to_json(t.m_matrix)},
                     {"p_terminal", matrix_to_json(t.p_terminal)},
                     {"alpha_t", t.alpha_t},
                     {"polytope_n_az", r.polytope_n_az},
                     {"polytope_n_el", r.polytope_n_el},
                     {"diagnostics", {{"lyapunov_residual", lyapunov_residual(t)}}}};
  }
  if (r.weights) {
    j["weights"] = {{"q_weight", matrix_to_json(r.weights->q_weight)}, {"r_weight", matrix_to_json(r.weights->r_weight)}};
  }
  return j;
}

inline DesignReport design_from_json(const json& j) {
  check_keys(j, {"mode", "source", "params", "config_digest", "nominal", "robust", "terminal", "weights"}, "design");
  DesignReport r;
  r.mode = get_or(j, "mode", std::string(), "design");
  r.source = get_or(j, "source", r.source, "design");
  r.config_digest = get_or(j, "config_digest", std::string(), "design");
  if (j.contains("params")) r.params = params_from_json(j.at("params"), "design.params");
  if (j.contains("nominal")) {
    const json& n = j.at("nominal");
    const std::string w = "design.nominal";
    check_keys(n, {"q_matrix", "p_matrix", "alpha", "rho", "eps", "diagnostics"}, w);
    NominalDesign d;
    d.q_matrix = fixed_matrix_from_json<6, 6>(n.at("q_matrix"), w + ".q_matrix");
    d.p_matrix = fixed_matrix_from_json<6, 6>(n.at("p_matrix"), w + ".p_matrix");
    d.alpha = get_or(n, "alpha", 0.0, w);
    d.rho = get_or(n, "rho", 0.0, w);
    d.eps = get_or(n, "eps", 0.0, w);
    if (n.contains("diagnostics")) {
      d.lmi_max_eig = get_or(n.at("diagnostics"), "lmi_max_eig", 0.0, w);
      d.iterations = get_or(n.at("diagnostics"), "iterations", 0, w);
    }
    r.nominal = d;
  }
  if (j.contains("robust")) {
    const json& n = j.at("robust");
    const std::string w = "design.robust";
    check_keys(n, {"qw_matrix", "pw_matrix", "beta", "box", "e_matrix", "diagnostics"}, w);
    RobustDesign d;
    d.qw_matrix = fixed_matrix_from_json<6, 6>(n.at("qw_matrix"), w + ".qw_matrix");
    d.pw_matrix = fixed_matrix_from_json<6, 6>(n.at("pw_matrix"), w + ".pw_matrix");
    d.beta = get_or(n, "beta", 0.0, w);
    d.box = Box{vector_from_json<3>(n.at("box"), w + ".box")};
    d.e_matrix = matrix_from_json(n.at("e_matrix"), w + ".e_matrix");
    if (n.contains("diagnostics")) {
      const json& dg = n.at("diagnostics");
      d.lmi_max_eig = get_or(dg, "lmi_max_eig", 0.0, w);
      if (dg.contains("row_margins")) d.row_margins = vector_from_json<3>(dg.at("row_margins"), w + ".row_margins");
      d.iterations = get_or(dg, "iterations", 0, w);
    }
    r.robust = d;
  }
  if (j.contains("terminal")) {
    const json& n = j.at("terminal");
    const std::string w = "design.terminal";
    check_keys(n,
               {"ts", "k1", "k2", "gains", "m_matrix", "p_terminal", "alpha_t", "polytope_n_az", "polytope_n_el",
                "diagnostics"},
               w);
    TerminalIngredients t;
    t.ts = get_or(n, "ts", t.ts, w);
    t.k1 = vector_from_json<3>(n.at("k1"), w + ".k1");
    t.k2 = vector_from_json<3>(n.at("k2"), w + ".k2");
    t.gains = fixed_matrix_from_json<3, 6>(n.at("gains"), w + ".gains");
    t.m_matrix = fixed_matrix_from_json<6, 6>(n.at("m_matrix"), w + ".m_matrix");
    t.p_terminal = fixed_matrix_from_json<6, 6>(n.at("p_terminal"), w + ".p_terminal");
    t.alpha_t = get_or(n, "alpha_t", 0.0, w);
    r.polytope_n_az = get_or(n, "polytope_n_az", r.polytope_n_az, w);
    r.polytope_n_el = get_or(n, "polytope_n_el", r.polytope_n_el, w);
    const DiscreteModel model = discretize(t.ts);
    t.a_cl = model.a_d + model.b_d * t.gains;
    r.terminal = t;
  }
  if (j.contains("weights")) {
    const json& n = j.at("weights");
    check_keys(n, {"q_weight", "r_weight"}, "design.weights");
    StageWeights sw;
    sw.q_weight = fixed_matrix_from_json<6, 6>(n.at("q_weight"), "design.weights.q_weight");
    sw.r_weight = fixed_matrix_from_json<3, 3>(n.at("r_weight"), "design.weights.r_weight");
    r.weights = sw;
  }
  const bool complete = (r.mode == "nominal" && r.nominal) || (r.mode == "robust" && r.robust) ||
                        (r.mode == "terminal" && r.terminal && r.weights);
  if (!complete) throw ConfigError("design: mode '" + r.mode + "' lacks its section");
  return r;
}

inline json ellipsoid_to_json(const Mat6& shape, double level) {
  return json{{"shape", matrix_to_json(shape)}, {"level", level}};
}

inline json hpolytope_to_json(const HPolytope& p) {
  return json{{"a_rows", matrix_to_json(p.a_rows)}, {"b", vector_to_json(p.b)}};
}

}  // namespace flatsat::io
