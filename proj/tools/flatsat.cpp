// flatsat: synthesize certificates, simulate scenarios, verify designs and
// export sets from JSON configurations.
//
// Exit codes: 0 ok, 1 configuration, 2 infeasible, 3 runtime, 4 verification.

#include "flatsat/flatsat.hpp"
#include "flatsat/io.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace flatsat;
using io::json;

namespace {

enum Exit { kOk = 0, kConfig = 1, kInfeasible = 2, kRuntime = 3, kVerification = 4 };

struct VerificationFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config;
  std::string design;
  std::string out;
  std::string suite;
  std::uint64_t seed = 1;
};

void write_json(const fs::path& path, const json& j) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

fs::path out_dir(const Options& opt, const io::ProjectConfig* cfg) {
  if (!opt.out.empty()) return opt.out;
  return cfg != nullptr ? fs::path(cfg->output_dir) : fs::path("out");
}

io::ProjectConfig require_config(const Options& opt) {
  if (opt.config.empty()) throw io::ConfigError("--config is required");
  return io::load_config(opt.config);
}

io::DesignReport require_design(const Options& opt) {
  if (opt.design.empty()) throw io::ConfigError("--design is required");
  return io::design_from_json(io::read_json_file(opt.design));
}

Eigen::MatrixXd config_e_matrix(const io::ProjectConfig& cfg) {
  return cfg.disturbance ? cfg.disturbance->e_matrix : Eigen::MatrixXd::Zero(6, 0);
}

void print_report(const SuiteReport& rep) {
  for (const auto& c : rep.checks) {
    std::printf("%s  %-52s value=%.6g limit=%.6g\n", c.passed ? "PASS" : "FAIL", c.name.c_str(), c.value, c.limit);
  }
  std::printf("%s: %s\n", rep.suite.c_str(), rep.passed() ? "pass" : "FAIL");
}

void expect_pass(const SuiteReport& rep) {
  print_report(rep);
  if (!rep.passed()) throw VerificationFailed(rep.suite + " failed");
}

io::DesignReport synthesize(const io::ProjectConfig& cfg, const std::string& mode) {
  io::DesignReport r;
  r.mode = mode;
  r.params = cfg.params;
  r.config_digest = io::digest(cfg.source);
  const auto& syn = cfg.synthesis;
  if (mode == "nominal") {
    if (syn.q_matrix) {
      r.source = "supplied";
      r.nominal = verify_nominal(cfg.params, *syn.q_matrix, syn.alpha);
    } else {
      r.nominal = solve_nominal(cfg.params, syn.alpha);
    }
  } else if (mode == "robust") {
    const Box box = syn.box ? Box{*syn.box} : max_box_in_vc(cfg.params);
    if (syn.qw_matrix) {
      r.source = "supplied";
      r.robust = verify_robust(*syn.qw_matrix, *syn.beta, box, config_e_matrix(cfg));
    } else {
      r.robust = solve_robust(cfg.params, box, config_e_matrix(cfg));
    }
  } else {
    const auto& t = cfg.terminal;
    const HPolytope vset = polytope_approx_vc(cfg.params, t.n_az, t.n_el);
    const Mat36 k = gain_matrix(t.k1, t.k2);
    r.terminal = design_terminal(t.weights, t.k1, t.k2, t.ts, vset, Mat6(t.m_scale * q_star(t.weights, k)));
    r.weights = t.weights;
    r.polytope_n_az = t.n_az;
    r.polytope_n_el = t.n_el;
  }
  return r;
}

/// Fails with exit code 2 when a supplied certificate misses the rounded-certificate tolerances.
void check_supplied(const io::DesignReport& r) {
  if (r.source != "supplied") return;
  const LmiTolerances tol = rounded_certificate_tolerances();
  const SuiteReport rep = r.nominal ? lmi_margins(*r.nominal, tol) : lmi_margins(*r.robust, tol);
  if (!rep.passed()) {
    print_report(rep);
    throw Error(ErrorKind::Infeasible, "supplied certificate violates its LMI beyond the rounding tolerance");
  }
}

void print_design_summary(const io::DesignReport& r) {
  if (r.nominal) {
    std::printf("nominal: alpha=%.6g rho=%.6g eps=%.6g lmi_max_eig=%.3g\n", r.nominal->alpha, r.nominal->rho,
                r.nominal->eps, r.nominal->lmi_max_eig);
  }
  if (r.robust) {
    const auto& w = *r.robust;
    std::printf("robust: beta=%.6g box=[%.6g, %.6g, %.6g] lmi_max_eig=%.3g row_margins=[%.4g, %.4g, %.4g]\n", w.beta,
                w.box.half_widths(0), w.box.half_widths(1), w.box.half_widths(2), w.lmi_max_eig, w.row_margins(0),
                w.row_margins(1), w.row_margins(2));
  }
  if (r.terminal) {
    std::printf("terminal: alpha_t=%.6g lyapunov_residual=%.3g\n", r.terminal->alpha_t, lyapunov_residual(*r.terminal));
  }
}

int cmd_synthesize(const Options& opt) {
  const io::ProjectConfig cfg = require_config(opt);
  const io::DesignReport r = synthesize(cfg, cfg.synthesis.mode);
  check_supplied(r);
  const fs::path path = out_dir(opt, &cfg) / "design.json";
  write_json(path, io::design_to_json(r));
  print_design_summary(r);
  std::printf("wrote %s\n", path.string().c_str());
  return kOk;
}

int cmd_terminal(const Options& opt) {
  const io::ProjectConfig cfg = require_config(opt);
  const io::DesignReport r = synthesize(cfg, "terminal");
  const fs::path path = out_dir(opt, &cfg) / "design.json";
  write_json(path, io::design_to_json(r));
  print_design_summary(r);
  std::printf("wrote %s\n", path.string().c_str());
  const HPolytope vset = polytope_approx_vc(r.params, r.polytope_n_az, r.polytope_n_el);
  expect_pass(terminal_conditions(*r.terminal, *r.weights, vset, cfg.terminal.samples, opt.seed));
  return kOk;
}

int cmd_simulate(const Options& opt) {
  const io::ProjectConfig cfg = require_config(opt);
  const io::DesignReport design = require_design(opt);
  if (design.config_digest != io::digest(cfg.source)) {
    std::fprintf(stderr, "warning: design was produced from a different configuration\n");
  }
  if (cfg.scenarios.empty()) throw io::ConfigError("no scenarios configured");
  std::vector<Scenario> scenarios = cfg.scenarios;
  for (auto& s : scenarios) {
    if (s.mode == Mode::Robust) {
      if (!design.robust) throw io::ConfigError("scenario '" + s.name + "' needs a robust design");
      s.design = *design.robust;
    } else {
      if (!design.nominal) throw io::ConfigError("scenario '" + s.name + "' needs a nominal design");
      s.design = *design.nominal;
    }
  }

  const fs::path dir = out_dir(opt, &cfg);
  fs::create_directories(dir);
  std::vector<Metrics> results(scenarios.size());
  std::vector<std::size_t> clipped(scenarios.size(), 0);
  parallel_shards(scenarios.size(), scenarios.size(), [&](std::size_t i, std::size_t, std::size_t) {
    const Trace trace = simulate(scenarios[i]);
    std::ofstream csv(dir / (scenarios[i].name + ".csv"));
    if (!csv) throw std::runtime_error("cannot write trace for '" + scenarios[i].name + "'");
    write_trace_csv(csv, trace);
    results[i] = metrics(trace, scenarios[i].params);
    clipped[i] = trace.clipped_disturbance_samples;
  });

  json out = json::object();
  for (size_t i = 0; i < scenarios.size(); ++i) {
    const auto& m = results[i];
    json entry{{"mode", std::string(to_string(scenarios[i].mode))},
               {"max_V", m.max_v},
               {"final_gamma", m.final_gamma},
               {"invariance_violations", m.invariance_violations},
               {"saturation_duty", m.saturation_duty},
               {"input_violations", m.input_violations}};
    if (m.has_reference) entry["rms_error"] = m.rms_error;
    if (clipped[i] > 0) {
      entry["clipped_disturbance_samples"] = clipped[i];
      std::fprintf(stderr, "warning: scenario '%s': disturbance norm exceeded 1 at %zu samples and was clipped\n",
                   scenarios[i].name.c_str(), clipped[i]);
    }
    out[scenarios[i].name] = entry;
    std::printf("%-24s max_V=%.6g final_gamma=%.6g violations=%zu duty=%.3f%s\n", scenarios[i].name.c_str(), m.max_v,
                m.final_gamma, m.invariance_violations, m.saturation_duty,
                m.has_reference ? (" rms=" + std::to_string(m.rms_error)).c_str() : "");
  }
  write_json(dir / "metrics.json", out);
  return kOk;
}

int cmd_verify(const Options& opt) {
  const io::DesignReport design = require_design(opt);
  std::optional<io::ProjectConfig> cfg;
  if (!opt.config.empty()) cfg = io::load_config(opt.config);
  const LmiTolerances tol = design.source == "supplied" ? rounded_certificate_tolerances() : LmiTolerances{};

  if (opt.suite == "saturation-fuzz") {
    expect_pass(saturation_fuzz(design.params, 100000, opt.seed));
  } else if (opt.suite == "lmi-margins") {
    if (design.nominal) expect_pass(lmi_margins(*design.nominal, tol));
    else if (design.robust) expect_pass(lmi_margins(*design.robust, tol));
    else throw io::ConfigError("lmi-margins needs a nominal or robust design");
  } else if (opt.suite == "invariance-mc") {
    InvarianceOptions inv;
    inv.seed = opt.seed;
    if (cfg) inv.v_inf = cfg->adaptive.v_inf;
    if (design.nominal) {
      expect_pass(invariance_mc(*design.nominal, design.params, inv));
    } else if (design.robust) {
      if (!cfg || !cfg->disturbance) throw io::ConfigError("robust invariance-mc needs --config with a disturbance");
      expect_pass(invariance_mc(*design.robust, design.params, *cfg->disturbance, inv));
    } else {
      throw io::ConfigError("invariance-mc needs a nominal or robust design");
    }
  } else if (opt.suite == "terminal-conditions") {
    if (!design.terminal) throw io::ConfigError("terminal-conditions needs a terminal design");
    const HPolytope vset = polytope_approx_vc(design.params, design.polytope_n_az, design.polytope_n_el);
    const std::size_t samples = cfg ? cfg->terminal.samples : 10000;
    expect_pass(terminal_conditions(*design.terminal, *design.weights, vset, samples, opt.seed));
  } else {
    throw io::ConfigError("unknown suite '" + opt.suite + "'");
  }
  return kOk;
}

int cmd_export(const Options& opt) {
  std::optional<io::ProjectConfig> cfg;
  if (!opt.config.empty()) cfg = io::load_config(opt.config);
  std::optional<io::DesignReport> design;
  if (!opt.design.empty()) design = require_design(opt);
  if (!cfg && !design) throw io::ConfigError("export needs --config or --design");
  const PhysicalParams params = design ? design->params : cfg->params;

  json sets{{"params", io::params_to_json(params)}};
  const int n_az = design ? design->polytope_n_az : 16;
  const int n_el = design ? design->polytope_n_el : 4;
  sets["polytope"] = io::hpolytope_to_json(polytope_approx_vc(params, n_az, n_el));
  sets["ball_rho"] = max_ball_in_vc(params);
  Box box = max_box_in_vc(params);
  if (design && design->nominal) sets["ellipsoid"] = io::ellipsoid_to_json(design->nominal->p_matrix, design->nominal->eps);
  if (design && design->robust) {
    sets["ellipsoid"] = io::ellipsoid_to_json(design->robust->pw_matrix, 1.0);
    box = design->robust->box;
  }
  if (design && design->terminal) {
    sets["ellipsoid"] =
        io::ellipsoid_to_json(design->terminal->p_terminal, design->terminal->alpha_t * design->terminal->alpha_t);
  }
  sets["box"] = io::vector_to_json(box.half_widths);
  const fs::path path = out_dir(opt, cfg ? &*cfg : nullptr) / "sets.json";
  write_json(path, sets);
  std::printf("wrote %s\n", path.string().c_str());
  return kOk;
}

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const io::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const VerificationFailed& e) {
    std::fprintf(stderr, "verification failed: %s\n", e.what());
    return kVerification;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.kind() == ErrorKind::Infeasible ? kInfeasible : kRuntime;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kRuntime;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Saturated flat-output control: synthesis, simulation and verification"};
  app.require_subcommand(1);
  Options opt;

  auto* syn = app.add_subcommand("synthesize", "Synthesize or check a certificate and write design.json");
  syn->add_option("--config", opt.config, "Project configuration (JSON)")->required();
  syn->add_option("--out", opt.out, "Output directory");

  auto* sim = app.add_subcommand("simulate", "Run the configured scenarios; write one CSV each and metrics.json");
  sim->add_option("--config", opt.config, "Project configuration (JSON)")->required();
  sim->add_option("--design", opt.design, "Design report (JSON)")->required();
  sim->add_option("--out", opt.out, "Output directory");

  auto* ver = app.add_subcommand("verify", "Run a property suite against a design");
  ver->add_option("--design", opt.design, "Design report (JSON)")->required();
  ver->add_option("--config", opt.config, "Project configuration (JSON)");
  ver->add_option("--suite", opt.suite, "Suite name")
      ->required()
      ->check(CLI::IsMember({"saturation-fuzz", "lmi-margins", "invariance-mc", "terminal-conditions"}));
  ver->add_option("--seed", opt.seed, "Random seed");

  auto* ter = app.add_subcommand("terminal", "Design terminal ingredients and verify the terminal conditions");
  ter->add_option("--config", opt.config, "Project configuration (JSON)")->required();
  ter->add_option("--out", opt.out, "Output directory");
  ter->add_option("--seed", opt.seed, "Random seed");

  auto* exp = app.add_subcommand("export", "Write the input polytope, ellipsoid and box to sets.json");
  exp->add_option("--config", opt.config, "Project configuration (JSON)");
  exp->add_option("--design", opt.design, "Design report (JSON)");
  exp->add_option("--out", opt.out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  if (*syn) return guarded([&] { return cmd_synthesize(opt); });
  if (*sim) return guarded([&] { return cmd_simulate(opt); });
  if (*ver) return guarded([&] { return cmd_verify(opt); });
  if (*ter) return guarded([&] { return cmd_terminal(opt); });
  return guarded([&] { return cmd_export(opt); });
}
