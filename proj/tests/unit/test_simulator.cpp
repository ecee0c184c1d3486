#include "fixtures.hpp"

#include <catch_amalgamated.hpp>

#include <random>
#include <sstream>

using namespace flatsat;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Scenario nominal_scenario(const State& x0) {
  Scenario s;
  s.params = fixtures::nominal_params();
  s.design = verify_nominal(s.params, fixtures::nominal_q(), 1.2);
  s.initial_state = x0;
  return s;
}

Scenario robust_scenario(const State& x0, double gamma) {
  Scenario s;
  s.name = "robust";
  s.mode = Mode::Robust;
  s.params = fixtures::wind_params();
  s.design = verify_robust(fixtures::wind_qw(), fixtures::kWindBeta, max_box_in_vc(s.params), wind_e_matrix());
  s.disturbance = fixtures::wind_disturbance();
  s.gamma = gamma;
  s.control_dt = 0.01;
  s.initial_state = x0;
  return s;
}

Scenario tracking_scenario(int start) {
  Scenario s;
  s.name = "track";
  s.mode = Mode::Track;
  s.params = fixtures::nominal_params();
  s.design = verify_nominal(s.params, fixtures::tracking_p().inverse(), 1.2);
  s.reference = fixtures::tracking_plan(start);
  s.initial_state.head<3>() = s.reference->waypoints.front() + Vec3(0.02, -0.02, 0.02);
  s.duration = 26.0;
  return s;
}

}  // namespace

TEST_CASE("RK4 is exact on the double integrator", "[simulator]") {
  const PhysicalParams p = fixtures::nominal_params();
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> comp(-2.0, 2.0);
  for (double dt : {0.002, 0.1, 0.5}) {
    for (int i = 0; i < 100; ++i) {
      State x;
      for (int k = 0; k < 6; ++k) x(k) = comp(rng);
      const Vec3 v(comp(rng), comp(rng), comp(rng));
      const RealInput u = linearizing_input(v, 0.4, p);
      const DiscreteModel m = discretize(dt);
      const State exact = m.a_d * x + m.b_d * realized_acceleration(u, 0.4, p);
      CHECK((rk4_step(x, u, 0.4, p, nullptr, 0.0, dt) - exact).cwiseAbs().maxCoeff() < 1e-13);
    }
  }
  CHECK_THROWS_AS(rk4_step(State::Zero(), RealInput{}, 0.0, p, nullptr, 0.0, 0.0), Error);
}

TEST_CASE("hover from rest stays at rest", "[simulator]") {
  const Trace t = simulate(nominal_scenario(State::Zero()));
  for (const auto& r : t.records) REQUIRE(r.xi.cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("integration error shrinks at fourth order", "[simulator]") {
  State x0;
  x0 << 0.1, -0.1, 0.05, 0.0, 0.1, 0.0;
  auto endpoint = [&](const DisturbanceSpec& d, double dt) {
    Scenario s = robust_scenario(x0, 1.0);
    s.disturbance = d;
    s.control_dt = 0.04;
    s.plant_dt = dt;
    s.duration = 2.0;
    return State(simulate(s).records.back().xi);
  };

  // Smooth disturbance that never needs clipping: Richardson ratio 2^4.
  const DisturbanceSpec smooth{wind_e_matrix(), {SineSignal{0.5, 1.5, 0.3}, SineSignal{0.5, 0.7, 0.1}}};
  const State a = endpoint(smooth, 0.02);
  const State b = endpoint(smooth, 0.01);
  const State c = endpoint(smooth, 0.005);
  const double ratio = (a - b).norm() / (c - b).norm();
  CHECK(ratio > 14.0);
  CHECK(ratio < 18.0);

  // The clipped wind signal has kinks where |w| crosses 1. The order drops to
  // about two with a grid-dependent constant; check at least linear decay.
  const DisturbanceSpec wind = fixtures::wind_disturbance();
  const State ref = endpoint(wind, 0.04 / 1024);
  const double coarse = (endpoint(wind, 0.04) - ref).norm();
  const double fine = (endpoint(wind, 0.04 / 64) - ref).norm();
  CHECK(fine <= coarse / 64.0);
  CHECK(coarse < 1e-5);
}

TEST_CASE("stabilization without adaptation", "[simulator]") {
  Scenario s = nominal_scenario(fixtures::sweep_initial_state());
  s.duration = 6.0;
  const Trace t = simulate(s);
  for (size_t i = 1; i < t.fine_v.size(); ++i) REQUIRE(t.fine_v[i] <= t.fine_v[i - 1] + 1e-12);
  const AdaptiveBounds b = adaptive_bounds(1.0, 0.0, t.fine_v.front(), 0.05, 1.2);
  for (size_t i = 0; i < t.fine_t.size(); ++i) {
    if (t.fine_t[i] >= b.t_inf_bound) REQUIRE(t.fine_v[i] <= 0.05);
  }
  const Metrics m = metrics(t, s.params);
  CHECK(m.invariance_violations == 0);
  CHECK(m.input_violations == 0);
  CHECK(m.final_gamma == 1.0);
}

TEST_CASE("adaptive gain is monotone and bounded", "[simulator]") {
  for (double mu : {1.0, 2.0, 5.0}) {
    Scenario s = nominal_scenario(fixtures::sweep_initial_state());
    s.mode = Mode::StabilizeAdaptive;
    s.adaptive = AdaptiveState::initial(1.0, mu, 0.05);
    s.duration = 6.0;
    const Trace t = simulate(s);
    bool below = false;
    double frozen = 0.0;
    for (size_t i = 0; i < t.records.size(); ++i) {
      const auto& r = t.records[i];
      if (i > 0) REQUIRE(r.gamma >= t.records[i - 1].gamma);
      if (below) REQUIRE(r.gamma == frozen);
      if (!below && r.lyapunov < 0.05) {
        below = true;
        frozen = r.gamma;
      }
    }
    CHECK(below);
    const AdaptiveBounds b = adaptive_bounds(1.0, mu, t.records.front().lyapunov, 0.05, 1.2);
    CHECK(t.records.back().gamma <= b.gamma_inf_bound);
    CHECK(t.records.back().gamma > 1.0);
    CHECK(metrics(t, s.params).invariance_violations == 0);
  }
}

TEST_CASE("robust invariance under the wind disturbance", "[simulator]") {
  const Mat6 pw = fixtures::wind_qw().inverse();
  std::mt19937_64 rng(21);
  std::normal_distribution<double> n;
  for (double gamma : {1.0, 10.0}) {
    for (int i = 0; i < 3; ++i) {
      State x0;
      for (int k = 0; k < 6; ++k) x0(k) = n(rng);
      x0 *= std::sqrt(1.0 / x0.dot(pw * x0));
      Scenario s = robust_scenario(x0, gamma);
      s.duration = 5.0;
      const Trace t = simulate(s);
      const Metrics m = metrics(t, s.params);
      CHECK(m.max_v <= 1.0 + 1e-6);
      CHECK(m.input_violations == 0);
      CHECK(t.clipped_disturbance_samples > 0);
    }
  }
}

TEST_CASE("disturbance signal is kept in the unit ball", "[simulator]") {
  const DisturbanceSpec d = fixtures::wind_disturbance();
  for (int i = 0; i < 1000; ++i) {
    bool clipped = false;
    const Eigen::VectorXd w = d.sample(0.01 * i, &clipped);
    REQUIRE(w.norm() <= 1.0 + 1e-15);
  }
  CHECK_THAT(SineSignal::constant(0.3)(12.0), WithinAbs(0.3, 1e-15));
  DisturbanceSpec bad = d;
  bad.e_matrix = Eigen::MatrixXd::Zero(6, 3);
  CHECK_THROWS_AS(bad.channel(), Error);
}

TEST_CASE("reference generation", "[simulator]") {
  const PhysicalParams p = fixtures::nominal_params();
  const HPolytope poly = polytope_approx_vc(p, 16, 4);

  // One metre in 4 s: the quintic acceleration peaks at (10/sqrt(3)) / 16.
  ReferencePlan one{{Vec3::Zero(), Vec3(1.0, 0.0, 0.0)}, {4.0}, 0.2};
  const Reference r = make_reference(one, poly);
  double peak = 0.0;
  for (int i = 0; i <= 40000; ++i) peak = std::max(peak, std::abs(r.at(i * 1e-4).v_ref.x()));
  const double analytic = 10.0 / std::sqrt(3.0) / 16.0;
  CHECK(peak <= analytic);
  CHECK_THAT(peak, WithinAbs(analytic, 1e-6));
  CHECK((r.at(0.0).xi_ref).norm() == 0.0);
  CHECK((r.at(4.0).xi_ref.head<3>() - Vec3(1, 0, 0)).norm() < 1e-15);
  CHECK((r.at(100.0).xi_ref.head<3>() - Vec3(1, 0, 0)).norm() == 0.0);
  CHECK(r.at(100.0).v_ref.norm() == 0.0);
  for (const auto& vert : r.v_ref_set().vertices) CHECK(poly.contains(vert));

  ReferencePlan still{{Vec3(1, 2, 3), Vec3(1, 2, 3)}, {2.0}, 0.2};
  const Reference rs = make_reference(still, poly);
  for (double t : {0.0, 0.7, 1.9, 5.0}) {
    CHECK((rs.at(t).xi_ref.head<3>() - Vec3(1, 2, 3)).norm() < 1e-15);
    CHECK(rs.at(t).v_ref.norm() == 0.0);
  }
  for (const auto& vert : rs.v_ref_set().vertices) CHECK_THAT(vert.cwiseAbs().maxCoeff(), WithinAbs(0.2, 1e-15));

  ReferencePlan fast{{Vec3::Zero(), Vec3(10.0, 0.0, 0.0)}, {0.5}, 0.2};
  try {
    make_reference(fast, poly);
    FAIL("expected ReferenceTooAggressive");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ReferenceTooAggressive);
  }
  CHECK_THROWS_AS(make_reference(ReferencePlan{{Vec3::Zero()}, {}, 0.2}, poly), Error);
  CHECK_THROWS_AS(make_reference(ReferencePlan{{Vec3::Zero(), Vec3::Ones()}, {0.0}, 0.2}, poly), Error);
}

TEST_CASE("reference is continuous across segments", "[simulator]") {
  const HPolytope poly = polytope_approx_vc(fixtures::nominal_params(), 16, 4);
  const Reference r = make_reference(fixtures::tracking_plan(0), poly);
  for (int k = 1; k < 6; ++k) {
    const double t = 4.0 * k;
    const ReferencePoint before = r.at(t - 1e-9);
    const ReferencePoint after = r.at(t);
    CHECK((before.xi_ref - after.xi_ref).norm() < 1e-7);
    CHECK((before.v_ref - after.v_ref).norm() < 1e-6);
  }
}

TEST_CASE("tracking the triangle reference", "[simulator]") {
  for (int start : {0, 1, 2}) {
    const Scenario s = tracking_scenario(start);
    const Trace t = simulate(s);
    const Metrics m = metrics(t, s.params);
    CHECK(m.has_reference);
    CHECK(m.rms_error < 0.05);
    CHECK(m.input_violations == 0);
    const HPolytope poly = polytope_approx_vc(s.params, 16, 4);
    for (const auto& r : t.records) REQUIRE(poly.contains(r.v, 1e-9));
  }
}

TEST_CASE("metrics", "[simulator]") {
  const PhysicalParams p = fixtures::nominal_params();
  Trace perfect;
  perfect.level = 1.0;
  for (int i = 0; i < 10; ++i) {
    TraceRecord r;
    r.t = 0.1 * i;
    r.u = RealInput{p.g, 0.0, 0.0};
    r.xi_ref = State::Zero();
    r.saturated = i < 3;
    perfect.records.push_back(r);
    perfect.fine_v.push_back(i == 4 ? 2.0 : 0.5);
  }
  Metrics m = metrics(perfect, p);
  CHECK(m.rms_error == 0.0);
  CHECK_THAT(m.saturation_duty, WithinAbs(0.3, 1e-15));
  CHECK(m.invariance_violations == 1);
  CHECK(m.max_v == 2.0);

  Trace offset = perfect;
  for (auto& r : offset.records) r.xi(0) = 0.1;
  CHECK_THAT(metrics(offset, p).rms_error, WithinAbs(0.1, 1e-15));

  Trace bad = perfect;
  bad.records[2].u.thrust = 2.0 * p.t_max;
  CHECK(metrics(bad, p).input_violations == 1);
  CHECK_THROWS_AS(metrics(Trace{}, p), Error);
}

TEST_CASE("simulation is deterministic", "[simulator]") {
  State x0;
  x0 << 0.3, -0.2, 0.1, 0.0, 0.2, -0.1;
  Scenario s = robust_scenario(x0, 10.0);
  s.duration = 1.0;
  std::ostringstream a;
  std::ostringstream b;
  write_trace_csv(a, simulate(s));
  write_trace_csv(b, simulate(s));
  CHECK(a.str() == b.str());
}

TEST_CASE("trace CSV schema", "[simulator]") {
  Scenario s = nominal_scenario(fixtures::sweep_initial_state());
  s.duration = 0.2;
  std::ostringstream os;
  write_trace_csv(os, simulate(s));
  std::istringstream is(os.str());
  std::string header;
  std::getline(is, header);
  CHECK(header == "t,x,y,z,vx,vy,vz,v1,v2,v3,T,phi,theta,V,gamma,lambda,w1,w2,xr,yr,zr,sat_active");
  std::string line;
  int rows = 0;
  while (std::getline(is, line)) {
    ++rows;
    CHECK(std::count(line.begin(), line.end(), ',') == 21);
    // Disturbance and reference channels are empty without those features.
    CHECK(line.find(",,,,,,") != std::string::npos);
  }
  CHECK(rows == 3);
}

TEST_CASE("scenario validation", "[simulator]") {
  Scenario s = nominal_scenario(State::Zero());
  s.plant_dt = 0.2;
  CHECK_THROWS_AS(simulate(s), Error);
  s.plant_dt = 0.03;
  CHECK_THROWS_AS(simulate(s), Error);
  s = nominal_scenario(State::Zero());
  s.mode = Mode::Track;
  CHECK_THROWS_AS(simulate(s), Error);
  s = nominal_scenario(State::Zero());
  s.mode = Mode::Robust;
  CHECK_THROWS_AS(simulate(s), Error);
  CHECK(parse_mode("stabilize-adaptive") == Mode::StabilizeAdaptive);
  CHECK(to_string(Mode::Track) == "track");
  CHECK_THROWS_AS(parse_mode("hover"), Error);
}
