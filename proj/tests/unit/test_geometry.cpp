#include "fixtures.hpp"

#include <catch_amalgamated.hpp>

#include <random>

using namespace flatsat;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Vec3 random_direction(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Vec3 d(n(rng), n(rng), n(rng));
  return d / d.norm();
}

double polytope_volume_mc(const HPolytope& poly, const PhysicalParams& p, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> lat(-p.t_max, p.t_max);
  std::uniform_real_distribution<double> ver(-p.g, p.t_max - p.g);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (poly.contains(Vec3(lat(rng), lat(rng), ver(rng)))) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n) * 4.0 * p.t_max * p.t_max * p.t_max;
}

}  // namespace

TEST_CASE("Vc membership examples", "[geometry]") {
  const PhysicalParams p = fixtures::nominal_params();
  CHECK(vc_membership(Vec3::Zero(), p));
  CHECK(vc_membership(Vec3(0, 0, 0.45 * p.g), p));
  CHECK_FALSE(vc_membership(Vec3(0, 0, 0.46 * p.g), p));
  CHECK(vc_membership(Vec3(0, 0, -p.g), p));
  CHECK_FALSE(vc_membership(Vec3(0, 0, -p.g - 1e-9), p));
  const double lateral = p.g * std::tan(p.eps_max);
  CHECK(vc_membership(Vec3(lateral * (1 - 1e-12), 0, 0), p));
  CHECK_FALSE(vc_membership(Vec3(lateral * (1 + 1e-9), 0, 0), p));
}

TEST_CASE("largest ball in Vc", "[geometry]") {
  const double rho1 = max_ball_in_vc(fixtures::nominal_params());
  CHECK_THAT(rho1, WithinAbs(2.9019, 1e-3));
  // The 4-digit angle 0.1745 gives 2.9008, just outside the 1e-3 band.
  CHECK_THAT(max_ball_in_vc(PhysicalParams{9.81, 1.45 * 9.81, 0.1745}), WithinAbs(2.9008, 1e-4));

  const PhysicalParams p2 = fixtures::wind_params();
  const double rho2 = max_ball_in_vc(p2);
  CHECK_THAT(rho2, WithinRel(std::pow(p2.g * std::sin(0.698), 2), 1e-12));
  // 39.76 is the value at exactly 40 degrees; 0.698 rad gives 39.750.
  CHECK_THAT(rho2, WithinAbs(39.750, 1e-3));
  CHECK_THAT(max_ball_in_vc(PhysicalParams{9.81, 2.0 * 9.81, 40.0 * std::numbers::pi / 180.0}), WithinAbs(39.76, 1e-2));

  try {
    max_ball_in_vc(PhysicalParams{9.81, 9.81, 0.2});
    FAIL("expected InfeasibleBall");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InfeasibleBall);
  }
}

TEST_CASE("largest ball is inside Vc and cannot grow", "[geometry]") {
  for (const PhysicalParams& p : {fixtures::nominal_params(), fixtures::wind_params()}) {
    const double r = std::sqrt(max_ball_in_vc(p));
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> unif;
    for (int i = 0; i < 100000; ++i) {
      const Vec3 v = random_direction(rng) * r * std::cbrt(unif(rng)) * (1.0 - 1e-12);
      REQUIRE(vc_membership(v, p));
    }
    bool escaped = false;
    for (int i = 0; i < 100000 && !escaped; ++i) {
      escaped = !vc_membership(random_direction(rng) * r * 1.001, p);
    }
    CHECK(escaped);
  }
}

TEST_CASE("largest box in Vc", "[geometry]") {
  const PhysicalParams p = fixtures::wind_params();
  const Box box = max_box_in_vc(p);
  CHECK_THAT(box.half_widths.x(), WithinAbs(3.8804, 2e-2));
  CHECK_THAT(box.half_widths.y(), WithinAbs(3.8804, 2e-2));
  CHECK_THAT(box.half_widths.z(), WithinAbs(3.27, 2e-2));
  for (const Vec3& c : box.corners()) CHECK(vc_membership(c, p));

  Box shrunk{0.9 * box.half_widths};
  for (const Vec3& c : shrunk.corners()) CHECK(vc_membership(c, p));
  for (int axis = 0; axis < 3; ++axis) {
    Box grown = box;
    grown.half_widths(axis) *= 1.01;
    bool any_out = false;
    for (const Vec3& c : grown.corners()) any_out = any_out || !vc_membership(c, p);
    CHECK(any_out);
  }
}

TEST_CASE("ellipsoid rejects invalid shapes", "[geometry]") {
  Mat2 asym;
  asym << 1, 0.5, 0, 1;
  CHECK_THROWS_AS((Ellipsoid<2>(asym, 1.0)), Error);
  CHECK_THROWS_AS((Ellipsoid<2>(-Mat2::Identity(), 1.0)), Error);
  const Ellipsoid<2> e(Mat2::Identity() * 4.0, 1.0);
  CHECK(e.contains(Eigen::Vector2d(0.5, 0.0)));
  CHECK_FALSE(e.contains(Eigen::Vector2d(0.51, 0.0)));
  CHECK_THAT(e.value(e.project_to_boundary(Eigen::Vector2d(3.0, 1.0))), WithinAbs(1.0, 1e-14));
}

TEST_CASE("polytope approximation is an inner approximation of Vc", "[geometry]") {
  const PhysicalParams p = fixtures::nominal_params();
  for (auto [n_az, n_el] : {std::pair{6, 2}, std::pair{16, 4}, std::pair{32, 6}}) {
    const HPolytope poly = polytope_approx_vc(p, n_az, n_el);
    CHECK(poly.origin_interior());
    const auto verts = vc_boundary_vertices(p, n_az, n_el);
    for (const Vec3& v : verts) {
      CHECK(poly.contains(v, 1e-9));
      CHECK(vc_membership(v, p));
    }
    // Random points of the polytope lie in Vc.
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> lat(-p.t_max, p.t_max);
    std::uniform_real_distribution<double> ver(-p.g, p.t_max - p.g);
    int inside = 0;
    for (int i = 0; i < 200000; ++i) {
      const Vec3 v(lat(rng), lat(rng), ver(rng));
      if (!poly.contains(v)) continue;
      ++inside;
      REQUIRE(vc_membership(v, p));
    }
    CHECK(inside > 0);
  }
}

TEST_CASE("finer polytope approximations grow", "[geometry]") {
  const PhysicalParams p = fixtures::nominal_params();
  const double coarse = polytope_volume_mc(polytope_approx_vc(p, 16, 4), p, 1000000, 21);
  const double fine = polytope_volume_mc(polytope_approx_vc(p, 32, 4), p, 1000000, 21);
  CHECK(fine >= coarse);
}

TEST_CASE("polytope rows are a convex description", "[geometry]") {
  const PhysicalParams p = fixtures::wind_params();
  const HPolytope poly = polytope_approx_vc(p, 16, 4);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> lat(-p.t_max, p.t_max);
  std::uniform_real_distribution<double> ver(-p.g, p.t_max - p.g);
  std::uniform_real_distribution<double> unif;
  std::vector<Vec3> members;
  while (members.size() < 2000) {
    const Vec3 v(lat(rng), lat(rng), ver(rng));
    if (poly.contains(v)) members.push_back(v);
  }
  for (int i = 0; i < 100000; ++i) {
    const Vec3& a = members[static_cast<size_t>(i) % members.size()];
    const Vec3& b = members[static_cast<size_t>(i * 7919 + 1) % members.size()];
    const double t = unif(rng);
    REQUIRE(poly.contains(t * a + (1 - t) * b, 1e-12));
  }
}

TEST_CASE("Pontryagin difference", "[geometry]") {
  const HPolytope cube = Box{Vec3::Ones()}.to_hpolytope();

  const HPolytope same = pontryagin_diff(cube, VPolytope{{Eigen::VectorXd(Vec3::Zero())}});
  CHECK((same.b - cube.b).norm() == 0.0);

  const HPolytope shrunk = pontryagin_diff(cube, VPolytope::box(Vec3::Zero(), Vec3::Constant(0.25)));
  CHECK((shrunk.b - Eigen::VectorXd::Constant(6, 0.75)).norm() < 1e-15);

  // Minkowski oracle: x in P (-) Q iff x + q in P for every q in Q.
  const PhysicalParams p = fixtures::nominal_params();
  const HPolytope outer = polytope_approx_vc(p, 16, 4);
  const VPolytope inner = VPolytope::box(Vec3(0.1, -0.2, 0.3), Vec3(0.5, 0.4, 0.6));
  const HPolytope diff = pontryagin_diff(outer, inner);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> lat(-p.t_max, p.t_max);
  std::uniform_real_distribution<double> ver(-p.g, p.t_max - p.g);
  std::uniform_real_distribution<double> unif;
  int members = 0;
  for (int i = 0; i < 1000000 && members < 1000; ++i) {
    const Vec3 x(lat(rng), lat(rng), ver(rng));
    if (!diff.contains(x)) continue;
    ++members;
    for (const auto& w : inner.vertices) REQUIRE(outer.contains(x + w, 1e-12));
    for (int j = 0; j < 10; ++j) {
      const Vec3 q = Vec3(0.1, -0.2, 0.3) + Vec3(0.5, 0.4, 0.6).cwiseProduct(Vec3(2 * unif(rng) - 1, 2 * unif(rng) - 1,
                                                                                 2 * unif(rng) - 1));
      REQUIRE(outer.contains(x + q, 1e-12));
    }
  }
  CHECK(members > 100);

  // Larger subtrahend, smaller difference.
  const HPolytope smaller = pontryagin_diff(outer, VPolytope::box(Vec3::Zero(), Vec3::Constant(1.0)));
  const HPolytope larger = pontryagin_diff(outer, VPolytope::box(Vec3::Zero(), Vec3::Constant(0.5)));
  CHECK(((larger.b - smaller.b).array() >= 0.0).all());

  try {
    pontryagin_diff(cube, VPolytope::box(Vec3::Zero(), Vec3::Constant(1.5)));
    FAIL("expected EmptyDifference");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EmptyDifference);
  }
}

TEST_CASE("input ball condition", "[geometry]") {
  const PhysicalParams p = fixtures::nominal_params();
  const Mat6 pm = fixtures::nominal_q().inverse();
  const double rho = max_ball_in_vc(p);
  const double eps = rho / linalg::max_eigenvalue(Mat3(input_matrix().transpose() * pm * input_matrix()));
  CHECK(check_input_ball_condition(pm, eps, rho));
  CHECK(check_input_ball_condition(pm, 0.0, rho));
  CHECK_FALSE(check_input_ball_condition(pm, 2.0 * eps, rho));

  // Sampling oracle on the boundary of {x' P x <= eps}.
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n;
  double worst = 0.0;
  for (int i = 0; i < 100000; ++i) {
    State x;
    for (int k = 0; k < 6; ++k) x(k) = n(rng);
    x *= std::sqrt(eps / x.dot(pm * x));
    worst = std::max(worst, (input_matrix().transpose() * pm * x).squaredNorm());
  }
  CHECK(worst <= rho * (1 + 1e-12));
  CHECK(worst >= 0.9 * rho);
}
