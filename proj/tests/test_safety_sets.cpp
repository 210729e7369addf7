#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <random>

#include "platoon/safety_sets.hpp"

using namespace platoon;

namespace {

SafetyParams defaults() { return SafetyParams{}; }

// Smallest distance the polyhedron admits at a given velocity, by bisection.
double poly_boundary(const PolyhedralSet& set, double velocity) {
  double lo = 0.0, hi = 1000.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (set.contains(mid, velocity)) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

}  // namespace

TEST_CASE("front safe set closed form") {
  const SafetyParams p = defaults();
  const double exact = 400.0 / (2 * p.a_min_brake_m_s2) -
                       196.0 / (2 * p.a_max_brake_m_s2) + p.d_min_front_m;
  CHECK(exact == doctest::Approx(49.251).epsilon(1e-4));
  CHECK(in_front_set(50.0, 20.0, 14.0, p));
  CHECK_FALSE(in_front_set(49.0, 20.0, 14.0, p));

  SUBCASE("stopped ego needs only the margin") {
    CHECK(in_front_set(6.0, 0.0, 17.0, p));
    CHECK_FALSE(in_front_set(5.99, 0.0, 17.0, p));
  }

  SUBCASE("matched speeds and brake rates reduce to the margin") {
    SafetyParams q = p;
    q.a_max_brake_m_s2 = q.a_min_brake_m_s2;
    CHECK(in_front_set(q.d_min_front_m, 12.0, 12.0, q));
    CHECK_FALSE(in_front_set(q.d_min_front_m - 1e-9, 12.0, 12.0, q));
  }
}

TEST_CASE("stop-bar safe set anchors") {
  const SafetyParams p = defaults();
  const auto boundary = [&](double v) {
    return v * v / (2 * p.a_min_brake_m_s2) + p.d_min_stopbar_m;
  };
  CHECK(std::abs(boundary(16.0) - 45.0) < 1e-6);
  CHECK(std::abs(boundary(6.4) - 11.4) < 1e-6);
  CHECK(std::abs(boundary(0.0) - 5.0) < 1e-6);
  CHECK(in_stopbar_set(45.0, 16.0, p));
  CHECK_FALSE(in_stopbar_set(44.999, 16.0, p));
}

TEST_CASE("priority obstacle selection") {
  const SafetyParams p = defaults();
  CHECK(priority_obstacle(30.0, 10.0, 50.0, true, true, p) == PriorityObstacle::FrontVehicle);
  CHECK(priority_obstacle(45.0, 10.0, 50.0, true, true, p) == PriorityObstacle::Intersection);
  CHECK(priority_obstacle(30.0, 10.0, 50.0, false, true, p) == PriorityObstacle::FrontVehicle);
  CHECK(priority_obstacle(30.0, 10.0, 50.0, true, false, p) == PriorityObstacle::Intersection);
  CHECK(priority_obstacle(30.0, 10.0, 50.0, false, false, p) == PriorityObstacle::None);

  // Numbers behind the first two cases.
  CHECK(30.0 + 100.0 / (2 * p.a_max_brake_m_s2) == doctest::Approx(39.8209).epsilon(1e-4));
  CHECK(45.0 + 100.0 / (2 * p.a_max_brake_m_s2) == doctest::Approx(54.8209).epsilon(1e-4));
}

TEST_CASE("priority containment holds on randomized samples") {
  const SafetyParams p = defaults();
  std::mt19937_64 rng(12345);
  std::uniform_real_distribution<double> hd(6.0, 150.0);
  std::uniform_real_distribution<double> vd(0.0, 20.0);
  std::uniform_real_distribution<double> dd(5.0, 150.0);
  int violations = 0;
  for (int i = 0; i < 100000; ++i) {
    if (!check_proposition2(hd(rng), vd(rng), vd(rng), dd(rng), p)) ++violations;
  }
  CHECK(violations == 0);

  SUBCASE("boundary of the priority condition") {
    const double vf = 10.0;
    const double h0 = 30.0;
    const double dtl = h0 + vf * vf / (2 * p.a_max_brake_m_s2);
    CHECK(check_proposition2(h0, 14.0, vf, dtl, p));
    CHECK(check_proposition2(h0, 0.0, vf, dtl, p));
  }

  SUBCASE("zero front velocity reduces the condition to h <= dtl") {
    CHECK(front_priority_condition(30.0, 0.0, 30.0, p));
    CHECK(front_priority_condition(29.0, 0.0, 30.0, p));
    CHECK_FALSE(front_priority_condition(31.0, 0.0, 30.0, p));
  }
}

TEST_CASE("exact sets are monotone in distance and velocity") {
  const SafetyParams p = defaults();
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> hd(0.0, 150.0);
  std::uniform_real_distribution<double> vd(0.0, 20.0);
  for (int i = 0; i < 20000; ++i) {
    const double h = hd(rng), v = vd(rng), vf = vd(rng);
    if (in_front_set(h, v, vf, p)) {
      CHECK(in_front_set(h + 1.0, v, vf, p));
      if (v >= 0.5) CHECK(in_front_set(h, v - 0.5, vf, p));
    }
    const double d = hd(rng);
    if (in_stopbar_set(d, v, p)) {
      CHECK(in_stopbar_set(d + 1.0, v, p));
      if (v >= 0.5) CHECK(in_stopbar_set(d, v - 0.5, p));
    }
  }
}

TEST_CASE("polyhedral sets sit inside the exact sets") {
  const SafetyParams p = defaults();
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> hd(0.0, 150.0);
  std::uniform_real_distribution<double> vd(0.0, 20.0);

  for (double vf : {0.0, 7.5, 14.0, 20.0}) {
    const PolyhedralSet set = polyhedral_front_set(vf, p, 16);
    int members = 0;
    for (int i = 0; i < 100000; ++i) {
      const double h = hd(rng), v = vd(rng);
      if (set.contains(h, v)) {
        ++members;
        CHECK(in_front_set(h, v, vf, p));
      }
    }
    CHECK(members > 1000);  // the sample actually exercises the set
  }

  const PolyhedralSet stopbar = polyhedral_stopbar_set(p, 16);
  for (int i = 0; i < 100000; ++i) {
    const double d = hd(rng), v = vd(rng);
    if (stopbar.contains(d, v)) CHECK(in_stopbar_set(d, v, p));
  }
}

TEST_CASE("polyhedral boundary converges to the closed form from above") {
  const SafetyParams p = defaults();
  const double exact = 400.0 / (2 * p.a_min_brake_m_s2) -
                       196.0 / (2 * p.a_max_brake_m_s2) + p.d_min_front_m;

  // The velocity grid ends exactly at v_max, so the facet there touches the
  // parabola; at interior velocities the boundary is conservative and
  // tightens as facets are added.
  const double b16 = poly_boundary(polyhedral_front_set(14.0, p, 16), 20.0);
  CHECK(b16 == doctest::Approx(exact).epsilon(1e-7));

  const double mid16 = poly_boundary(polyhedral_front_set(14.0, p, 16), 19.4);
  const double mid64 = poly_boundary(polyhedral_front_set(14.0, p, 64), 19.4);
  const double mid256 = poly_boundary(polyhedral_front_set(14.0, p, 256), 19.4);
  const double exact_mid = 19.4 * 19.4 / (2 * p.a_min_brake_m_s2) -
                           196.0 / (2 * p.a_max_brake_m_s2) + p.d_min_front_m;
  CHECK(mid16 >= exact_mid - 1e-9);
  CHECK(mid64 >= exact_mid - 1e-9);
  CHECK(mid256 >= exact_mid - 1e-9);
  CHECK(mid64 <= mid16 + 1e-9);
  CHECK(mid256 - exact_mid < 5e-3);

  CHECK_THROWS_AS(polyhedral_front_set(14.0, p, 1), std::invalid_argument);
}

TEST_CASE("family lookup rounds the front velocity down") {
  const SafetyParams p = defaults();
  const PolyhedralFamily family = PolyhedralFamily::build(p, 16, 0.5, 20.0);
  CHECK(family.front_set_for(14.3).grid_front_velocity_m_s == doctest::Approx(14.0));
  CHECK(family.front_set_for(14.5).grid_front_velocity_m_s == doctest::Approx(14.5));
  CHECK(family.front_set_for(-1.0).grid_front_velocity_m_s == doctest::Approx(0.0));
  CHECK(family.front_set_for(99.0).grid_front_velocity_m_s == doctest::Approx(20.0));

  // Rounding down only shrinks the set, so membership stays conservative.
  const PolyhedralSet& rounded = family.front_set_for(14.3);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> hd(0.0, 120.0);
  std::uniform_real_distribution<double> vd(0.0, 20.0);
  for (int i = 0; i < 20000; ++i) {
    const double h = hd(rng), v = vd(rng);
    if (rounded.contains(h, v)) CHECK(in_front_set(h, v, 14.3, p));
  }
}

TEST_CASE("family serialization round trip") {
  const SafetyParams p = defaults();
  const PolyhedralFamily family = PolyhedralFamily::build(p, 16, 0.5, 20.0);
  const std::string path = "family_roundtrip.json";
  family.save(path);
  const PolyhedralFamily loaded = PolyhedralFamily::load(path);
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> hd(0.0, 120.0);
  std::uniform_real_distribution<double> vd(0.0, 20.0);
  for (int i = 0; i < 5000; ++i) {
    const double h = hd(rng), v = vd(rng), vf = vd(rng);
    CHECK(family.front_set_for(vf).contains(h, v) == loaded.front_set_for(vf).contains(h, v));
    CHECK(family.stopbar_set().contains(h, v) == loaded.stopbar_set().contains(h, v));
  }
  std::remove(path.c_str());
}

TEST_CASE("stop decision at the light") {
  const SafetyParams p = defaults();

  SUBCASE("green clearance check, boundary proceeds") {
    CHECK(should_stop_at_light(15.0, 30.0, 100.0, Phase::Green, 10.0, p) ==
          StopDecision::Proceed);
    CHECK(should_stop_at_light(15.0, 30.0, 101.0, Phase::Green, 10.0, p) != StopDecision::Proceed);
  }

  SUBCASE("stop indicated but infeasible means running through") {
    // 15^2 / 6.4 = 35.16 > 35 - 5
    CHECK(should_stop_at_light(15.0, 30.0, 35.0, Phase::Green, 1.0, p) == StopDecision::MustRun);
  }

  SUBCASE("feasibility boundary is inclusive: stop") {
    // 8^2 / 6.4 = 10 == 15 - 5
    CHECK(should_stop_at_light(8.0, 0.0, 15.0, Phase::Yellow, 3.0, p) == StopDecision::Stop);
  }

  SUBCASE("low speed go rule") {
    CHECK(should_stop_at_light(0.0, 30.0, 100.0, Phase::Green, p.t_min_s, p) ==
          StopDecision::Proceed);
    CHECK(should_stop_at_light(0.0, 30.0, 100.0, Phase::Green, p.t_min_s - 0.1, p) ==
          StopDecision::Stop);
  }

  SUBCASE("red always stops") {
    CHECK(should_stop_at_light(15.0, 30.0, 200.0, Phase::Red, 20.0, p) == StopDecision::Stop);
    CHECK(should_stop_at_light(15.0, 30.0, 6.0, Phase::Red, 20.0, p) == StopDecision::Stop);
  }

  SUBCASE("yellow with room stops") {
    CHECK(should_stop_at_light(10.0, 0.0, 40.0, Phase::Yellow, 2.0, p) == StopDecision::Stop);
  }

  CHECK_THROWS_AS(should_stop_at_light(5.0, 0.0, 10.0, Phase::Green, -1.0, p), std::domain_error);
}

TEST_CASE("safety parameter validation") {
  SafetyParams p = defaults();
  p.a_min_brake_m_s2 = 6.0;  // exceeds a_max
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}
