#include <doctest.h>

#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>

#include "platoon/vehicle_model.hpp"

using namespace platoon;

namespace {

VehicleParams table_params() { return VehicleParams{}; }

Eigen::VectorXd leader_state(double p, double h, double dtl, double v, double ta) {
  VehicleState s;
  s.position_m = p;
  s.headway_m = h;
  s.dist_to_stopbar_m = dtl;
  s.velocity_m_s = v;
  s.accel_torque_Nm = ta;
  return s.to_vector(VehicleRole::Leader);
}

}  // namespace

TEST_CASE("friction force matches the identified model") {
  const VehicleParams p = table_params();
  CHECK(friction_force(p, 0.0) == doctest::Approx(339.1329).epsilon(1e-12));
  CHECK(friction_force(p, 15.0) == doctest::Approx(512.3829).epsilon(1e-12));

  VehicleParams no_drag = p;
  no_drag.friction_quad_N_per_m2s2 = 1e-300;  // quadratic term removed
  CHECK(friction_force(no_drag, 7.3) == doctest::Approx(p.friction_const_N));

  CHECK_THROWS_AS(friction_force(p, -0.1), std::domain_error);

  double prev = friction_force(p, 0.0);
  for (double v = 0.5; v <= 25.0; v += 0.5) {
    const double f = friction_force(p, v);
    CHECK(f >= prev);
    prev = f;
  }
}

TEST_CASE("nonlinear derivative implements the longitudinal model") {
  const VehicleParams p = table_params();

  SUBCASE("stationary vehicle, zero inputs") {
    const Eigen::VectorXd dx = nonlinear_derivative(
        p, VehicleRole::Leader, leader_state(0, 20, 50, 0, 0), Eigen::Vector2d::Zero(),
        Eigen::VectorXd::Zero(1));
    CHECK(dx(state_index::kPosition) == 0.0);
    CHECK(dx(state_index::velocity(VehicleRole::Leader)) ==
          doctest::Approx(-p.friction_const_N / p.mass_kg).epsilon(1e-12));
    CHECK(-p.friction_const_N / p.mass_kg == doctest::Approx(-0.1659).epsilon(1e-3));
  }

  SUBCASE("steady cruise torque balances friction at 15 m/s") {
    const double torque = cruise_torque_Nm(p, 15.0);
    CHECK(torque == doctest::Approx(157.51).epsilon(1e-3));
    const Eigen::VectorXd dx = nonlinear_derivative(
        p, VehicleRole::Leader, leader_state(0, 30, 100, 15.0, torque),
        Eigen::Vector2d(torque, 0.0), Eigen::VectorXd::Constant(1, 15.0));
    CHECK(std::abs(dx(state_index::velocity(VehicleRole::Leader))) < 1e-12);
  }

  SUBCASE("headway rate is the velocity difference") {
    const Eigen::VectorXd dx = nonlinear_derivative(
        p, VehicleRole::Leader, leader_state(0, 30, 100, 8.0, 0),
        Eigen::Vector2d::Zero(), Eigen::VectorXd::Constant(1, 10.0));
    CHECK(dx(state_index::kHeadway) == doctest::Approx(2.0));
  }

  SUBCASE("follower carries the leader-distance state") {
    VehicleState s;
    s.velocity_m_s = 5.0;
    s.dist_to_leader_m = 12.0;
    Eigen::VectorXd w(2);
    w << 9.0, 7.0;  // leader, front
    const Eigen::VectorXd dx = nonlinear_derivative(p, VehicleRole::Follower,
                                                    s.to_vector(VehicleRole::Follower),
                                                    Eigen::Vector2d::Zero(), w);
    CHECK(dx(state_index::kLeaderDist) == doctest::Approx(4.0));  // v_L - v
    CHECK(dx(state_index::kHeadway) == doctest::Approx(2.0));     // v_front - v
  }
}

TEST_CASE("linearization Jacobian and affine residual") {
  const VehicleParams p = table_params();

  const LinearModel at_zero = linearize(p, 0.0, VehicleRole::Leader);
  const int iv = state_index::velocity(VehicleRole::Leader);
  CHECK(at_zero.state_matrix(iv, iv) == 0.0);
  CHECK(at_zero.affine_offset(iv) ==
        doctest::Approx(-p.friction_const_N / p.mass_kg).epsilon(1e-12));

  const LinearModel at_15 = linearize(p, 15.0, VehicleRole::Leader);
  CHECK(at_15.state_matrix(iv, iv) == doctest::Approx(-0.011301).epsilon(1e-4));

  const int it = state_index::torque(VehicleRole::Leader);
  for (double v0 : {0.0, 7.0, 15.0, 20.0}) {
    const LinearModel m = linearize(p, v0, VehicleRole::Leader);
    CHECK(m.state_matrix(it, it) == doctest::Approx(-1.2710).epsilon(1e-4));
  }

  CHECK_THROWS_AS(linearize(p, -0.5, VehicleRole::Leader), std::domain_error);
  CHECK_THROWS_AS(linearize(p, 25.0, VehicleRole::Leader), std::domain_error);

  SUBCASE("linear model is exact at the linearization point") {
    for (double v0 : {0.0, 6.0, 13.0}) {
      const LinearModel m = linearize(p, v0, VehicleRole::Leader);
      const Eigen::VectorXd x = leader_state(5, 30, 80, v0, 200.0);
      const Eigen::Vector2d u(300.0, 25.0);
      const Eigen::VectorXd w = Eigen::VectorXd::Constant(1, 9.0);
      const Eigen::VectorXd lin =
          m.state_matrix * x + m.input_matrix * u + m.disturbance_matrix * w + m.affine_offset;
      const Eigen::VectorXd nl = nonlinear_derivative(p, VehicleRole::Leader, x, u, w);
      CHECK((lin - nl).lpNorm<Eigen::Infinity>() < 1e-12);
    }
  }
}

TEST_CASE("zero-order-hold discretization") {
  const VehicleParams p = table_params();
  const int iv = state_index::velocity(VehicleRole::Leader);
  const int it = state_index::torque(VehicleRole::Leader);

  const LinearModel cont = linearize(p, 0.0, VehicleRole::Leader);
  const LinearModel disc = discretize(cont, 0.1);
  CHECK(disc.state_matrix(it, it) ==
        doctest::Approx(std::exp(-0.1 / p.accel_time_const_s)).epsilon(1e-12));
  CHECK(disc.state_matrix(it, it) == doctest::Approx(0.88065).epsilon(1e-4));

  // At v0 = 0 the velocity row has no damping, so the kinematic rows
  // integrate exactly with gain dt.
  CHECK(disc.state_matrix(state_index::kPosition, iv) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(disc.state_matrix(state_index::kHeadway, iv) == doctest::Approx(-0.1).epsilon(1e-12));
  CHECK(disc.state_matrix(state_index::kStopbar, iv) == doctest::Approx(-0.1).epsilon(1e-12));

  CHECK_THROWS_AS(discretize(cont, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(discretize(disc, 0.1), std::invalid_argument);

  SUBCASE("matches a fine RK4 rollout of the nonlinear model over 1 s") {
    // Constant torque command from rest; the two solutions stay within
    // 1e-3 m/s because the trajectory hugs the linearization point.
    const Eigen::Vector2d u(500.0, 0.0);
    const Eigen::VectorXd w = Eigen::VectorXd::Zero(1);
    Eigen::VectorXd x_lin = leader_state(0, 50, 100, 0, 0);
    Eigen::VectorXd x_nl = x_lin;
    for (int k = 0; k < 10; ++k) {
      x_lin = disc.state_matrix * x_lin + disc.input_matrix * u + disc.disturbance_matrix * w +
              disc.affine_offset;
      x_nl = plant_step(p, VehicleRole::Leader, x_nl, u, w, 0.1, 100);  // 1 ms substeps
    }
    CHECK(std::abs(x_lin(iv) - x_nl(iv)) < 1e-3);
  }
}

TEST_CASE("one-step fidelity at the linearization point") {
  // Discrete model vs 1 ms-substep RK4 for nominal velocities across the range.
  const VehicleParams p = table_params();
  const int iv = state_index::velocity(VehicleRole::Leader);
  for (double v0 : {0.0, 5.0, 10.0, 15.0, 20.0}) {
    const LinearModel disc = discretize(linearize(p, v0, VehicleRole::Leader), 0.1);
    const double ta = cruise_torque_Nm(p, v0);
    const Eigen::VectorXd x0 = leader_state(0, 40, 120, v0, ta);
    const Eigen::Vector2d u(ta + 300.0, 0.0);
    const Eigen::VectorXd w = Eigen::VectorXd::Constant(1, v0);
    const Eigen::VectorXd x_lin = disc.state_matrix * x0 + disc.input_matrix * u +
                                  disc.disturbance_matrix * w + disc.affine_offset;
    const Eigen::VectorXd x_nl = plant_step(p, VehicleRole::Leader, x0, u, w, 0.1, 100);
    CHECK(std::abs(x_lin(iv) - x_nl(iv)) < 1e-3);
    const double rel = (x_lin - x_nl).norm() / std::max(1.0, x_nl.norm());
    CHECK(rel < 1e-4);
  }
}

TEST_CASE("discrete dynamics stay dissipative across the velocity range") {
  const VehicleParams p = table_params();
  for (VehicleRole role : {VehicleRole::Leader, VehicleRole::Follower}) {
    for (double v0 = 0.0; v0 <= 20.0; v0 += 1.0) {
      const LinearModel disc = discretize(linearize(p, v0, role), 0.1);
      const Eigen::VectorXcd eig = disc.state_matrix.eigenvalues();
      double rho = 0.0;
      for (int i = 0; i < eig.size(); ++i) rho = std::max(rho, std::abs(eig(i)));
      CHECK(rho <= 1.0 + 1e-9);
    }
  }
}

TEST_CASE("plant integrator clamps at standstill") {
  const VehicleParams p = table_params();
  const int iv = state_index::velocity(VehicleRole::Leader);
  const int it = state_index::torque(VehicleRole::Leader);
  const Eigen::VectorXd w = Eigen::VectorXd::Zero(1);

  SUBCASE("no propulsion keeps the vehicle at rest") {
    Eigen::VectorXd x = leader_state(0, 20, 50, 0, 0);
    for (int k = 0; k < 20; ++k) x = plant_step(p, VehicleRole::Leader, x, Eigen::Vector2d::Zero(), w, 0.1);
    CHECK(x(iv) == 0.0);
    CHECK(x(state_index::kPosition) == 0.0);
  }

  SUBCASE("hard braking stops and stays stopped") {
    Eigen::VectorXd x = leader_state(0, 20, 50, 5.0, 0);
    const Eigen::Vector2d brake(0.0, 2000.0);
    for (int k = 0; k < 50; ++k) {
      x = plant_step(p, VehicleRole::Leader, x, brake, w, 0.1);
      CHECK(x(iv) >= 0.0);
      CHECK(x(it) >= 0.0);
    }
    CHECK(x(iv) == 0.0);
  }

  SUBCASE("velocity and torque stay nonnegative under random inputs") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> torque(0.0, 2000.0);
    Eigen::VectorXd x = leader_state(0, 20, 50, 3.0, 100.0);
    for (int k = 0; k < 200; ++k) {
      const Eigen::Vector2d u(torque(rng), torque(rng));
      x = plant_step(p, VehicleRole::Leader, x, u, w, 0.1);
      CHECK(x(iv) >= 0.0);
      CHECK(x(it) >= 0.0);
    }
  }
}

TEST_CASE("vehicle state vector round trip") {
  VehicleState s;
  s.position_m = 1.5;
  s.headway_m = 7.0;
  s.dist_to_stopbar_m = 42.0;
  s.dist_to_leader_m = 13.0;
  s.velocity_m_s = 9.0;
  s.accel_torque_Nm = 321.0;
  for (VehicleRole role : {VehicleRole::Leader, VehicleRole::Follower}) {
    const VehicleState back = VehicleState::from_vector(s.to_vector(role), role);
    CHECK(back.position_m == s.position_m);
    CHECK(back.headway_m == s.headway_m);
    CHECK(back.velocity_m_s == s.velocity_m_s);
    CHECK(back.accel_torque_Nm == s.accel_torque_Nm);
    if (role == VehicleRole::Follower) CHECK(back.dist_to_leader_m == s.dist_to_leader_m);
  }
}

TEST_CASE("parameter validation rejects nonpositive entries") {
  VehicleParams p = table_params();
  p.mass_kg = 0.0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}
