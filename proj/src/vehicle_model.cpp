#include "platoon/vehicle_model.hpp"

#include <cmath>
#include <stdexcept>

#include <unsupported/Eigen/MatrixFunctions>

namespace platoon {

namespace {

void check_positive(double value, const char* name) {
  if (!(value > 0.0)) {
    throw std::invalid_argument(std::string("VehicleParams: ") + name +
                                " must be strictly positive");
  }
}

}  // namespace

void VehicleParams::validate() const {
  check_positive(mass_kg, "mass_kg");
  check_positive(wheel_radius_m, "wheel_radius_m");
  check_positive(friction_const_N, "friction_const_N");
  check_positive(friction_quad_N_per_m2s2, "friction_quad_N_per_m2s2");
  check_positive(accel_time_const_s, "accel_time_const_s");
  check_positive(sample_time_s, "sample_time_s");
}

Eigen::VectorXd VehicleState::to_vector(VehicleRole role) const {
  Eigen::VectorXd x(state_dim(role));
  x(state_index::kPosition) = position_m;
  x(state_index::kHeadway) = headway_m;
  x(state_index::kStopbar) = dist_to_stopbar_m;
  if (role == VehicleRole::Follower) x(state_index::kLeaderDist) = dist_to_leader_m;
  x(state_index::velocity(role)) = velocity_m_s;
  x(state_index::torque(role)) = accel_torque_Nm;
  return x;
}

VehicleState VehicleState::from_vector(const Eigen::VectorXd& x, VehicleRole role) {
  VehicleState s;
  s.position_m = x(state_index::kPosition);
  s.headway_m = x(state_index::kHeadway);
  s.dist_to_stopbar_m = x(state_index::kStopbar);
  if (role == VehicleRole::Follower) s.dist_to_leader_m = x(state_index::kLeaderDist);
  s.velocity_m_s = x(state_index::velocity(role));
  s.accel_torque_Nm = x(state_index::torque(role));
  return s;
}

double friction_force(const VehicleParams& params, double velocity_m_s) {
  if (velocity_m_s < 0.0) {
    throw std::domain_error("friction_force: negative velocity");
  }
  return params.friction_const_N +
         params.friction_quad_N_per_m2s2 * velocity_m_s * velocity_m_s;
}

double cruise_torque_Nm(const VehicleParams& params, double velocity_m_s) {
  return friction_force(params, velocity_m_s) * params.wheel_radius_m;
}

Eigen::VectorXd nonlinear_derivative(const VehicleParams& params, VehicleRole role,
                                     const Eigen::VectorXd& state,
                                     const Eigen::Vector2d& input,
                                     const Eigen::VectorXd& disturbance_velocities) {
  const int n = state_dim(role);
  if (state.size() != n) throw std::invalid_argument("nonlinear_derivative: bad state size");
  if (disturbance_velocities.size() != disturbance_dim(role)) {
    throw std::invalid_argument("nonlinear_derivative: bad disturbance size");
  }

  const int iv = state_index::velocity(role);
  const int it = state_index::torque(role);
  const double v = state(iv);
  const double torque = state(it);
  // Front vehicle velocity: the single disturbance for the leader, the second
  // entry for a follower (the first is the leader velocity).
  const double v_front = role == VehicleRole::Leader ? disturbance_velocities(0)
                                                     : disturbance_velocities(1);

  Eigen::VectorXd dx = Eigen::VectorXd::Zero(n);
  dx(state_index::kPosition) = v;
  dx(state_index::kHeadway) = v_front - v;
  dx(state_index::kStopbar) = -v;
  if (role == VehicleRole::Follower) {
    dx(state_index::kLeaderDist) = disturbance_velocities(0) - v;
  }
  dx(iv) = ((torque - input(1)) / params.wheel_radius_m - friction_force(params, v)) /
           params.mass_kg;
  dx(it) = (input(0) - torque) / params.accel_time_const_s;
  return dx;
}

LinearModel linearize(const VehicleParams& params, double nominal_velocity_m_s,
                      VehicleRole role, double max_velocity_m_s) {
  if (nominal_velocity_m_s < 0.0 || nominal_velocity_m_s > max_velocity_m_s) {
    throw std::domain_error("linearize: nominal velocity outside [0, v_max]");
  }
  const int n = state_dim(role);
  const int iv = state_index::velocity(role);
  const int it = state_index::torque(role);
  const double m = params.mass_kg;
  const double rw = params.wheel_radius_m;
  const double gamma = params.friction_quad_N_per_m2s2;
  const double v0 = nominal_velocity_m_s;

  LinearModel model;
  model.role = role;
  model.nominal_velocity_m_s = v0;
  model.state_matrix = Eigen::MatrixXd::Zero(n, n);
  model.input_matrix = Eigen::MatrixXd::Zero(n, kInputDim);
  model.disturbance_matrix = Eigen::MatrixXd::Zero(n, disturbance_dim(role));
  model.affine_offset = Eigen::VectorXd::Zero(n);

  Eigen::MatrixXd& a = model.state_matrix;
  a(state_index::kPosition, iv) = 1.0;
  a(state_index::kHeadway, iv) = -1.0;
  a(state_index::kStopbar, iv) = -1.0;
  a(iv, iv) = -2.0 * gamma * v0 / m;
  a(iv, it) = 1.0 / (m * rw);
  a(it, it) = -1.0 / params.accel_time_const_s;

  model.input_matrix(iv, 1) = -1.0 / (m * rw);
  model.input_matrix(it, 0) = 1.0 / params.accel_time_const_s;

  if (role == VehicleRole::Leader) {
    model.disturbance_matrix(state_index::kHeadway, 0) = 1.0;  // v_front
  } else {
    a(state_index::kLeaderDist, iv) = -1.0;
    model.disturbance_matrix(state_index::kLeaderDist, 0) = 1.0;  // v_leader
    model.disturbance_matrix(state_index::kHeadway, 1) = 1.0;     // v_front
  }

  // Residual of the quadratic friction term: -gamma v^2 linearized at v0 is
  // gamma v0^2 - 2 gamma v0 v, so the constant part (minus beta) goes here.
  model.affine_offset(iv) = (gamma * v0 * v0 - params.friction_const_N) / m;
  return model;
}

LinearModel discretize(const LinearModel& continuous, double dt_s) {
  if (continuous.discrete) throw std::invalid_argument("discretize: model already discrete");
  if (!(dt_s > 0.0)) throw std::invalid_argument("discretize: dt must be positive");

  const int n = static_cast<int>(continuous.state_matrix.rows());
  const int mu = static_cast<int>(continuous.input_matrix.cols());
  const int mw = static_cast<int>(continuous.disturbance_matrix.cols());
  const int aug = n + mu + mw + 1;

  // ZOH: exponentiate the augmented system [A [B E c]; 0 0].
  Eigen::MatrixXd block = Eigen::MatrixXd::Zero(aug, aug);
  block.topLeftCorner(n, n) = continuous.state_matrix;
  block.block(0, n, n, mu) = continuous.input_matrix;
  block.block(0, n + mu, n, mw) = continuous.disturbance_matrix;
  block.block(0, n + mu + mw, n, 1) = continuous.affine_offset;
  const Eigen::MatrixXd expm = (block * dt_s).exp();

  LinearModel model = continuous;
  model.state_matrix = expm.topLeftCorner(n, n);
  model.input_matrix = expm.block(0, n, n, mu);
  model.disturbance_matrix = expm.block(0, n + mu, n, mw);
  model.affine_offset = expm.block(0, n + mu + mw, n, 1);
  model.discrete = true;
  model.dt_s = dt_s;
  return model;
}

Eigen::VectorXd plant_step(const VehicleParams& params, VehicleRole role,
                           const Eigen::VectorXd& state, const Eigen::Vector2d& input,
                           const Eigen::VectorXd& disturbance_velocities, double dt_s,
                           int substeps) {
  if (!(dt_s > 0.0)) throw std::invalid_argument("plant_step: dt must be positive");
  if (substeps < 1) throw std::invalid_argument("plant_step: substeps must be >= 1");

  const int iv = state_index::velocity(role);
  const int it = state_index::torque(role);

  // Derivative with the standstill clamp folded in so every RK4 stage sees a
  // physically admissible state.
  const auto deriv = [&](Eigen::VectorXd x) {
    x(iv) = std::max(0.0, x(iv));
    x(it) = std::max(0.0, x(it));
    Eigen::VectorXd dx = nonlinear_derivative(params, role, x, input, disturbance_velocities);
    if (x(iv) <= 0.0 && dx(iv) < 0.0) dx(iv) = 0.0;
    return dx;
  };

  Eigen::VectorXd x = state;
  const double h = dt_s / substeps;
  for (int step = 0; step < substeps; ++step) {
    const Eigen::VectorXd k1 = deriv(x);
    const Eigen::VectorXd k2 = deriv(x + 0.5 * h * k1);
    const Eigen::VectorXd k3 = deriv(x + 0.5 * h * k2);
    const Eigen::VectorXd k4 = deriv(x + h * k3);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    x(iv) = std::max(0.0, x(iv));
    x(it) = std::max(0.0, x(it));
  }
  return x;
}

}  // namespace platoon
