#pragma once

#include <Eigen/Dense>

#include "platoon/types.hpp"

namespace platoon {

/// Longitudinal model parameters identified on the test vehicles.
struct VehicleParams {
  double mass_kg = 2044.0;
  double wheel_radius_m = 0.3074;
  double friction_const_N = 339.1329;       ///< constant friction term
  double friction_quad_N_per_m2s2 = 0.77;   ///< quadratic (drag) friction term
  double accel_time_const_s = 0.7868;       ///< accelerating torque actuation lag
  double sample_time_s = 0.1;

  /// Throws std::invalid_argument unless every parameter is strictly positive.
  void validate() const;
};

/// Per-vehicle longitudinal state. Leaders carry 5 states, followers 6
/// (the extra one is the accumulated distance to the platoon leader).
struct VehicleState {
  double position_m = 0.0;        ///< front-bumper arc length along the corridor
  double headway_m = 0.0;         ///< bumper-to-bumper gap to the vehicle ahead
  double dist_to_stopbar_m = 0.0; ///< distance to the nearest upcoming stop bar
  double dist_to_leader_m = 0.0;  ///< followers only: sum of headways up the chain
  double velocity_m_s = 0.0;
  double accel_torque_Nm = 0.0;   ///< actuated wheel torque (lagged state)

  Eigen::VectorXd to_vector(VehicleRole role) const;
  static VehicleState from_vector(const Eigen::VectorXd& x, VehicleRole role);
};

struct ControlInput {
  double accel_torque_ref_Nm = 0.0;
  double brake_torque_Nm = 0.0;
};

/// State-vector indices. Velocity / torque positions depend on the role.
namespace state_index {
constexpr int kPosition = 0;
constexpr int kHeadway = 1;
constexpr int kStopbar = 2;
constexpr int kLeaderDist = 3;  // followers only
inline int velocity(VehicleRole role) { return role == VehicleRole::Leader ? 3 : 4; }
inline int torque(VehicleRole role) { return role == VehicleRole::Leader ? 4 : 5; }
}  // namespace state_index

inline int state_dim(VehicleRole role) { return role == VehicleRole::Leader ? 5 : 6; }
inline int disturbance_dim(VehicleRole role) { return role == VehicleRole::Leader ? 1 : 2; }
constexpr int kInputDim = 2;

/// Linear(ized) model x+ = A x + B u + E w + c. The affine offset makes the
/// model exact at the nominal velocity, so there is no bias when cruising at
/// the linearization point.
struct LinearModel {
  Eigen::MatrixXd state_matrix;        // A
  Eigen::MatrixXd input_matrix;        // B
  Eigen::MatrixXd disturbance_matrix;  // E
  Eigen::VectorXd affine_offset;       // c
  double nominal_velocity_m_s = 0.0;
  VehicleRole role = VehicleRole::Leader;
  bool discrete = false;
  double dt_s = 0.0;
};

/// Quadratic friction force, beta + gamma v^2. Throws std::domain_error for
/// negative velocity.
double friction_force(const VehicleParams& params, double velocity_m_s);

/// Continuous-time state derivative of the full nonlinear model.
/// Disturbance is [v_front] for the leader and [v_leader; v_front] for a
/// follower.
Eigen::VectorXd nonlinear_derivative(const VehicleParams& params, VehicleRole role,
                                     const Eigen::VectorXd& state,
                                     const Eigen::Vector2d& input,
                                     const Eigen::VectorXd& disturbance_velocities);

/// Jacobian linearization about a nominal velocity. The only nonlinear entry
/// is the quadratic friction term; its residual is carried in the affine
/// offset. Valid for nominal velocities in [0, max_velocity_m_s].
LinearModel linearize(const VehicleParams& params, double nominal_velocity_m_s,
                      VehicleRole role, double max_velocity_m_s = 20.0);

/// Exact zero-order-hold discretization of a continuous model (inputs,
/// disturbances and affine offset held constant over the step).
LinearModel discretize(const LinearModel& continuous, double dt_s);

/// Ground-truth integrator: classic RK4 over `substeps` sub-intervals with the
/// velocity clamped at zero (no reverse motion; braking has no effect at rest).
Eigen::VectorXd plant_step(const VehicleParams& params, VehicleRole role,
                           const Eigen::VectorXd& state, const Eigen::Vector2d& input,
                           const Eigen::VectorXd& disturbance_velocities, double dt_s,
                           int substeps = 10);

/// Accelerating torque that balances friction at the given speed.
double cruise_torque_Nm(const VehicleParams& params, double velocity_m_s);

}  // namespace platoon
