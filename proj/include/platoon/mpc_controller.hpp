#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "platoon/qp_solver.hpp"
#include "platoon/safety_sets.hpp"
#include "platoon/vehicle_model.hpp"

namespace platoon {

/// Horizon, cost and bound parameters shared by the leader and follower
/// controllers. Input-related weights act on torques normalized by their
/// limits, which keeps the QP well scaled across the mixed units.
struct MpcParams {
  int horizon_steps = 20;  // N_p
  double d_des_m = 6.0;
  double d_min_front_m = 6.0;
  double d_min_stopbar_m = 5.0;
  double time_headway_s = 1.6;
  double v_des_m_s = 15.0;
  double v_min_m_s = 0.0;
  double v_max_m_s = 20.0;
  double torque_max_accel_Nm = 1500.0;
  double torque_max_brake_Nm = 2000.0;
  double jerk_weight = 10.0;         // alpha, on normalized input rates
  double input_weight_accel = 1e-4;  // R_a
  double input_weight_brake = 1e-4;  // R_b
  // R_0 at the PSD boundary sqrt(R_a R_b): as large as convexity allows, so
  // simultaneous accelerating and braking stays penalized.
  double input_weight_cross = 1e-4;
  int trust_horizon = 20;  // F, clamped to [0, N_p]
  double soft_weight = 1e3;
  double front_velocity_margin_m_s = 0.2;  // under-approximation of the measured speed
  bool stepped_front_decrement = false;    // growing per-step decrement variant
  int polyhedron_facets = 16;

  void validate() const;
};

/// Planned velocity trajectory broadcast over V2V; N_p + 2 samples covering
/// steps t .. t+N_p+1 of the issuing vehicle's plan.
struct VelocityForecast {
  int sender_id = -1;
  long issue_step = 0;
  std::vector<double> velocities_m_s;
};

/// Worst-case preview for a non-communicating front vehicle: start from an
/// under-approximated current speed and brake at a_max until standstill.
/// Returns horizon_steps + 1 samples. The stepped variant grows the decrement
/// by the step index instead of keeping it constant.
std::vector<double> worst_case_front_forecast(double initial_velocity_m_s,
                                              double a_max_brake_m_s2, double dt_s,
                                              int horizon_steps, bool stepped = false);

/// Shift a forecast to the current step (staleness compensation), holding the
/// last sample, and return exactly `samples` values.
std::vector<double> align_forecast(const VelocityForecast& forecast, long now_step,
                                   int samples);

struct ControllerDiagnostics {
  QpStatus status = QpStatus::Optimal;
  int iterations = 0;
  double kkt_residual = 0.0;
  double solve_time_ms = 0.0;
  double max_slack = 0.0;
  char terminal_set = '-';  // 'F' front, 'T' stop bar, '-' none
  bool used_fallback = false;
};

/// What the leader currently knows about its obstacles.
struct LeaderObstacleView {
  bool front_present = false;
  double front_velocity_m_s = 0.0;
  bool stop_required = false;  // stop decision for the nearest light
};

class LeaderMpc {
 public:
  LeaderMpc(const VehicleParams& vehicle, const MpcParams& params, const SafetyParams& safety,
            const PolyhedralFamily* family);

  /// Assemble the QP for the current state; exposed for tests. Decision
  /// variables are the stacked states and inputs with torques normalized.
  QpProblem build_qp(const VehicleState& state, const LeaderObstacleView& view,
                     long tick) const;

  std::pair<ControlInput, VelocityForecast> step(const VehicleState& state,
                                                 const LeaderObstacleView& view, long tick);

  /// Time-varying velocity reference replay, sampled at the controller rate.
  void set_velocity_reference(std::vector<double> profile_m_s);
  void set_desired_velocity(double v_des_m_s) { v_des_override_ = v_des_m_s; }

  const ControllerDiagnostics& diagnostics() const { return diag_; }
  const MpcParams& params() const { return params_; }

 private:
  double desired_velocity_at(long step) const;

  VehicleParams vehicle_;
  MpcParams params_;
  SafetyParams safety_;
  const PolyhedralFamily* family_;
  std::vector<double> vdes_profile_;
  std::optional<double> v_des_override_;
  QpWarmStart warm_;
  ControllerDiagnostics diag_;
  std::vector<ControlInput> last_plan_;
  VelocityForecast last_forecast_;
  int fallback_shift_ = 0;
};

class FollowerMpc {
 public:
  FollowerMpc(int follower_index, const VehicleParams& vehicle, const MpcParams& params,
              const SafetyParams& safety, const PolyhedralFamily* family);

  /// Forecast pointers may be null (nothing received yet): the controller
  /// falls back to a worst-case braking preview from the measured front
  /// velocity, which is the trust-horizon-zero behaviour.
  QpProblem build_qp(const VehicleState& state, const VelocityForecast* leader_forecast,
                     const VelocityForecast* front_forecast, double front_velocity_meas,
                     long tick) const;

  std::pair<ControlInput, VelocityForecast> step(const VehicleState& state,
                                                 const VelocityForecast* leader_forecast,
                                                 const VelocityForecast* front_forecast,
                                                 double front_velocity_meas, long tick);

  void set_desired_gap(double d_des_m) { d_des_override_ = d_des_m; }
  const ControllerDiagnostics& diagnostics() const { return diag_; }
  int index() const { return index_; }

 private:
  struct Previews {
    std::vector<double> leader;  // horizon+1 samples
    std::vector<double> front;
    double terminal_front_velocity = 0.0;
    int terminal_step = 0;
  };
  Previews build_previews(const VelocityForecast* leader_forecast,
                          const VelocityForecast* front_forecast, double front_velocity_meas,
                          long tick) const;

  int index_;
  VehicleParams vehicle_;
  MpcParams params_;
  SafetyParams safety_;
  const PolyhedralFamily* family_;
  std::optional<double> d_des_override_;
  QpWarmStart warm_;
  ControllerDiagnostics diag_;
  std::vector<ControlInput> last_plan_;
  VelocityForecast last_forecast_;
  int fallback_shift_ = 0;
};

}  // namespace platoon
