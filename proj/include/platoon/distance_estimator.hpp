#pragma once

#include <vector>

namespace platoon {

enum class EstimateMethod { Gps, RadarChain };

/// One GPS fix modelled as arc length along the corridor.
struct GpsFix {
  double position_m = 0.0;
  double noise_std_m = 3.0;
};

/// Estimate of a follower's distance to the platoon leader.
struct LeaderDistanceEstimate {
  double s_hat_m = 0.0;
  double variance_m2 = 0.0;
  EstimateMethod method = EstimateMethod::Gps;
  bool clamped = false;  ///< raw estimate was negative and got clamped to zero
};

/// GPS method: center-to-center distance to the leader minus the vehicle
/// lengths in between. `vehicle_index` is the follower index i >= 1.
LeaderDistanceEstimate estimate_s_gps(double center_distance_m, int vehicle_index,
                                      double vehicle_length_m, double noise_std_m = 3.0);

/// Radar-chain method: sum of the shared radar headways h_1..h_i. Per-link
/// variances add.
LeaderDistanceEstimate estimate_s_radar_chain(const std::vector<double>& headways_m,
                                              double per_radar_std_m = 0.1);

/// Scalar constant-velocity Kalman step: predict with s_dot = v_leader - v_ego,
/// then update with the new measurement. The posterior variance never exceeds
/// the measurement variance.
LeaderDistanceEstimate fuse_s_estimate(const LeaderDistanceEstimate& prev,
                                       double leader_velocity_m_s, double ego_velocity_m_s,
                                       const LeaderDistanceEstimate& measurement, double dt_s,
                                       double process_noise_std_m_per_sqrt_s = 0.1);

}  // namespace platoon
