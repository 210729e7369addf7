#include "platoon/distance_estimator.hpp"

#include <numeric>
#include <stdexcept>

namespace platoon {

namespace {

LeaderDistanceEstimate clamp_nonnegative(LeaderDistanceEstimate e) {
  if (e.s_hat_m < 0.0) {
    e.s_hat_m = 0.0;
    e.clamped = true;
  }
  return e;
}

}  // namespace

LeaderDistanceEstimate estimate_s_gps(double center_distance_m, int vehicle_index,
                                      double vehicle_length_m, double noise_std_m) {
  if (vehicle_index < 1) throw std::domain_error("estimate_s_gps: index must be >= 1");
  if (!(vehicle_length_m > 0.0)) {
    throw std::domain_error("estimate_s_gps: vehicle length must be positive");
  }
  LeaderDistanceEstimate e;
  e.method = EstimateMethod::Gps;
  e.s_hat_m = center_distance_m - vehicle_index * vehicle_length_m;
  e.variance_m2 = noise_std_m * noise_std_m;
  return clamp_nonnegative(e);
}

LeaderDistanceEstimate estimate_s_radar_chain(const std::vector<double>& headways_m,
                                              double per_radar_std_m) {
  if (headways_m.empty()) {
    throw std::domain_error("estimate_s_radar_chain: empty headway list");
  }
  LeaderDistanceEstimate e;
  e.method = EstimateMethod::RadarChain;
  e.s_hat_m = std::accumulate(headways_m.begin(), headways_m.end(), 0.0);
  e.variance_m2 = headways_m.size() * per_radar_std_m * per_radar_std_m;
  return clamp_nonnegative(e);
}

LeaderDistanceEstimate fuse_s_estimate(const LeaderDistanceEstimate& prev,
                                       double leader_velocity_m_s, double ego_velocity_m_s,
                                       const LeaderDistanceEstimate& measurement, double dt_s,
                                       double process_noise_std_m_per_sqrt_s) {
  if (!(dt_s > 0.0)) throw std::domain_error("fuse_s_estimate: dt must be positive");

  // Predict.
  const double q = process_noise_std_m_per_sqrt_s * process_noise_std_m_per_sqrt_s * dt_s;
  double s_pred = prev.s_hat_m + (leader_velocity_m_s - ego_velocity_m_s) * dt_s;
  double p_pred = prev.variance_m2 + q;

  // Update. A zero denominator means both prediction and measurement are
  // exact; keep the prediction.
  const double denom = p_pred + measurement.variance_m2;
  const double gain = denom > 0.0 ? p_pred / denom : 0.0;

  LeaderDistanceEstimate e;
  e.method = measurement.method;
  e.s_hat_m = s_pred + gain * (measurement.s_hat_m - s_pred);
  e.variance_m2 = (1.0 - gain) * p_pred;
  if (e.s_hat_m < 0.0) {
    e.s_hat_m = 0.0;
    e.clamped = true;
  }
  return e;
}

}  // namespace platoon
