#pragma once

#include <utility>
#include <vector>

#include "platoon/scenario.hpp"
#include "platoon/trace.hpp"

namespace platoon {

struct ThroughputConfig {
  double vehicle_length_m = 4.5;
  double intersection_length_m = 20.0;
  double d_min_m = 5.0;
  double d_des_m = 6.0;
};

struct ThroughputResult {
  int trust_horizon = 0;
  double t_leader_s = 0.0;
  double t_rear_s = 0.0;
  double vph = 0.0;
};

/// First instants (relative to the green onset recorded in the trace) at
/// which the leader and the rear vehicle positions reach the far side of the
/// intersection, linearly interpolated between ticks. Throws when a vehicle
/// never crosses.
std::pair<double, double> crossing_times(const RunTrace& trace, double intersection_length_m);

/// 3600 (N-1) / (t_rear - t_leader), vehicles per hour.
double throughput_vph(double t_leader_s, double t_rear_s, int platoon_size);

ThroughputResult measure_throughput(const RunTrace& trace, double intersection_length_m);

/// One run per trust-horizon value on an otherwise identical scenario.
std::vector<ThroughputResult> trust_sweep(const Scenario& scenario,
                                          const std::vector<int>& trust_values);

}  // namespace platoon
