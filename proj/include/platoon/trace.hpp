#pragma once

#include <string>
#include <vector>

#include "platoon/platoon_fsm.hpp"
#include "platoon/types.hpp"

namespace platoon {

struct VehicleTickRecord {
  double position_m = 0.0;
  double headway_m = 0.0;
  double dist_to_leader_m = 0.0;  // 0 for the leader
  double dist_to_stopbar_m = 0.0;
  double velocity_m_s = 0.0;
  double accel_torque_Nm = 0.0;
  double input_accel_ref_Nm = 0.0;
  double input_brake_Nm = 0.0;
  FsmState fsm_state = FsmState::Ready;
  int plan_status = 0;
};

struct TickRecord {
  long tick = 0;
  double time_s = 0.0;
  std::vector<VehicleTickRecord> vehicles;
  std::vector<Phase> light_phases;
  std::vector<double> public_positions_m;
  std::vector<double> public_velocities_m_s;
};

/// Full closed-loop run output plus the metadata the analysis needs.
struct RunTrace {
  double dt_s = 0.1;
  int platoon_size = 0;
  double vehicle_length_m = 4.5;
  double d_min_front_m = 6.0;
  double d_min_stopbar_m = 5.0;
  double intersection_length_m = 20.0;
  double stopbar_position_m = 0.0;  ///< throughput reference stop bar
  double green_onset_s = 0.0;       ///< throughput reference instant
  std::vector<double> light_positions_m;

  std::vector<TickRecord> ticks;
  std::vector<FsmLogEntry> fsm_log;

  bool aborted = false;
  long aborted_tick = -1;
  std::string abort_reason;

  /// Deterministic CSV (fixed column order and formatting).
  std::string to_csv() const;
  /// Summary metadata/metrics as JSON text.
  std::string summary_json() const;
  /// Write trace.csv, summary.json and fsm_log.csv under `dir`.
  void write(const std::string& dir) const;
  /// Rebuild from the two files written by write().
  static RunTrace read(const std::string& dir);

  double min_leader_headway() const;
  /// Smallest leader stop-bar distance over ticks where the leader is
  /// (nearly) stopped short of the bar.
  double min_stopped_stopbar_distance() const;
};

}  // namespace platoon
