#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "platoon/distance_estimator.hpp"
#include "platoon/mpc_controller.hpp"
#include "platoon/safety_sets.hpp"
#include "platoon/v2x.hpp"
#include "platoon/vehicle_model.hpp"

namespace platoon {

/// Replayed (non-platooning) traffic participant with a scripted velocity
/// profile: piecewise-linear in time, held at the last breakpoint.
struct PublicVehicle {
  double initial_position_m = 0.0;  ///< front bumper
  double length_m = 4.5;
  std::vector<std::pair<double, double>> velocity_profile;  ///< (time_s, v)

  double velocity_at(double time_s) const;
};

struct EstimationConfig {
  EstimateMethod method = EstimateMethod::RadarChain;
  bool fuse_with_filter = false;
  double gps_noise_std_m = 0.0;
  double radar_noise_std_m = 0.0;
  double process_noise_std = 0.1;
};

struct ScriptedEvents {
  std::vector<std::pair<double, int>> pedal_taps;  ///< (time_s, vehicle index)
  std::vector<Blackout> blackouts;
  std::optional<double> manual_cancel_s;
  double start_request_s = 0.5;        ///< when the leader proposes (if not engaged)
  std::vector<int> rejecting_vehicles; ///< test hook: these followers reject
};

/// Complete closed-loop experiment description. Everything here is plain
/// data so runs are repeatable; all Table-style defaults can be overridden.
struct Scenario {
  std::string name = "scenario";
  int platoon_size = 3;
  double vehicle_length_m = 4.5;
  double duration_s = 30.0;
  std::uint64_t seed = 1;
  bool start_engaged = false;

  /// Front-bumper starting positions, leader first. When empty, vehicles are
  /// placed from initial_leader_position_m with initial_gap_m bumper gaps.
  std::vector<double> initial_positions_m;
  double initial_leader_position_m = 0.0;
  double initial_gap_m = 6.0;
  double initial_speed_m_s = 0.0;

  VehicleParams vehicle;
  MpcParams mpc;
  SafetyParams safety;
  EstimationConfig estimation;
  BusConfig bus;
  ScriptedEvents events;

  std::vector<TrafficLight> lights;
  std::vector<PublicVehicle> public_vehicles;
  /// Optional leader velocity reference replay, (time_s, v) breakpoints
  /// sampled with zero-order hold.
  std::vector<std::pair<double, double>> leader_velocity_reference;

  double radar_max_range_m = 150.0;
  long message_timeout_steps = 5;
  long proposal_timeout_steps = 30;
  long cancel_wait_steps = 20;

  /// Throughput bookkeeping: stop bar the run measures against and the green
  /// onset instant (crossing times are relative to it).
  std::optional<double> throughput_stopbar_m;
  std::optional<double> green_onset_s;

  void validate() const;

  std::string to_json() const;
  static Scenario from_json(const std::string& text);
  static Scenario load(const std::string& path);
  void save(const std::string& path) const;
  /// Apply a dotted-path override like "mpc.trust_horizon=0".
  void apply_override(const std::string& key_value);
};

/// Standing-start throughput scenario: platoon formed and stopped at the
/// stop bar, light turns green at t = 0.
Scenario standing_start_scenario(int platoon_size = 3);

/// Arterial stop-and-go corridor: eight signalized intersections over
/// 2.45 km and a slow public vehicle the platoon catches near the end.
Scenario stop_and_go_scenario();

/// Step-profile reference replay for distance-tracking evaluation.
Scenario step_profile_scenario();

/// Moving platoon formation: unequal gaps at low speed, plan proposed while
/// rolling, convergence to the desired gap after joint activation.
Scenario moving_activation_scenario();

/// Empty road, all lights green: leader velocity tracking check.
Scenario cruise_scenario();

/// Builder registry for the CLI.
std::vector<std::string> builtin_scenario_names();
Scenario builtin_scenario(const std::string& name);

}  // namespace platoon
