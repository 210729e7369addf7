#pragma once

#include <iosfwd>
#include <optional>
#include <random>

#include "platoon/scenario.hpp"
#include "platoon/trace.hpp"

namespace platoon {

/// Bumper-to-bumper radar return: ego front bumper to target rear bumper,
/// empty when there is no target or it is beyond range. Gaussian noise is
/// added when noise_std_m > 0 (one draw per successful return).
std::optional<double> radar_measure(double ego_position_m,
                                    std::optional<double> target_position_m,
                                    double target_length_m, double max_range_m,
                                    double noise_std_m, std::mt19937_64* rng);

/// First light whose stop bar is at or ahead of the ego position. Lights must
/// be sorted by position. Returns nullptr past the last bar.
const TrafficLight* nearest_upcoming_light(const std::vector<TrafficLight>& lights,
                                           double ego_position_m);

struct RunOptions {
  std::ostream* message_trace = nullptr;  ///< newline-delimited message records
  std::ostream* run_log = nullptr;        ///< per-tick controller diagnostics
};

/// Deterministic fixed-step closed loop: lights, replayed public traffic,
/// radar and GPS sensing, V2X bus, coordination machines and the MPC stack,
/// integrated with the RK4 plant. Identical scenario and seed give a
/// bit-identical trace.
RunTrace run_scenario(const Scenario& scenario, const RunOptions& options = {});

}  // namespace platoon
