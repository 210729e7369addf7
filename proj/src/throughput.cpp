#include "platoon/throughput.hpp"

#include <stdexcept>
#include <string>

#include "platoon/sim_engine.hpp"

namespace platoon {

namespace {

/// First time the vehicle's position (relative to the stop bar) reaches
/// `target`, counted from the green onset.
double first_crossing(const RunTrace& trace, int vehicle, double target) {
  double prev_pos = 0.0;
  double prev_time = 0.0;
  bool have_prev = false;
  for (const TickRecord& t : trace.ticks) {
    if (t.time_s < trace.green_onset_s) continue;
    const double pos = t.vehicles[static_cast<size_t>(vehicle)].position_m -
                       trace.stopbar_position_m;
    const double rel_time = t.time_s - trace.green_onset_s;
    if (pos >= target) {
      if (!have_prev || prev_pos >= target) return rel_time;
      const double w = (target - prev_pos) / (pos - prev_pos);
      return prev_time + w * (rel_time - prev_time);
    }
    prev_pos = pos;
    prev_time = rel_time;
    have_prev = true;
  }
  throw std::runtime_error("crossing_times: vehicle " + std::to_string(vehicle) +
                           " never reached the intersection exit (last tick " +
                           std::to_string(trace.ticks.empty() ? -1L : trace.ticks.back().tick) +
                           ")");
}

}  // namespace

std::pair<double, double> crossing_times(const RunTrace& trace, double intersection_length_m) {
  if (trace.platoon_size < 2) {
    throw std::invalid_argument("crossing_times: throughput needs at least two vehicles");
  }
  if (trace.ticks.empty()) throw std::invalid_argument("crossing_times: empty trace");
  const double t_leader = first_crossing(trace, 0, intersection_length_m);
  const double t_rear = first_crossing(trace, trace.platoon_size - 1, intersection_length_m);
  return {t_leader, t_rear};
}

double throughput_vph(double t_leader_s, double t_rear_s, int platoon_size) {
  if (platoon_size < 2) throw std::invalid_argument("throughput_vph: need N >= 2");
  if (!(t_rear_s > t_leader_s)) {
    throw std::invalid_argument("throughput_vph: rear must cross after the leader");
  }
  return 3600.0 * (platoon_size - 1) / (t_rear_s - t_leader_s);
}

ThroughputResult measure_throughput(const RunTrace& trace, double intersection_length_m) {
  const auto [t_leader, t_rear] = crossing_times(trace, intersection_length_m);
  ThroughputResult r;
  r.t_leader_s = t_leader;
  r.t_rear_s = t_rear;
  r.vph = throughput_vph(t_leader, t_rear, trace.platoon_size);
  return r;
}

std::vector<ThroughputResult> trust_sweep(const Scenario& scenario,
                                          const std::vector<int>& trust_values) {
  std::vector<ThroughputResult> results;
  for (int f : trust_values) {
    Scenario run = scenario;
    run.mpc.trust_horizon = f;
    const RunTrace trace = run_scenario(run);
    ThroughputResult r = measure_throughput(trace, scenario.safety.intersection_length_m);
    r.trust_horizon = f;
    results.push_back(r);
  }
  return results;
}

}  // namespace platoon
