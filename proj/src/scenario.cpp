#include "platoon/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace platoon {

using nlohmann::json;

double PublicVehicle::velocity_at(double time_s) const {
  if (velocity_profile.empty()) return 0.0;
  if (time_s <= velocity_profile.front().first) return velocity_profile.front().second;
  for (size_t i = 1; i < velocity_profile.size(); ++i) {
    const auto& [t1, v1] = velocity_profile[i];
    const auto& [t0, v0] = velocity_profile[i - 1];
    if (time_s <= t1) {
      const double w = (time_s - t0) / (t1 - t0);
      return v0 + w * (v1 - v0);
    }
  }
  return velocity_profile.back().second;
}

void Scenario::validate() const {
  if (platoon_size < 1) throw std::invalid_argument("Scenario: platoon_size must be >= 1");
  if (!(duration_s > 0.0)) throw std::invalid_argument("Scenario: duration must be positive");
  if (!(vehicle_length_m > 0.0)) throw std::invalid_argument("Scenario: bad vehicle length");
  if (!initial_positions_m.empty() &&
      static_cast<int>(initial_positions_m.size()) != platoon_size) {
    throw std::invalid_argument("Scenario: initial positions must match the platoon size");
  }
  vehicle.validate();
  mpc.validate();
  safety.validate();
  for (const TrafficLight& light : lights) light.validate();
  for (const PublicVehicle& pv : public_vehicles) {
    if (!(pv.length_m > 0.0)) throw std::invalid_argument("Scenario: bad public vehicle length");
    for (const auto& [t, v] : pv.velocity_profile) {
      if (v < 0.0) throw std::invalid_argument("Scenario: public velocities must be >= 0");
    }
  }
}

namespace {

json to_json(const VehicleParams& p) {
  return {{"mass_kg", p.mass_kg},
          {"wheel_radius_m", p.wheel_radius_m},
          {"friction_const_N", p.friction_const_N},
          {"friction_quad_N_per_m2s2", p.friction_quad_N_per_m2s2},
          {"accel_time_const_s", p.accel_time_const_s},
          {"sample_time_s", p.sample_time_s}};
}

VehicleParams vehicle_from_json(const json& j) {
  VehicleParams p;
  p.mass_kg = j.value("mass_kg", p.mass_kg);
  p.wheel_radius_m = j.value("wheel_radius_m", p.wheel_radius_m);
  p.friction_const_N = j.value("friction_const_N", p.friction_const_N);
  p.friction_quad_N_per_m2s2 = j.value("friction_quad_N_per_m2s2", p.friction_quad_N_per_m2s2);
  p.accel_time_const_s = j.value("accel_time_const_s", p.accel_time_const_s);
  p.sample_time_s = j.value("sample_time_s", p.sample_time_s);
  return p;
}

json to_json(const MpcParams& p) {
  return {{"horizon_steps", p.horizon_steps},
          {"d_des_m", p.d_des_m},
          {"d_min_front_m", p.d_min_front_m},
          {"d_min_stopbar_m", p.d_min_stopbar_m},
          {"time_headway_s", p.time_headway_s},
          {"v_des_m_s", p.v_des_m_s},
          {"v_min_m_s", p.v_min_m_s},
          {"v_max_m_s", p.v_max_m_s},
          {"torque_max_accel_Nm", p.torque_max_accel_Nm},
          {"torque_max_brake_Nm", p.torque_max_brake_Nm},
          {"jerk_weight", p.jerk_weight},
          {"input_weight_accel", p.input_weight_accel},
          {"input_weight_brake", p.input_weight_brake},
          {"input_weight_cross", p.input_weight_cross},
          {"trust_horizon", p.trust_horizon},
          {"soft_weight", p.soft_weight},
          {"front_velocity_margin_m_s", p.front_velocity_margin_m_s},
          {"stepped_front_decrement", p.stepped_front_decrement},
          {"polyhedron_facets", p.polyhedron_facets}};
}

MpcParams mpc_from_json(const json& j) {
  MpcParams p;
  p.horizon_steps = j.value("horizon_steps", p.horizon_steps);
  p.d_des_m = j.value("d_des_m", p.d_des_m);
  p.d_min_front_m = j.value("d_min_front_m", p.d_min_front_m);
  p.d_min_stopbar_m = j.value("d_min_stopbar_m", p.d_min_stopbar_m);
  p.time_headway_s = j.value("time_headway_s", p.time_headway_s);
  p.v_des_m_s = j.value("v_des_m_s", p.v_des_m_s);
  p.v_min_m_s = j.value("v_min_m_s", p.v_min_m_s);
  p.v_max_m_s = j.value("v_max_m_s", p.v_max_m_s);
  p.torque_max_accel_Nm = j.value("torque_max_accel_Nm", p.torque_max_accel_Nm);
  p.torque_max_brake_Nm = j.value("torque_max_brake_Nm", p.torque_max_brake_Nm);
  p.jerk_weight = j.value("jerk_weight", p.jerk_weight);
  p.input_weight_accel = j.value("input_weight_accel", p.input_weight_accel);
  p.input_weight_brake = j.value("input_weight_brake", p.input_weight_brake);
  p.input_weight_cross = j.value("input_weight_cross", p.input_weight_cross);
  p.trust_horizon = j.value("trust_horizon", p.trust_horizon);
  p.soft_weight = j.value("soft_weight", p.soft_weight);
  p.front_velocity_margin_m_s = j.value("front_velocity_margin_m_s", p.front_velocity_margin_m_s);
  p.stepped_front_decrement = j.value("stepped_front_decrement", p.stepped_front_decrement);
  p.polyhedron_facets = j.value("polyhedron_facets", p.polyhedron_facets);
  return p;
}

json to_json(const SafetyParams& p) {
  return {{"a_min_brake_m_s2", p.a_min_brake_m_s2},
          {"a_max_brake_m_s2", p.a_max_brake_m_s2},
          {"d_min_front_m", p.d_min_front_m},
          {"d_min_stopbar_m", p.d_min_stopbar_m},
          {"intersection_length_m", p.intersection_length_m},
          {"t_min_s", p.t_min_s},
          {"v_low_m_s", p.v_low_m_s}};
}

SafetyParams safety_from_json(const json& j) {
  SafetyParams p;
  p.a_min_brake_m_s2 = j.value("a_min_brake_m_s2", p.a_min_brake_m_s2);
  p.a_max_brake_m_s2 = j.value("a_max_brake_m_s2", p.a_max_brake_m_s2);
  p.d_min_front_m = j.value("d_min_front_m", p.d_min_front_m);
  p.d_min_stopbar_m = j.value("d_min_stopbar_m", p.d_min_stopbar_m);
  p.intersection_length_m = j.value("intersection_length_m", p.intersection_length_m);
  p.t_min_s = j.value("t_min_s", p.t_min_s);
  p.v_low_m_s = j.value("v_low_m_s", p.v_low_m_s);
  return p;
}

json to_json(const TrafficLight& l) {
  json j{{"id", l.id},
         {"position_m", l.position_m},
         {"comm_range_m", l.comm_range_m},
         {"cycle_offset_s", l.cycle_offset_s},
         {"red_s", l.red_s},
         {"yellow_s", l.yellow_s},
         {"green_s", l.green_s},
         {"cycle_length_s", l.cycle_length_s}};
  if (!l.actuation_overrides.empty()) j["actuation_overrides"] = l.actuation_overrides;
  return j;
}

TrafficLight light_from_json(const json& j) {
  TrafficLight l;
  l.id = j.value("id", l.id);
  l.position_m = j.value("position_m", l.position_m);
  l.comm_range_m = j.value("comm_range_m", l.comm_range_m);
  l.cycle_offset_s = j.value("cycle_offset_s", l.cycle_offset_s);
  l.red_s = j.value("red_s", l.red_s);
  l.yellow_s = j.value("yellow_s", l.yellow_s);
  l.green_s = j.value("green_s", l.green_s);
  l.cycle_length_s = j.value("cycle_length_s", l.red_s + l.yellow_s + l.green_s);
  if (j.contains("actuation_overrides")) {
    l.actuation_overrides =
        j["actuation_overrides"].get<std::vector<std::pair<double, double>>>();
  }
  return l;
}

json to_json(const PublicVehicle& v) {
  return {{"initial_position_m", v.initial_position_m},
          {"length_m", v.length_m},
          {"velocity_profile", v.velocity_profile}};
}

PublicVehicle public_from_json(const json& j) {
  PublicVehicle v;
  v.initial_position_m = j.value("initial_position_m", v.initial_position_m);
  v.length_m = j.value("length_m", v.length_m);
  if (j.contains("velocity_profile")) {
    v.velocity_profile = j["velocity_profile"].get<std::vector<std::pair<double, double>>>();
  }
  return v;
}

}  // namespace

std::string Scenario::to_json() const {
  json j;
  j["name"] = name;
  j["platoon_size"] = platoon_size;
  j["vehicle_length_m"] = vehicle_length_m;
  j["duration_s"] = duration_s;
  j["seed"] = seed;
  j["start_engaged"] = start_engaged;
  j["initial_positions_m"] = initial_positions_m;
  j["initial_leader_position_m"] = initial_leader_position_m;
  j["initial_gap_m"] = initial_gap_m;
  j["initial_speed_m_s"] = initial_speed_m_s;
  j["vehicle"] = platoon::to_json(vehicle);
  j["mpc"] = platoon::to_json(mpc);
  j["safety"] = platoon::to_json(safety);
  j["estimation"] = {{"method", estimation.method == EstimateMethod::Gps ? "gps" : "radar_chain"},
                     {"fuse_with_filter", estimation.fuse_with_filter},
                     {"gps_noise_std_m", estimation.gps_noise_std_m},
                     {"radar_noise_std_m", estimation.radar_noise_std_m},
                     {"process_noise_std", estimation.process_noise_std}};
  j["bus"] = {{"latency_steps", bus.latency_steps}};
  if (!bus.blackouts.empty()) {
    j["bus"]["blackouts"] = json::array();
    for (const Blackout& b : bus.blackouts) {
      j["bus"]["blackouts"].push_back(
          {{"sender_index", b.sender_index}, {"from_step", b.from_step}, {"to_step", b.to_step}});
    }
  }
  j["events"] = {{"pedal_taps", events.pedal_taps},
                 {"start_request_s", events.start_request_s},
                 {"rejecting_vehicles", events.rejecting_vehicles}};
  if (events.manual_cancel_s) j["events"]["manual_cancel_s"] = *events.manual_cancel_s;
  j["lights"] = json::array();
  for (const TrafficLight& l : lights) j["lights"].push_back(platoon::to_json(l));
  j["public_vehicles"] = json::array();
  for (const PublicVehicle& v : public_vehicles) j["public_vehicles"].push_back(platoon::to_json(v));
  j["leader_velocity_reference"] = leader_velocity_reference;
  j["radar_max_range_m"] = radar_max_range_m;
  j["message_timeout_steps"] = message_timeout_steps;
  j["proposal_timeout_steps"] = proposal_timeout_steps;
  j["cancel_wait_steps"] = cancel_wait_steps;
  if (throughput_stopbar_m) j["throughput_stopbar_m"] = *throughput_stopbar_m;
  if (green_onset_s) j["green_onset_s"] = *green_onset_s;
  return j.dump(2);
}

Scenario Scenario::from_json(const std::string& text) {
  const json j = json::parse(text);
  Scenario s;
  s.name = j.value("name", s.name);
  s.platoon_size = j.value("platoon_size", s.platoon_size);
  s.vehicle_length_m = j.value("vehicle_length_m", s.vehicle_length_m);
  s.duration_s = j.value("duration_s", s.duration_s);
  s.seed = j.value("seed", s.seed);
  s.start_engaged = j.value("start_engaged", s.start_engaged);
  if (j.contains("initial_positions_m")) {
    s.initial_positions_m = j["initial_positions_m"].get<std::vector<double>>();
  }
  s.initial_leader_position_m = j.value("initial_leader_position_m", s.initial_leader_position_m);
  s.initial_gap_m = j.value("initial_gap_m", s.initial_gap_m);
  s.initial_speed_m_s = j.value("initial_speed_m_s", s.initial_speed_m_s);
  if (j.contains("vehicle")) s.vehicle = vehicle_from_json(j["vehicle"]);
  if (j.contains("mpc")) s.mpc = mpc_from_json(j["mpc"]);
  if (j.contains("safety")) s.safety = safety_from_json(j["safety"]);
  if (j.contains("estimation")) {
    const json& e = j["estimation"];
    s.estimation.method = e.value("method", std::string("radar_chain")) == "gps"
                              ? EstimateMethod::Gps
                              : EstimateMethod::RadarChain;
    s.estimation.fuse_with_filter = e.value("fuse_with_filter", s.estimation.fuse_with_filter);
    s.estimation.gps_noise_std_m = e.value("gps_noise_std_m", s.estimation.gps_noise_std_m);
    s.estimation.radar_noise_std_m = e.value("radar_noise_std_m", s.estimation.radar_noise_std_m);
    s.estimation.process_noise_std = e.value("process_noise_std", s.estimation.process_noise_std);
  }
  if (j.contains("bus")) {
    s.bus.latency_steps = j["bus"].value("latency_steps", s.bus.latency_steps);
    if (j["bus"].contains("blackouts")) {
      for (const json& b : j["bus"]["blackouts"]) {
        s.bus.blackouts.push_back({b.value("sender_index", -1), b.value("from_step", 0L),
                                   b.value("to_step", 0L)});
      }
    }
  }
  if (j.contains("events")) {
    const json& e = j["events"];
    if (e.contains("pedal_taps")) {
      s.events.pedal_taps = e["pedal_taps"].get<std::vector<std::pair<double, int>>>();
    }
    s.events.start_request_s = e.value("start_request_s", s.events.start_request_s);
    if (e.contains("rejecting_vehicles")) {
      s.events.rejecting_vehicles = e["rejecting_vehicles"].get<std::vector<int>>();
    }
    if (e.contains("manual_cancel_s")) s.events.manual_cancel_s = e["manual_cancel_s"].get<double>();
  }
  if (j.contains("lights")) {
    for (const json& l : j["lights"]) s.lights.push_back(light_from_json(l));
  }
  if (j.contains("public_vehicles")) {
    for (const json& v : j["public_vehicles"]) s.public_vehicles.push_back(public_from_json(v));
  }
  if (j.contains("leader_velocity_reference")) {
    s.leader_velocity_reference =
        j["leader_velocity_reference"].get<std::vector<std::pair<double, double>>>();
  }
  s.radar_max_range_m = j.value("radar_max_range_m", s.radar_max_range_m);
  s.message_timeout_steps = j.value("message_timeout_steps", s.message_timeout_steps);
  s.proposal_timeout_steps = j.value("proposal_timeout_steps", s.proposal_timeout_steps);
  s.cancel_wait_steps = j.value("cancel_wait_steps", s.cancel_wait_steps);
  if (j.contains("throughput_stopbar_m")) {
    s.throughput_stopbar_m = j["throughput_stopbar_m"].get<double>();
  }
  if (j.contains("green_onset_s")) s.green_onset_s = j["green_onset_s"].get<double>();
  std::sort(s.lights.begin(), s.lights.end(),
            [](const TrafficLight& a, const TrafficLight& b) { return a.position_m < b.position_m; });
  s.validate();
  return s;
}

Scenario Scenario::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("Scenario::load: cannot open " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_json(buffer.str());
}

void Scenario::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("Scenario::save: cannot open " + path);
  out << to_json() << "\n";
}

void Scenario::apply_override(const std::string& key_value) {
  const size_t eq = key_value.find('=');
  if (eq == std::string::npos) {
    throw std::invalid_argument("override must look like section.key=value: " + key_value);
  }
  std::string path = "/" + key_value.substr(0, eq);
  std::replace(path.begin(), path.end(), '.', '/');
  const std::string raw = key_value.substr(eq + 1);

  json j = json::parse(to_json());
  json value;
  if (raw == "true" || raw == "false") {
    value = raw == "true";
  } else {
    try {
      size_t used = 0;
      const double d = std::stod(raw, &used);
      if (used == raw.size()) {
        value = d;
        if (d == std::floor(d) && std::abs(d) < 1e15 && raw.find('.') == std::string::npos &&
            raw.find('e') == std::string::npos) {
          value = static_cast<long long>(d);
        }
      } else {
        value = raw;
      }
    } catch (const std::exception&) {
      value = raw;
    }
  }
  j[json::json_pointer(path)] = value;
  *this = from_json(j.dump());
}

Scenario standing_start_scenario(int platoon_size) {
  Scenario s;
  s.name = "standing_start";
  s.platoon_size = platoon_size;
  s.duration_s = 30.0;
  s.start_engaged = true;

  // Stopped at the stop bar with the desired formation; the light flips to
  // green exactly at t = 0.
  s.initial_positions_m.clear();
  const double lead = -s.safety.d_min_stopbar_m;
  for (int i = 0; i < platoon_size; ++i) {
    s.initial_positions_m.push_back(lead - (s.vehicle_length_m + s.mpc.d_des_m) * i);
  }
  s.initial_speed_m_s = 0.0;

  TrafficLight light;
  light.id = 0;
  light.position_m = 0.0;
  light.comm_range_m = 300.0;
  light.red_s = 30.0;
  light.green_s = 40.0;
  light.yellow_s = 5.0;
  light.cycle_length_s = 75.0;
  light.cycle_offset_s = 30.0;  // green begins at t = 0
  s.lights.push_back(light);

  s.throughput_stopbar_m = 0.0;
  s.green_onset_s = 0.0;
  return s;
}

Scenario stop_and_go_scenario() {
  Scenario s;
  s.name = "stop_and_go";
  s.platoon_size = 3;
  s.duration_s = 260.0;
  s.start_engaged = true;
  s.initial_leader_position_m = 0.0;
  s.initial_gap_m = s.mpc.d_des_m;
  s.initial_speed_m_s = 0.0;

  // Corridor modelled on an arterial with eight signalized intersections
  // over 2.45 km; spacing widens mid-corridor.
  const std::vector<double> positions{180, 430, 880, 1330, 1680, 1980, 2230, 2450};
  const std::vector<double> offsets{0, 15, 49, 10, 35, 15, 5, 25};
  for (size_t i = 0; i < positions.size(); ++i) {
    TrafficLight light;
    light.id = static_cast<int>(i);
    light.position_m = positions[i];
    light.comm_range_m = 300.0;
    light.red_s = 30.0;
    light.green_s = 25.0;
    light.yellow_s = 5.0;
    light.cycle_length_s = 60.0;
    light.cycle_offset_s = offsets[i];
    s.lights.push_back(light);
  }

  PublicVehicle pv;
  pv.initial_position_m = 680.0;
  pv.length_m = 4.5;
  pv.velocity_profile = {{0.0, 8.0}, {130.0, 8.0}, {132.0, 2.0}, {223.0, 2.0}, {225.0, 0.0}};
  s.public_vehicles.push_back(pv);
  return s;
}

Scenario step_profile_scenario() {
  Scenario s;
  s.name = "step_profile";
  s.platoon_size = 3;
  s.duration_s = 100.0;
  s.start_engaged = true;
  s.initial_leader_position_m = 0.0;
  s.initial_gap_m = s.mpc.d_des_m;
  s.initial_speed_m_s = 0.0;
  s.leader_velocity_reference = {{0.0, 0.0}, {5.0, 8.0},  {25.0, 12.0},
                                 {45.0, 6.0}, {65.0, 10.0}, {85.0, 0.0}};
  return s;
}

Scenario moving_activation_scenario() {
  Scenario s;
  s.name = "moving_activation";
  s.platoon_size = 3;
  s.duration_s = 15.0;
  s.start_engaged = false;
  s.initial_speed_m_s = 5.0;
  s.mpc.v_des_m_s = 8.0;
  // Rolling with unequal gaps; the leader proposes the plan at 1 s.
  s.initial_positions_m = {0.0, -16.5, -29.5};  // gaps 12 m and 8.5 m
  s.events.start_request_s = 1.0;
  return s;
}

Scenario cruise_scenario() {
  Scenario s;
  s.name = "cruise";
  s.platoon_size = 3;
  s.duration_s = 40.0;
  s.start_engaged = true;
  s.initial_leader_position_m = 0.0;
  s.initial_gap_m = s.mpc.d_des_m;
  s.initial_speed_m_s = 12.0;
  for (int i = 0; i < 2; ++i) {
    TrafficLight light;  // permanently green
    light.id = i;
    light.position_m = 400.0 + 500.0 * i;
    light.red_s = 0.0;
    light.yellow_s = 0.0;
    light.green_s = 600.0;
    light.cycle_length_s = 600.0;
    s.lights.push_back(light);
  }
  return s;
}

std::vector<std::string> builtin_scenario_names() {
  return {"standing-start", "stop-and-go", "step-profile", "moving-activation", "cruise"};
}

Scenario builtin_scenario(const std::string& name) {
  if (name == "standing-start") return standing_start_scenario();
  if (name == "stop-and-go") return stop_and_go_scenario();
  if (name == "step-profile") return step_profile_scenario();
  if (name == "moving-activation") return moving_activation_scenario();
  if (name == "cruise") return cruise_scenario();
  throw std::invalid_argument("unknown builtin scenario: " + name);
}

}  // namespace platoon
