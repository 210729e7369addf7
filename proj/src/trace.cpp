#include "platoon/trace.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace platoon {

namespace {

constexpr double kNoTargetSentinel = 999.0;  // headway/stop-bar values >= this mean "none"

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

Phase phase_from_string(const std::string& s) {
  if (s == "red") return Phase::Red;
  if (s == "green") return Phase::Green;
  if (s == "yellow") return Phase::Yellow;
  throw std::runtime_error("trace: bad phase " + s);
}

FsmState fsm_from_string(const std::string& s) {
  if (s == "Ready") return FsmState::Ready;
  if (s == "PlanProposed") return FsmState::PlanProposed;
  if (s == "PlanActive") return FsmState::PlanActive;
  if (s == "PlanCancel") return FsmState::PlanCancel;
  throw std::runtime_error("trace: bad fsm state " + s);
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, sep)) out.push_back(field);
  return out;
}

}  // namespace

std::string RunTrace::to_csv() const {
  std::string out;
  out += "tick,time_s";
  for (int i = 0; i < platoon_size; ++i) {
    const std::string v = "v" + std::to_string(i);
    out += "," + v + "_p," + v + "_h," + v + "_s," + v + "_dtl," + v + "_v," + v + "_ta," + v +
           "_u_aref," + v + "_u_b," + v + "_fsm," + v + "_plan";
  }
  const size_t n_lights = ticks.empty() ? light_positions_m.size() : ticks.front().light_phases.size();
  for (size_t j = 0; j < n_lights; ++j) out += ",light" + std::to_string(j) + "_phase";
  const size_t n_public = ticks.empty() ? 0 : ticks.front().public_positions_m.size();
  for (size_t k = 0; k < n_public; ++k) {
    out += ",pub" + std::to_string(k) + "_p,pub" + std::to_string(k) + "_v";
  }
  out += "\n";

  for (const TickRecord& t : ticks) {
    out += std::to_string(t.tick) + "," + fmt(t.time_s);
    for (const VehicleTickRecord& v : t.vehicles) {
      out += "," + fmt(v.position_m) + "," + fmt(v.headway_m) + "," + fmt(v.dist_to_leader_m) +
             "," + fmt(v.dist_to_stopbar_m) + "," + fmt(v.velocity_m_s) + "," +
             fmt(v.accel_torque_Nm) + "," + fmt(v.input_accel_ref_Nm) + "," +
             fmt(v.input_brake_Nm) + "," + to_string(v.fsm_state) + "," +
             std::to_string(v.plan_status);
    }
    for (Phase p : t.light_phases) out += std::string(",") + to_string(p);
    for (size_t k = 0; k < t.public_positions_m.size(); ++k) {
      out += "," + fmt(t.public_positions_m[k]) + "," + fmt(t.public_velocities_m_s[k]);
    }
    out += "\n";
  }
  return out;
}

std::string RunTrace::summary_json() const {
  nlohmann::json j;
  j["format_version"] = 1;
  j["dt_s"] = dt_s;
  j["platoon_size"] = platoon_size;
  j["vehicle_length_m"] = vehicle_length_m;
  j["d_min_front_m"] = d_min_front_m;
  j["d_min_stopbar_m"] = d_min_stopbar_m;
  j["intersection_length_m"] = intersection_length_m;
  j["stopbar_position_m"] = stopbar_position_m;
  j["green_onset_s"] = green_onset_s;
  j["light_positions_m"] = light_positions_m;
  j["ticks"] = ticks.size();
  j["aborted"] = aborted;
  j["aborted_tick"] = aborted_tick;
  j["abort_reason"] = abort_reason;
  j["min_leader_headway_m"] = min_leader_headway();
  j["min_stopped_stopbar_distance_m"] = min_stopped_stopbar_distance();
  return j.dump(2);
}

void RunTrace::write(const std::string& dir) const {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir + "/trace.csv", std::ios::binary);
    if (!out) throw std::runtime_error("RunTrace::write: cannot open trace.csv");
    out << to_csv();
  }
  {
    std::ofstream out(dir + "/summary.json", std::ios::binary);
    out << summary_json() << "\n";
  }
  {
    std::ofstream out(dir + "/fsm_log.csv", std::ios::binary);
    out << "tick,vehicle,from,event,to\n";
    for (const FsmLogEntry& e : fsm_log) {
      out << e.tick << "," << e.vehicle_index << "," << to_string(e.from) << ","
          << to_string(e.event) << "," << to_string(e.to) << "\n";
    }
  }
}

RunTrace RunTrace::read(const std::string& dir) {
  RunTrace trace;
  {
    std::ifstream in(dir + "/summary.json");
    if (!in) throw std::runtime_error("RunTrace::read: cannot open summary.json in " + dir);
    nlohmann::json j;
    in >> j;
    trace.dt_s = j.value("dt_s", 0.1);
    trace.platoon_size = j.value("platoon_size", 0);
    trace.vehicle_length_m = j.value("vehicle_length_m", 4.5);
    trace.d_min_front_m = j.value("d_min_front_m", 6.0);
    trace.d_min_stopbar_m = j.value("d_min_stopbar_m", 5.0);
    trace.intersection_length_m = j.value("intersection_length_m", 20.0);
    trace.stopbar_position_m = j.value("stopbar_position_m", 0.0);
    trace.green_onset_s = j.value("green_onset_s", 0.0);
    if (j.contains("light_positions_m")) {
      trace.light_positions_m = j["light_positions_m"].get<std::vector<double>>();
    }
    trace.aborted = j.value("aborted", false);
    trace.aborted_tick = j.value("aborted_tick", -1L);
    trace.abort_reason = j.value("abort_reason", std::string());
  }

  std::ifstream in(dir + "/trace.csv");
  if (!in) throw std::runtime_error("RunTrace::read: cannot open trace.csv in " + dir);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("RunTrace::read: empty trace");
  const std::vector<std::string> header = split(line, ',');

  int n_lights = 0;
  int n_public = 0;
  for (const std::string& h : header) {
    if (h.rfind("light", 0) == 0) ++n_lights;
    if (h.rfind("pub", 0) == 0 && h.find("_p") == h.size() - 2) ++n_public;
  }

  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> f = split(line, ',');
    TickRecord rec;
    size_t c = 0;
    rec.tick = std::stol(f[c++]);
    rec.time_s = std::stod(f[c++]);
    for (int i = 0; i < trace.platoon_size; ++i) {
      VehicleTickRecord v;
      v.position_m = std::stod(f[c++]);
      v.headway_m = std::stod(f[c++]);
      v.dist_to_leader_m = std::stod(f[c++]);
      v.dist_to_stopbar_m = std::stod(f[c++]);
      v.velocity_m_s = std::stod(f[c++]);
      v.accel_torque_Nm = std::stod(f[c++]);
      v.input_accel_ref_Nm = std::stod(f[c++]);
      v.input_brake_Nm = std::stod(f[c++]);
      v.fsm_state = fsm_from_string(f[c++]);
      v.plan_status = std::stoi(f[c++]);
      rec.vehicles.push_back(v);
    }
    for (int j = 0; j < n_lights; ++j) rec.light_phases.push_back(phase_from_string(f[c++]));
    for (int k = 0; k < n_public; ++k) {
      rec.public_positions_m.push_back(std::stod(f[c++]));
      rec.public_velocities_m_s.push_back(std::stod(f[c++]));
    }
    trace.ticks.push_back(std::move(rec));
  }
  return trace;
}

double RunTrace::min_leader_headway() const {
  double best = kNoTargetSentinel;
  for (const TickRecord& t : ticks) {
    if (t.vehicles.empty()) continue;
    const double h = t.vehicles.front().headway_m;
    if (h < best) best = h;
  }
  return best;
}

double RunTrace::min_stopped_stopbar_distance() const {
  double best = kNoTargetSentinel;
  for (const TickRecord& t : ticks) {
    if (t.vehicles.empty()) continue;
    const VehicleTickRecord& leader = t.vehicles.front();
    if (std::abs(leader.velocity_m_s) < 0.05 && leader.dist_to_stopbar_m < kNoTargetSentinel &&
        leader.dist_to_stopbar_m >= 0.0 && leader.dist_to_stopbar_m < best) {
      best = leader.dist_to_stopbar_m;
    }
  }
  return best;
}

}  // namespace platoon
