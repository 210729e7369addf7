#include "platoon/v2x.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

namespace platoon {

void TrafficLight::validate() const {
  if (!(red_s >= 0.0) || !(yellow_s >= 0.0) || !(green_s >= 0.0)) {
    throw std::invalid_argument("TrafficLight: negative phase duration");
  }
  if (std::abs(red_s + yellow_s + green_s - cycle_length_s) > 1e-9) {
    throw std::invalid_argument("TrafficLight: phases must sum to the cycle length");
  }
  if (!(cycle_length_s > 0.0)) throw std::invalid_argument("TrafficLight: empty cycle");
  if (!(comm_range_m > 0.0)) throw std::invalid_argument("TrafficLight: bad comm range");
}

std::pair<Phase, double> TrafficLight::phase_at(double time_s) const {
  double local = std::fmod(time_s + cycle_offset_s, cycle_length_s);
  if (local < 0.0) local += cycle_length_s;
  // red -> green -> yellow, half-open segments so boundaries start the new phase
  if (local < red_s) return {Phase::Red, red_s - local};
  if (local < red_s + green_s) return {Phase::Green, red_s + green_s - local};
  return {Phase::Yellow, cycle_length_s - local};
}

std::optional<SpatMessage> spat_from_light(const TrafficLight& light, double ego_position_m,
                                           double time_s, double intersection_length_m) {
  if (std::abs(light.position_m - ego_position_m) > light.comm_range_m) return std::nullopt;
  const auto [phase, remaining] = light.phase_at(time_s);
  SpatMessage msg;
  msg.light_id = light.id;
  msg.phase = phase;
  msg.time_remaining_s = remaining;
  msg.stopbar_position_m = light.position_m;
  msg.intersection_length_m = intersection_length_m;
  // Actuated lights: a scripted override at time `at` re-predicts the phase to
  // end `value` seconds later and stays in effect until that moment.
  for (const auto& [at, value] : light.actuation_overrides) {
    const double elapsed = time_s - at;
    if (elapsed >= 0.0 && elapsed < value) msg.time_remaining_s = value - elapsed;
  }
  return msg;
}

const char* to_string(MessageKind kind) {
  switch (kind) {
    case MessageKind::Forecast: return "forecast";
    case MessageKind::RearGps: return "rear_gps";
    case MessageKind::RadarChain: return "radar";
    case MessageKind::Status: return "status";
    case MessageKind::PlanProposal: return "plan_proposal";
    case MessageKind::Ack: return "ack";
    case MessageKind::Activate: return "activate";
    case MessageKind::Cancel: return "cancel";
  }
  return "?";
}

std::vector<int> route(const V2VMessage& message, int platoon_size) {
  std::vector<int> recipients;
  const int sender = message.sender_index;
  if (sender < 0 || sender >= platoon_size) return recipients;  // unknown sender: drop

  switch (message.kind) {
    case MessageKind::Forecast:
      if (sender == 0) {
        for (int i = 1; i < platoon_size; ++i) recipients.push_back(i);
      } else if (sender + 1 < platoon_size) {
        recipients.push_back(sender + 1);
      }
      break;
    case MessageKind::RearGps:
      if (sender == platoon_size - 1 && platoon_size > 1) recipients.push_back(0);
      break;
    case MessageKind::RadarChain:
      if (sender >= 1) {
        for (int i = sender + 1; i < platoon_size; ++i) recipients.push_back(i);
      }
      break;
    case MessageKind::PlanProposal:
    case MessageKind::Activate:
      if (sender == 0) {
        for (int i = 1; i < platoon_size; ++i) recipients.push_back(i);
      }
      break;
    case MessageKind::Ack:
      if (sender != 0) recipients.push_back(0);
      break;
    case MessageKind::Status:
    case MessageKind::Cancel:
      for (int i = 0; i < platoon_size; ++i) {
        if (i != sender) recipients.push_back(i);
      }
      break;
  }
  return recipients;
}

SimulatedBus::SimulatedBus(const BusConfig& config, int platoon_size)
    : config_(config), platoon_size_(platoon_size) {
  if (config_.latency_steps < 0) throw std::invalid_argument("SimulatedBus: negative latency");
}

void SimulatedBus::send(const V2VMessage& message, long tick) {
  for (const Blackout& b : config_.blackouts) {
    if (message.sender_index == b.sender_index && tick >= b.from_step && tick <= b.to_step) {
      return;  // scripted outage
    }
  }
  const std::vector<int> recipients = route(message, platoon_size_);
  for (int r : recipients) {
    Pending p;
    p.available_step = tick + config_.latency_steps;
    p.recipient = r;
    p.sequence = sequence_++;
    p.message = message;
    queue_.push_back(std::move(p));
  }
  if (!recipients.empty()) ++sent_count_;
}

std::vector<V2VMessage> SimulatedBus::deliver(int recipient_index, long tick) {
  std::vector<Pending> due;
  std::vector<Pending> rest;
  rest.reserve(queue_.size());
  for (Pending& p : queue_) {
    if (p.recipient == recipient_index && p.available_step <= tick) {
      due.push_back(std::move(p));
    } else {
      rest.push_back(std::move(p));
    }
  }
  queue_ = std::move(rest);
  std::sort(due.begin(), due.end(), [](const Pending& a, const Pending& b) {
    if (a.available_step != b.available_step) return a.available_step < b.available_step;
    if (a.message.sender_id != b.message.sender_id) {
      return a.message.sender_id < b.message.sender_id;
    }
    if (a.message.kind != b.message.kind) {
      return static_cast<int>(a.message.kind) < static_cast<int>(b.message.kind);
    }
    return a.sequence < b.sequence;  // FIFO per link
  });

  std::vector<V2VMessage> out;
  out.reserve(due.size());
  for (Pending& p : due) {
    if (trace_ != nullptr) {
      nlohmann::json j{{"tick", tick},
                       {"recipient", recipient_index},
                       {"sender", p.message.sender_id},
                       {"sent_step", p.message.timestamp_step},
                       {"kind", to_string(p.message.kind)}};
      if (p.message.forecast) j["forecast_len"] = p.message.forecast->velocities_m_s.size();
      if (p.message.radar_headway_m) j["radar_headway_m"] = *p.message.radar_headway_m;
      if (p.message.gps_position_m) j["gps_position_m"] = *p.message.gps_position_m;
      *trace_ << j.dump() << "\n";
    }
    out.push_back(std::move(p.message));
    ++delivered_count_;
  }
  return out;
}

}  // namespace platoon
