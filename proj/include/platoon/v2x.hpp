#pragma once

#include <optional>
#include <string>
#include <vector>

#include "platoon/mpc_controller.hpp"
#include "platoon/types.hpp"

namespace platoon {

/// A signalized intersection: fixed-cycle phases plus an optional scripted
/// actuation schedule that perturbs the advertised time remaining.
struct TrafficLight {
  int id = 0;
  double position_m = 0.0;     ///< stop-bar position
  double comm_range_m = 300.0;
  double cycle_offset_s = 0.0;
  double red_s = 30.0;
  double yellow_s = 5.0;
  double green_s = 25.0;
  double cycle_length_s = 60.0;
  /// (time_s, advertised c_r override) pairs for actuated behaviour.
  std::vector<std::pair<double, double>> actuation_overrides;

  void validate() const;  ///< red + yellow + green must equal the cycle length

  /// Phase and exact time remaining at `time_s`. Phase boundaries belong to
  /// the new phase, so a boundary query sees the full duration remaining.
  std::pair<Phase, double> phase_at(double time_s) const;
};

struct SpatMessage {
  int light_id = 0;
  Phase phase = Phase::Red;
  double time_remaining_s = 0.0;
  double stopbar_position_m = 0.0;
  double intersection_length_m = 20.0;
};

/// SPaT broadcast gated by communication range; empty outside it.
std::optional<SpatMessage> spat_from_light(const TrafficLight& light, double ego_position_m,
                                           double time_s, double intersection_length_m = 20.0);

struct PlatoonPlan {
  int plan_id = 0;
  std::vector<int> ordered_vehicle_ids;  // leader first
  double desired_gap_m = 6.0;
  double desired_speed_m_s = 15.0;
};

enum class MessageKind { Forecast, RearGps, RadarChain, Status, PlanProposal, Ack, Activate, Cancel };

const char* to_string(MessageKind kind);

/// One V2V record. Which optional payloads are populated depends on the kind;
/// receivers pick fields based on the sender id.
struct V2VMessage {
  int sender_id = -1;
  int sender_index = -1;  // position in the platoon, 0 = leader
  long timestamp_step = 0;
  MessageKind kind = MessageKind::Status;
  std::optional<VelocityForecast> forecast;
  std::optional<double> radar_headway_m;
  std::optional<double> gps_position_m;
  int plan_status = 0;
  FsmState fsm_state = FsmState::Ready;
  std::optional<PlatoonPlan> plan;
  std::optional<bool> ack_accept;
  std::optional<long> activation_step;
  std::optional<int> cancel_reason;
  std::optional<double> sender_velocity_m_s;  // proposals carry the leader speed
};

/// Flow topology: forecasts go leader -> every follower and each vehicle ->
/// immediate successor; rear GPS goes rear -> leader; shared radar goes from
/// each follower to everything behind it. Coordination traffic is proposal /
/// activate leader -> followers, ack follower -> leader, cancel and status
/// broadcast. Unknown senders yield an empty list.
std::vector<int> route(const V2VMessage& message, int platoon_size);

struct Blackout {
  int sender_index = -1;
  long from_step = 0;
  long to_step = 0;
};

struct BusConfig {
  int latency_steps = 0;
  std::vector<Blackout> blackouts;
};

/// Deterministic simulated broadcast bus. A message sent at step k with
/// latency l becomes visible to each recipient from step k+l on, and is
/// handed out once at that recipient's next poll, ordered by availability
/// step, sender id, kind and send order.
class SimulatedBus {
 public:
  SimulatedBus() = default;
  SimulatedBus(const BusConfig& config, int platoon_size);

  void send(const V2VMessage& message, long tick);
  std::vector<V2VMessage> deliver(int recipient_index, long tick);

  long sent_count() const { return sent_count_; }
  long delivered_count() const { return delivered_count_; }
  /// Newline-delimited JSON trace of every delivered message.
  void set_trace_sink(std::ostream* sink) { trace_ = sink; }

 private:
  struct Pending {
    long available_step = 0;
    int recipient = -1;
    long sequence = 0;
    V2VMessage message;
  };

  BusConfig config_;
  int platoon_size_ = 0;
  long sequence_ = 0;
  long sent_count_ = 0;
  long delivered_count_ = 0;
  std::vector<Pending> queue_;
  std::ostream* trace_ = nullptr;
};

}  // namespace platoon
