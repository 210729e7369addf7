#pragma once

#include <optional>
#include <vector>

#include "platoon/types.hpp"
#include "platoon/v2x.hpp"

namespace platoon {

enum class FsmEvent {
  StartRequest,
  PlanReceived,
  Ack,
  AllAcked,
  Timeout,
  Reject,
  ManualCancel,
  UnsafeCondition,
  CancelWaitOver
};

const char* to_string(FsmEvent event);

struct TransitionResult {
  FsmState next = FsmState::Ready;
  bool defined = false;  ///< false: the pair has no edge, state unchanged
};

/// Total transition function of the plan-management machine.
TransitionResult fsm_transition(FsmState state, FsmEvent event);

/// Plan-cancelling conditions, checked in this fixed priority order.
enum class UnsafeKind {
  None = 0,
  WrongOrdering = 1,
  MessageTimeout = 2,
  PedalTap = 3,
  FrontOutOfRange = 4,
  VelocityBound = 5
};

struct VehicleSafetyView {
  bool ordering_ok = true;
  long worst_message_age_steps = 0;
  long message_timeout_steps = 5;
  bool pedal_tapped = false;
  bool front_vehicle_expected = false;       ///< followers expect a radar return
  std::optional<double> radar_headway_m;     ///< empty means no return
  double radar_out_of_range_m = 150.0;
  double velocity_m_s = 0.0;
  double v_min_m_s = 0.0;
  double v_max_m_s = 20.0;
  double velocity_tolerance_m_s = 0.5;
};

/// First matching cancel condition, or None.
UnsafeKind unsafe_condition_check(const VehicleSafetyView& view);

struct CoordinatorConfig {
  long proposal_timeout_steps = 30;
  long cancel_wait_steps = 20;
  int bus_latency_steps = 0;
  double ack_gap_min_m = 2.0;
  double ack_gap_max_m = 100.0;
  double ack_speed_diff_max_m_s = 3.0;
  bool always_reject = false;  ///< test hook: this follower rejects proposals
};

struct FsmLogEntry {
  long tick = 0;
  int vehicle_index = 0;
  FsmState from = FsmState::Ready;
  FsmEvent event = FsmEvent::StartRequest;
  FsmState to = FsmState::Ready;
};

/// Per-vehicle plan coordinator: drives the state machine from bus traffic
/// and local conditions, emits coordination messages, and decides when the
/// platooning controller is engaged. Activation is scheduled at an explicit
/// step so every vehicle engages together.
class PlatoonCoordinator {
 public:
  PlatoonCoordinator(int vehicle_id, int vehicle_index, int platoon_size,
                     const CoordinatorConfig& config);

  struct TickInput {
    long step = 0;
    const std::vector<V2VMessage>* inbox = nullptr;
    VehicleSafetyView safety;
    bool start_request = false;   // leader only
    bool manual_cancel = false;   // leader only, while proposing
    PlatoonPlan proposal_template;  // plan the leader proposes on start
    double own_velocity_m_s = 0.0;
    std::optional<double> own_gap_m;  // used to validate a received plan
  };

  std::vector<V2VMessage> tick(const TickInput& input);

  /// Scenario hook: start the run with the plan already active.
  void force_active(const PlatoonPlan& plan, long step);

  FsmState state() const { return state_; }
  bool engaged() const { return state_ == FsmState::PlanActive; }
  int plan_status() const { return engaged() ? 1 : 0; }
  const std::optional<PlatoonPlan>& plan() const { return plan_; }
  UnsafeKind last_unsafe() const { return last_unsafe_; }
  const std::vector<FsmLogEntry>& log() const { return log_; }

 private:
  void apply(long step, FsmEvent event);
  V2VMessage base_message(long step, MessageKind kind) const;

  int id_;
  int index_;
  int platoon_size_;
  CoordinatorConfig config_;
  FsmState state_ = FsmState::Ready;
  std::optional<PlatoonPlan> plan_;
  std::vector<bool> acked_;
  long proposal_step_ = -1;
  long cancel_entered_step_ = -1;
  std::optional<long> activation_step_;
  UnsafeKind last_unsafe_ = UnsafeKind::None;
  std::vector<FsmLogEntry> log_;
};

}  // namespace platoon
