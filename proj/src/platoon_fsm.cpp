#include "platoon/platoon_fsm.hpp"

#include <algorithm>
#include <cmath>

namespace platoon {

const char* to_string(FsmEvent event) {
  switch (event) {
    case FsmEvent::StartRequest: return "StartRequest";
    case FsmEvent::PlanReceived: return "PlanReceived";
    case FsmEvent::Ack: return "Ack";
    case FsmEvent::AllAcked: return "AllAcked";
    case FsmEvent::Timeout: return "Timeout";
    case FsmEvent::Reject: return "Reject";
    case FsmEvent::ManualCancel: return "ManualCancel";
    case FsmEvent::UnsafeCondition: return "UnsafeCondition";
    case FsmEvent::CancelWaitOver: return "CancelWaitOver";
  }
  return "?";
}

TransitionResult fsm_transition(FsmState state, FsmEvent event) {
  switch (state) {
    case FsmState::Ready:
      if (event == FsmEvent::StartRequest || event == FsmEvent::PlanReceived) {
        return {FsmState::PlanProposed, true};
      }
      break;
    case FsmState::PlanProposed:
      switch (event) {
        case FsmEvent::Ack: return {FsmState::PlanProposed, true};  // awaiting the rest
        case FsmEvent::AllAcked: return {FsmState::PlanActive, true};
        case FsmEvent::Timeout:
        case FsmEvent::Reject: return {FsmState::Ready, true};
        case FsmEvent::ManualCancel: return {FsmState::PlanCancel, true};
        default: break;
      }
      break;
    case FsmState::PlanActive:
      if (event == FsmEvent::Timeout || event == FsmEvent::UnsafeCondition) {
        return {FsmState::PlanCancel, true};
      }
      break;
    case FsmState::PlanCancel:
      if (event == FsmEvent::CancelWaitOver) return {FsmState::Ready, true};
      break;
  }
  return {state, false};  // no edge: stay put
}

UnsafeKind unsafe_condition_check(const VehicleSafetyView& view) {
  if (!view.ordering_ok) return UnsafeKind::WrongOrdering;
  if (view.worst_message_age_steps > view.message_timeout_steps) return UnsafeKind::MessageTimeout;
  if (view.pedal_tapped) return UnsafeKind::PedalTap;
  if (view.front_vehicle_expected &&
      (!view.radar_headway_m || *view.radar_headway_m > view.radar_out_of_range_m)) {
    return UnsafeKind::FrontOutOfRange;
  }
  if (view.velocity_m_s < view.v_min_m_s - view.velocity_tolerance_m_s ||
      view.velocity_m_s > view.v_max_m_s + view.velocity_tolerance_m_s) {
    return UnsafeKind::VelocityBound;
  }
  return UnsafeKind::None;
}

PlatoonCoordinator::PlatoonCoordinator(int vehicle_id, int vehicle_index, int platoon_size,
                                       const CoordinatorConfig& config)
    : id_(vehicle_id), index_(vehicle_index), platoon_size_(platoon_size), config_(config),
      acked_(static_cast<size_t>(platoon_size), false) {}

void PlatoonCoordinator::apply(long step, FsmEvent event) {
  const TransitionResult r = fsm_transition(state_, event);
  log_.push_back({step, index_, state_, event, r.next});
  if (!r.defined) return;
  if (r.next == FsmState::PlanCancel && state_ != FsmState::PlanCancel) {
    cancel_entered_step_ = step;
  }
  state_ = r.next;
  if (state_ == FsmState::Ready) {
    plan_.reset();
    activation_step_.reset();
    std::fill(acked_.begin(), acked_.end(), false);
    proposal_step_ = -1;
  }
}

void PlatoonCoordinator::force_active(const PlatoonPlan& plan, long step) {
  plan_ = plan;
  state_ = FsmState::PlanActive;
  proposal_step_ = step;
  std::fill(acked_.begin(), acked_.end(), true);
}

V2VMessage PlatoonCoordinator::base_message(long step, MessageKind kind) const {
  V2VMessage m;
  m.sender_id = id_;
  m.sender_index = index_;
  m.timestamp_step = step;
  m.kind = kind;
  m.fsm_state = state_;
  m.plan_status = plan_status();
  return m;
}

std::vector<V2VMessage> PlatoonCoordinator::tick(const TickInput& input) {
  std::vector<V2VMessage> outbox;
  const long step = input.step;

  // Scheduled joint activation fires first so every vehicle flips on the
  // same step.
  if (activation_step_ && state_ == FsmState::PlanProposed && step >= *activation_step_) {
    apply(step, FsmEvent::AllAcked);
    activation_step_.reset();
  }

  // Inbox.
  if (input.inbox != nullptr) {
    for (const V2VMessage& msg : *input.inbox) {
      switch (msg.kind) {
        case MessageKind::PlanProposal: {
          if (index_ == 0 || state_ != FsmState::Ready || !msg.plan) break;
          plan_ = msg.plan;
          proposal_step_ = step;
          apply(step, FsmEvent::PlanReceived);
          // Validate: this vehicle's sensors must make the plan plausible.
          bool ok = !config_.always_reject;
          if (ok && input.own_gap_m) {
            ok = *input.own_gap_m >= config_.ack_gap_min_m &&
                 *input.own_gap_m <= config_.ack_gap_max_m;
          }
          if (ok && msg.sender_velocity_m_s) {
            ok = std::abs(input.own_velocity_m_s - *msg.sender_velocity_m_s) <
                 config_.ack_speed_diff_max_m_s;
          }
          V2VMessage ack = base_message(step, MessageKind::Ack);
          ack.ack_accept = ok;
          outbox.push_back(ack);
          if (!ok) apply(step, FsmEvent::Reject);
          break;
        }
        case MessageKind::Ack: {
          if (index_ != 0 || state_ != FsmState::PlanProposed || !msg.ack_accept) break;
          if (*msg.ack_accept) {
            if (msg.sender_index >= 0 && msg.sender_index < platoon_size_) {
              acked_[static_cast<size_t>(msg.sender_index)] = true;
              apply(step, FsmEvent::Ack);
            }
          } else {
            apply(step, FsmEvent::Reject);
          }
          break;
        }
        case MessageKind::Activate: {
          if (state_ == FsmState::PlanProposed && msg.activation_step) {
            activation_step_ = *msg.activation_step;
            if (step >= *activation_step_) apply(step, FsmEvent::AllAcked);
          }
          break;
        }
        case MessageKind::Cancel: {
          if (state_ == FsmState::PlanActive) {
            last_unsafe_ = msg.cancel_reason ? static_cast<UnsafeKind>(*msg.cancel_reason)
                                             : UnsafeKind::None;
            apply(step, FsmEvent::UnsafeCondition);
          } else if (state_ == FsmState::PlanProposed) {
            apply(step, FsmEvent::Reject);  // proposal is off
          }
          break;
        }
        default:
          break;
      }
    }
  }

  // Leader-side plan lifecycle.
  if (index_ == 0) {
    if (state_ == FsmState::Ready && input.start_request) {
      plan_ = input.proposal_template;
      proposal_step_ = step;
      std::fill(acked_.begin(), acked_.end(), false);
      acked_[0] = true;  // leader trivially agrees with its own plan
      apply(step, FsmEvent::StartRequest);
      V2VMessage proposal = base_message(step, MessageKind::PlanProposal);
      proposal.plan = plan_;
      proposal.sender_velocity_m_s = input.own_velocity_m_s;
      outbox.push_back(proposal);
    }
    if (state_ == FsmState::PlanProposed) {
      if (input.manual_cancel) {
        apply(step, FsmEvent::ManualCancel);
        V2VMessage cancel = base_message(step, MessageKind::Cancel);
        cancel.cancel_reason = static_cast<int>(UnsafeKind::None);
        outbox.push_back(cancel);
      } else if (!activation_step_ &&
                 std::all_of(acked_.begin(), acked_.end(), [](bool b) { return b; })) {
        activation_step_ = step + 1 + config_.bus_latency_steps;
        V2VMessage activate = base_message(step, MessageKind::Activate);
        activate.activation_step = activation_step_;
        outbox.push_back(activate);
      }
    }
  }

  // Proposal timeout (all participants).
  if (state_ == FsmState::PlanProposed && !activation_step_ && proposal_step_ >= 0 &&
      step - proposal_step_ > config_.proposal_timeout_steps) {
    apply(step, FsmEvent::Timeout);
  }

  // Continuous monitoring while the plan is active.
  if (state_ == FsmState::PlanActive) {
    const UnsafeKind unsafe = unsafe_condition_check(input.safety);
    if (unsafe != UnsafeKind::None) {
      last_unsafe_ = unsafe;
      const FsmEvent event = unsafe == UnsafeKind::MessageTimeout ? FsmEvent::Timeout
                                                                  : FsmEvent::UnsafeCondition;
      apply(step, event);
      V2VMessage cancel = base_message(step, MessageKind::Cancel);
      cancel.cancel_reason = static_cast<int>(unsafe);
      outbox.push_back(cancel);
    }
  }

  // Leave the cancel state after the configured wait.
  if (state_ == FsmState::PlanCancel && cancel_entered_step_ >= 0 &&
      step - cancel_entered_step_ >= config_.cancel_wait_steps) {
    apply(step, FsmEvent::CancelWaitOver);
  }

  return outbox;
}

}  // namespace platoon
