#pragma once

namespace platoon {

enum class VehicleRole { Leader, Follower };

/// Traffic light phase. Cycles red -> green -> yellow -> red.
enum class Phase { Red, Green, Yellow };

/// Platoon management states (one machine per vehicle).
enum class FsmState { Ready, PlanProposed, PlanActive, PlanCancel };

inline const char* to_string(Phase p) {
  switch (p) {
    case Phase::Red: return "red";
    case Phase::Green: return "green";
    case Phase::Yellow: return "yellow";
  }
  return "?";
}

inline const char* to_string(FsmState s) {
  switch (s) {
    case FsmState::Ready: return "Ready";
    case FsmState::PlanProposed: return "PlanProposed";
    case FsmState::PlanActive: return "PlanActive";
    case FsmState::PlanCancel: return "PlanCancel";
  }
  return "?";
}

}  // namespace platoon
