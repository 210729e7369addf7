#pragma once

#include <string>
#include <vector>

#include "platoon/types.hpp"

namespace platoon {

/// Braking capabilities and comfort margins used for the safe-state sets and
/// the intersection stop decision.
struct SafetyParams {
  double a_min_brake_m_s2 = 3.2;     ///< braking rate the ego is guaranteed to achieve
  double a_max_brake_m_s2 = 5.0912;  ///< hardest braking assumed for the front vehicle
  double d_min_front_m = 6.0;        ///< minimum distance to a front vehicle
  double d_min_stopbar_m = 5.0;      ///< minimum distance to a stop bar
  double intersection_length_m = 20.0;
  double t_min_s = 6.0;              ///< low-speed go threshold on remaining green
  double v_low_m_s = 1.0;            ///< below this the low-speed go rule applies

  void validate() const;  ///< throws std::invalid_argument on inconsistent values
};

enum class PriorityObstacle { FrontVehicle, Intersection, None };

enum class StopDecision {
  Proceed,  ///< keep going, the intersection does not bind
  Stop,     ///< plan a stop at the stop bar
  MustRun   ///< a safe stop is no longer possible, proceed through
};

/// Exact safe-following set: from (h0, v0) the ego can brake at a_min while
/// the front vehicle brakes at a_max from vf0, keeping h >= d_min_front.
bool in_front_set(double headway_m, double velocity_m_s, double front_velocity_m_s,
                  const SafetyParams& params);

/// Exact stop-bar set: from (dtl0, v0) the ego can stop leaving d_min_stopbar.
bool in_stopbar_set(double dist_to_stopbar_m, double velocity_m_s, const SafetyParams& params);

/// True when the front vehicle can itself stop before the stop bar, in which
/// case it is the binding obstacle.
bool front_priority_condition(double headway_m, double front_velocity_m_s,
                              double dist_to_stopbar_m, const SafetyParams& params);

PriorityObstacle priority_obstacle(double headway_m, double front_velocity_m_s,
                                   double dist_to_stopbar_m, bool intersection_requires_stop,
                                   bool front_present, const SafetyParams& params);

/// Test oracle for the priority-set containment: with a common minimum
/// distance, membership in the non-priority set implies membership in the
/// priority set. Returns true when the implication holds at this sample.
bool check_proposition2(double headway_m, double velocity_m_s, double front_velocity_m_s,
                        double dist_to_stopbar_m, const SafetyParams& params);

/// Half-plane coef_dist * d + coef_vel * v >= rhs over (distance, velocity).
struct HalfPlane {
  double coef_dist = 0.0;
  double coef_vel = 0.0;
  double rhs = 0.0;
};

/// Conjunction of half-planes plus a velocity range; inner approximation of
/// one of the exact sets.
struct PolyhedralSet {
  std::vector<HalfPlane> facets;
  double v_min = 0.0;
  double v_max = 20.0;
  double grid_front_velocity_m_s = 0.0;  ///< front-velocity grid point (front sets)

  bool contains(double distance_m, double velocity_m_s) const;
};

/// Inner polyhedral approximation of the front set for a fixed front velocity:
/// secant facets to the braking parabola over a uniform velocity grid, so the
/// polyhedron lies inside the exact set. Requires n_facets >= 2.
PolyhedralSet polyhedral_front_set(double front_velocity_m_s, const SafetyParams& params,
                                   int n_facets, double v_max_m_s = 20.0);

/// Same construction for the stop-bar set (no front-velocity dependence).
PolyhedralSet polyhedral_stopbar_set(const SafetyParams& params, int n_facets,
                                     double v_max_m_s = 20.0);

/// Precomputed family of front sets over a front-velocity grid plus the single
/// stop-bar set. Lookup rounds the query velocity down to the nearest grid
/// point, which shrinks the set and stays conservative.
class PolyhedralFamily {
 public:
  PolyhedralFamily() = default;

  static PolyhedralFamily build(const SafetyParams& params, int n_facets = 16,
                                double grid_step_m_s = 0.5, double v_max_m_s = 20.0);

  const PolyhedralSet& front_set_for(double front_velocity_m_s) const;
  const PolyhedralSet& stopbar_set() const { return stopbar_; }
  double grid_step() const { return grid_step_; }
  bool empty() const { return front_sets_.empty(); }

  /// Versioned JSON round trip for reuse across runs.
  void save(const std::string& path) const;
  static PolyhedralFamily load(const std::string& path);

 private:
  std::vector<PolyhedralSet> front_sets_;
  PolyhedralSet stopbar_;
  double grid_step_ = 0.5;
};

/// Leader's stop/proceed decision for the nearest upcoming light.
/// `dist_to_rear_m` is the leader-to-rear-vehicle distance used to check that
/// the whole platoon clears the intersection during the remaining green.
StopDecision should_stop_at_light(double leader_velocity_m_s, double dist_to_rear_m,
                                  double dist_to_stopbar_m, Phase phase,
                                  double time_remaining_s, const SafetyParams& params);

}  // namespace platoon
