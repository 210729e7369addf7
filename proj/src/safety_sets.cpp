#include "platoon/safety_sets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <stdexcept>

#include <json.hpp>

namespace platoon {

namespace {

constexpr int kFamilyFormatVersion = 1;

double front_boundary(double velocity, double front_velocity, const SafetyParams& p) {
  return velocity * velocity / (2.0 * p.a_min_brake_m_s2) -
         front_velocity * front_velocity / (2.0 * p.a_max_brake_m_s2) + p.d_min_front_m;
}

double stopbar_boundary(double velocity, const SafetyParams& p) {
  return velocity * velocity / (2.0 * p.a_min_brake_m_s2) + p.d_min_stopbar_m;
}

/// Secant facets h >= chord(v) over a uniform velocity grid. Chords of a
/// convex parabola lie above it on their own interval and below it elsewhere,
/// so the conjunction is the epigraph of the piecewise-linear interpolant and
/// sits inside the exact set.
void add_secant_facets(PolyhedralSet& set, int n_facets, double v_max,
                       const std::function<double(double)>& boundary) {
  const double dv = v_max / n_facets;
  for (int j = 0; j < n_facets; ++j) {
    const double va = j * dv;
    const double vb = (j + 1) * dv;
    const double ga = boundary(va);
    const double gb = boundary(vb);
    const double slope = (gb - ga) / (vb - va);
    // d >= ga + slope (v - va)  <=>  d - slope v >= ga - slope va
    set.facets.push_back({1.0, -slope, ga - slope * va});
  }
}

}  // namespace

void SafetyParams::validate() const {
  if (!(a_min_brake_m_s2 > 0.0) || !(a_min_brake_m_s2 <= a_max_brake_m_s2)) {
    throw std::invalid_argument("SafetyParams: need 0 < a_min_brake <= a_max_brake");
  }
  if (!(d_min_front_m > 0.0) || !(d_min_stopbar_m > 0.0)) {
    throw std::invalid_argument("SafetyParams: minimum distances must be positive");
  }
  if (!(intersection_length_m > 0.0)) {
    throw std::invalid_argument("SafetyParams: intersection length must be positive");
  }
}

bool in_front_set(double headway_m, double velocity_m_s, double front_velocity_m_s,
                  const SafetyParams& params) {
  const double bound =
      std::max(params.d_min_front_m, front_boundary(velocity_m_s, front_velocity_m_s, params));
  return headway_m >= bound;
}

bool in_stopbar_set(double dist_to_stopbar_m, double velocity_m_s, const SafetyParams& params) {
  return dist_to_stopbar_m >= stopbar_boundary(velocity_m_s, params);
}

bool front_priority_condition(double headway_m, double front_velocity_m_s,
                              double dist_to_stopbar_m, const SafetyParams& params) {
  return headway_m + front_velocity_m_s * front_velocity_m_s / (2.0 * params.a_max_brake_m_s2) <=
         dist_to_stopbar_m;
}

PriorityObstacle priority_obstacle(double headway_m, double front_velocity_m_s,
                                   double dist_to_stopbar_m, bool intersection_requires_stop,
                                   bool front_present, const SafetyParams& params) {
  if (front_present && intersection_requires_stop) {
    return front_priority_condition(headway_m, front_velocity_m_s, dist_to_stopbar_m, params)
               ? PriorityObstacle::FrontVehicle
               : PriorityObstacle::Intersection;
  }
  if (front_present) return PriorityObstacle::FrontVehicle;
  if (intersection_requires_stop) return PriorityObstacle::Intersection;
  return PriorityObstacle::None;
}

bool check_proposition2(double headway_m, double velocity_m_s, double front_velocity_m_s,
                        double dist_to_stopbar_m, const SafetyParams& params) {
  // The guarantee only holds for the common (smaller) margin.
  SafetyParams common = params;
  const double d_min = std::min(params.d_min_front_m, params.d_min_stopbar_m);
  common.d_min_front_m = d_min;
  common.d_min_stopbar_m = d_min;

  const bool front_priority =
      front_priority_condition(headway_m, front_velocity_m_s, dist_to_stopbar_m, common);
  const bool in_front = in_front_set(headway_m, velocity_m_s, front_velocity_m_s, common);
  const bool in_stopbar = in_stopbar_set(dist_to_stopbar_m, velocity_m_s, common);
  if (!front_priority) return !in_stopbar || in_front;
  return !in_front || in_stopbar;
}

bool PolyhedralSet::contains(double distance_m, double velocity_m_s) const {
  if (velocity_m_s < v_min || velocity_m_s > v_max) return false;
  for (const HalfPlane& f : facets) {
    if (f.coef_dist * distance_m + f.coef_vel * velocity_m_s < f.rhs) return false;
  }
  return true;
}

PolyhedralSet polyhedral_front_set(double front_velocity_m_s, const SafetyParams& params,
                                   int n_facets, double v_max_m_s) {
  if (n_facets < 2) throw std::invalid_argument("polyhedral_front_set: need n_facets >= 2");
  PolyhedralSet set;
  set.v_max = v_max_m_s;
  set.grid_front_velocity_m_s = front_velocity_m_s;
  set.facets.push_back({1.0, 0.0, params.d_min_front_m});  // h >= d_min
  add_secant_facets(set, n_facets, v_max_m_s,
                    [&](double v) { return front_boundary(v, front_velocity_m_s, params); });
  return set;
}

PolyhedralSet polyhedral_stopbar_set(const SafetyParams& params, int n_facets,
                                     double v_max_m_s) {
  if (n_facets < 2) throw std::invalid_argument("polyhedral_stopbar_set: need n_facets >= 2");
  PolyhedralSet set;
  set.v_max = v_max_m_s;
  set.facets.push_back({1.0, 0.0, params.d_min_stopbar_m});
  add_secant_facets(set, n_facets, v_max_m_s,
                    [&](double v) { return stopbar_boundary(v, params); });
  return set;
}

PolyhedralFamily PolyhedralFamily::build(const SafetyParams& params, int n_facets,
                                         double grid_step_m_s, double v_max_m_s) {
  if (!(grid_step_m_s > 0.0)) {
    throw std::invalid_argument("PolyhedralFamily: grid step must be positive");
  }
  PolyhedralFamily family;
  family.grid_step_ = grid_step_m_s;
  const int count = static_cast<int>(std::floor(v_max_m_s / grid_step_m_s + 1e-9)) + 1;
  family.front_sets_.reserve(count);
  for (int i = 0; i < count; ++i) {
    family.front_sets_.push_back(
        polyhedral_front_set(i * grid_step_m_s, params, n_facets, v_max_m_s));
  }
  family.stopbar_ = polyhedral_stopbar_set(params, n_facets, v_max_m_s);
  return family;
}

const PolyhedralSet& PolyhedralFamily::front_set_for(double front_velocity_m_s) const {
  if (front_sets_.empty()) throw std::logic_error("PolyhedralFamily: not built");
  // Round down: a smaller front velocity shrinks the set.
  int idx = static_cast<int>(std::floor(std::max(0.0, front_velocity_m_s) / grid_step_));
  idx = std::clamp(idx, 0, static_cast<int>(front_sets_.size()) - 1);
  return front_sets_[static_cast<size_t>(idx)];
}

namespace {

nlohmann::json set_to_json(const PolyhedralSet& set) {
  nlohmann::json facets = nlohmann::json::array();
  for (const HalfPlane& f : set.facets) {
    facets.push_back({{"coef_dist", f.coef_dist}, {"coef_vel", f.coef_vel}, {"rhs", f.rhs}});
  }
  return {{"facets", facets},
          {"v_min", set.v_min},
          {"v_max", set.v_max},
          {"grid_front_velocity_m_s", set.grid_front_velocity_m_s}};
}

PolyhedralSet set_from_json(const nlohmann::json& j) {
  PolyhedralSet set;
  set.v_min = j.at("v_min").get<double>();
  set.v_max = j.at("v_max").get<double>();
  set.grid_front_velocity_m_s = j.at("grid_front_velocity_m_s").get<double>();
  for (const auto& f : j.at("facets")) {
    set.facets.push_back({f.at("coef_dist").get<double>(), f.at("coef_vel").get<double>(),
                          f.at("rhs").get<double>()});
  }
  return set;
}

}  // namespace

void PolyhedralFamily::save(const std::string& path) const {
  nlohmann::json j;
  j["format_version"] = kFamilyFormatVersion;
  j["grid_step_m_s"] = grid_step_;
  j["stopbar_set"] = set_to_json(stopbar_);
  j["front_sets"] = nlohmann::json::array();
  for (const PolyhedralSet& s : front_sets_) j["front_sets"].push_back(set_to_json(s));
  std::ofstream out(path);
  if (!out) throw std::runtime_error("PolyhedralFamily::save: cannot open " + path);
  out << j.dump(2) << "\n";
}

PolyhedralFamily PolyhedralFamily::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("PolyhedralFamily::load: cannot open " + path);
  nlohmann::json j;
  in >> j;
  if (j.at("format_version").get<int>() != kFamilyFormatVersion) {
    throw std::runtime_error("PolyhedralFamily::load: unsupported format version");
  }
  PolyhedralFamily family;
  family.grid_step_ = j.at("grid_step_m_s").get<double>();
  family.stopbar_ = set_from_json(j.at("stopbar_set"));
  for (const auto& s : j.at("front_sets")) family.front_sets_.push_back(set_from_json(s));
  return family;
}

StopDecision should_stop_at_light(double leader_velocity_m_s, double dist_to_rear_m,
                                  double dist_to_stopbar_m, Phase phase,
                                  double time_remaining_s, const SafetyParams& params) {
  if (time_remaining_s < 0.0) {
    throw std::domain_error("should_stop_at_light: negative time remaining");
  }

  bool stop_indicated = false;
  switch (phase) {
    case Phase::Red:
      return StopDecision::Stop;
    case Phase::Green:
      if (leader_velocity_m_s <= params.v_low_m_s) {
        stop_indicated = time_remaining_s < params.t_min_s;
      } else {
        stop_indicated = time_remaining_s * leader_velocity_m_s <
                         dist_to_rear_m + dist_to_stopbar_m + params.intersection_length_m;
      }
      break;
    case Phase::Yellow:
      stop_indicated = true;
      break;
  }
  if (!stop_indicated) return StopDecision::Proceed;

  // Can the leader still stop, leaving the stop-bar margin? Equality stops.
  const bool can_stop =
      leader_velocity_m_s * leader_velocity_m_s / (2.0 * params.a_min_brake_m_s2) <=
      dist_to_stopbar_m - params.d_min_stopbar_m;
  return can_stop ? StopDecision::Stop : StopDecision::MustRun;
}

}  // namespace platoon
