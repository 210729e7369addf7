#include "platoon/mpc_controller.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace platoon {

void MpcParams::validate() const {
  if (horizon_steps < 1) throw std::invalid_argument("MpcParams: horizon must be >= 1");
  if (trust_horizon < 0 || trust_horizon > horizon_steps) {
    throw std::invalid_argument("MpcParams: trust horizon must lie in [0, N_p]");
  }
  if (!(v_max_m_s > v_min_m_s)) throw std::invalid_argument("MpcParams: v_max must exceed v_min");
  if (!(torque_max_accel_Nm > 0.0) || !(torque_max_brake_Nm > 0.0)) {
    throw std::invalid_argument("MpcParams: torque limits must be positive");
  }
  if (!(soft_weight > 0.0)) throw std::invalid_argument("MpcParams: soft weight must be positive");
  if (input_weight_cross * input_weight_cross >
      input_weight_accel * input_weight_brake * (1.0 + 1e-12)) {
    throw std::invalid_argument("MpcParams: R_0^2 must not exceed R_a R_b (convexity)");
  }
}

std::vector<double> worst_case_front_forecast(double initial_velocity_m_s,
                                              double a_max_brake_m_s2, double dt_s,
                                              int horizon_steps, bool stepped) {
  if (initial_velocity_m_s < 0.0) {
    throw std::domain_error("worst_case_front_forecast: negative velocity");
  }
  std::vector<double> v(static_cast<size_t>(horizon_steps) + 1);
  v[0] = initial_velocity_m_s;
  for (int k = 1; k <= horizon_steps; ++k) {
    const double decrement = (stepped ? k : 1) * a_max_brake_m_s2 * dt_s;
    v[static_cast<size_t>(k)] = std::max(0.0, v[static_cast<size_t>(k) - 1] - decrement);
  }
  return v;
}

std::vector<double> align_forecast(const VelocityForecast& forecast, long now_step,
                                   int samples) {
  if (forecast.velocities_m_s.empty()) {
    throw std::invalid_argument("align_forecast: empty forecast");
  }
  const long shift = std::max(0L, now_step - forecast.issue_step);
  const long last = static_cast<long>(forecast.velocities_m_s.size()) - 1;
  std::vector<double> out(static_cast<size_t>(samples));
  for (int i = 0; i < samples; ++i) {
    out[static_cast<size_t>(i)] =
        forecast.velocities_m_s[static_cast<size_t>(std::min(shift + i, last))];
  }
  return out;
}

namespace {

/// Scaled discrete model: torque state and both inputs normalized by their
/// limits so every matrix entry stays O(1)..O(1e2).
struct ScaledModel {
  Eigen::MatrixXd a, b, e;
  Eigen::VectorXd c;
  int nx = 0, nw = 0;
};

ScaledModel scaled_discrete_model(const VehicleParams& vehicle, const MpcParams& params,
                                  VehicleRole role, double velocity) {
  const double v0 = std::clamp(velocity, 0.0, params.v_max_m_s);
  const LinearModel cont = linearize(vehicle, v0, role, params.v_max_m_s);
  const LinearModel disc = discretize(cont, vehicle.sample_time_s);

  const int nx = state_dim(role);
  const int it = state_index::torque(role);
  Eigen::VectorXd s = Eigen::VectorXd::Ones(nx);
  s(it) = params.torque_max_accel_Nm;
  const Eigen::Vector2d u_scale(params.torque_max_accel_Nm, params.torque_max_brake_Nm);

  ScaledModel m;
  m.nx = nx;
  m.nw = disturbance_dim(role);
  m.a = s.cwiseInverse().asDiagonal() * disc.state_matrix * s.asDiagonal();
  m.b = s.cwiseInverse().asDiagonal() * disc.input_matrix * u_scale.asDiagonal();
  m.e = s.cwiseInverse().asDiagonal() * disc.disturbance_matrix;
  m.c = s.cwiseInverse().asDiagonal() * disc.affine_offset;
  return m;
}

struct DistanceConstraint {
  int state_idx = 0;      // headway or stop-bar distance
  double velocity_coef = 0.0;  // time-headway multiplier
  double margin = 0.0;         // d_min
};

struct TerminalConstraint {
  int step = 0;
  int state_idx = 0;
  const PolyhedralSet* set = nullptr;
};

struct HorizonQp {
  QpProblem qp;
  int nx = 0;
  int horizon = 0;
  int state_offset(int k) const { return k * nx; }
  int input_offset(int k) const { return nx * (horizon + 2) + 2 * k; }
};

/// Shared assembly of the horizon-structured QP. Tracking cost on a single
/// state entry, quadratic and rate penalties on the normalized inputs,
/// box bounds plus optional distance and terminal rows, everything but the
/// dynamics soft.
HorizonQp build_horizon_qp(const ScaledModel& model, const MpcParams& params,
                           VehicleRole role, const Eigen::VectorXd& scaled_x0,
                           const std::vector<Eigen::VectorXd>& preview, int tracked_idx,
                           const std::vector<double>& reference,
                           const std::optional<DistanceConstraint>& distance,
                           const std::optional<TerminalConstraint>& terminal) {
  const int n_steps = params.horizon_steps;  // N_p
  const int nx = model.nx;
  const int iv = state_index::velocity(role);
  const int it = state_index::torque(role);
  const int n_states = nx * (n_steps + 2);
  const int n_inputs = 2 * (n_steps + 1);
  const int n = n_states + n_inputs;

  HorizonQp out;
  out.nx = nx;
  out.horizon = n_steps;
  QpProblem& qp = out.qp;

  const auto xof = [&](int k, int i) { return k * nx + i; };
  const auto uof = [&](int k, int i) { return n_states + 2 * k + i; };

  // Cost.
  std::vector<Eigen::Triplet<double>> h_trip;
  qp.linear_cost = Eigen::VectorXd::Zero(n);
  for (int k = 0; k <= n_steps + 1; ++k) {
    h_trip.emplace_back(xof(k, tracked_idx), xof(k, tracked_idx), 2.0);
    qp.linear_cost(xof(k, tracked_idx)) = -2.0 * reference[static_cast<size_t>(k)];
  }
  const double ra = params.input_weight_accel;
  const double rb = params.input_weight_brake;
  const double r0 = params.input_weight_cross;
  const double alpha = params.jerk_weight;
  for (int k = 0; k <= n_steps; ++k) {
    double daa = 2.0 * ra;
    double dbb = 2.0 * rb;
    // Rate penalty: interior inputs appear in two consecutive differences.
    const int appearances = (k == 0 || k == n_steps) ? 1 : 2;
    daa += 2.0 * alpha * appearances;
    dbb += 2.0 * alpha * appearances;
    h_trip.emplace_back(uof(k, 0), uof(k, 0), daa);
    h_trip.emplace_back(uof(k, 1), uof(k, 1), dbb);
    h_trip.emplace_back(uof(k, 0), uof(k, 1), 2.0 * r0);
    h_trip.emplace_back(uof(k, 1), uof(k, 0), 2.0 * r0);
    if (k < n_steps) {
      for (int i = 0; i < 2; ++i) {
        h_trip.emplace_back(uof(k, i), uof(k + 1, i), -2.0 * alpha);
        h_trip.emplace_back(uof(k + 1, i), uof(k, i), -2.0 * alpha);
      }
    }
  }
  qp.hessian.resize(n, n);
  qp.hessian.setFromTriplets(h_trip.begin(), h_trip.end());

  // Equalities: initial condition then dynamics.
  const int n_eq = nx + nx * (n_steps + 1);
  std::vector<Eigen::Triplet<double>> a_trip;
  qp.eq_rhs = Eigen::VectorXd::Zero(n_eq);
  for (int i = 0; i < nx; ++i) {
    a_trip.emplace_back(i, xof(0, i), 1.0);
    qp.eq_rhs(i) = scaled_x0(i);
  }
  for (int k = 0; k <= n_steps; ++k) {
    const int row0 = nx + k * nx;
    const Eigen::VectorXd rhs = model.e * preview[static_cast<size_t>(k)] + model.c;
    for (int i = 0; i < nx; ++i) {
      a_trip.emplace_back(row0 + i, xof(k + 1, i), 1.0);
      for (int j = 0; j < nx; ++j) {
        if (model.a(i, j) != 0.0) a_trip.emplace_back(row0 + i, xof(k, j), -model.a(i, j));
      }
      for (int j = 0; j < 2; ++j) {
        if (model.b(i, j) != 0.0) a_trip.emplace_back(row0 + i, uof(k, j), -model.b(i, j));
      }
      qp.eq_rhs(row0 + i) = rhs(i);
    }
  }
  qp.eq_matrix.resize(n_eq, n);
  qp.eq_matrix.setFromTriplets(a_trip.begin(), a_trip.end());

  // Inequalities, all soft.
  std::vector<Eigen::Triplet<double>> g_trip;
  std::vector<double> rhs_rows;
  const auto add_row = [&](std::initializer_list<std::pair<int, double>> coeffs, double rhs) {
    const int row = static_cast<int>(rhs_rows.size());
    for (const auto& [col, value] : coeffs) g_trip.emplace_back(row, col, value);
    rhs_rows.push_back(rhs);
  };
  for (int k = 0; k <= n_steps; ++k) {
    add_row({{xof(k, iv), 1.0}}, params.v_max_m_s);
    add_row({{xof(k, iv), -1.0}}, -params.v_min_m_s);
    add_row({{xof(k, it), 1.0}}, 1.0);   // normalized torque state
    add_row({{xof(k, it), -1.0}}, 0.0);
    add_row({{uof(k, 0), 1.0}}, 1.0);
    add_row({{uof(k, 0), -1.0}}, 0.0);
    add_row({{uof(k, 1), 1.0}}, 1.0);
    add_row({{uof(k, 1), -1.0}}, 0.0);
  }
  if (distance) {
    for (int k = 0; k <= n_steps; ++k) {
      add_row({{xof(k, iv), distance->velocity_coef}, {xof(k, distance->state_idx), -1.0}},
              -distance->margin);
    }
  }
  if (terminal && terminal->set != nullptr) {
    for (const HalfPlane& f : terminal->set->facets) {
      add_row({{xof(terminal->step, terminal->state_idx), -f.coef_dist},
               {xof(terminal->step, iv), -f.coef_vel}},
              -f.rhs);
    }
  }
  const int m = static_cast<int>(rhs_rows.size());
  qp.ineq_matrix.resize(m, n);
  qp.ineq_matrix.setFromTriplets(g_trip.begin(), g_trip.end());
  qp.ineq_rhs = Eigen::Map<Eigen::VectorXd>(rhs_rows.data(), m);
  qp.soft.assign(static_cast<size_t>(m), 1);
  qp.soft_weight = Eigen::VectorXd::Constant(m, params.soft_weight);
  return out;
}

Eigen::VectorXd scale_state(const VehicleState& state, VehicleRole role,
                            const MpcParams& params) {
  Eigen::VectorXd x = state.to_vector(role);
  x(state_index::torque(role)) /= params.torque_max_accel_Nm;
  return x;
}

/// Roll the plan through the model so the emitted forecast satisfies the
/// dynamics exactly, and read the first input back in physical units.
struct PlanExtract {
  ControlInput first;
  std::vector<ControlInput> inputs;
  std::vector<double> velocities;
};

PlanExtract extract_plan(const HorizonQp& built, const ScaledModel& model,
                         const MpcParams& params, VehicleRole role,
                         const Eigen::VectorXd& scaled_x0,
                         const std::vector<Eigen::VectorXd>& preview,
                         const Eigen::VectorXd& primal) {
  const int n_steps = built.horizon;
  const int iv = state_index::velocity(role);
  PlanExtract plan;
  plan.inputs.reserve(static_cast<size_t>(n_steps) + 1);
  plan.velocities.reserve(static_cast<size_t>(n_steps) + 2);

  Eigen::VectorXd x = scaled_x0;
  plan.velocities.push_back(x(iv));
  for (int k = 0; k <= n_steps; ++k) {
    const double ua = std::clamp(primal(built.input_offset(k)), 0.0, 1.0);
    const double ub = std::clamp(primal(built.input_offset(k) + 1), 0.0, 1.0);
    plan.inputs.push_back({ua * params.torque_max_accel_Nm, ub * params.torque_max_brake_Nm});
    x = model.a * x + model.b * Eigen::Vector2d(ua, ub) + model.e * preview[static_cast<size_t>(k)] +
        model.c;
    plan.velocities.push_back(x(iv));
  }
  plan.first = plan.inputs.front();
  return plan;
}

double max_or_zero(const Eigen::VectorXd& v) { return v.size() > 0 ? v.maxCoeff() : 0.0; }

}  // namespace

LeaderMpc::LeaderMpc(const VehicleParams& vehicle, const MpcParams& params,
                     const SafetyParams& safety, const PolyhedralFamily* family)
    : vehicle_(vehicle), params_(params), safety_(safety), family_(family) {
  vehicle_.validate();
  params_.validate();
  safety_.validate();
  if (family_ == nullptr || family_->empty()) {
    throw std::invalid_argument("LeaderMpc: polyhedral family required");
  }
}

void LeaderMpc::set_velocity_reference(std::vector<double> profile_m_s) {
  vdes_profile_ = std::move(profile_m_s);
}

double LeaderMpc::desired_velocity_at(long step) const {
  if (!vdes_profile_.empty()) {
    const size_t idx = static_cast<size_t>(
        std::min<long>(std::max(0L, step), static_cast<long>(vdes_profile_.size()) - 1));
    return vdes_profile_[idx];
  }
  return v_des_override_.value_or(params_.v_des_m_s);
}

QpProblem LeaderMpc::build_qp(const VehicleState& state, const LeaderObstacleView& view,
                              long tick) const {
  const int n_steps = params_.horizon_steps;
  const VehicleRole role = VehicleRole::Leader;
  const ScaledModel model = scaled_discrete_model(vehicle_, params_, role, state.velocity_m_s);

  // Worst-case front preview per the braking assumption.
  std::vector<double> front;
  if (view.front_present) {
    const double v0 = std::max(0.0, view.front_velocity_m_s - params_.front_velocity_margin_m_s);
    front = worst_case_front_forecast(v0, safety_.a_max_brake_m_s2, vehicle_.sample_time_s,
                                      n_steps, params_.stepped_front_decrement);
  } else {
    front.assign(static_cast<size_t>(n_steps) + 1, std::max(0.0, state.velocity_m_s));
  }
  std::vector<Eigen::VectorXd> preview(static_cast<size_t>(n_steps) + 1);
  for (int k = 0; k <= n_steps; ++k) {
    preview[static_cast<size_t>(k)] = Eigen::VectorXd::Constant(1, front[static_cast<size_t>(k)]);
  }

  const PriorityObstacle priority =
      priority_obstacle(state.headway_m, view.front_velocity_m_s, state.dist_to_stopbar_m,
                        view.stop_required, view.front_present, safety_);

  std::optional<DistanceConstraint> distance;
  std::optional<TerminalConstraint> terminal;
  if (priority == PriorityObstacle::FrontVehicle) {
    distance = DistanceConstraint{state_index::kHeadway, params_.time_headway_s,
                                  params_.d_min_front_m};
    terminal = TerminalConstraint{n_steps, state_index::kHeadway,
                                  &family_->front_set_for(front[static_cast<size_t>(n_steps)])};
  } else if (priority == PriorityObstacle::Intersection) {
    distance = DistanceConstraint{state_index::kStopbar, params_.time_headway_s,
                                  params_.d_min_stopbar_m};
    terminal = TerminalConstraint{n_steps, state_index::kStopbar, &family_->stopbar_set()};
  }

  std::vector<double> reference(static_cast<size_t>(n_steps) + 2);
  for (int k = 0; k <= n_steps + 1; ++k) {
    reference[static_cast<size_t>(k)] = desired_velocity_at(tick + k);
  }

  return build_horizon_qp(model, params_, role, scale_state(state, role, params_), preview,
                          state_index::velocity(role), reference, distance, terminal)
      .qp;
}

std::pair<ControlInput, VelocityForecast> LeaderMpc::step(const VehicleState& state,
                                                          const LeaderObstacleView& view,
                                                          long tick) {
  const int n_steps = params_.horizon_steps;
  const VehicleRole role = VehicleRole::Leader;
  const ScaledModel model = scaled_discrete_model(vehicle_, params_, role, state.velocity_m_s);

  std::vector<double> front;
  if (view.front_present) {
    const double v0 = std::max(0.0, view.front_velocity_m_s - params_.front_velocity_margin_m_s);
    front = worst_case_front_forecast(v0, safety_.a_max_brake_m_s2, vehicle_.sample_time_s,
                                      n_steps, params_.stepped_front_decrement);
  } else {
    front.assign(static_cast<size_t>(n_steps) + 1, std::max(0.0, state.velocity_m_s));
  }
  std::vector<Eigen::VectorXd> preview(static_cast<size_t>(n_steps) + 1);
  for (int k = 0; k <= n_steps; ++k) {
    preview[static_cast<size_t>(k)] = Eigen::VectorXd::Constant(1, front[static_cast<size_t>(k)]);
  }

  const PriorityObstacle priority =
      priority_obstacle(state.headway_m, view.front_velocity_m_s, state.dist_to_stopbar_m,
                        view.stop_required, view.front_present, safety_);
  std::optional<DistanceConstraint> distance;
  std::optional<TerminalConstraint> terminal;
  char terminal_kind = '-';
  if (priority == PriorityObstacle::FrontVehicle) {
    distance = DistanceConstraint{state_index::kHeadway, params_.time_headway_s,
                                  params_.d_min_front_m};
    terminal = TerminalConstraint{n_steps, state_index::kHeadway,
                                  &family_->front_set_for(front[static_cast<size_t>(n_steps)])};
    terminal_kind = 'F';
  } else if (priority == PriorityObstacle::Intersection) {
    distance = DistanceConstraint{state_index::kStopbar, params_.time_headway_s,
                                  params_.d_min_stopbar_m};
    terminal = TerminalConstraint{n_steps, state_index::kStopbar, &family_->stopbar_set()};
    terminal_kind = 'T';
  }

  std::vector<double> reference(static_cast<size_t>(n_steps) + 2);
  for (int k = 0; k <= n_steps + 1; ++k) {
    reference[static_cast<size_t>(k)] = desired_velocity_at(tick + k);
  }

  const Eigen::VectorXd x0 = scale_state(state, role, params_);
  const HorizonQp built = build_horizon_qp(model, params_, role, x0, preview,
                                           state_index::velocity(role), reference, distance,
                                           terminal);

  const auto t0 = std::chrono::steady_clock::now();
  const QpSolution sol = solve(built.qp, {}, &warm_);
  const auto t1 = std::chrono::steady_clock::now();

  diag_ = ControllerDiagnostics{};
  diag_.status = sol.status;
  diag_.iterations = sol.iterations;
  diag_.kkt_residual = sol.kkt_residual;
  diag_.solve_time_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  diag_.max_slack = max_or_zero(sol.slack);
  diag_.terminal_set = terminal_kind;

  if (sol.status != QpStatus::Optimal && !last_plan_.empty()) {
    // Keep flying the previous plan, shifted one step per tick.
    diag_.used_fallback = true;
    fallback_shift_ = std::min<int>(fallback_shift_ + 1, static_cast<int>(last_plan_.size()) - 1);
    VelocityForecast fc = last_forecast_;
    fc.sender_id = 0;
    return {last_plan_[static_cast<size_t>(fallback_shift_)], fc};
  }

  const PlanExtract plan = extract_plan(built, model, params_, role, x0, preview, sol.primal);
  fallback_shift_ = 0;
  last_plan_ = plan.inputs;
  last_forecast_.sender_id = 0;
  last_forecast_.issue_step = tick;
  last_forecast_.velocities_m_s = plan.velocities;
  return {plan.first, last_forecast_};
}

FollowerMpc::FollowerMpc(int follower_index, const VehicleParams& vehicle,
                         const MpcParams& params, const SafetyParams& safety,
                         const PolyhedralFamily* family)
    : index_(follower_index), vehicle_(vehicle), params_(params), safety_(safety),
      family_(family) {
  if (index_ < 1) throw std::invalid_argument("FollowerMpc: follower index must be >= 1");
  vehicle_.validate();
  params_.validate();
  safety_.validate();
  if (family_ == nullptr || family_->empty()) {
    throw std::invalid_argument("FollowerMpc: polyhedral family required");
  }
}

FollowerMpc::Previews FollowerMpc::build_previews(const VelocityForecast* leader_forecast,
                                                  const VelocityForecast* front_forecast,
                                                  double front_velocity_meas, long tick) const {
  const int n_steps = params_.horizon_steps;
  const double dt = vehicle_.sample_time_s;
  const double a_max = safety_.a_max_brake_m_s2;

  Previews p;
  const bool have_front = front_forecast != nullptr && !front_forecast->velocities_m_s.empty();
  const bool have_leader = leader_forecast != nullptr && !leader_forecast->velocities_m_s.empty();

  // Trusted window: forecast samples through t+F, maximal braking beyond.
  const int f_front = have_front ? std::clamp(params_.trust_horizon, 0, n_steps) : 0;
  std::vector<double> front_base =
      have_front ? align_forecast(*front_forecast, tick, n_steps + 2)
                 : std::vector<double>(static_cast<size_t>(n_steps) + 2,
                                       std::max(0.0, front_velocity_meas));
  p.front.resize(static_cast<size_t>(n_steps) + 1);
  for (int k = 0; k <= n_steps; ++k) {
    if (k <= f_front) {
      p.front[static_cast<size_t>(k)] = front_base[static_cast<size_t>(k)];
    } else {
      p.front[static_cast<size_t>(k)] =
          std::max(0.0, p.front[static_cast<size_t>(k) - 1] - a_max * dt);
    }
  }
  p.terminal_step = f_front;
  p.terminal_front_velocity = front_base[static_cast<size_t>(f_front)];

  const int f_lead = have_leader ? std::clamp(params_.trust_horizon, 0, n_steps) : 0;
  std::vector<double> lead_base =
      have_leader ? align_forecast(*leader_forecast, tick, n_steps + 2)
                  : std::vector<double>(static_cast<size_t>(n_steps) + 2,
                                        std::max(0.0, front_velocity_meas));
  p.leader.resize(static_cast<size_t>(n_steps) + 1);
  for (int k = 0; k <= n_steps; ++k) {
    if (k <= f_lead) {
      p.leader[static_cast<size_t>(k)] = lead_base[static_cast<size_t>(k)];
    } else {
      p.leader[static_cast<size_t>(k)] =
          std::max(0.0, p.leader[static_cast<size_t>(k) - 1] - a_max * dt);
    }
  }
  return p;
}

QpProblem FollowerMpc::build_qp(const VehicleState& state,
                                const VelocityForecast* leader_forecast,
                                const VelocityForecast* front_forecast,
                                double front_velocity_meas, long tick) const {
  const int n_steps = params_.horizon_steps;
  const VehicleRole role = VehicleRole::Follower;
  const ScaledModel model = scaled_discrete_model(vehicle_, params_, role, state.velocity_m_s);
  const Previews previews =
      build_previews(leader_forecast, front_forecast, front_velocity_meas, tick);

  std::vector<Eigen::VectorXd> preview(static_cast<size_t>(n_steps) + 1);
  for (int k = 0; k <= n_steps; ++k) {
    preview[static_cast<size_t>(k)] = Eigen::Vector2d(previews.leader[static_cast<size_t>(k)],
                                                      previews.front[static_cast<size_t>(k)]);
  }

  const DistanceConstraint distance{state_index::kHeadway, 0.0, params_.d_min_front_m};
  const TerminalConstraint terminal{
      previews.terminal_step, state_index::kHeadway,
      &family_->front_set_for(previews.terminal_front_velocity)};

  const double s_des = d_des_override_.value_or(params_.d_des_m) * index_;
  const std::vector<double> reference(static_cast<size_t>(n_steps) + 2, s_des);

  return build_horizon_qp(model, params_, role, scale_state(state, role, params_), preview,
                          state_index::kLeaderDist, reference, distance, terminal)
      .qp;
}

std::pair<ControlInput, VelocityForecast> FollowerMpc::step(
    const VehicleState& state, const VelocityForecast* leader_forecast,
    const VelocityForecast* front_forecast, double front_velocity_meas, long tick) {
  const int n_steps = params_.horizon_steps;
  const VehicleRole role = VehicleRole::Follower;
  const ScaledModel model = scaled_discrete_model(vehicle_, params_, role, state.velocity_m_s);
  const Previews previews =
      build_previews(leader_forecast, front_forecast, front_velocity_meas, tick);

  std::vector<Eigen::VectorXd> preview(static_cast<size_t>(n_steps) + 1);
  for (int k = 0; k <= n_steps; ++k) {
    preview[static_cast<size_t>(k)] = Eigen::Vector2d(previews.leader[static_cast<size_t>(k)],
                                                      previews.front[static_cast<size_t>(k)]);
  }

  const DistanceConstraint distance{state_index::kHeadway, 0.0, params_.d_min_front_m};
  const TerminalConstraint terminal{
      previews.terminal_step, state_index::kHeadway,
      &family_->front_set_for(previews.terminal_front_velocity)};
  const double s_des = d_des_override_.value_or(params_.d_des_m) * index_;
  const std::vector<double> reference(static_cast<size_t>(n_steps) + 2, s_des);

  const Eigen::VectorXd x0 = scale_state(state, role, params_);
  const HorizonQp built = build_horizon_qp(model, params_, role, x0, preview,
                                           state_index::kLeaderDist, reference, distance,
                                           terminal);

  const auto t0 = std::chrono::steady_clock::now();
  const QpSolution sol = solve(built.qp, {}, &warm_);
  const auto t1 = std::chrono::steady_clock::now();

  diag_ = ControllerDiagnostics{};
  diag_.status = sol.status;
  diag_.iterations = sol.iterations;
  diag_.kkt_residual = sol.kkt_residual;
  diag_.solve_time_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  diag_.max_slack = max_or_zero(sol.slack);
  diag_.terminal_set = 'F';
  diag_.used_fallback = leader_forecast == nullptr || front_forecast == nullptr;

  if (sol.status != QpStatus::Optimal && !last_plan_.empty()) {
    diag_.used_fallback = true;
    fallback_shift_ = std::min<int>(fallback_shift_ + 1, static_cast<int>(last_plan_.size()) - 1);
    VelocityForecast fc = last_forecast_;
    fc.sender_id = index_;
    return {last_plan_[static_cast<size_t>(fallback_shift_)], fc};
  }

  const PlanExtract plan = extract_plan(built, model, params_, role, x0, preview, sol.primal);
  fallback_shift_ = 0;
  last_plan_ = plan.inputs;
  last_forecast_.sender_id = index_;
  last_forecast_.issue_step = tick;
  last_forecast_.velocities_m_s = plan.velocities;
  return {plan.first, last_forecast_};
}

}  // namespace platoon
