#include "platoon/sim_engine.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "platoon/distance_estimator.hpp"
#include "platoon/platoon_fsm.hpp"
#include "platoon/sim_engine.hpp"

namespace platoon {

namespace {

constexpr double kNoTargetSentinel = 999.0;   // logged when no headway/stop bar applies
constexpr double kControllerDistanceCap = 500.0;  // keeps far-away distances well scaled

struct PlatoonVehicleSim {
  int index = 0;
  VehicleRole role = VehicleRole::Leader;
  Eigen::VectorXd plant;  // physical units, geometric entries re-synced per tick

  std::optional<LeaderMpc> leader_mpc;
  std::optional<FollowerMpc> follower_mpc;
  std::optional<PlatoonCoordinator> coordinator;

  // Latest received payloads.
  std::optional<VelocityForecast> leader_forecast;
  std::optional<VelocityForecast> front_forecast;
  long last_leader_fc_tick = -1;
  long last_front_fc_tick = -1;
  long last_rear_gps_tick = -1;
  std::vector<std::optional<double>> chain_headways;  // by sender index
  std::optional<double> rear_gps_position;
  std::optional<double> leader_gps_position;

  // Estimation state.
  std::optional<LeaderDistanceEstimate> fused;

  long engaged_since = -1;
  ControlInput applied;
};

struct PublicVehicleSim {
  PublicVehicle config;
  double position = 0.0;
  double velocity = 0.0;
};

double profile_velocity(const std::vector<std::pair<double, double>>& profile, double t) {
  if (profile.empty()) return 0.0;
  double v = profile.front().second;
  for (const auto& [at, value] : profile) {
    if (t >= at) v = value;  // zero-order hold
  }
  return v;
}

}  // namespace

std::optional<double> radar_measure(double ego_position_m,
                                    std::optional<double> target_position_m,
                                    double target_length_m, double max_range_m,
                                    double noise_std_m, std::mt19937_64* rng) {
  if (!target_position_m) return std::nullopt;
  const double gap = *target_position_m - target_length_m - ego_position_m;
  if (gap < 0.0 || gap > max_range_m) return std::nullopt;
  if (noise_std_m > 0.0 && rng != nullptr) {
    std::normal_distribution<double> dist(0.0, noise_std_m);
    return gap + dist(*rng);
  }
  return gap;
}

const TrafficLight* nearest_upcoming_light(const std::vector<TrafficLight>& lights,
                                           double ego_position_m) {
  for (const TrafficLight& light : lights) {
    if (light.position_m >= ego_position_m) return &light;
  }
  return nullptr;
}

RunTrace run_scenario(const Scenario& scenario, const RunOptions& options) {
  scenario.validate();
  const double dt = scenario.vehicle.sample_time_s;
  const int n = scenario.platoon_size;
  const long n_ticks = static_cast<long>(std::llround(scenario.duration_s / dt));

  const PolyhedralFamily family = PolyhedralFamily::build(
      scenario.safety, scenario.mpc.polyhedron_facets, 0.5, scenario.mpc.v_max_m_s);

  std::mt19937_64 rng(scenario.seed);
  SimulatedBus bus(scenario.bus, n);
  bus.set_trace_sink(options.message_trace);

  // Initial geometry, leader first.
  std::vector<double> positions = scenario.initial_positions_m;
  if (positions.empty()) {
    positions.resize(static_cast<size_t>(n));
    positions[0] = scenario.initial_leader_position_m;
    for (int i = 1; i < n; ++i) {
      positions[static_cast<size_t>(i)] = positions[static_cast<size_t>(i - 1)] -
                                          scenario.vehicle_length_m - scenario.initial_gap_m;
    }
  }

  CoordinatorConfig coord_config;
  coord_config.proposal_timeout_steps = scenario.proposal_timeout_steps;
  coord_config.cancel_wait_steps = scenario.cancel_wait_steps;
  coord_config.bus_latency_steps = scenario.bus.latency_steps;

  PlatoonPlan plan;
  plan.plan_id = 1;
  for (int i = 0; i < n; ++i) plan.ordered_vehicle_ids.push_back(i);
  plan.desired_gap_m = scenario.mpc.d_des_m;
  plan.desired_speed_m_s = scenario.mpc.v_des_m_s;

  std::vector<PlatoonVehicleSim> vehicles(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    PlatoonVehicleSim& v = vehicles[static_cast<size_t>(i)];
    v.index = i;
    v.role = i == 0 ? VehicleRole::Leader : VehicleRole::Follower;
    v.plant = Eigen::VectorXd::Zero(state_dim(v.role));
    v.plant(state_index::kPosition) = positions[static_cast<size_t>(i)];
    v.plant(state_index::velocity(v.role)) = scenario.initial_speed_m_s;
    v.plant(state_index::torque(v.role)) =
        cruise_torque_Nm(scenario.vehicle, scenario.initial_speed_m_s);
    v.chain_headways.assign(static_cast<size_t>(n), std::nullopt);

    CoordinatorConfig cc = coord_config;
    cc.always_reject = std::find(scenario.events.rejecting_vehicles.begin(),
                                 scenario.events.rejecting_vehicles.end(),
                                 i) != scenario.events.rejecting_vehicles.end();
    v.coordinator.emplace(i, i, n, cc);
    if (scenario.start_engaged) {
      v.coordinator->force_active(plan, 0);
      v.engaged_since = 0;
    }
    if (i == 0) {
      v.leader_mpc.emplace(scenario.vehicle, scenario.mpc, scenario.safety, &family);
      if (!scenario.leader_velocity_reference.empty()) {
        std::vector<double> profile(static_cast<size_t>(n_ticks) + scenario.mpc.horizon_steps + 2);
        for (size_t k = 0; k < profile.size(); ++k) {
          profile[k] = profile_velocity(scenario.leader_velocity_reference, k * dt);
        }
        v.leader_mpc->set_velocity_reference(std::move(profile));
      }
    } else {
      v.follower_mpc.emplace(i, scenario.vehicle, scenario.mpc, scenario.safety, &family);
    }
  }

  std::vector<PublicVehicleSim> publics;
  for (const PublicVehicle& pv : scenario.public_vehicles) {
    publics.push_back({pv, pv.initial_position_m, pv.velocity_at(0.0)});
  }

  RunTrace trace;
  trace.dt_s = dt;
  trace.platoon_size = n;
  trace.vehicle_length_m = scenario.vehicle_length_m;
  trace.d_min_front_m = scenario.mpc.d_min_front_m;
  trace.d_min_stopbar_m = scenario.mpc.d_min_stopbar_m;
  trace.intersection_length_m = scenario.safety.intersection_length_m;
  trace.stopbar_position_m = scenario.throughput_stopbar_m.value_or(0.0);
  trace.green_onset_s = scenario.green_onset_s.value_or(0.0);
  for (const TrafficLight& l : scenario.lights) trace.light_positions_m.push_back(l.position_m);

  const auto true_position = [&](int i) {
    return vehicles[static_cast<size_t>(i)].plant(state_index::kPosition);
  };
  const auto true_velocity = [&](int i) {
    const PlatoonVehicleSim& v = vehicles[static_cast<size_t>(i)];
    return v.plant(state_index::velocity(v.role));
  };

  for (long tick = 0; tick < n_ticks; ++tick) {
    const double time_s = tick * dt;

    // Sensing (fixed draw order: per vehicle radar then GPS).
    std::vector<std::optional<double>> radar(static_cast<size_t>(n));
    std::vector<double> gps(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      std::optional<double> target;
      double target_len = scenario.vehicle_length_m;
      if (i == 0) {
        // Nearest public vehicle ahead.
        double best = std::numeric_limits<double>::infinity();
        for (const PublicVehicleSim& pv : publics) {
          if (pv.position > true_position(0) && pv.position < best) {
            best = pv.position;
            target = pv.position;
            target_len = pv.config.length_m;
          }
        }
      } else {
        target = true_position(i - 1);
      }
      radar[static_cast<size_t>(i)] =
          radar_measure(true_position(i), target, target_len, scenario.radar_max_range_m,
                        scenario.estimation.radar_noise_std_m, &rng);
      gps[static_cast<size_t>(i)] = true_position(i);
      if (scenario.estimation.gps_noise_std_m > 0.0) {
        std::normal_distribution<double> dist(0.0, scenario.estimation.gps_noise_std_m);
        gps[static_cast<size_t>(i)] += dist(rng);
      }
    }

    // Scripted pedal taps at this tick.
    std::vector<bool> pedal(static_cast<size_t>(n), false);
    for (const auto& [at, veh] : scenario.events.pedal_taps) {
      if (veh >= 0 && veh < n && std::llround(at / dt) == tick) pedal[static_cast<size_t>(veh)] = true;
    }

    // True ordering per the plan (positions strictly decreasing).
    bool ordering_ok = true;
    for (int i = 1; i < n; ++i) {
      if (true_position(i) >= true_position(i - 1)) ordering_ok = false;
    }

    TickRecord rec;
    rec.tick = tick;
    rec.time_s = time_s;
    rec.vehicles.resize(static_cast<size_t>(n));

    // Agent loop, leader first: deliver, coordinate, control, broadcast.
    for (int i = 0; i < n; ++i) {
      PlatoonVehicleSim& veh = vehicles[static_cast<size_t>(i)];
      const std::vector<V2VMessage> inbox = bus.deliver(i, tick);
      for (const V2VMessage& msg : inbox) {
        switch (msg.kind) {
          case MessageKind::Forecast:
            if (msg.forecast) {
              if (msg.sender_index == 0) {
                veh.leader_forecast = msg.forecast;
                veh.last_leader_fc_tick = tick;
              }
              if (msg.sender_index == i - 1) {
                veh.front_forecast = msg.forecast;
                veh.last_front_fc_tick = tick;
              }
            }
            break;
          case MessageKind::RadarChain:
            if (msg.radar_headway_m && msg.sender_index >= 0 && msg.sender_index < n) {
              veh.chain_headways[static_cast<size_t>(msg.sender_index)] = msg.radar_headway_m;
            }
            break;
          case MessageKind::RearGps:
            if (msg.gps_position_m) {
              veh.rear_gps_position = msg.gps_position_m;
              veh.last_rear_gps_tick = tick;
            }
            break;
          case MessageKind::Status:
            if (msg.sender_index == 0 && msg.gps_position_m) {
              veh.leader_gps_position = msg.gps_position_m;
            }
            break;
          default:
            break;
        }
      }

      // Coordination.
      PlatoonCoordinator::TickInput cin;
      cin.step = tick;
      cin.inbox = &inbox;
      cin.start_request =
          i == 0 && !scenario.start_engaged &&
          std::llround(scenario.events.start_request_s / dt) == tick;
      cin.manual_cancel = i == 0 && scenario.events.manual_cancel_s &&
                          std::llround(*scenario.events.manual_cancel_s / dt) == tick;
      cin.proposal_template = plan;
      cin.own_velocity_m_s = true_velocity(i);
      cin.own_gap_m = radar[static_cast<size_t>(i)];
      cin.safety.ordering_ok = ordering_ok;
      cin.safety.pedal_tapped = pedal[static_cast<size_t>(i)];
      cin.safety.front_vehicle_expected = i >= 1;
      cin.safety.radar_headway_m = radar[static_cast<size_t>(i)];
      cin.safety.radar_out_of_range_m = scenario.radar_max_range_m;
      cin.safety.velocity_m_s = true_velocity(i);
      cin.safety.v_min_m_s = scenario.mpc.v_min_m_s;
      cin.safety.v_max_m_s = scenario.mpc.v_max_m_s;
      cin.safety.message_timeout_steps = scenario.message_timeout_steps;
      long age = 0;
      if (veh.coordinator->engaged()) {
        const long since = std::max(veh.engaged_since, 0L);
        if (i >= 1) {
          age = tick - std::max(veh.last_leader_fc_tick, since);
          age = std::max(age, tick - std::max(veh.last_front_fc_tick, since));
        } else if (n > 1) {
          age = tick - std::max(veh.last_rear_gps_tick, since);
        }
      }
      cin.safety.worst_message_age_steps = age;

      const bool was_engaged = veh.coordinator->engaged();
      for (const V2VMessage& out : veh.coordinator->tick(cin)) bus.send(out, tick);
      if (!was_engaged && veh.coordinator->engaged()) veh.engaged_since = tick;

      // Routine broadcasts: composite status, shared radar, rear GPS.
      V2VMessage status;
      status.sender_id = i;
      status.sender_index = i;
      status.timestamp_step = tick;
      status.kind = MessageKind::Status;
      status.gps_position_m = gps[static_cast<size_t>(i)];
      status.radar_headway_m = radar[static_cast<size_t>(i)];
      status.fsm_state = veh.coordinator->state();
      status.plan_status = veh.coordinator->plan_status();
      bus.send(status, tick);
      if (i >= 1 && radar[static_cast<size_t>(i)]) {
        V2VMessage chain = status;
        chain.kind = MessageKind::RadarChain;
        bus.send(chain, tick);
      }
      if (i == n - 1 && n > 1) {
        V2VMessage rear = status;
        rear.kind = MessageKind::RearGps;
        bus.send(rear, tick);
      }

      // Geometry as measured this tick.
      const double p_true = true_position(i);
      const TrafficLight* light = nearest_upcoming_light(scenario.lights, p_true);
      const double dtl_true = light ? light->position_m - p_true : kNoTargetSentinel;

      VehicleState state;
      state.position_m = 0.0;  // controller-relative; absolute position is not used
      state.velocity_m_s = true_velocity(i);
      state.accel_torque_Nm = veh.plant(state_index::torque(veh.role));
      state.dist_to_stopbar_m = std::min(light ? dtl_true : kControllerDistanceCap,
                                         kControllerDistanceCap);
      state.headway_m = radar[static_cast<size_t>(i)].value_or(kControllerDistanceCap);

      ControlInput input{cruise_torque_Nm(scenario.vehicle, true_velocity(i)), 0.0};
      double s_estimate = 0.0;
      if (i >= 1) {
        // Distance to the leader via the configured method.
        LeaderDistanceEstimate meas;
        if (scenario.estimation.method == EstimateMethod::RadarChain) {
          std::vector<double> headways;
          for (int k = 1; k < i; ++k) {
            if (vehicles[static_cast<size_t>(i)].chain_headways[static_cast<size_t>(k)]) {
              headways.push_back(*veh.chain_headways[static_cast<size_t>(k)]);
            }
          }
          if (radar[static_cast<size_t>(i)]) headways.push_back(*radar[static_cast<size_t>(i)]);
          if (!headways.empty()) {
            meas = estimate_s_radar_chain(headways,
                                          std::max(scenario.estimation.radar_noise_std_m, 0.01));
          }
        } else {
          const double leader_gps = veh.leader_gps_position.value_or(true_position(0));
          meas = estimate_s_gps(leader_gps - gps[static_cast<size_t>(i)], i,
                                scenario.vehicle_length_m,
                                std::max(scenario.estimation.gps_noise_std_m, 0.01));
        }
        if (scenario.estimation.fuse_with_filter) {
          const double v_leader =
              veh.leader_forecast && !veh.leader_forecast->velocities_m_s.empty()
                  ? veh.leader_forecast->velocities_m_s.front()
                  : true_velocity(i);
          if (veh.fused) {
            veh.fused = fuse_s_estimate(*veh.fused, v_leader, true_velocity(i), meas, dt,
                                        scenario.estimation.process_noise_std);
          } else {
            veh.fused = meas;
          }
          s_estimate = veh.fused->s_hat_m;
        } else {
          s_estimate = meas.s_hat_m;
        }
        state.dist_to_leader_m = s_estimate;
      }

      if (veh.coordinator->engaged()) {
        if (i == 0) {
          LeaderObstacleView view;
          view.front_present = radar[0].has_value();
          if (view.front_present) {
            // Production radars also track the target speed.
            double vf = 0.0;
            double best = std::numeric_limits<double>::infinity();
            for (const PublicVehicleSim& pv : publics) {
              if (pv.position > p_true && pv.position < best) {
                best = pv.position;
                vf = pv.velocity;
              }
            }
            view.front_velocity_m_s = vf;
          }
          StopDecision decision = StopDecision::Proceed;
          if (light) {
            const std::optional<SpatMessage> spat = spat_from_light(
                *light, p_true, time_s, scenario.safety.intersection_length_m);
            if (spat) {
              const double d_rear =
                  n > 1 ? p_true - veh.rear_gps_position.value_or(true_position(n - 1)) : 0.0;
              decision = should_stop_at_light(true_velocity(0), d_rear, dtl_true, spat->phase,
                                              spat->time_remaining_s, scenario.safety);
            }
          }
          view.stop_required = decision == StopDecision::Stop;

          auto [u, forecast] = veh.leader_mpc->step(state, view, tick);
          input = u;
          V2VMessage fc;
          fc.sender_id = i;
          fc.sender_index = i;
          fc.timestamp_step = tick;
          fc.kind = MessageKind::Forecast;
          fc.forecast = forecast;
          bus.send(fc, tick);
          if (options.run_log != nullptr) {
            const ControllerDiagnostics& d = veh.leader_mpc->diagnostics();
            *options.run_log << tick << " v0 status=" << static_cast<int>(d.status)
                             << " iters=" << d.iterations << " kkt=" << d.kkt_residual
                             << " slack=" << d.max_slack << " terminal=" << d.terminal_set
                             << " ms=" << d.solve_time_ms << "\n";
          }
        } else {
          const double front_velocity = true_velocity(i - 1);
          const VelocityForecast* lead_fc =
              veh.leader_forecast ? &*veh.leader_forecast : nullptr;
          const VelocityForecast* front_fc =
              i == 1 ? lead_fc : (veh.front_forecast ? &*veh.front_forecast : nullptr);
          auto [u, forecast] = veh.follower_mpc->step(state, lead_fc, front_fc, front_velocity, tick);
          input = u;
          V2VMessage fc;
          fc.sender_id = i;
          fc.sender_index = i;
          fc.timestamp_step = tick;
          fc.kind = MessageKind::Forecast;
          fc.forecast = forecast;
          bus.send(fc, tick);
          if (options.run_log != nullptr) {
            const ControllerDiagnostics& d = veh.follower_mpc->diagnostics();
            *options.run_log << tick << " v" << i << " status=" << static_cast<int>(d.status)
                             << " iters=" << d.iterations << " kkt=" << d.kkt_residual
                             << " slack=" << d.max_slack << " ms=" << d.solve_time_ms << "\n";
          }
        }
      }
      veh.applied = input;

      // Trace row (true geometry, applied inputs).
      VehicleTickRecord& row = rec.vehicles[static_cast<size_t>(i)];
      row.position_m = p_true;
      if (i == 0) {
        double gap = kNoTargetSentinel;
        for (const PublicVehicleSim& pv : publics) {
          if (pv.position > p_true) {
            gap = std::min(gap, pv.position - pv.config.length_m - p_true);
          }
        }
        row.headway_m = gap;
        row.dist_to_leader_m = 0.0;
      } else {
        row.headway_m = true_position(i - 1) - scenario.vehicle_length_m - p_true;
        row.dist_to_leader_m = true_position(0) - p_true - i * scenario.vehicle_length_m;
      }
      row.dist_to_stopbar_m = light ? dtl_true : kNoTargetSentinel;
      row.velocity_m_s = true_velocity(i);
      row.accel_torque_Nm = veh.plant(state_index::torque(veh.role));
      row.input_accel_ref_Nm = input.accel_torque_ref_Nm;
      row.input_brake_Nm = input.brake_torque_Nm;
      row.fsm_state = veh.coordinator->state();
      row.plan_status = veh.coordinator->plan_status();
    }

    for (const TrafficLight& l : scenario.lights) {
      rec.light_phases.push_back(l.phase_at(time_s).first);
    }
    for (const PublicVehicleSim& pv : publics) {
      rec.public_positions_m.push_back(pv.position);
      rec.public_velocities_m_s.push_back(pv.velocity);
    }
    for (const PlatoonVehicleSim& v : vehicles) {
      for (const FsmLogEntry& e : v.coordinator->log()) {
        if (e.tick == tick) trace.fsm_log.push_back(e);
      }
    }
    trace.ticks.push_back(std::move(rec));

    // Plant integration with this tick's neighbour velocities held constant.
    std::vector<double> v_now(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) v_now[static_cast<size_t>(i)] = true_velocity(i);
    double public_front_v = 0.0;
    {
      double best = std::numeric_limits<double>::infinity();
      for (const PublicVehicleSim& pv : publics) {
        if (pv.position > true_position(0) && pv.position < best) {
          best = pv.position;
          public_front_v = pv.velocity;
        }
      }
    }
    for (int i = 0; i < n; ++i) {
      PlatoonVehicleSim& veh = vehicles[static_cast<size_t>(i)];
      Eigen::VectorXd w(disturbance_dim(veh.role));
      if (i == 0) {
        w(0) = public_front_v;
      } else {
        w(0) = v_now[0];
        w(1) = v_now[static_cast<size_t>(i - 1)];
      }
      const Eigen::Vector2d u(veh.applied.accel_torque_ref_Nm, veh.applied.brake_torque_Nm);
      veh.plant = plant_step(scenario.vehicle, veh.role, veh.plant, u, w, dt);
    }
    for (PublicVehicleSim& pv : publics) {
      const double v0 = pv.velocity;
      const double v1 = pv.config.velocity_at(time_s + dt);
      pv.position += 0.5 * (v0 + v1) * dt;
      pv.velocity = v1;
    }

    // Re-sync geometric plant entries from ground truth and check invariants.
    for (int i = 0; i < n; ++i) {
      PlatoonVehicleSim& veh = vehicles[static_cast<size_t>(i)];
      double gap = kNoTargetSentinel;
      if (i == 0) {
        for (const PublicVehicleSim& pv : publics) {
          if (pv.position > true_position(0)) {
            gap = std::min(gap, pv.position - pv.config.length_m - true_position(0));
          }
        }
      } else {
        gap = true_position(i - 1) - scenario.vehicle_length_m - true_position(i);
      }
      veh.plant(state_index::kHeadway) = gap;
      const TrafficLight* light = nearest_upcoming_light(scenario.lights, true_position(i));
      veh.plant(state_index::kStopbar) =
          light ? light->position_m - true_position(i) : kNoTargetSentinel;
      if (veh.role == VehicleRole::Follower) {
        veh.plant(state_index::kLeaderDist) =
            true_position(0) - true_position(i) - i * scenario.vehicle_length_m;
      }

      if (!veh.plant.allFinite()) {
        trace.aborted = true;
        trace.aborted_tick = tick;
        trace.abort_reason = "non-finite plant state";
      } else if (gap < kNoTargetSentinel && gap < 0.02) {
        trace.aborted = true;
        trace.aborted_tick = tick;
        trace.abort_reason = "collision: headway below 0.02 m";
      } else if (true_velocity(i) < -1e-9) {
        trace.aborted = true;
        trace.aborted_tick = tick;
        trace.abort_reason = "negative velocity";
      }
    }
    if (trace.aborted) break;
  }

  return trace;
}

}  // namespace platoon
