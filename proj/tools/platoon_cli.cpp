#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "platoon/sim_engine.hpp"
#include "platoon/throughput.hpp"

namespace {

platoon::Scenario load_scenario(const std::string& path, const std::string& builtin,
                                std::uint64_t seed_override, bool have_seed,
                                const std::vector<std::string>& overrides) {
  platoon::Scenario scenario;
  if (!path.empty()) {
    scenario = platoon::Scenario::load(path);
  } else if (!builtin.empty()) {
    scenario = platoon::builtin_scenario(builtin);
  } else {
    throw CLI::ValidationError("pass --scenario FILE or --builtin NAME");
  }
  for (const std::string& kv : overrides) scenario.apply_override(kv);
  if (have_seed) scenario.seed = seed_override;
  return scenario;
}

int validate_trace(const platoon::RunTrace& trace) {
  int failures = 0;
  const auto fail = [&failures](const std::string& what) {
    std::cout << "[breach] " << what << "\n";
    ++failures;
  };

  if (trace.aborted) {
    fail("run aborted at tick " + std::to_string(trace.aborted_tick) + ": " + trace.abort_reason);
  }
  for (const platoon::TickRecord& t : trace.ticks) {
    for (size_t i = 0; i < t.vehicles.size(); ++i) {
      const auto& v = t.vehicles[i];
      if (v.velocity_m_s < -1e-9) {
        fail("negative velocity at tick " + std::to_string(t.tick));
      }
      if (v.plan_status == 1 && v.headway_m < 900.0 &&
          v.headway_m < trace.d_min_front_m - 0.1) {
        fail("headway " + std::to_string(v.headway_m) + " below margin at tick " +
             std::to_string(t.tick) + " vehicle " + std::to_string(i));
      }
    }
  }
  const double stop_margin = trace.min_stopped_stopbar_distance();
  if (stop_margin < trace.d_min_stopbar_m - 0.1) {
    fail("stopped stop-bar distance " + std::to_string(stop_margin) + " below margin");
  }

  // Green entries must clear the intersection before the phase turns red.
  for (size_t j = 0; j < trace.light_positions_m.size(); ++j) {
    const double bar = trace.light_positions_m[j];
    const double exit = bar + trace.intersection_length_m;
    for (size_t k = 1; k < trace.ticks.size(); ++k) {
      const auto& prev = trace.ticks[k - 1];
      const auto& now = trace.ticks[k];
      const double p0 = prev.vehicles.front().position_m;
      const double p1 = now.vehicles.front().position_m;
      if (!(p0 < bar && p1 >= bar)) continue;
      if (now.light_phases[j] != platoon::Phase::Green) continue;
      // Scan until the rear vehicle's rear bumper leaves the box.
      bool cleared = false;
      for (size_t m = k; m < trace.ticks.size(); ++m) {
        const auto& rear = trace.ticks[m].vehicles.back();
        if (rear.position_m - trace.vehicle_length_m >= exit) {
          cleared = true;
          break;
        }
        if (trace.ticks[m].light_phases[j] == platoon::Phase::Red) {
          fail("light " + std::to_string(j) + ": red while the platoon was inside (entered green at tick " +
               std::to_string(now.tick) + ")");
          break;
        }
      }
      if (!cleared) break;
    }
  }

  if (failures == 0) std::cout << "trace ok: no invariant breaches\n";
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"urban platooning simulator and analysis tool"};
  app.require_subcommand(1);

  std::string scenario_path;
  std::string builtin;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool have_seed = false;
  std::vector<std::string> overrides;
  bool with_message_trace = false;
  bool with_run_log = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--scenario", scenario_path, "scenario JSON file");
    cmd->add_option("--builtin", builtin, "builtin scenario name")
        ->check(CLI::IsMember(platoon::builtin_scenario_names()));
    cmd->add_option("--set", overrides, "override, e.g. mpc.trust_horizon=0");
    cmd->add_option("--seed", seed, "RNG seed override")->each([&](const std::string&) {
      have_seed = true;
    });
  };

  CLI::App* run = app.add_subcommand("run", "run a scenario and write the trace");
  add_common(run);
  run->add_option("--out", out_dir, "output directory (default out/<name>)");
  run->add_flag("--message-trace", with_message_trace, "write messages.jsonl");
  run->add_flag("--run-log", with_run_log, "write controller diagnostics log");

  CLI::App* thr = app.add_subcommand("throughput", "crossing times and vph from a trace");
  std::string trace_dir;
  double ell = 0.0;
  thr->add_option("--trace", trace_dir, "trace directory (from run)")->required();
  thr->add_option("--ell", ell, "intersection length override (m)");

  CLI::App* sweep = app.add_subcommand("sweep", "trust-horizon throughput study");
  add_common(sweep);
  std::string f_list = "0,10,15,20";
  sweep->add_option("--f", f_list, "comma-separated trust horizons");
  sweep->add_option("--out", out_dir, "write sweep.csv here");

  CLI::App* validate = app.add_subcommand("validate", "invariant suite over a trace");
  validate->add_option("--trace", trace_dir, "trace directory (from run)")->required();

  CLI::App* make = app.add_subcommand("make-scenario", "write a builtin scenario as JSON");
  std::string make_out = "scenario.json";
  make->add_option("--builtin", builtin, "builtin scenario name")
      ->check(CLI::IsMember(platoon::builtin_scenario_names()))
      ->required();
  make->add_option("--out", make_out, "output file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      platoon::Scenario scenario = load_scenario(scenario_path, builtin, seed, have_seed, overrides);
      if (out_dir.empty()) out_dir = "out/" + scenario.name;
      std::ofstream msg_stream;
      std::ofstream log_stream;
      platoon::RunOptions options;
      if (with_message_trace) {
        std::filesystem::create_directories(out_dir);
        msg_stream.open(out_dir + "/messages.jsonl");
        options.message_trace = &msg_stream;
      }
      if (with_run_log) {
        std::filesystem::create_directories(out_dir);
        log_stream.open(out_dir + "/run_log.txt");
        options.run_log = &log_stream;
      }
      const platoon::RunTrace trace = platoon::run_scenario(scenario, options);
      trace.write(out_dir);
      std::cout << trace.summary_json() << "\n";
      std::cout << "trace written to " << out_dir << "\n";
      return trace.aborted ? 1 : 0;
    }
    if (thr->parsed()) {
      const platoon::RunTrace trace = platoon::RunTrace::read(trace_dir);
      const double length = ell > 0.0 ? ell : trace.intersection_length_m;
      const platoon::ThroughputResult r = platoon::measure_throughput(trace, length);
      std::printf("t_leader = %.3f s\nt_rear   = %.3f s\nthroughput = %.1f vph\n", r.t_leader_s,
                  r.t_rear_s, r.vph);
      return 0;
    }
    if (sweep->parsed()) {
      platoon::Scenario scenario = load_scenario(scenario_path, builtin, seed, have_seed, overrides);
      std::vector<int> values;
      std::stringstream ss(f_list);
      std::string tok;
      while (std::getline(ss, tok, ',')) values.push_back(std::stoi(tok));
      const auto results = platoon::trust_sweep(scenario, values);
      std::string csv = "trust_horizon,t_leader_s,t_rear_s,vph\n";
      std::printf("%6s %10s %10s %10s\n", "F", "t_lead", "t_rear", "vph");
      for (const auto& r : results) {
        std::printf("%6d %10.3f %10.3f %10.1f\n", r.trust_horizon, r.t_leader_s, r.t_rear_s, r.vph);
        csv += std::to_string(r.trust_horizon) + "," + std::to_string(r.t_leader_s) + "," +
               std::to_string(r.t_rear_s) + "," + std::to_string(r.vph) + "\n";
      }
      if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        std::ofstream out(out_dir + "/sweep.csv");
        out << csv;
      }
      return 0;
    }
    if (validate->parsed()) {
      return validate_trace(platoon::RunTrace::read(trace_dir));
    }
    if (make->parsed()) {
      platoon::builtin_scenario(builtin).save(make_out);
      std::cout << "wrote " << make_out << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
