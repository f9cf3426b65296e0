// uam: run scenarios, compare telemetry, print configuration.
//
// Exit codes: 0 success, 1 replay-check found differences, 2 invalid input,
// 3 the simulation diverged.

#include "uam/bridge.hpp"
#include "uam/config.hpp"
#include "uam/scenario.hpp"
#include "uam/telemetry.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop = true; }

struct RunArgs {
  std::string config;
  std::string scenario;
  std::string script;
  std::optional<std::uint64_t> seed;
  std::optional<double> duration;
  std::string out = "telemetry.jsonl";
  std::string summary_json;
  bool full_rate = false;
  bool live = false;
  std::optional<int> port;
  double realtime = 1.0;
};

uam::ExperimentConfig resolve_config(const std::string& path) {
  return path.empty() ? uam::ExperimentConfig::defaults() : uam::load_config(path);
}

int cmd_run(const RunArgs& a) {
  uam::ExperimentConfig cfg = resolve_config(a.config);
  if (a.seed) cfg.sim.seed = *a.seed;
  if (a.duration) cfg.sim.duration = *a.duration;
  if (a.port) cfg.bridge.port = *a.port;
  cfg.validate();

  std::vector<uam::OperatorCommand> script;
  if (!a.script.empty()) {
    script = uam::load_script(a.script);
  } else {
    const std::string name = a.scenario.empty() ? (a.live ? "hover" : "ndt-repeatability") : a.scenario;
    const auto text = uam::bundled_scenario(name);
    if (!text) {
      std::string known;
      for (const auto& n : uam::bundled_scenario_names()) known += " " + n;
      throw uam::ConfigError("unknown scenario '" + name + "' (bundled:" + known + ")");
    }
    std::istringstream in(*text);
    script = uam::parse_script(in);
  }

  std::ofstream file;
  uam::RunOptions opts;
  if (!a.out.empty()) {
    file.open(a.out);
    if (!file) throw uam::ConfigError("cannot write " + a.out);
    opts.telemetry = &file;
  }
  opts.full_rate = a.full_rate;
  opts.stop = &g_stop;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);

  std::optional<uam::BridgeServer> bridge;
  std::size_t bridge_cursor = 0;
  if (a.live) {
    bridge.emplace(cfg.bridge);
    const int port = bridge->start("127.0.0.1", cfg.bridge.port);
    std::cerr << "bridge listening on http://127.0.0.1:" << port
              << " (GET /v1/telemetry, POST /v1/command)\n";
    opts.realtime_factor = a.realtime;
    const auto every = static_cast<std::uint64_t>(cfg.bridge_every());
    opts.on_boundary = [&](uam::Simulation& sim) { bridge->service(sim); };
    opts.on_step = [&, every](uam::Simulation& sim) {
      if (sim.steps() % every != 0) return;
      uam::TelemetryRecord r = sim.snapshot();
      r.events = sim.events_since(bridge_cursor);
      for (const auto& e : r.events) {
        if (e.kind == "echometer") r.echometer = e.value;
      }
      bridge->publish(r);
    };
  }

  const uam::RunSummary s = uam::run_scenario(cfg, script, opts);
  if (bridge) bridge->stop();
  std::cout << s.to_text();
  if (!a.summary_json.empty()) {
    std::ofstream js(a.summary_json);
    if (!js) throw uam::ConfigError("cannot write " + a.summary_json);
    js << s.to_json().dump(2) << '\n';
  }
  return 0;
}

int cmd_replay(const std::string& a, const std::string& b, const std::vector<std::string>& tols) {
  uam::ReplayOptions opt;
  for (const auto& t : tols) {
    const auto eq = t.find('=');
    if (eq == std::string::npos || eq == 0) throw uam::ConfigError("--tol expects field=value, got '" + t + "'");
    try {
      opt.tolerances[t.substr(0, eq)] = std::stod(t.substr(eq + 1));
    } catch (const std::exception&) {
      throw uam::ConfigError("--tol: bad number in '" + t + "'");
    }
  }
  uam::ReplayReport rep;
  try {
    rep = uam::replay_check_files(a, b, opt);
  } catch (const std::runtime_error& e) {
    throw uam::ConfigError(e.what());
  }
  if (rep.equal) {
    std::cout << "equal: " << rep.lines_a << " lines\n";
    return 0;
  }
  std::cout << "differ: " << rep.total_diffs << " field difference(s); lines " << rep.lines_a << " vs "
            << rep.lines_b << "\n";
  for (const auto& d : rep.diffs) {
    std::cout << "  line " << d.line << " t=" << d.t << " " << d.field << ": " << d.a << " vs " << d.b << "\n";
  }
  if (rep.total_diffs > rep.diffs.size()) std::cout << "  ... " << rep.total_diffs - rep.diffs.size() << " more\n";
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tilting octarotor aerial manipulator: simulation and mission runner"};
  app.require_subcommand(1);

  RunArgs run;
  auto* r = app.add_subcommand("run", "Run a mission scenario in closed loop and write telemetry");
  r->add_option("-c,--config", run.config, "Experiment config (JSON)");
  auto* scen = r->add_option("-s,--scenario", run.scenario, "Bundled scenario name (hover, ndt-repeatability)");
  r->add_option("--script", run.script, "Mission script path (JSON Lines)")->excludes(scen);
  r->add_option("--seed", run.seed, "Override sim.seed");
  r->add_option("-d,--duration", run.duration, "Override sim.duration, s");
  r->add_option("-o,--out", run.out, "Telemetry output path; empty disables")->capture_default_str();
  r->add_option("--summary-json", run.summary_json, "Also write the run summary as JSON");
  r->add_flag("--full-rate", run.full_rate, "Log every physics step instead of the telemetry rate");
  r->add_flag("--live", run.live, "Open the bridge and pace the run in real time");
  r->add_option("--port", run.port, "Bridge port (with --live)");
  r->add_option("--realtime", run.realtime, "Simulated seconds per wall second with --live; 0 unpaced")
      ->capture_default_str();

  std::string file_a;
  std::string file_b;
  std::vector<std::string> tols;
  auto* rc = app.add_subcommand("replay-check", "Compare two telemetry files field by field");
  rc->add_option("A", file_a, "First telemetry file")->required();
  rc->add_option("B", file_b, "Second telemetry file")->required();
  rc->add_option("--tol", tols, "Absolute tolerance for a top-level field, e.g. --tol f_ext=1e-9");

  bool defaults = false;
  std::string pc_config;
  auto* pc = app.add_subcommand("print-config", "Print a fully materialized configuration");
  auto* def = pc->add_flag("--defaults", defaults, "Print the built-in defaults");
  pc->add_option("-c,--config", pc_config, "Config to load and print with defaults filled in")->excludes(def);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*r) return cmd_run(run);
    if (*rc) return cmd_replay(file_a, file_b, tols);
    if (*pc) {
      const uam::ExperimentConfig cfg = defaults ? uam::ExperimentConfig::defaults() : resolve_config(pc_config);
      std::cout << uam::config_to_json(cfg).dump(2) << '\n';
      return 0;
    }
  } catch (const uam::DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << '\n';
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::domain_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
