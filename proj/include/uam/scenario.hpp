#pragma once

#include "uam/config.hpp"
#include "uam/flight_control.hpp"
#include "uam/interaction_control.hpp"
#include "uam/mission.hpp"
#include "uam/sim_world.hpp"
#include "uam/telemetry.hpp"

#include <atomic>
#include <deque>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace uam {

/// Parse one operator command object, e.g. {"t": 2.0, "cmd": "trigger_next_phase"}.
/// require_time: scripts need "t"; live commands are stamped on arrival.
OperatorCommand command_from_json(const Json& j, bool require_time);
Json command_to_json(const OperatorCommand& c);

/// JSON Lines mission script; blank lines and lines starting with '#' are skipped.
/// Times must be non-decreasing. Throws ConfigError naming the line.
std::vector<OperatorCommand> parse_script(std::istream& in);
std::vector<OperatorCommand> load_script(const std::string& path);

/// Text of a bundled scenario, or nothing for an unknown name.
std::optional<std::string> bundled_scenario(const std::string& name);
std::vector<std::string> bundled_scenario_names();

struct MeasureStats {
  double entry_t = 0.0;
  double exit_t = 0.0;  // RETRACT or fallback; equals the run end if still measuring
  double target = 0.0;
  double max_error = 0.0;   // max |avg force - target| over [entry + window, exit)
  double rms_error = 0.0;
  std::size_t samples = 0;
  std::optional<double> settled_after;  // s after entry from which |error| stayed within tolerance
  Vec3 max_base_deviation = Vec3::Zero();  // per axis, over the whole phase
};

struct RunSummary {
  double sim_time = 0.0;
  double wall_time = 0.0;
  std::string end_reason;
  std::map<std::string, double> phase_time;
  std::vector<MeasureStats> measures;
  std::vector<double> readings;
  std::size_t records = 0;
  std::size_t saturated_ticks = 0;
  std::size_t battery_saturated_ticks = 0;
  std::size_t commands_accepted = 0;
  std::size_t commands_rejected = 0;

  Json to_json() const;
  std::string to_text() const;
};

struct EvaluationSettings {
  double window = 5.0;        // steady state starts this long after MEASURE entry
  double average = 0.1;       // s, moving average of the force feedback
  double tolerance = 0.15;    // N
};

/// One closed loop: world, flight controller, allocation, arm controller, battery law, mission.
/// Single-threaded; commands are applied at control-tick boundaries.
class Simulation {
 public:
  explicit Simulation(const ExperimentConfig& cfg, EvaluationSettings eval = {});

  /// Applies a command now (stamps it with the current time).
  CommandResult apply(OperatorCommand cmd);

  /// One world step; runs the control tick first when one is due.
  void step();
  bool at_control_boundary() const { return world_.state().steps % static_cast<std::uint64_t>(control_every_) == 0; }

  double time() const { return world_.state().time; }
  std::uint64_t steps() const { return world_.state().steps; }
  bool landed() const { return landed_; }

  TelemetryRecord snapshot() const;
  /// Events raised since `cursor`; advances it.
  std::vector<MissionEvent> events_since(std::size_t& cursor) const;

  /// Closes open statistics; idempotent.
  RunSummary summary();

  const World& world() const { return world_; }
  World& world() { return world_; }
  const Mission& mission() const { return mission_; }
  const ArmInteractionController& arm() const { return arm_; }
  const ExperimentConfig& config() const { return cfg_; }
  const Pose& base_reference() const { return base_ref_; }
  const MissionOutput& last_output() const { return out_; }

 private:
  void control_tick();
  void collect_events();
  void track_statistics();

  ExperimentConfig cfg_;
  EvaluationSettings eval_;
  World world_;
  FlightController flight_;
  ArmInteractionController arm_;
  Mission mission_;
  int control_every_ = 4;
  double control_dt_ = 0.004;

  RotorCommand rotor_cmd_;
  bool saturated_ = false;
  double carriage_ref_ = 0.0;
  Pose base_ref_;
  SpatialTwist base_vel_ref_ = SpatialTwist::Zero();
  MissionOutput out_;
  Vec6 f_base_ = Vec6::Zero();
  std::optional<double> last_reading_;
  bool landed_ = false;

  std::vector<MissionEvent> events_;

  // statistics
  RunSummary summary_;
  std::deque<double> window_;
  double window_sum_ = 0.0;
  bool measuring_ = false;
  MeasureStats current_;
  double sq_sum_ = 0.0;
  double last_violation_ = 0.0;
  bool finalized_ = false;
};

struct RunOptions {
  std::ostream* telemetry = nullptr;
  bool full_rate = false;
  /// Called at every control boundary before the tick; live command intake goes here.
  std::function<void(Simulation&)> on_boundary;
  /// Called after every world step.
  std::function<void(Simulation&)> on_step;
  /// Simulated seconds per wall second; 0 runs unpaced.
  double realtime_factor = 0.0;
  const std::atomic<bool>* stop = nullptr;
};

/// Runs the closed loop for cfg.sim.duration simulated seconds (or until landed).
/// Throws DivergenceError when the state blows up.
RunSummary run_scenario(const ExperimentConfig& cfg, const std::vector<OperatorCommand>& script,
                        const RunOptions& opts = {}, EvaluationSettings eval = {});

}  // namespace uam
