#pragma once

#include "uam/arm_model.hpp"
#include "uam/interaction_control.hpp"
#include "uam/spatial_math.hpp"

#include <optional>
#include <string>
#include <vector>

namespace uam {

enum class MissionPhase { Home, Approach, Measure, Retract };

const char* to_string(MissionPhase phase);
std::optional<MissionPhase> phase_from_string(const std::string& name);

enum class CommandKind { VelocitySetpoint, TriggerNextPhase, Abort, Land, SetForce };

const char* to_string(CommandKind kind);
std::optional<CommandKind> command_kind_from_string(const std::string& name);

struct OperatorCommand {
  CommandKind kind = CommandKind::TriggerNextPhase;
  double t = 0.0;
  SpatialTwist velocity = SpatialTwist::Zero();  // VelocitySetpoint, W
  double force = 0.0;                            // SetForce [N]
  std::optional<MissionPhase> target;            // TriggerNextPhase: phase the operator expects to enter
};

struct CommandResult {
  bool accepted = false;
  std::string reason;  // empty when accepted
  MissionPhase phase = MissionPhase::Home;
};

/// Desired-force ramp: current moves toward target at no more than rate.
struct ForceRamp {
  double target = 0.0;
  double rate = 1.75;
  double current = 0.0;

  void step(double dt);
  bool settled() const { return current == target; }
};

struct MissionParams {
  Vec5 q_home = (Vec5() << 0.0, -1.2, 2.0, -0.8, 0.0).finished();
  int approach_axis = 0;
  double approach_speed = 0.02;       // m/s
  double approach_max_travel = 0.10;  // m, auto-retract beyond this
  double contact_threshold = 0.5;     // N
  double contact_dwell = 0.3;         // s
  double contact_lost_threshold = 0.2;
  double contact_lost_time = 0.1;
  double desired_force = 3.5;  // N
  double max_force = 10.0;
  double ramp_rate = 1.75;        // N/s
  double force_tolerance = 0.15;  // N, settled band before capture
  double force_filter_tau = 0.05;  // s, low-pass on the force used for the settled band
  double settle_time = 1.0;       // s inside the band before capture
  double min_measure_time = 8.0;  // s in MEASURE before capture
  double retract_speed = 0.05;    // m/s
  double max_linear_speed = 0.5;
  double max_angular_speed = 0.3;
  double land_speed = 0.3;
  double bias_null_max_force = 0.5;  // N, nulling is deferred above this

  void validate(const ArmKinematics& kin) const;
};

struct MissionEvent {
  double t = 0.0;
  std::string kind;
  std::string detail;
  std::string note;
  std::optional<double> value;
};

struct MissionFeedback {
  double t = 0.0;
  Vec6 f_ext = Vec6::Zero();  // sensor reading rotated to F_base, push convention
  bool vacuum_established = false;
  Pose ee_reference;  // FK of the controller's commanded joints
};

struct MissionOutput {
  TaskReference reference;
  ControlMode mode = ControlMode::ImpedanceOnly;
  bool null_bias = false;
  bool pump = false;
  bool read_echometer = false;
  SpatialTwist base_velocity = SpatialTwist::Zero();
  bool landing = false;
};

/// Operator-driven inspection sequence. handle_command() applies commands;
/// tick() advances timers and produces the arm reference for one control period.
class Mission {
 public:
  Mission(MissionParams params, const ArmKinematics& kin);

  CommandResult handle_command(const OperatorCommand& cmd);
  const MissionOutput& tick(const MissionFeedback& fb, double dt);
  /// Result of the echometer request made by the last tick.
  void record_reading(double t, std::optional<double> reading);

  MissionPhase phase() const { return phase_; }
  const ForceRamp& ramp() const { return ramp_; }
  int measure_count() const { return static_cast<int>(readings_.size()); }
  const std::vector<double>& readings() const { return readings_; }
  const std::vector<double>& measure_entry_times() const { return measure_entries_; }
  const Pose& home_pose() const { return home_pose_; }
  const Vec5& home_configuration() const { return params_.q_home; }
  const MissionParams& params() const { return params_; }
  bool landing() const { return landing_; }
  bool bias_nulled() const { return bias_nulled_; }

  /// Events raised since the last call, in order.
  std::vector<MissionEvent> take_events();

 private:
  void enter(MissionPhase next, double t, const std::string& why);
  void emit(double t, std::string kind, std::string detail = {}, std::string note = {},
            std::optional<double> value = std::nullopt);
  Vec3 approach_direction() const { return Vec3::Unit(params_.approach_axis); }
  Pose along(const Pose& from, const Pose& to, double fraction) const;

  MissionParams params_;
  Pose home_pose_;
  MissionPhase phase_ = MissionPhase::Home;
  ForceRamp ramp_;
  MissionOutput out_;
  std::vector<MissionEvent> events_;
  std::vector<double> readings_;
  std::vector<double> measure_entries_;

  double now_ = 0.0;
  double phase_start_ = 0.0;
  SpatialTwist velocity_sp_ = SpatialTwist::Zero();
  bool landing_ = false;

  bool bias_nulled_ = false;
  bool bias_pending_ = false;
  Pose approach_start_;
  double approach_travel_ = 0.0;
  double contact_timer_ = 0.0;
  bool contact_stable_ = false;
  double f_filtered_ = 0.0;

  Pose measure_hold_;
  double lost_timer_ = 0.0;
  double band_timer_ = 0.0;
  bool vacuum_seen_ = false;
  bool awaiting_reading_ = false;

  bool withdrawing_ = false;
  Pose retract_start_;
  double retract_length_ = 0.0;
  double retract_travel_ = 0.0;
  Pose reference_pose_;  // x_d issued by the last tick
};

}  // namespace uam
