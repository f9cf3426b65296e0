#include "uam/mission.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace uam {

const char* to_string(MissionPhase phase) {
  switch (phase) {
    case MissionPhase::Home: return "HOME";
    case MissionPhase::Approach: return "APPROACH";
    case MissionPhase::Measure: return "MEASURE";
    case MissionPhase::Retract: return "RETRACT";
  }
  return "?";
}

std::optional<MissionPhase> phase_from_string(const std::string& name) {
  for (MissionPhase p : {MissionPhase::Home, MissionPhase::Approach, MissionPhase::Measure, MissionPhase::Retract}) {
    if (name == to_string(p)) return p;
  }
  return std::nullopt;
}

const char* to_string(CommandKind kind) {
  switch (kind) {
    case CommandKind::VelocitySetpoint: return "velocity_setpoint";
    case CommandKind::TriggerNextPhase: return "trigger_next_phase";
    case CommandKind::Abort: return "abort";
    case CommandKind::Land: return "land";
    case CommandKind::SetForce: return "set_force";
  }
  return "?";
}

std::optional<CommandKind> command_kind_from_string(const std::string& name) {
  for (CommandKind k : {CommandKind::VelocitySetpoint, CommandKind::TriggerNextPhase, CommandKind::Abort,
                        CommandKind::Land, CommandKind::SetForce}) {
    if (name == to_string(k)) return k;
  }
  return std::nullopt;
}

void ForceRamp::step(double dt) {
  const double delta = rate * dt;
  if (current < target) {
    current = std::min(target, current + delta);
  } else if (current > target) {
    current = std::max(target, current - delta);
  }
  current = std::max(0.0, current);
}

void MissionParams::validate(const ArmKinematics& kin) const {
  if (!kin.within_limits(q_home)) throw std::invalid_argument("mission: home configuration outside joint limits");
  if (approach_axis < 0 || approach_axis > 2) throw std::invalid_argument("mission: approach axis must be 0, 1 or 2");
  const double positive[] = {approach_speed, approach_max_travel, contact_threshold, contact_dwell,
                             contact_lost_time, desired_force, max_force, ramp_rate, force_tolerance,
                             retract_speed, max_linear_speed, max_angular_speed, land_speed,
                             bias_null_max_force};
  for (double v : positive) {
    if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument("mission: parameters must be positive");
  }
  if (!(settle_time >= 0.0) || !(min_measure_time >= 0.0) || !(force_filter_tau >= 0.0)) {
    throw std::invalid_argument("mission: timers must be >= 0");
  }
  if (!(contact_lost_threshold >= 0.0) || contact_lost_threshold >= contact_threshold) {
    throw std::invalid_argument("mission: contact-lost threshold must lie below the contact threshold");
  }
  if (desired_force > max_force) throw std::invalid_argument("mission: desired force exceeds the maximum");
}

Mission::Mission(MissionParams params, const ArmKinematics& kin) : params_(std::move(params)) {
  params_.validate(kin);
  home_pose_ = forward_kinematics(kin, params_.q_home);
  reference_pose_ = home_pose_;
  ramp_.rate = params_.ramp_rate;
  emit(0.0, "phase", to_string(phase_), "start");
}

void Mission::emit(double t, std::string kind, std::string detail, std::string note, std::optional<double> value) {
  events_.push_back({t, std::move(kind), std::move(detail), std::move(note), value});
}

std::vector<MissionEvent> Mission::take_events() {
  std::vector<MissionEvent> out;
  out.swap(events_);
  return out;
}

Pose Mission::along(const Pose& from, const Pose& to, double fraction) const {
  Pose p;
  p.position = from.position + fraction * (to.position - from.position);
  p.orientation = from.orientation.slerp(fraction, to.orientation).normalized();
  return p;
}

void Mission::enter(MissionPhase next, double t, const std::string& why) {
  phase_ = next;
  phase_start_ = t;
  emit(t, "phase", to_string(next), why);
  switch (next) {
    case MissionPhase::Home:
      ramp_.target = 0.0;
      reference_pose_ = home_pose_;
      break;
    case MissionPhase::Approach:
      ramp_.target = 0.0;
      approach_start_ = reference_pose_;
      approach_travel_ = 0.0;
      contact_timer_ = 0.0;
      contact_stable_ = false;
      bias_pending_ = true;
      break;
    case MissionPhase::Measure:
      ramp_.target = params_.desired_force;
      measure_hold_ = reference_pose_;
      lost_timer_ = 0.0;
      band_timer_ = 0.0;
      vacuum_seen_ = false;
      awaiting_reading_ = false;
      velocity_sp_.setZero();
      measure_entries_.push_back(t);
      break;
    case MissionPhase::Retract:
      ramp_.target = 0.0;
      withdrawing_ = false;
      awaiting_reading_ = false;
      break;
  }
}

CommandResult Mission::handle_command(const OperatorCommand& cmd) {
  CommandResult res;
  auto reject = [&](const char* why) {
    res.accepted = false;
    res.reason = why;
    res.phase = phase_;
    emit(cmd.t, "command", to_string(cmd.kind), std::string("rejected: ") + why);
    return res;
  };
  if (landing_) return reject("landing");

  switch (cmd.kind) {
    case CommandKind::VelocitySetpoint: {
      if (!cmd.velocity.allFinite()) return reject("non-finite velocity");
      SpatialTwist v = cmd.velocity;
      const double lin = v.head<3>().norm();
      const double ang = v.tail<3>().norm();
      if (lin > params_.max_linear_speed) v.head<3>() *= params_.max_linear_speed / lin;
      if (ang > params_.max_angular_speed) v.tail<3>() *= params_.max_angular_speed / ang;
      velocity_sp_ = v;
      break;
    }
    case CommandKind::SetForce:
      if (!(cmd.force > 0.0) || cmd.force > params_.max_force) return reject("force out of range");
      params_.desired_force = cmd.force;
      if (phase_ == MissionPhase::Measure) ramp_.target = cmd.force;
      break;
    case CommandKind::Land:
      if (phase_ != MissionPhase::Home) return reject("land only from HOME");
      landing_ = true;
      velocity_sp_.setZero();
      break;
    case CommandKind::Abort:
      if (phase_ == MissionPhase::Home) return reject("nothing to abort");
      if (phase_ == MissionPhase::Retract) return reject("already retracting");
      enter(MissionPhase::Retract, cmd.t, "abort");
      break;
    case CommandKind::TriggerNextPhase: {
      MissionPhase next = MissionPhase::Home;
      switch (phase_) {
        case MissionPhase::Home: next = MissionPhase::Approach; break;
        case MissionPhase::Approach: next = MissionPhase::Measure; break;
        case MissionPhase::Measure: next = MissionPhase::Retract; break;
        case MissionPhase::Retract: return reject("retract in progress");
      }
      if (cmd.target && *cmd.target != next) return reject("illegal transition");
      if (next == MissionPhase::Measure && !contact_stable_) return reject("not in contact");
      enter(next, cmd.t, "trigger");
      break;
    }
  }
  res.accepted = true;
  res.phase = phase_;
  emit(cmd.t, "command", to_string(cmd.kind), "accepted");
  return res;
}

void Mission::record_reading(double t, std::optional<double> reading) {
  if (!awaiting_reading_) return;
  awaiting_reading_ = false;
  if (!reading || phase_ != MissionPhase::Measure) return;
  readings_.push_back(*reading);
  emit(t, "echometer", {}, {}, *reading);
  enter(MissionPhase::Retract, t, "measurement complete");
}

const MissionOutput& Mission::tick(const MissionFeedback& fb, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("mission tick: dt must be positive");
  now_ = fb.t;
  const Vec3 dir = approach_direction();
  const double f_axis = fb.f_ext(params_.approach_axis);

  MissionOutput out;
  Pose x_d = reference_pose_;
  Vec6 xdot_d = Vec6::Zero();

  ramp_.step(dt);
  const double alpha = params_.force_filter_tau > 0.0 ? dt / (params_.force_filter_tau + dt) : 1.0;
  f_filtered_ += alpha * (f_axis - f_filtered_);

  switch (phase_) {
    case MissionPhase::Home:
      x_d = home_pose_;
      break;

    case MissionPhase::Approach: {
      if (bias_pending_ && fb.f_ext.head<3>().norm() < params_.bias_null_max_force) {
        out.null_bias = true;
        bias_pending_ = false;
        bias_nulled_ = true;
        emit(fb.t, "bias_nulled");
      }
      // readings are only trusted for contact detection once the tare is fresh
      // hysteresis: the dwell only restarts once the force falls below the loss threshold
      if (!bias_pending_ && f_axis > params_.contact_threshold) {
        contact_timer_ += dt;
        if (!contact_stable_ && contact_timer_ >= params_.contact_dwell - 1e-9) {
          contact_stable_ = true;
          emit(fb.t, "contact_detected", {}, {}, f_axis);
        }
      } else if (bias_pending_ || f_axis < params_.contact_lost_threshold) {
        contact_timer_ = 0.0;
        contact_stable_ = false;
      }
      if (!contact_stable_) {
        approach_travel_ += params_.approach_speed * dt;
        xdot_d.head<3>() = params_.approach_speed * dir;
      }
      x_d = approach_start_;
      x_d.position += approach_travel_ * dir;
      if (approach_travel_ >= params_.approach_max_travel) {
        reference_pose_ = x_d;
        emit(fb.t, "approach_limit");
        enter(MissionPhase::Retract, fb.t, "no contact within travel");
        x_d = fb.ee_reference;
        xdot_d.setZero();
      }
      break;
    }

    case MissionPhase::Measure: {
      out.mode = ControlMode::Parallel;
      out.pump = true;
      x_d = measure_hold_;
      if (fb.vacuum_established && !vacuum_seen_) {
        vacuum_seen_ = true;
        emit(fb.t, "vacuum_established");
      }
      if (!fb.vacuum_established) vacuum_seen_ = false;

      if (f_axis < params_.contact_lost_threshold) {
        lost_timer_ += dt;
      } else {
        lost_timer_ = 0.0;
      }
      if (ramp_.settled() && std::abs(f_filtered_ - ramp_.target) <= params_.force_tolerance) {
        band_timer_ += dt;
      } else {
        band_timer_ = 0.0;
      }

      if (lost_timer_ >= params_.contact_lost_time - 1e-9) {
        emit(fb.t, "contact_lost", {}, {}, f_axis);
        reference_pose_ = fb.ee_reference;
        enter(MissionPhase::Approach, fb.t, "contact lost");
        out.mode = ControlMode::ImpedanceOnly;
        out.pump = false;
        x_d = reference_pose_;
      } else if (band_timer_ >= params_.settle_time - 1e-9 && fb.vacuum_established &&
                 fb.t - phase_start_ >= params_.min_measure_time - 1e-9) {
        out.read_echometer = true;
        awaiting_reading_ = true;
      }
      break;
    }

    case MissionPhase::Retract: {
      if (!withdrawing_ && ramp_.current == 0.0) {
        withdrawing_ = true;
        retract_start_ = fb.ee_reference;
        retract_length_ = (home_pose_.position - retract_start_.position).norm();
        retract_travel_ = 0.0;
      }
      if (!withdrawing_) {
        out.mode = ControlMode::Parallel;
        x_d = reference_pose_;
        break;
      }
      retract_travel_ += params_.retract_speed * dt;
      const double frac = retract_length_ > 0.0 ? std::min(1.0, retract_travel_ / retract_length_) : 1.0;
      x_d = along(retract_start_, home_pose_, frac);
      if (frac < 1.0) {
        xdot_d.head<3>() = params_.retract_speed * (home_pose_.position - retract_start_.position) / retract_length_;
      } else {
        reference_pose_ = home_pose_;
        enter(MissionPhase::Home, fb.t, "retracted");
        x_d = home_pose_;
      }
      break;
    }
  }

  if (phase_ != MissionPhase::Measure) out.base_velocity = velocity_sp_;
  if (landing_) {
    out.landing = true;
    out.base_velocity.setZero();
    out.base_velocity(2) = -params_.land_speed;
  }
  if (phase_ == MissionPhase::Measure) out.base_velocity.setZero();

  reference_pose_ = x_d;
  out.reference.x_d = x_d;
  out.reference.xdot_d = xdot_d;
  out.reference.f_d = ramp_.current * dir;
  out_ = out;
  return out_;
}

}  // namespace uam
