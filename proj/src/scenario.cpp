#include "uam/scenario.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

namespace uam {

namespace {

const char* const kNdtRepeatability = R"(# Two approach / measure / retract cycles on the same spot.
# The echometer capture ends each MEASURE phase on its own.
{"t": 2.0, "cmd": "trigger_next_phase", "target": "APPROACH"}
{"t": 7.0, "cmd": "trigger_next_phase", "target": "MEASURE"}
{"t": 30.0, "cmd": "trigger_next_phase", "target": "APPROACH"}
{"t": 35.0, "cmd": "trigger_next_phase", "target": "MEASURE"}
)";

template <typename Derived>
Json arr(const Eigen::MatrixBase<Derived>& m) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < m.size(); ++i) a.push_back(m(i));
  return a;
}

}  // namespace

OperatorCommand command_from_json(const Json& j, bool require_time) {
  if (!j.is_object()) throw ConfigError("command must be a JSON object");
  OperatorCommand c;
  for (const auto& [k, v] : j.items()) {
    if (k != "t" && k != "cmd" && k != "target" && k != "velocity" && k != "force") {
      throw ConfigError("command: unknown key '" + k + "'");
    }
  }
  if (j.contains("t")) {
    if (!j["t"].is_number() || !(j["t"].get<double>() >= 0.0)) throw ConfigError("command: t must be a number >= 0");
    c.t = j["t"].get<double>();
  } else if (require_time) {
    throw ConfigError("command: missing t");
  }
  if (!j.contains("cmd") || !j["cmd"].is_string()) throw ConfigError("command: missing cmd");
  const auto kind = command_kind_from_string(j["cmd"].get<std::string>());
  if (!kind) throw ConfigError("command: unknown cmd '" + j["cmd"].get<std::string>() + "'");
  c.kind = *kind;

  auto forbid = [&](const char* key) {
    if (j.contains(key)) throw ConfigError(std::string("command: '") + key + "' not allowed for " + to_string(c.kind));
  };
  switch (c.kind) {
    case CommandKind::VelocitySetpoint: {
      forbid("target");
      forbid("force");
      const Json* v = j.contains("velocity") ? &j["velocity"] : nullptr;
      if (!v || !v->is_array() || v->size() != 6) throw ConfigError("command: velocity needs 6 numbers");
      for (int i = 0; i < 6; ++i) {
        if (!(*v)[i].is_number()) throw ConfigError("command: velocity needs 6 numbers");
        c.velocity(i) = (*v)[i].get<double>();
      }
      break;
    }
    case CommandKind::SetForce:
      forbid("target");
      forbid("velocity");
      if (!j.contains("force") || !j["force"].is_number()) throw ConfigError("command: set_force needs force");
      c.force = j["force"].get<double>();
      break;
    case CommandKind::TriggerNextPhase:
      forbid("velocity");
      forbid("force");
      if (j.contains("target")) {
        if (!j["target"].is_string()) throw ConfigError("command: target must be a phase name");
        c.target = phase_from_string(j["target"].get<std::string>());
        if (!c.target) throw ConfigError("command: unknown phase '" + j["target"].get<std::string>() + "'");
      }
      break;
    case CommandKind::Abort:
    case CommandKind::Land:
      forbid("target");
      forbid("velocity");
      forbid("force");
      break;
  }
  return c;
}

Json command_to_json(const OperatorCommand& c) {
  Json j;
  j["t"] = c.t;
  j["cmd"] = to_string(c.kind);
  if (c.kind == CommandKind::VelocitySetpoint) j["velocity"] = arr(c.velocity);
  if (c.kind == CommandKind::SetForce) j["force"] = c.force;
  if (c.target) j["target"] = to_string(*c.target);
  return j;
}

std::vector<OperatorCommand> parse_script(std::istream& in) {
  std::vector<OperatorCommand> out;
  std::string line;
  std::size_t n = 0;
  double last = 0.0;
  while (std::getline(in, line)) {
    ++n;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    try {
      const Json j = Json::parse(line);
      OperatorCommand c = command_from_json(j, true);
      if (c.t < last) throw ConfigError("times must be non-decreasing");
      last = c.t;
      out.push_back(c);
    } catch (const Json::parse_error& e) {
      throw ConfigError("script line " + std::to_string(n) + ": " + e.what());
    } catch (const ConfigError& e) {
      throw ConfigError("script line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

std::vector<OperatorCommand> load_script(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open script " + path);
  return parse_script(in);
}

std::optional<std::string> bundled_scenario(const std::string& name) {
  if (name == "ndt-repeatability") return std::string(kNdtRepeatability);
  if (name == "hover") return std::string("# no operator input\n");
  return std::nullopt;
}

std::vector<std::string> bundled_scenario_names() { return {"hover", "ndt-repeatability"}; }

Json RunSummary::to_json() const {
  Json j;
  j["sim_time"] = sim_time;
  j["wall_time"] = wall_time;
  j["end_reason"] = end_reason;
  Json phases = Json::object();
  for (const auto& [k, v] : phase_time) phases[k] = {{"seconds", v}, {"fraction", sim_time > 0 ? v / sim_time : 0.0}};
  j["phases"] = phases;
  Json ms = Json::array();
  for (const auto& m : measures) {
    Json e;
    e["entry_t"] = m.entry_t;
    e["exit_t"] = m.exit_t;
    e["target"] = m.target;
    e["max_error"] = m.max_error;
    e["rms_error"] = m.rms_error;
    e["samples"] = m.samples;
    e["settled_after"] = m.settled_after ? Json(*m.settled_after) : Json(nullptr);
    e["max_base_deviation"] = arr(m.max_base_deviation);
    ms.push_back(e);
  }
  j["measures"] = ms;
  j["readings"] = readings;
  j["records"] = records;
  j["saturated_ticks"] = saturated_ticks;
  j["battery_saturated_ticks"] = battery_saturated_ticks;
  j["commands_accepted"] = commands_accepted;
  j["commands_rejected"] = commands_rejected;
  return j;
}

std::string RunSummary::to_text() const {
  std::ostringstream o;
  o << std::fixed << std::setprecision(3);
  o << "simulated " << sim_time << " s in " << wall_time << " s wall (" << end_reason << ")\n";
  o << "phases:";
  for (const auto& [k, v] : phase_time) {
    o << "  " << k << " " << v << " s (" << std::setprecision(1) << (sim_time > 0 ? 100.0 * v / sim_time : 0.0)
      << "%)" << std::setprecision(3);
  }
  o << "\n";
  for (std::size_t i = 0; i < measures.size(); ++i) {
    const auto& m = measures[i];
    o << "measure " << i + 1 << ": t " << m.entry_t << " -> " << m.exit_t << ", target " << m.target
      << " N, steady max |err| " << std::setprecision(4) << m.max_error << " N, rms " << m.rms_error
      << " N, base dev " << m.max_base_deviation.maxCoeff() << " m" << std::setprecision(3);
    if (m.settled_after) o << ", settled after " << *m.settled_after << " s";
    o << "\n";
  }
  o << "thickness readings:";
  if (readings.empty()) o << " none";
  o << std::setprecision(6);
  for (double r : readings) o << " " << r;
  o << "\ncommands: " << commands_accepted << " accepted, " << commands_rejected << " rejected; "
    << "allocation saturated on " << saturated_ticks << " ticks\n";
  return o.str();
}

Simulation::Simulation(const ExperimentConfig& cfg, EvaluationSettings eval)
    : cfg_(cfg),
      eval_(eval),
      world_((cfg_.validate(), cfg_.world_params()), cfg_.mission.q_home),
      flight_(cfg_.world.vehicle, cfg_.flight),
      arm_(cfg_.world.arm, cfg_.interaction, cfg_.mission.q_home),
      mission_(cfg_.mission_params(), cfg_.world.arm) {
  control_every_ = cfg_.control_every();
  control_dt_ = control_every_ * cfg_.sim.dt;
  base_ref_ = world_.state().base.pose;
  carriage_ref_ = world_.state().carriage_x;
  SpatialWrench hover = SpatialWrench::Zero();
  hover(2) = cfg_.world.vehicle.mass * cfg_.world.vehicle.gravity;
  rotor_cmd_ = allocate(cfg_.world.allocation, hover).command;
  out_.reference.x_d = mission_.home_pose();
  collect_events();
}

CommandResult Simulation::apply(OperatorCommand cmd) {
  cmd.t = time();
  const CommandResult r = mission_.handle_command(cmd);
  (r.accepted ? summary_.commands_accepted : summary_.commands_rejected) += 1;
  collect_events();
  return r;
}

void Simulation::collect_events() {
  for (auto& e : mission_.take_events()) events_.push_back(std::move(e));
}

std::vector<MissionEvent> Simulation::events_since(std::size_t& cursor) const {
  std::vector<MissionEvent> out;
  if (cursor < events_.size()) out.assign(events_.begin() + static_cast<std::ptrdiff_t>(cursor), events_.end());
  cursor = events_.size();
  return out;
}

void Simulation::control_tick() {
  const double t = time();
  const Mat3 r_tool = world_.ee_pose_base().rotation();
  auto sensed = [&] {
    const Vec6 f = world_.ft_read();
    Vec6 out;
    out.head<3>() = r_tool * f.head<3>();
    out.tail<3>() = r_tool * f.tail<3>();
    return out;
  };
  f_base_ = sensed();

  MissionFeedback fb;
  fb.t = t;
  fb.f_ext = f_base_;
  fb.vacuum_established = world_.state().contact.vacuum_established;
  fb.ee_reference = arm_.reference_pose();
  out_ = mission_.tick(fb, control_dt_);

  if (out_.null_bias) {
    world_.null_bias();
    f_base_ = sensed();
  }
  if (out_.pump != world_.state().pump_active) world_.set_pump(out_.pump);
  if (out_.read_echometer) mission_.record_reading(t, world_.echometer_read());

  arm_.update(out_.reference, f_base_, out_.mode, control_dt_);

  const BatterySetpoint bs = battery_setpoint(cfg_.world.carriage, arm_com_x(cfg_.world.arm, world_.state().joints.q));
  carriage_ref_ = bs.x;
  if (bs.saturated) ++summary_.battery_saturated_ticks;

  // base hold point follows the forwarded operator velocity; attitude stays level, yaw may turn
  base_vel_ref_ = out_.base_velocity;
  base_ref_.position += base_vel_ref_.head<3>() * control_dt_;
  base_ref_.orientation =
      (quat_from_rotation_vector(Vec3(0.0, 0.0, base_vel_ref_(5) * control_dt_)) * base_ref_.orientation).normalized();
  if (out_.landing) {
    const double ground = cfg_.sim.ground_height;
    if (base_ref_.position.z() <= ground) {
      base_ref_.position.z() = ground;
      base_vel_ref_.setZero();
      if (world_.state().base.pose.position.z() - ground < 0.02) landed_ = true;
    }
  }

  const SpatialWrench wrench = flight_.cascade_wrench(world_.state().base, base_ref_, base_vel_ref_, control_dt_);
  const AllocationResult alloc = allocate(cfg_.world.allocation, wrench);
  rotor_cmd_ = alloc.command;
  saturated_ = alloc.saturated;
  if (saturated_) ++summary_.saturated_ticks;

  collect_events();
  track_statistics();
}

void Simulation::track_statistics() {
  const double t = time();
  const bool in_measure = mission_.phase() == MissionPhase::Measure;
  if (measuring_ && (!in_measure || mission_.measure_entry_times().back() != current_.entry_t)) {
    current_.exit_t = t;
    if (current_.samples > 0) current_.rms_error = std::sqrt(sq_sum_ / static_cast<double>(current_.samples));
    if (current_.samples > 0) current_.settled_after = last_violation_ - current_.entry_t;
    summary_.measures.push_back(current_);
    measuring_ = false;
  }
  if (in_measure && !measuring_) {
    current_ = MeasureStats{};
    current_.entry_t = mission_.measure_entry_times().back();
    window_.clear();
    window_sum_ = 0.0;
    sq_sum_ = 0.0;
    last_violation_ = current_.entry_t;
    measuring_ = true;
  }
  if (!in_measure) return;

  const std::size_t n = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(eval_.average / control_dt_)));
  const double f = f_base_(cfg_.interaction.approach_axis);
  window_.push_back(f);
  window_sum_ += f;
  if (window_.size() > n) {
    window_sum_ -= window_.front();
    window_.pop_front();
  }
  const double avg = window_sum_ / static_cast<double>(window_.size());
  const double target = mission_.ramp().target;
  current_.target = target;
  const double err = std::abs(avg - target);
  if (err > eval_.tolerance) last_violation_ = t;
  if (t >= current_.entry_t + eval_.window - 1e-9) {
    current_.max_error = std::max(current_.max_error, err);
    sq_sum_ += err * err;
    ++current_.samples;
  }
}

void Simulation::step() {
  if (at_control_boundary()) control_tick();
  world_.step(rotor_cmd_, arm_.state().q_ref, carriage_ref_);
  summary_.phase_time[to_string(mission_.phase())] += cfg_.sim.dt;
  if (measuring_) {
    const Vec3 dev = (world_.state().base.pose.position - base_ref_.position).cwiseAbs();
    current_.max_base_deviation = current_.max_base_deviation.cwiseMax(dev);
  }
}

TelemetryRecord Simulation::snapshot() const {
  const WorldState& s = world_.state();
  TelemetryRecord r;
  r.t = s.time;
  r.phase = mission_.phase();
  r.mode = out_.mode;
  r.base = s.base.pose;
  r.base_twist = s.base.twist;
  r.base_ref = base_ref_.position;
  r.base_vel_cmd = base_vel_ref_;
  r.q = s.joints.q;
  r.q_ref = arm_.state().q_ref;
  r.ee = world_.ee_pose_base().position;
  r.ee_ref = out_.reference.x_d.position;
  r.f_ext = f_base_;
  r.f_d = mission_.ramp().current;
  r.f_true = world_.normal_force();
  r.battery_x = s.carriage_x;
  r.battery_ref = carriage_ref_;
  r.thrusts = rotor_cmd_.thrusts;
  r.tilts = rotor_cmd_.tilt_angles;
  r.saturated = saturated_;
  r.in_contact = s.contact.in_contact;
  r.vacuum = s.contact.vacuum_established;
  return r;
}

RunSummary Simulation::summary() {
  if (!finalized_) {
    if (measuring_) {
      current_.exit_t = time();
      if (current_.samples > 0) {
        current_.rms_error = std::sqrt(sq_sum_ / static_cast<double>(current_.samples));
        current_.settled_after = last_violation_ - current_.entry_t;
      }
      summary_.measures.push_back(current_);
      measuring_ = false;
    }
    summary_.readings = mission_.readings();
    summary_.sim_time = time();
    finalized_ = true;
  }
  return summary_;
}

RunSummary run_scenario(const ExperimentConfig& cfg, const std::vector<OperatorCommand>& script,
                        const RunOptions& opts, EvaluationSettings eval) {
  const auto wall_start = std::chrono::steady_clock::now();
  Simulation sim(cfg, eval);
  const int every = opts.full_rate ? 1 : cfg.telemetry_every();
  TelemetryWriter* writer = nullptr;
  std::optional<TelemetryWriter> w;
  if (opts.telemetry) {
    w.emplace(*opts.telemetry);
    writer = &*w;
    writer->header(telemetry_header(cfg, 1.0 / (every * cfg.sim.dt)));
  }
  std::size_t cursor = 0;
  auto emit_record = [&] {
    TelemetryRecord r = sim.snapshot();
    r.events = sim.events_since(cursor);
    for (const auto& e : r.events) {
      if (e.kind == "echometer") r.echometer = e.value;
    }
    if (writer) writer->write(r);
  };

  const auto total_steps = static_cast<std::uint64_t>(std::llround(cfg.sim.duration / cfg.sim.dt));
  std::size_t next_cmd = 0;
  std::string reason = "duration";
  emit_record();
  while (sim.steps() < total_steps) {
    if (opts.stop && opts.stop->load()) {
      reason = "stopped";
      break;
    }
    if (sim.at_control_boundary()) {
      while (next_cmd < script.size() && script[next_cmd].t <= sim.time() + 1e-9) sim.apply(script[next_cmd++]);
      if (opts.on_boundary) opts.on_boundary(sim);
    }
    sim.step();
    if (sim.steps() % static_cast<std::uint64_t>(every) == 0) emit_record();
    if (opts.on_step) opts.on_step(sim);
    if (opts.realtime_factor > 0.0) {
      const auto due = wall_start + std::chrono::duration<double>(sim.time() / opts.realtime_factor);
      std::this_thread::sleep_until(due);
    }
    if (sim.landed()) {
      reason = "landed";
      break;
    }
  }
  if (sim.steps() % static_cast<std::uint64_t>(every) != 0) emit_record();
  if (writer) writer->flush();

  RunSummary s = sim.summary();
  s.end_reason = reason;
  s.records = writer ? writer->records() : 0;
  s.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
  return s;
}

}  // namespace uam
