#include "uam/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace uam {

ExperimentConfig ExperimentConfig::defaults() { return ExperimentConfig{}; }

namespace {

int whole_steps(double period, double dt, const char* what) {
  const double ratio = period / dt;
  const double r = std::round(ratio);
  if (!(r >= 1.0) || std::abs(ratio - r) > 1e-6) {
    throw ConfigError(std::string("sim: ") + what + " period must be a whole number of dt steps");
  }
  return static_cast<int>(r);
}

template <typename Derived>
Json arr(const Eigen::MatrixBase<Derived>& m) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < m.size(); ++i) a.push_back(m(i));
  return a;
}

Json arr(const Quat& q) { return Json::array({q.w(), q.x(), q.y(), q.z()}); }

Json mat_rows(const Mat6& m) {
  Json rows = Json::array();
  for (int r = 0; r < 6; ++r) rows.push_back(arr(Vec6(m.row(r).transpose())));
  return rows;
}

// Reads known keys of one JSON object and rejects the rest.
class Section {
 public:
  Section(const Json& parent, const char* name) : name_(name) {
    if (!parent.contains(name)) return;
    node_ = &parent.at(name);
    if (!node_->is_object()) throw ConfigError(std::string(name) + ": expected an object");
  }
  explicit Section(const Json& node, std::string name) : node_(&node), name_(std::move(name)) {
    if (!node_->is_object()) throw ConfigError(name_ + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    const Json* v = find(key);
    if (!v) return;
    try {
      read(*v, out);
    } catch (const Json::exception& e) {
      throw ConfigError(name_ + "." + key + ": " + e.what());
    } catch (const ConfigError& e) {
      throw ConfigError(name_ + "." + key + ": " + e.what());
    }
  }

  const Json* find(const char* key) {
    used_.insert(key);
    if (!node_ || !node_->contains(key)) return nullptr;
    return &node_->at(key);
  }

  void finish() const {
    if (!node_) return;
    for (const auto& [k, v] : node_->items()) {
      if (!used_.count(k)) throw ConfigError(name_ + ": unknown key '" + k + "'");
    }
  }

 private:
  static void read(const Json& v, double& out) {
    if (!v.is_number()) throw ConfigError("expected a number");
    out = v.get<double>();
  }
  static void read(const Json& v, int& out) {
    if (!v.is_number_integer()) throw ConfigError("expected an integer");
    out = v.get<int>();
  }
  static void read(const Json& v, std::uint64_t& out) {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
      throw ConfigError("expected a non-negative integer");
    }
    out = v.get<std::uint64_t>();
  }
  static void read(const Json& v, bool& out) {
    if (!v.is_boolean()) throw ConfigError("expected true or false");
    out = v.get<bool>();
  }
  template <int N>
  static void read(const Json& v, Eigen::Matrix<double, N, 1>& out) {
    if (!v.is_array() || static_cast<int>(v.size()) != N) {
      throw ConfigError("expected an array of " + std::to_string(N) + " numbers");
    }
    for (int i = 0; i < N; ++i) read(v[i], out(i));
  }
  static void read(const Json& v, Quat& out) {
    Eigen::Matrix<double, 4, 1> c;
    read(v, c);
    out = Quat(c(0), c(1), c(2), c(3));
    if (std::abs(out.norm() - 1.0) > 1e-9) throw ConfigError("quaternion must be unit-norm (w, x, y, z)");
  }
  static void read(const Json& v, Mat6& out) {
    if (!v.is_array() || v.size() != 6) throw ConfigError("expected 6 rows of 6 numbers");
    for (int r = 0; r < 6; ++r) {
      Vec6 row;
      read(v[r], row);
      out.row(r) = row.transpose();
    }
  }
  template <std::size_t N, int M>
  static void read(const Json& v, std::array<Eigen::Matrix<double, M, 1>, N>& out) {
    if (!v.is_array() || v.size() != N) throw ConfigError("expected " + std::to_string(N) + " vectors");
    for (std::size_t i = 0; i < N; ++i) read(v[i], out[i]);
  }
  template <std::size_t N>
  static void read(const Json& v, std::array<double, N>& out) {
    if (!v.is_array() || v.size() != N) throw ConfigError("expected " + std::to_string(N) + " numbers");
    for (std::size_t i = 0; i < N; ++i) read(v[i], out[i]);
  }

  const Json* node_ = nullptr;
  std::string name_;
  std::set<std::string> used_;
};

template <std::size_t N>
Json vec_list(const std::array<Vec3, N>& vs) {
  Json a = Json::array();
  for (const auto& v : vs) a.push_back(arr(v));
  return a;
}

}  // namespace

int ExperimentConfig::control_every() const { return whole_steps(1.0 / sim.control_rate_hz, sim.dt, "control"); }
int ExperimentConfig::telemetry_every() const {
  return whole_steps(1.0 / sim.telemetry_rate_hz, sim.dt, "telemetry");
}
int ExperimentConfig::bridge_every() const { return whole_steps(1.0 / bridge.rate_hz, sim.dt, "bridge"); }

WorldParams ExperimentConfig::world_params() const {
  WorldParams w = world;
  w.dt = sim.dt;
  w.seed = sim.seed;
  return w;
}

MissionParams ExperimentConfig::mission_params() const {
  MissionParams m = mission;
  m.approach_axis = interaction.approach_axis;
  return m;
}

void ExperimentConfig::validate() const {
  auto guard = [](const char* section, auto&& fn) {
    try {
      fn();
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(std::string(section) + ": " + e.what());
    }
  };
  if (!(sim.dt > 0.0) || !(sim.control_rate_hz > 0.0) || !(sim.telemetry_rate_hz > 0.0)) {
    throw ConfigError("sim: dt and rates must be positive");
  }
  if (!(sim.duration >= 0.0) || !std::isfinite(sim.duration)) throw ConfigError("sim: invalid duration");
  if (!std::isfinite(sim.ground_height)) throw ConfigError("sim: invalid ground height");
  control_every();
  telemetry_every();
  if (bridge.port < 0 || bridge.port > 65535) throw ConfigError("bridge: port out of range");
  if (!(bridge.rate_hz > 0.0) || bridge.queue_depth < 1 || !(bridge.command_timeout > 0.0)) {
    throw ConfigError("bridge: rate, queue depth and timeout must be positive");
  }
  bridge_every();
  guard("world", [&] { world_params().validate(); });
  guard("flight_gains", [&] { flight.validate(); });
  guard("interaction", [&] { interaction.validate(); });
  guard("mission", [&] { mission_params().validate(world.arm); });
  const Vec3 axis = Vec3::Unit(interaction.approach_axis);
  if (world.surface.normal.dot(axis) >= 0.0) {
    throw ConfigError("surface: normal must face the approaching probe");
  }
}

Json config_to_json(const ExperimentConfig& c) {
  Json j;
  j["schema"] = kConfigSchema;
  j["version"] = kConfigVersion;
  j["sim"] = {{"dt", c.sim.dt},
              {"control_rate_hz", c.sim.control_rate_hz},
              {"telemetry_rate_hz", c.sim.telemetry_rate_hz},
              {"duration", c.sim.duration},
              {"ground_height", c.sim.ground_height},
              {"seed", c.sim.seed}};
  const WorldParams& w = c.world;
  j["vehicle"] = {{"mass", w.vehicle.mass},
                  {"inertia", arr(w.vehicle.inertia)},
                  {"gravity", w.vehicle.gravity},
                  {"initial_position", arr(w.initial_position)},
                  {"thrust_time_constant", w.thrust_time_constant}};
  const FlightGains& g = c.flight;
  j["flight_gains"] = {{"pos_p", g.pos_p},   {"vel_p", g.vel_p},     {"vel_i", g.vel_i},
                       {"vel_d", g.vel_d},   {"vel_i_limit", g.vel_i_limit}, {"vel_limit", g.vel_limit},
                       {"att_p", g.att_p},   {"rate_p", g.rate_p},   {"rate_i", g.rate_i},
                       {"rate_d", g.rate_d}, {"rate_i_limit", g.rate_i_limit}};
  const AllocationModel& a = w.allocation;
  j["allocation"] = {{"arm_positions", vec_list(a.arm_positions)},
                     {"yaw_torque_coeff", a.yaw_torque_coeff},
                     {"max_thrust", a.max_thrust},
                     {"tilt_limit", a.tilt_limit},
                     {"damping", a.damping}};
  const ArmKinematics& k = w.arm;
  j["arm"] = {{"joint_axes", vec_list(k.joint_axes)},
              {"link_offsets", vec_list(k.link_offsets)},
              {"link_masses", k.link_masses},
              {"link_com_offsets", vec_list(k.link_com_offsets)},
              {"tool_offset", arr(k.tool_offset)},
              {"mount_position", arr(k.mount.position)},
              {"mount_orientation", arr(k.mount.orientation)},
              {"joint_lower", arr(k.joint_lower)},
              {"joint_upper", arr(k.joint_upper)},
              {"servo_natural_frequency", w.servo.natural_frequency},
              {"servo_damping_ratio", w.servo.damping_ratio},
              {"servo_rate_limit", w.servo.rate_limit}};
  const BatteryCarriage& b = w.carriage;
  j["battery"] = {{"x0", b.x0_batt},
                  {"gain_k", b.gain_k},
                  {"mass", b.mass_batt},
                  {"travel_limit", b.travel_limit},
                  {"time_constant", b.time_constant},
                  {"height", w.battery_height}};
  const InteractionConfig& ic = c.interaction;
  j["interaction"] = {{"approach_axis", ic.approach_axis},
                      {"pinv_damping", ic.pinv_damping},
                      {"lambda_filter_hz", ic.lambda_filter_hz},
                      {"impedance_mass", arr(ic.gains.impedance_mass)},
                      {"impedance_stiffness", arr(ic.gains.impedance_stiffness)},
                      {"impedance_damping", arr(ic.gains.impedance_damping)},
                      {"force_kp", arr(ic.gains.force_kp)},
                      {"force_kd", arr(ic.gains.force_kd)},
                      {"compliance", mat_rows(ic.gains.compliance)}};
  j["surface"] = {{"point", arr(w.surface.point)},
                  {"normal", arr(w.surface.normal)},
                  {"thickness", w.surface.thickness},
                  {"compliance", w.surface.compliance},
                  {"damping", w.surface.damping}};
  j["sensor"] = {{"offset", arr(w.sensor.offset)},
                 {"noise_std", arr(w.sensor.noise_std)},
                 {"noise_enabled", w.sensor.noise_enabled},
                 {"rate_hz", w.sensor.rate_hz},
                 {"tare_window", w.sensor.tare_window}};
  j["echometer"] = {{"noise_std", w.echometer.noise_std}, {"min_force", w.echometer.min_force}};
  j["vacuum"] = {{"min_force", w.vacuum.min_force}, {"hold_time", w.vacuum.hold_time}};
  const MissionParams& m = c.mission;
  j["mission"] = {{"q_home", arr(m.q_home)},
                  {"approach_speed", m.approach_speed},
                  {"approach_max_travel", m.approach_max_travel},
                  {"contact_threshold", m.contact_threshold},
                  {"contact_dwell", m.contact_dwell},
                  {"contact_lost_threshold", m.contact_lost_threshold},
                  {"contact_lost_time", m.contact_lost_time},
                  {"desired_force", m.desired_force},
                  {"max_force", m.max_force},
                  {"ramp_rate", m.ramp_rate},
                  {"force_tolerance", m.force_tolerance},
                  {"force_filter_tau", m.force_filter_tau},
                  {"settle_time", m.settle_time},
                  {"min_measure_time", m.min_measure_time},
                  {"retract_speed", m.retract_speed},
                  {"max_linear_speed", m.max_linear_speed},
                  {"max_angular_speed", m.max_angular_speed},
                  {"land_speed", m.land_speed},
                  {"bias_null_max_force", m.bias_null_max_force}};
  j["bridge"] = {{"port", c.bridge.port},
                 {"rate_hz", c.bridge.rate_hz},
                 {"queue_depth", c.bridge.queue_depth},
                 {"command_timeout", c.bridge.command_timeout}};
  return j;
}

ExperimentConfig config_from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  ExperimentConfig c = ExperimentConfig::defaults();
  Section top(j, std::string("config"));
  if (const Json* s = top.find("schema")) {
    if (!s->is_string() || s->get<std::string>() != kConfigSchema) throw ConfigError("config: wrong schema name");
  }
  if (const Json* v = top.find("version")) {
    if (!v->is_number_integer() || v->get<int>() != kConfigVersion) {
      throw ConfigError("config: unsupported schema version");
    }
  }

  Section sim(j, "sim");
  sim.get("dt", c.sim.dt);
  sim.get("control_rate_hz", c.sim.control_rate_hz);
  sim.get("telemetry_rate_hz", c.sim.telemetry_rate_hz);
  sim.get("duration", c.sim.duration);
  sim.get("ground_height", c.sim.ground_height);
  sim.get("seed", c.sim.seed);
  sim.finish();

  WorldParams& w = c.world;
  Section veh(j, "vehicle");
  veh.get("mass", w.vehicle.mass);
  veh.get("inertia", w.vehicle.inertia);
  veh.get("gravity", w.vehicle.gravity);
  veh.get("initial_position", w.initial_position);
  veh.get("thrust_time_constant", w.thrust_time_constant);
  veh.finish();

  Section fg(j, "flight_gains");
  FlightGains& g = c.flight;
  fg.get("pos_p", g.pos_p);
  fg.get("vel_p", g.vel_p);
  fg.get("vel_i", g.vel_i);
  fg.get("vel_d", g.vel_d);
  fg.get("vel_i_limit", g.vel_i_limit);
  fg.get("vel_limit", g.vel_limit);
  fg.get("att_p", g.att_p);
  fg.get("rate_p", g.rate_p);
  fg.get("rate_i", g.rate_i);
  fg.get("rate_d", g.rate_d);
  fg.get("rate_i_limit", g.rate_i_limit);
  fg.finish();

  Section al(j, "allocation");
  al.get("arm_positions", w.allocation.arm_positions);
  al.get("yaw_torque_coeff", w.allocation.yaw_torque_coeff);
  al.get("max_thrust", w.allocation.max_thrust);
  al.get("tilt_limit", w.allocation.tilt_limit);
  al.get("damping", w.allocation.damping);
  al.finish();

  Section arm(j, "arm");
  ArmKinematics& k = w.arm;
  arm.get("joint_axes", k.joint_axes);
  arm.get("link_offsets", k.link_offsets);
  arm.get("link_masses", k.link_masses);
  arm.get("link_com_offsets", k.link_com_offsets);
  arm.get("tool_offset", k.tool_offset);
  arm.get("mount_position", k.mount.position);
  arm.get("mount_orientation", k.mount.orientation);
  arm.get("joint_lower", k.joint_lower);
  arm.get("joint_upper", k.joint_upper);
  arm.get("servo_natural_frequency", w.servo.natural_frequency);
  arm.get("servo_damping_ratio", w.servo.damping_ratio);
  arm.get("servo_rate_limit", w.servo.rate_limit);
  arm.finish();

  Section bat(j, "battery");
  BatteryCarriage& b = w.carriage;
  bat.get("x0", b.x0_batt);
  bat.get("gain_k", b.gain_k);
  bat.get("mass", b.mass_batt);
  bat.get("travel_limit", b.travel_limit);
  bat.get("time_constant", b.time_constant);
  bat.get("height", w.battery_height);
  bat.finish();

  Section inter(j, "interaction");
  InteractionConfig& ic = c.interaction;
  inter.get("approach_axis", ic.approach_axis);
  inter.get("pinv_damping", ic.pinv_damping);
  inter.get("lambda_filter_hz", ic.lambda_filter_hz);
  inter.get("impedance_mass", ic.gains.impedance_mass);
  inter.get("impedance_stiffness", ic.gains.impedance_stiffness);
  inter.get("impedance_damping", ic.gains.impedance_damping);
  inter.get("force_kp", ic.gains.force_kp);
  inter.get("force_kd", ic.gains.force_kd);
  inter.get("compliance", ic.gains.compliance);
  inter.finish();

  Section surf(j, "surface");
  surf.get("point", w.surface.point);
  surf.get("normal", w.surface.normal);
  surf.get("thickness", w.surface.thickness);
  surf.get("compliance", w.surface.compliance);
  surf.get("damping", w.surface.damping);
  surf.finish();

  Section sens(j, "sensor");
  sens.get("offset", w.sensor.offset);
  sens.get("noise_std", w.sensor.noise_std);
  sens.get("noise_enabled", w.sensor.noise_enabled);
  sens.get("rate_hz", w.sensor.rate_hz);
  sens.get("tare_window", w.sensor.tare_window);
  sens.finish();

  Section echo(j, "echometer");
  echo.get("noise_std", w.echometer.noise_std);
  echo.get("min_force", w.echometer.min_force);
  echo.finish();

  Section vac(j, "vacuum");
  vac.get("min_force", w.vacuum.min_force);
  vac.get("hold_time", w.vacuum.hold_time);
  vac.finish();

  Section mis(j, "mission");
  MissionParams& m = c.mission;
  mis.get("q_home", m.q_home);
  mis.get("approach_speed", m.approach_speed);
  mis.get("approach_max_travel", m.approach_max_travel);
  mis.get("contact_threshold", m.contact_threshold);
  mis.get("contact_dwell", m.contact_dwell);
  mis.get("contact_lost_threshold", m.contact_lost_threshold);
  mis.get("contact_lost_time", m.contact_lost_time);
  mis.get("desired_force", m.desired_force);
  mis.get("max_force", m.max_force);
  mis.get("ramp_rate", m.ramp_rate);
  mis.get("force_tolerance", m.force_tolerance);
  mis.get("force_filter_tau", m.force_filter_tau);
  mis.get("settle_time", m.settle_time);
  mis.get("min_measure_time", m.min_measure_time);
  mis.get("retract_speed", m.retract_speed);
  mis.get("max_linear_speed", m.max_linear_speed);
  mis.get("max_angular_speed", m.max_angular_speed);
  mis.get("land_speed", m.land_speed);
  mis.get("bias_null_max_force", m.bias_null_max_force);
  mis.finish();

  Section br(j, "bridge");
  br.get("port", c.bridge.port);
  br.get("rate_hz", c.bridge.rate_hz);
  br.get("queue_depth", c.bridge.queue_depth);
  br.get("command_timeout", c.bridge.command_timeout);
  br.finish();

  for (const char* known : {"sim", "vehicle", "flight_gains", "allocation", "arm", "battery", "interaction", "surface",
                            "sensor", "echometer", "vacuum", "mission", "bridge"}) {
    top.find(known);
  }
  top.finish();

  c.mission.approach_axis = c.interaction.approach_axis;
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  Json j;
  try {
    j = Json::parse(in, nullptr, true, true);
  } catch (const Json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace uam
