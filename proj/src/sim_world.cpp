#include "uam/sim_world.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace uam {

void WorldParams::validate() const {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("world: dt must be positive");
  vehicle.validate();
  allocation.validate();
  arm.validate();
  carriage.validate();
  if (!(thrust_time_constant > 0.0)) throw std::invalid_argument("world: thrust time constant must be positive");
  if (!(servo.natural_frequency > 0.0) || !(servo.damping_ratio > 0.0) || !(servo.rate_limit > 0.0)) {
    throw std::invalid_argument("world: servo parameters must be positive");
  }
  if (!(surface.compliance > 0.0)) {
    throw std::invalid_argument("world: contact compliance along the approach axis must be positive");
  }
  if (!(surface.damping >= 0.0)) throw std::invalid_argument("world: contact damping must be >= 0");
  if (!surface.point.allFinite() || std::abs(surface.normal.norm() - 1.0) > 1e-9) {
    throw std::invalid_argument("world: surface normal must be unit-norm");
  }
  if (!(surface.thickness > 0.0)) throw std::invalid_argument("world: thickness must be positive");
  if (!sensor.offset.allFinite() || !(sensor.noise_std.array() >= 0.0).all()) {
    throw std::invalid_argument("world: sensor noise std must be >= 0");
  }
  if (!(sensor.rate_hz > 0.0)) throw std::invalid_argument("world: sensor rate must be positive");
  if (!(sensor.tare_window >= 0.0)) throw std::invalid_argument("world: tare window must be >= 0");
  const double ratio = 1.0 / (sensor.rate_hz * dt);
  if (ratio < 1.0 - 1e-9 || std::abs(ratio - std::round(ratio)) > 1e-6) {
    throw std::invalid_argument("world: sensor period must be a whole number of steps");
  }
  if (!(echometer.noise_std >= 0.0) || !(echometer.min_force >= 0.0)) {
    throw std::invalid_argument("world: invalid echometer parameters");
  }
  if (!(vacuum.min_force >= 0.0) || !(vacuum.hold_time >= 0.0)) {
    throw std::invalid_argument("world: invalid vacuum parameters");
  }
  const double body = vehicle.mass - arm.total_mass() - carriage.mass_batt;
  if (!(body > 0.0)) throw std::invalid_argument("world: vehicle mass must exceed arm plus battery mass");
  if (!initial_position.allFinite()) throw std::invalid_argument("world: non-finite initial position");
}

SpatialWrench contact_wrench(const ContactState& contact, const Mat6& compliance, double damping,
                             const SpatialTwist& ee_twist) {
  SpatialWrench w = SpatialWrench::Zero();
  if (!contact.in_contact || contact.penetration <= 0.0) return w;
  const Vec3& n = contact.normal;
  const double c = n.dot(compliance.topLeftCorner<3, 3>() * n);
  if (!(c > 0.0)) throw std::invalid_argument("contact: zero compliance along the surface normal");
  const double approach_speed = -ee_twist.head<3>().dot(n);
  const double magnitude = std::max(0.0, contact.penetration / c + damping * approach_speed);
  w.head<3>() = magnitude * n;
  return w;
}

ContactState apply_gel_and_pump(const ContactState& contact, double f_normal, double dt,
                                const VacuumParams& params) {
  ContactState out = contact;
  if (!contact.in_contact) {
    out.warning = true;
    out.vacuum_established = false;
    out.vacuum_dwell = 0.0;
    return out;
  }
  out.warning = false;
  out.gel_applied = true;
  if (out.vacuum_established) return out;
  out.vacuum_dwell = f_normal >= params.min_force ? out.vacuum_dwell + dt : 0.0;
  // small slack so an accumulated sum of dt reaches a hold time that is a whole number of steps
  if (out.vacuum_dwell >= params.hold_time - 1e-9 && f_normal >= params.min_force) out.vacuum_established = true;
  return out;
}

std::optional<double> echometer_read(const ContactState& contact, double f_normal, std::mt19937_64& rng,
                                     const EchometerParams& params) {
  if (!contact.vacuum_established || f_normal < params.min_force) return std::nullopt;
  std::normal_distribution<double> noise(0.0, 1.0);
  return contact.thickness + params.noise_std * noise(rng);
}

World::World(WorldParams params, const Vec5& q_init, bool start_hovering)
    : params_(std::move(params)),
      sensor_rng_(params_.seed),
      echo_rng_(params_.seed ^ 0x9e3779b97f4a7c15ULL) {
  params_.validate();
  if (!params_.arm.within_limits(q_init)) throw std::domain_error("world: initial joints outside limits");

  contact_compliance_.setZero();
  const Vec3& n = params_.surface.normal;
  contact_compliance_.topLeftCorner<3, 3>() = params_.surface.compliance * n * n.transpose();
  allocation_matrix_ = params_.allocation.matrix();
  sample_every_ = static_cast<std::uint64_t>(std::llround(1.0 / (params_.sensor.rate_hz * params_.dt)));
  tare_samples_ = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(params_.sensor.tare_window * params_.sensor.rate_hz)));

  state_.base.pose.position = params_.initial_position;
  state_.joints.q = q_init;
  state_.servo_targets = q_init;
  state_.carriage_x = battery_setpoint(params_.carriage, arm_com_x(params_.arm, q_init)).x;
  state_.contact.plane_point = params_.surface.point;
  state_.contact.normal = params_.surface.normal;
  state_.contact.thickness = params_.surface.thickness;
  state_.rotor_components = Vec::Zero(2 * kTiltArms);
  if (start_hovering) {
    SpatialWrench hover = SpatialWrench::Zero();
    hover(2) = params_.vehicle.mass * params_.vehicle.gravity;
    state_.rotor_components = allocate(params_.allocation, hover).command.components();
  }

  // Body CoM placed so the whole vehicle balances on the F_base origin in the initial configuration.
  const double m_arm = params_.arm.total_mass();
  const double m_batt = params_.carriage.mass_batt;
  body_mass_ = params_.vehicle.mass - m_arm - m_batt;
  body_com_ = -(m_arm * arm_com(params_.arm, q_init) + m_batt * battery_position()) / body_mass_;

  prev_arm_com_ = arm_com(params_.arm, q_init);
  prev_batt_x_ = state_.carriage_x;

  refresh_contact();
  sample_sensor();
}

Pose World::ee_pose_base() const { return forward_kinematics(params_.arm, state_.joints.q); }

Pose World::ee_pose_world() const { return state_.base.pose * ee_pose_base(); }

SpatialTwist World::ee_twist_world() const {
  const Mat3 r = state_.base.pose.rotation();
  const Pose ee = ee_pose_base();
  const Vec6 rel = jacobian(params_.arm, state_.joints.q) * state_.joints.qdot;
  const Vec3 omega_b = state_.base.twist.tail<3>();
  SpatialTwist t;
  t.head<3>() = state_.base.twist.head<3>() + r * (omega_b.cross(ee.position) + rel.head<3>());
  t.tail<3>() = r * (omega_b + rel.tail<3>());
  return t;
}

Vec3 World::system_com_base() const {
  const double m_arm = params_.arm.total_mass();
  const double m_batt = params_.carriage.mass_batt;
  return (body_mass_ * body_com_ + m_arm * arm_com(params_.arm, state_.joints.q) + m_batt * battery_position()) /
         params_.vehicle.mass;
}

double World::normal_force() const { return std::max(0.0, state_.contact_wrench_w.head<3>().dot(state_.contact.normal)); }

void World::set_pump(bool active) {
  state_.pump_active = active;
  if (!active) {
    state_.contact.vacuum_established = false;
    state_.contact.vacuum_dwell = 0.0;
    state_.contact.gel_applied = false;
    state_.contact.warning = false;
  }
}

std::optional<double> World::echometer_read() {
  return uam::echometer_read(state_.contact, normal_force(), echo_rng_, params_.echometer);
}

void World::refresh_contact() {
  const Pose ee = ee_pose_world();
  ContactState& c = state_.contact;
  c.penetration = std::max(0.0, -(ee.position - c.plane_point).dot(c.normal));
  c.in_contact = c.penetration > 0.0;
  if (!c.in_contact) {
    c.penetration = 0.0;
    c.vacuum_established = false;
    c.vacuum_dwell = 0.0;
  }
  state_.contact_wrench_w = contact_wrench(c, contact_compliance_, params_.surface.damping, ee_twist_world());
}

void World::sample_sensor() {
  // probe on environment, in the tool frame; the contact point is the sensing point so moments vanish
  const Mat3 r_tool = ee_pose_world().rotation();
  Vec6 raw = Vec6::Zero();
  raw.head<3>() = r_tool.transpose() * (-state_.contact_wrench_w.head<3>());
  raw.tail<3>() = r_tool.transpose() * (-state_.contact_wrench_w.tail<3>());
  raw += params_.sensor.offset;
  if (params_.sensor.noise_enabled) {
    for (int i = 0; i < 6; ++i) raw(i) += params_.sensor.noise_std(i) * unit_normal_(sensor_rng_);
  }
  state_.sensor_raw = raw;
  recent_raw_.push_back(raw);
  if (recent_raw_.size() > tare_samples_) recent_raw_.pop_front();
}

void World::null_bias() {
  // incremental mean: a constant sequence reproduces its value bit for bit
  Vec6 mean = Vec6::Zero();
  double k = 0.0;
  for (const Vec6& s : recent_raw_) {
    k += 1.0;
    mean += (s - mean) / k;
  }
  state_.sensor_bias = recent_raw_.empty() ? state_.sensor_raw : mean;
}

void World::step(const RotorCommand& cmd, const Vec5& q_ref, double carriage_ref) {
  const double dt = params_.dt;
  const VehicleParams& veh = params_.vehicle;

  // first-order thrust lag on the per-arm force components
  const Vec target = cmd.components();
  const double a = dt / params_.thrust_time_constant;
  state_.rotor_components += std::min(1.0, a) * (target - state_.rotor_components);

  // joint servos: second order, rate limited, clamped to the joint range
  state_.servo_targets = q_ref;
  const ServoParams& sv = params_.servo;
  const double wn = sv.natural_frequency;
  for (int i = 0; i < kArmJoints; ++i) {
    double& q = state_.joints.q(i);
    double& qd = state_.joints.qdot(i);
    const double qdd = wn * wn * (q_ref(i) - q) - 2.0 * sv.damping_ratio * wn * qd;
    qd = std::clamp(qd + qdd * dt, -sv.rate_limit, sv.rate_limit);
    q += qd * dt;
    if (q < params_.arm.joint_lower(i)) {
      q = params_.arm.joint_lower(i);
      qd = 0.0;
    } else if (q > params_.arm.joint_upper(i)) {
      q = params_.arm.joint_upper(i);
      qd = 0.0;
    }
  }

  // battery carriage, first-order lag inside its travel
  const BatteryCarriage& bc = params_.carriage;
  const double ref = std::clamp(carriage_ref, -bc.travel_limit, bc.travel_limit);
  state_.carriage_x += std::min(1.0, dt / bc.time_constant) * (ref - state_.carriage_x);
  state_.carriage_x = std::clamp(state_.carriage_x, -bc.travel_limit, bc.travel_limit);

  // quasi-static reaction of internal mass motion, by finite differences
  const double m_arm = params_.arm.total_mass();
  const double m_batt = bc.mass_batt;
  const Vec3 com_arm = arm_com(params_.arm, state_.joints.q);
  const Vec3 vel_arm = (com_arm - prev_arm_com_) / dt;
  const Vec3 acc_arm = (vel_arm - prev_arm_com_vel_) / dt;
  const double vel_batt = (state_.carriage_x - prev_batt_x_) / dt;
  const Vec3 acc_batt((vel_batt - prev_batt_vel_) / dt, 0.0, 0.0);
  prev_arm_com_ = com_arm;
  prev_arm_com_vel_ = vel_arm;
  prev_batt_x_ = state_.carriage_x;
  prev_batt_vel_ = vel_batt;
  state_.arm_reaction_b.head<3>() = -(m_arm * acc_arm + m_batt * acc_batt);
  state_.arm_reaction_b.tail<3>() =
      -(com_arm.cross(m_arm * acc_arm) + battery_position().cross(m_batt * acc_batt));

  // base rigid body, moments about the F_base origin
  const Mat3 r = state_.base.pose.rotation();
  const SpatialWrench rotor = allocation_matrix_ * state_.rotor_components;
  const Vec3 gravity_w(0.0, 0.0, -veh.mass * veh.gravity);
  const Vec3 contact_b = r.transpose() * state_.contact_wrench_w.head<3>();
  const Vec3 ee_b = ee_pose_base().position;

  const Vec3 force_w = r * (rotor.head<3>() + state_.arm_reaction_b.head<3>()) + gravity_w +
                       state_.contact_wrench_w.head<3>();
  const Vec3 omega = state_.base.twist.tail<3>();
  const Vec3 inertia_omega = veh.inertia.cwiseProduct(omega);
  const Vec3 moment_b = rotor.tail<3>() + state_.arm_reaction_b.tail<3>() +
                        system_com_base().cross(r.transpose() * gravity_w) + ee_b.cross(contact_b) +
                        r.transpose() * state_.contact_wrench_w.tail<3>() - omega.cross(inertia_omega);

  Vec3 v = state_.base.twist.head<3>() + force_w / veh.mass * dt;
  Vec3 w = omega + moment_b.cwiseQuotient(veh.inertia) * dt;
  state_.base.twist.head<3>() = v;
  state_.base.twist.tail<3>() = w;
  state_.base.pose.position += v * dt;
  state_.base.pose.orientation = (state_.base.pose.orientation * quat_from_rotation_vector(w * dt)).normalized();

  ++state_.steps;
  state_.time = static_cast<double>(state_.steps) * dt;

  refresh_contact();
  if (state_.pump_active) {
    state_.contact = apply_gel_and_pump(state_.contact, normal_force(), dt, params_.vacuum);
  }
  if (state_.steps % sample_every_ == 0) sample_sensor();

  if (!state_.base.pose.position.allFinite() || !state_.base.twist.allFinite() ||
      !state_.base.pose.orientation.coeffs().allFinite() || !state_.joints.q.allFinite() ||
      !state_.joints.qdot.allFinite() || !std::isfinite(state_.carriage_x) ||
      !state_.contact_wrench_w.allFinite()) {
    throw DivergenceError("simulation diverged at t = " + std::to_string(state_.time) + " s");
  }
}

}  // namespace uam
