#include "uam/arm_model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace uam {

ArmKinematics ArmKinematics::default_arm() {
  ArmKinematics kin;
  kin.joint_axes = {Vec3::UnitZ(), Vec3::UnitY(), Vec3::UnitY(), Vec3::UnitY(), Vec3::UnitX()};
  kin.link_offsets = {Vec3(0.10, 0, 0), Vec3(0.25, 0, 0), Vec3(0.25, 0, 0), Vec3(0.10, 0, 0), Vec3::Zero()};
  kin.tool_offset = Vec3(0.05, 0, 0);
  kin.link_masses = {0.4, 0.4, 0.3, 0.25, 0.15};
  // mid-link; the last link spans the wrist roll joint to the probe tip
  kin.link_com_offsets = {Vec3(0.05, 0, 0), Vec3(0.125, 0, 0), Vec3(0.125, 0, 0), Vec3(0.05, 0, 0),
                          Vec3(0.025, 0, 0)};
  kin.mount.position = Vec3(0.05, 0.0, -0.12);
  kin.joint_lower << -2.8, -2.2, -2.6, -2.2, -2.8;
  kin.joint_upper << 2.8, 2.2, 2.6, 2.2, 2.8;
  return kin;
}

double ArmKinematics::total_mass() const {
  double m = 0.0;
  for (double mi : link_masses) m += mi;
  return m;
}

bool ArmKinematics::within_limits(const Vec5& q) const {
  if (!q.allFinite()) return false;
  return (q.array() >= joint_lower.array()).all() && (q.array() <= joint_upper.array()).all();
}

void ArmKinematics::validate() const {
  for (int i = 0; i < kArmJoints; ++i) {
    if (!joint_axes[i].allFinite() || std::abs(joint_axes[i].norm() - 1.0) > 1e-9) {
      throw std::invalid_argument("arm: joint axis " + std::to_string(i) + " is not unit-norm");
    }
    if (!link_offsets[i].allFinite() || !link_com_offsets[i].allFinite()) {
      throw std::invalid_argument("arm: non-finite link offset");
    }
    if (!(link_masses[i] >= 0.0)) throw std::invalid_argument("arm: negative link mass");
    if (!(joint_lower(i) < joint_upper(i))) throw std::invalid_argument("arm: empty joint range");
  }
  if (!(total_mass() > 0.0)) throw std::invalid_argument("arm: total mass must be positive");
  if (!tool_offset.allFinite() || !mount.position.allFinite()) {
    throw std::invalid_argument("arm: non-finite tool or mount offset");
  }
  if (std::abs(mount.orientation.norm() - 1.0) > 1e-9) {
    throw std::invalid_argument("arm: mount quaternion is not unit-norm");
  }
}

ChainFrames chain_frames(const ArmKinematics& kin, const Vec5& q) {
  if (!kin.within_limits(q)) throw std::domain_error("arm: joint configuration outside limits");
  ChainFrames out;
  Vec3 p = kin.mount.position;
  Mat3 r = kin.mount.rotation();
  for (int i = 0; i < kArmJoints; ++i) {
    out.origins[i] = p;
    out.axes[i] = r * kin.joint_axes[i];
    r = r * Eigen::AngleAxisd(q(i), kin.joint_axes[i]).toRotationMatrix();
    out.link_coms[i] = p + r * kin.link_com_offsets[i];
    p = p + r * kin.link_offsets[i];
  }
  out.tool.position = p + r * kin.tool_offset;
  out.tool.orientation = Quat(r).normalized();
  return out;
}

Pose forward_kinematics(const ArmKinematics& kin, const Vec5& q) { return chain_frames(kin, q).tool; }

Mat65 jacobian(const ArmKinematics& kin, const Vec5& q) {
  const ChainFrames f = chain_frames(kin, q);
  Mat65 jac;
  for (int i = 0; i < kArmJoints; ++i) {
    jac.block<3, 1>(0, i) = f.axes[i].cross(f.tool.position - f.origins[i]);
    jac.block<3, 1>(3, i) = f.axes[i];
  }
  return jac;
}

Mat65 jacobian_dot(const ArmKinematics& kin, const Vec5& q, const Vec5& qdot) {
  if (!qdot.allFinite()) throw std::invalid_argument("jacobian_dot: non-finite joint rates");
  const ChainFrames f = chain_frames(kin, q);
  const Vec3& pe = f.tool.position;

  // Tool point velocity and, per joint, the origin velocity and axis rate.
  Vec3 pe_dot = Vec3::Zero();
  for (int j = 0; j < kArmJoints; ++j) pe_dot += f.axes[j].cross(pe - f.origins[j]) * qdot(j);

  Mat65 jd;
  Vec3 omega = Vec3::Zero();  // angular velocity of the frame carrying axis i
  for (int i = 0; i < kArmJoints; ++i) {
    Vec3 pi_dot = Vec3::Zero();
    for (int j = 0; j < i; ++j) pi_dot += f.axes[j].cross(f.origins[i] - f.origins[j]) * qdot(j);
    const Vec3 axis_dot = omega.cross(f.axes[i]);
    jd.block<3, 1>(0, i) = axis_dot.cross(pe - f.origins[i]) + f.axes[i].cross(pe_dot - pi_dot);
    jd.block<3, 1>(3, i) = axis_dot;
    omega += f.axes[i] * qdot(i);
  }
  return jd;
}

Vec3 arm_com(const ArmKinematics& kin, const Vec5& q) {
  const ChainFrames f = chain_frames(kin, q);
  Vec3 acc = Vec3::Zero();
  for (int i = 0; i < kArmJoints; ++i) acc += kin.link_masses[i] * f.link_coms[i];
  return acc / kin.total_mass();
}

double arm_com_x(const ArmKinematics& kin, const Vec5& q) { return arm_com(kin, q).x(); }

BatteryCarriage BatteryCarriage::compensating(double arm_mass, double battery_mass, double x0) {
  BatteryCarriage c;
  c.mass_batt = battery_mass;
  c.gain_k = -arm_mass / battery_mass;
  c.x0_batt = x0;
  return c;
}

void BatteryCarriage::validate() const {
  if (!(mass_batt > 0.0)) throw std::invalid_argument("battery: mass must be positive");
  if (!(travel_limit > 0.0)) throw std::invalid_argument("battery: travel limit must be positive");
  if (!std::isfinite(gain_k) || !std::isfinite(x0_batt)) throw std::invalid_argument("battery: non-finite gain");
  if (!(time_constant > 0.0)) throw std::invalid_argument("battery: time constant must be positive");
}

BatterySetpoint battery_setpoint(const BatteryCarriage& carriage, double x_g) {
  const double raw = carriage.x0_batt + carriage.gain_k * x_g;
  BatterySetpoint out;
  out.x = std::clamp(raw, -carriage.travel_limit, carriage.travel_limit);
  out.saturated = out.x != raw;
  return out;
}

}  // namespace uam
