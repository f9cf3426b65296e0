#pragma once

#include "uam/spatial_math.hpp"

#include <array>

namespace uam {

inline constexpr int kArmJoints = 5;

/// Serial chain description of the 5-DoF arm, all quantities in metres/kg.
///
/// Joint i rotates about joint_axes[i] (expressed in the frame left by the
/// previous link); link_offsets[i] then carries the chain to joint i+1, and
/// tool_offset from the last joint frame to the probe tip. The chain starts at
/// mount, the arm base pose in F_base.
struct ArmKinematics {
  std::array<Vec3, kArmJoints> joint_axes;
  std::array<Vec3, kArmJoints> link_offsets;
  std::array<double, kArmJoints> link_masses{};
  std::array<Vec3, kArmJoints> link_com_offsets;
  Vec3 tool_offset = Vec3::Zero();
  Pose mount;
  Vec5 joint_lower = Vec5::Constant(-M_PI);
  Vec5 joint_upper = Vec5::Constant(M_PI);

  /// Shoulder yaw, three pitches, wrist roll; reach 0.75 m, 1.5 kg.
  static ArmKinematics default_arm();

  double total_mass() const;
  bool within_limits(const Vec5& q) const;
  /// Throws std::invalid_argument when an invariant is broken.
  void validate() const;
};

struct JointState {
  Vec5 q = Vec5::Zero();
  Vec5 qdot = Vec5::Zero();
};

/// Joint origins, world-frame axes and the tool pose for one configuration.
struct ChainFrames {
  std::array<Vec3, kArmJoints> origins;
  std::array<Vec3, kArmJoints> axes;
  std::array<Vec3, kArmJoints> link_coms;
  Pose tool;
};

/// Throws std::domain_error when q is outside the joint limits.
ChainFrames chain_frames(const ArmKinematics& kin, const Vec5& q);

/// Pose of F_ee in F_base.
Pose forward_kinematics(const ArmKinematics& kin, const Vec5& q);

/// Geometric Jacobian (translational rows first) in F_base.
Mat65 jacobian(const ArmKinematics& kin, const Vec5& q);

/// d/dt J along (q, qdot).
Mat65 jacobian_dot(const ArmKinematics& kin, const Vec5& q, const Vec5& qdot);

/// Arm centre of mass in F_base.
Vec3 arm_com(const ArmKinematics& kin, const Vec5& q);

/// X coordinate of the arm centre of mass in F_base.
double arm_com_x(const ArmKinematics& kin, const Vec5& q);

struct BatteryCarriage {
  double x0_batt = 0.0;
  double gain_k = 0.0;
  double mass_batt = 1.75;
  double travel_limit = 0.15;  // symmetric, |x_batt| <= travel_limit
  double time_constant = 0.2;

  /// gain_k = -m_arm / m_batt zeroes the combined arm + battery CoM motion.
  static BatteryCarriage compensating(double arm_mass, double battery_mass = 1.75, double x0 = 0.0);

  void validate() const;
};

struct BatterySetpoint {
  double x = 0.0;
  bool saturated = false;
};

/// x0_batt + K x_g, clamped to the carriage travel.
BatterySetpoint battery_setpoint(const BatteryCarriage& carriage, double x_g);

}  // namespace uam
