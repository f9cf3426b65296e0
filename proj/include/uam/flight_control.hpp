#pragma once

#include "uam/spatial_math.hpp"

#include <array>

namespace uam {

inline constexpr int kTiltArms = 4;
inline constexpr int kRotors = 8;

struct FlightGains {
  double pos_p = 3.0;     // 1/s
  double vel_p = 12.0;    // 1/s
  double vel_i = 25.0;    // 1/s^2
  double vel_d = 0.8;     // dimensionless
  double vel_i_limit = 4.0;  // m/s^2
  double vel_limit = 1.0;    // m/s
  double att_p = 6.0;     // 1/s
  double rate_p = 8.0;
  double rate_i = 0.5;
  double rate_d = 0.05;
  double rate_i_limit = 2.0;  // rad/s^2

  void validate() const;
};

struct VehicleParams {
  double mass = 6.0;  // total, arm and batteries included
  Vec3 inertia = Vec3(0.30, 0.30, 0.50);
  double gravity = 9.81;

  void validate() const;
};

/// Pose and twist of F_base in W (twist: world-frame linear velocity, body-frame angular velocity).
struct FlightState {
  Pose pose;
  SpatialTwist twist = SpatialTwist::Zero();
};

/// P position -> PID velocity -> P attitude -> PID rate cascade. The attitude
/// reference is held level, so lateral forces are produced by tilting rotors.
class FlightController {
 public:
  FlightController(VehicleParams vehicle, FlightGains gains);

  /// Desired wrench in F_base.
  SpatialWrench cascade_wrench(const FlightState& state, const Pose& pos_ref, const SpatialTwist& vel_ref,
                               double dt);

  void reset();
  const Vec3& velocity_integrator() const { return vel_int_; }
  const Vec3& rate_integrator() const { return rate_int_; }
  const FlightGains& gains() const { return gains_; }

 private:
  VehicleParams vehicle_;
  FlightGains gains_;
  Vec3 vel_int_ = Vec3::Zero();
  Vec3 rate_int_ = Vec3::Zero();
  Vec3 prev_vel_err_ = Vec3::Zero();
  Vec3 prev_rate_err_ = Vec3::Zero();
  bool primed_ = false;
};

/// Four tilt arms, each carrying a coaxial pair that shares one tilt servo.
/// Tilting arm i rotates its thrust about the radial arm axis, so the thrust
/// lies in the plane of z and the arm's tangential direction.
struct AllocationModel {
  std::array<Vec3, kTiltArms> arm_positions;
  double yaw_torque_coeff = 0.016;  // N m per N of thrust
  double max_thrust = 25.0;         // per rotor
  double tilt_limit = M_PI / 2.0;
  double damping = 1e-6;

  static AllocationModel symmetric_x(double radius = 0.35);

  Vec3 tangential(int arm) const;
  /// Unit thrust direction of an arm at the given tilt.
  Vec3 thrust_direction(int arm, double tilt) const;
  /// 6x8 map from per-arm (vertical, lateral) force components to the body wrench.
  Mat matrix() const;
  void validate() const;
};

struct RotorCommand {
  std::array<double, kRotors> thrusts{};          // rotor 2i upper, 2i+1 lower on arm i
  std::array<double, kTiltArms> tilt_angles{};

  /// Per-arm (vertical, lateral) components, 8 entries.
  Vec components() const;
};

struct AllocationResult {
  RotorCommand command;
  bool saturated = false;
  double scale = 1.0;  // wrench scaling applied to fit the thrust envelope
};

AllocationResult allocate(const AllocationModel& model, const SpatialWrench& wrench);

/// Forward map: sums every rotor's force and moment about the F_base origin.
SpatialWrench reconstruct_wrench(const AllocationModel& model, const RotorCommand& cmd);

}  // namespace uam
