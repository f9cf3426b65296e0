#pragma once

#include "uam/arm_model.hpp"
#include "uam/flight_control.hpp"
#include "uam/spatial_math.hpp"

#include <cstdint>
#include <deque>
#include <optional>
#include <random>
#include <stdexcept>

namespace uam {

/// Raised when the integrated state stops being finite.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SurfaceParams {
  Vec3 point = Vec3(0.595, 0.0, 1.5);   // on the plane, W
  Vec3 normal = Vec3(-1.0, 0.0, 0.0);   // unit, pointing out of the material
  double thickness = 0.019;             // ground truth wall thickness [m]
  double compliance = 5e-3;             // [m/N] along the normal
  double damping = 10.0;                // [N s/m]
};

struct SensorParams {
  Vec6 offset = (Vec6() << 0.2, -0.15, 0.25, 0.01, -0.008, 0.004).finished();
  Vec6 noise_std = (Vec6() << 0.05, 0.05, 0.05, 0.005, 0.005, 0.005).finished();
  bool noise_enabled = true;
  double rate_hz = 500.0;
  double tare_window = 2.0;  // s of recent samples averaged by null_bias
};

struct EchometerParams {
  double noise_std = 1e-4;
  double min_force = 3.0;
};

struct VacuumParams {
  double min_force = 3.0;
  double hold_time = 0.5;
};

struct ServoParams {
  double natural_frequency = 20.0;  // rad/s
  double damping_ratio = 1.0;
  double rate_limit = 3.0;          // rad/s
};

struct WorldParams {
  double dt = 1e-3;
  VehicleParams vehicle;
  AllocationModel allocation = AllocationModel::symmetric_x();
  double thrust_time_constant = 0.03;
  ArmKinematics arm = ArmKinematics::default_arm();
  ServoParams servo;
  BatteryCarriage carriage = BatteryCarriage::compensating(1.5, 1.75, 0.24);
  double battery_height = -0.06;  // carriage rail height in F_base
  SurfaceParams surface;
  SensorParams sensor;
  EchometerParams echometer;
  VacuumParams vacuum;
  Vec3 initial_position = Vec3(0.0, 0.0, 1.5);
  std::uint64_t seed = 1;

  void validate() const;
};

struct ContactState {
  Vec3 plane_point = Vec3::Zero();
  Vec3 normal = Vec3::UnitX();
  double penetration = 0.0;
  bool in_contact = false;
  bool vacuum_established = false;
  bool gel_applied = false;
  double thickness = 0.0;
  double vacuum_dwell = 0.0;  // time spent at or above the vacuum force threshold
  bool warning = false;       // pump requested without contact
};

struct WorldState {
  FlightState base;
  JointState joints;
  Vec5 servo_targets = Vec5::Zero();
  double carriage_x = 0.0;
  ContactState contact;
  Vec6 sensor_bias = Vec6::Zero();  // tare stored by null_bias
  Vec6 sensor_raw = Vec6::Zero();   // last raw sample, held between samples
  Vec rotor_components = Vec::Zero(2 * kTiltArms);  // lagged per-arm (vertical, lateral) forces
  SpatialWrench contact_wrench_w = SpatialWrench::Zero();  // surface on probe, W
  SpatialWrench arm_reaction_b = SpatialWrench::Zero();   // internal-motion reaction on the base
  bool pump_active = false;
  double time = 0.0;
  std::uint64_t steps = 0;
};

/// Surface-on-probe wrench for a penetration-based spring-damper contact.
/// compliance is 6x6 in W; its normal-direction value n^T C n sets the spring.
/// Moments are zero (point contact through the flange).
SpatialWrench contact_wrench(const ContactState& contact, const Mat6& compliance, double damping,
                             const SpatialTwist& ee_twist);

/// Advance the gel/pump dwell by dt. Without contact this is a no-op that
/// raises the warning flag.
ContactState apply_gel_and_pump(const ContactState& contact, double f_normal, double dt,
                                const VacuumParams& params);

/// Thickness reading, or nothing unless the vacuum holds and the probe is pushed hard enough.
std::optional<double> echometer_read(const ContactState& contact, double f_normal, std::mt19937_64& rng,
                                     const EchometerParams& params);

/// Fixed-step world: floating base, position-servo arm, battery carriage,
/// compliant surface, F/T sensor and echometer.
class World {
 public:
  explicit World(WorldParams params, const Vec5& q_init, bool start_hovering = true);

  /// One fixed step. Throws DivergenceError on non-finite state.
  void step(const RotorCommand& cmd, const Vec5& q_ref, double carriage_ref);

  /// Wrench exerted by the probe on the environment in the sensor (tool)
  /// frame, plus sensor offset and noise, minus the stored tare. Held between samples.
  Vec6 ft_read() const { return state_.sensor_raw - state_.sensor_bias; }

  /// Store the current raw reading as the tare, averaged over the recent
  /// samples (tare_window) so the tare does not carry one sample's noise.
  /// With noise off and a steady load this is exactly the last raw reading.
  void null_bias();

  std::optional<double> echometer_read();

  void set_pump(bool active);

  /// Probe push along the surface normal (>= 0), ground truth.
  double normal_force() const;

  Pose ee_pose_world() const;
  /// Tool pose in F_base from the measured joints.
  Pose ee_pose_base() const;
  SpatialTwist ee_twist_world() const;
  Vec3 system_com_base() const;

  const WorldState& state() const { return state_; }
  WorldState& mutable_state() { return state_; }
  const WorldParams& params() const { return params_; }
  const Vec3& body_com() const { return body_com_; }

 private:
  void refresh_contact();
  void sample_sensor();
  Vec3 battery_position() const { return Vec3(state_.carriage_x, 0.0, params_.battery_height); }

  WorldParams params_;
  WorldState state_;
  Mat6 contact_compliance_ = Mat6::Zero();
  Vec3 body_com_ = Vec3::Zero();
  double body_mass_ = 0.0;
  Mat allocation_matrix_;
  std::mt19937_64 sensor_rng_;
  std::mt19937_64 echo_rng_;
  std::normal_distribution<double> unit_normal_{0.0, 1.0};
  std::uint64_t sample_every_ = 2;
  std::size_t tare_samples_ = 1000;
  std::deque<Vec6> recent_raw_;
  Vec3 prev_arm_com_ = Vec3::Zero();
  Vec3 prev_arm_com_vel_ = Vec3::Zero();
  double prev_batt_x_ = 0.0;
  double prev_batt_vel_ = 0.0;
};

}  // namespace uam
