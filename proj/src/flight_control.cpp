#include "uam/flight_control.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace uam {

void FlightGains::validate() const {
  const double all[] = {pos_p, vel_p, vel_i, vel_d, vel_i_limit, vel_limit, att_p, rate_p, rate_i, rate_d,
                        rate_i_limit};
  for (double g : all) {
    if (!std::isfinite(g) || g < 0.0) throw std::invalid_argument("flight gains must be finite and >= 0");
  }
  if (!(vel_limit > 0.0)) throw std::invalid_argument("flight gains: velocity limit must be positive");
}

void VehicleParams::validate() const {
  if (!(mass > 0.0)) throw std::invalid_argument("vehicle: mass must be positive");
  if (!(inertia.array() > 0.0).all()) throw std::invalid_argument("vehicle: inertia must be positive");
  if (!std::isfinite(gravity) || gravity < 0.0) throw std::invalid_argument("vehicle: invalid gravity");
}

FlightController::FlightController(VehicleParams vehicle, FlightGains gains)
    : vehicle_(std::move(vehicle)), gains_(std::move(gains)) {}

void FlightController::reset() {
  vel_int_.setZero();
  rate_int_.setZero();
  prev_vel_err_.setZero();
  prev_rate_err_.setZero();
  primed_ = false;
}

namespace {

Vec3 clamp_each(const Vec3& v, double limit) { return v.cwiseMax(-limit).cwiseMin(limit); }

}  // namespace

SpatialWrench FlightController::cascade_wrench(const FlightState& state, const Pose& pos_ref,
                                               const SpatialTwist& vel_ref, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("cascade_wrench: dt must be positive");
  const Mat3 r = state.pose.rotation();
  const Vec3 v = state.twist.head<3>();
  const Vec3 omega = state.twist.tail<3>();

  // position P
  Vec3 v_sp = vel_ref.head<3>() + gains_.pos_p * (pos_ref.position - state.pose.position);
  const double speed = v_sp.norm();
  if (speed > gains_.vel_limit) v_sp *= gains_.vel_limit / speed;

  // velocity PID
  const Vec3 v_err = v_sp - v;
  vel_int_ = clamp_each(vel_int_ + gains_.vel_i * v_err * dt, gains_.vel_i_limit);
  const Vec3 v_err_rate = primed_ ? Vec3((v_err - prev_vel_err_) / dt) : Vec3::Zero();
  const Vec3 accel = gains_.vel_p * v_err + vel_int_ + gains_.vel_d * v_err_rate;
  const Vec3 force_world = vehicle_.mass * (accel + Vec3(0.0, 0.0, vehicle_.gravity));

  // attitude P -> rate PID, body frame
  const Vec3 att_err = rotation_vector(r.transpose() * pos_ref.rotation());
  const Vec3 rate_sp = gains_.att_p * att_err;
  const Vec3 rate_err = rate_sp - omega;
  rate_int_ = clamp_each(rate_int_ + gains_.rate_i * rate_err * dt, gains_.rate_i_limit);
  const Vec3 rate_err_rate = primed_ ? Vec3((rate_err - prev_rate_err_) / dt) : Vec3::Zero();
  const Vec3 alpha = gains_.rate_p * rate_err + rate_int_ + gains_.rate_d * rate_err_rate;
  const Vec3 inertia_omega = vehicle_.inertia.cwiseProduct(omega);
  const Vec3 moment = vehicle_.inertia.cwiseProduct(alpha) + omega.cross(inertia_omega);

  prev_vel_err_ = v_err;
  prev_rate_err_ = rate_err;
  primed_ = true;

  SpatialWrench w;
  w.head<3>() = r.transpose() * force_world;
  w.tail<3>() = moment;
  return w;
}

AllocationModel AllocationModel::symmetric_x(double radius) {
  AllocationModel m;
  // same magnitude for both components keeps the layout exactly symmetric
  const double c = radius * std::sqrt(0.5);
  m.arm_positions = {Vec3(c, c, 0.0), Vec3(-c, c, 0.0), Vec3(-c, -c, 0.0), Vec3(c, -c, 0.0)};
  return m;
}

Vec3 AllocationModel::tangential(int arm) const {
  const Vec3& p = arm_positions[arm];
  return Vec3(-p.y(), p.x(), 0.0) / std::hypot(p.x(), p.y());
}

Vec3 AllocationModel::thrust_direction(int arm, double tilt) const {
  return std::cos(tilt) * Vec3::UnitZ() + std::sin(tilt) * tangential(arm);
}

Mat AllocationModel::matrix() const {
  Mat a(6, 2 * kTiltArms);
  for (int i = 0; i < kTiltArms; ++i) {
    const Vec3 up = Vec3::UnitZ();
    const Vec3 lat = tangential(i);
    a.block<3, 1>(0, 2 * i) = up;
    a.block<3, 1>(3, 2 * i) = arm_positions[i].cross(up);
    a.block<3, 1>(0, 2 * i + 1) = lat;
    a.block<3, 1>(3, 2 * i + 1) = arm_positions[i].cross(lat);
  }
  return a;
}

void AllocationModel::validate() const {
  for (const auto& p : arm_positions) {
    if (!p.allFinite() || std::hypot(p.x(), p.y()) < 1e-6) {
      throw std::invalid_argument("allocation: degenerate arm position");
    }
  }
  if (!(max_thrust > 0.0)) throw std::invalid_argument("allocation: max thrust must be positive");
  if (!(tilt_limit > 0.0) || tilt_limit > M_PI) throw std::invalid_argument("allocation: invalid tilt limit");
  if (!(damping >= 0.0)) throw std::invalid_argument("allocation: damping must be >= 0");
  Eigen::JacobiSVD<Mat> svd(matrix());
  if (svd.singularValues()(5) < 1e-6) throw std::invalid_argument("allocation: matrix not full row rank");
}

Vec RotorCommand::components() const {
  Vec u(2 * kTiltArms);
  for (int i = 0; i < kTiltArms; ++i) {
    const double total = thrusts[2 * i] + thrusts[2 * i + 1];
    u(2 * i) = total * std::cos(tilt_angles[i]);
    u(2 * i + 1) = total * std::sin(tilt_angles[i]);
  }
  return u;
}

AllocationResult allocate(const AllocationModel& model, const SpatialWrench& wrench) {
  if (!wrench.allFinite()) throw std::invalid_argument("allocate: non-finite wrench");
  AllocationResult out;
  Vec u = damped_pinv(model.matrix(), model.damping) * Vec(wrench);

  double peak = 0.0;
  for (int i = 0; i < kTiltArms; ++i) peak = std::max(peak, 0.5 * std::hypot(u(2 * i), u(2 * i + 1)));
  if (peak > model.max_thrust) {
    out.scale = model.max_thrust / peak;
    out.saturated = true;
    u *= out.scale;
  }

  for (int i = 0; i < kTiltArms; ++i) {
    const double vertical = u(2 * i);
    const double lateral = u(2 * i + 1);
    double tilt = std::atan2(lateral, vertical);
    double total = std::hypot(vertical, lateral);
    if (std::abs(tilt) > model.tilt_limit) {
      out.saturated = true;
      tilt = std::clamp(tilt, -model.tilt_limit, model.tilt_limit);
      total = std::max(0.0, vertical * std::cos(tilt) + lateral * std::sin(tilt));
    }
    out.command.tilt_angles[i] = tilt;
    out.command.thrusts[2 * i] = 0.5 * total;
    out.command.thrusts[2 * i + 1] = 0.5 * total;
  }
  return out;
}

SpatialWrench reconstruct_wrench(const AllocationModel& model, const RotorCommand& cmd) {
  SpatialWrench w = SpatialWrench::Zero();
  for (int i = 0; i < kTiltArms; ++i) {
    const Vec3 dir = model.thrust_direction(i, cmd.tilt_angles[i]);
    for (int k = 0; k < 2; ++k) {
      const double t = cmd.thrusts[2 * i + k];
      const double spin = k == 0 ? 1.0 : -1.0;
      const Vec3 f = t * dir;
      w.head<3>() += f;
      w.tail<3>() += model.arm_positions[i].cross(f) + spin * model.yaw_torque_coeff * f;
    }
  }
  return w;
}

}  // namespace uam
