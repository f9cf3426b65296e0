#include <doctest.h>

#include "uam/arm_model.hpp"

#include <random>

using namespace uam;

namespace {

// Independent oracle: explicit elementary rotations and 4x4 homogeneous transforms.
Eigen::Matrix4d elementary(const Vec3& axis, double a) {
  const double c = std::cos(a);
  const double s = std::sin(a);
  Eigen::Matrix4d t = Eigen::Matrix4d::Identity();
  if (axis == Vec3::UnitX()) {
    t.block<3, 3>(0, 0) << 1, 0, 0, 0, c, -s, 0, s, c;
  } else if (axis == Vec3::UnitY()) {
    t.block<3, 3>(0, 0) << c, 0, s, 0, 1, 0, -s, 0, c;
  } else if (axis == Vec3::UnitZ()) {
    t.block<3, 3>(0, 0) << c, -s, 0, s, c, 0, 0, 0, 1;
  } else {
    throw std::logic_error("oracle handles principal axes only");
  }
  return t;
}

Eigen::Matrix4d translation(const Vec3& p) {
  Eigen::Matrix4d t = Eigen::Matrix4d::Identity();
  t.block<3, 1>(0, 3) = p;
  return t;
}

Eigen::Matrix4d oracle_tool(const ArmKinematics& kin, const Vec5& q) {
  Eigen::Matrix4d t = translation(kin.mount.position);
  t.block<3, 3>(0, 0) = kin.mount.rotation();
  for (int i = 0; i < kArmJoints; ++i) t = t * elementary(kin.joint_axes[i], q(i)) * translation(kin.link_offsets[i]);
  return t * translation(kin.tool_offset);
}

Vec3 oracle_com(const ArmKinematics& kin, const Vec5& q) {
  Eigen::Matrix4d t = translation(kin.mount.position);
  t.block<3, 3>(0, 0) = kin.mount.rotation();
  Vec3 sum = Vec3::Zero();
  double m = 0.0;
  for (int i = 0; i < kArmJoints; ++i) {
    t = t * elementary(kin.joint_axes[i], q(i));
    const Eigen::Vector4d c = t * kin.link_com_offsets[i].homogeneous();
    sum += kin.link_masses[i] * c.head<3>();
    m += kin.link_masses[i];
    t = t * translation(kin.link_offsets[i]);
  }
  return sum / m;
}

Vec5 random_q(std::mt19937_64& rng, const ArmKinematics& kin, double margin = 0.0) {
  Vec5 q;
  for (int i = 0; i < kArmJoints; ++i) {
    std::uniform_real_distribution<double> u(kin.joint_lower(i) + margin, kin.joint_upper(i) - margin);
    q(i) = u(rng);
  }
  return q;
}

}  // namespace

TEST_CASE("forward kinematics matches the homogeneous transform chain") {
  const ArmKinematics kin = ArmKinematics::default_arm();
  std::mt19937_64 rng(21);
  for (int k = 0; k < 500; ++k) {
    const Vec5 q = random_q(rng, kin);
    const Eigen::Matrix4d t = oracle_tool(kin, q);
    const Pose p = forward_kinematics(kin, q);
    CHECK((p.position - t.block<3, 1>(0, 3)).norm() < 1e-12);
    CHECK((p.rotation() - t.block<3, 3>(0, 0)).norm() < 1e-12);
  }
}

TEST_CASE("zero configuration stretches the arm along x") {
  const ArmKinematics kin = ArmKinematics::default_arm();
  const Pose p = forward_kinematics(kin, Vec5::Zero());
  // mount 0.05 + links 0.10 + 0.25 + 0.25 + 0.10 + tool 0.05
  CHECK(p.position.x() == doctest::Approx(0.80).epsilon(1e-15));
  CHECK(p.position.z() == doctest::Approx(-0.12).epsilon(1e-15));
  CHECK((p.rotation() - Mat3::Identity()).norm() < 1e-15);
}

TEST_CASE("geometric jacobian matches central differences") {
  const ArmKinematics kin = ArmKinematics::default_arm();
  std::mt19937_64 rng(22);
  const double h = 1e-6;
  for (int k = 0; k < 1000; ++k) {
    const Vec5 q = random_q(rng, kin, 1e-3);
    const Mat65 j = jacobian(kin, q);
    Mat65 fd;
    for (int i = 0; i < kArmJoints; ++i) {
      Vec5 qp = q;
      Vec5 qm = q;
      qp(i) += h;
      qm(i) -= h;
      const Pose a = forward_kinematics(kin, qp);
      const Pose b = forward_kinematics(kin, qm);
      fd.block<3, 1>(0, i) = (a.position - b.position) / (2 * h);
      fd.block<3, 1>(3, i) = rotation_vector(a.rotation() * b.rotation().transpose()) / (2 * h);
    }
    CHECK((j - fd).norm() / std::max(1.0, fd.norm()) < 1e-6);
  }
}

TEST_CASE("jacobian_dot matches the time derivative of the jacobian") {
  const ArmKinematics kin = ArmKinematics::default_arm();
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> rate(-2.0, 2.0);
  const double h = 1e-6;
  for (int k = 0; k < 300; ++k) {
    const Vec5 q = random_q(rng, kin, 0.01);
    Vec5 qd;
    for (int i = 0; i < kArmJoints; ++i) qd(i) = rate(rng);
    const Mat65 fd = (jacobian(kin, q + h * qd) - jacobian(kin, q - h * qd)) / (2 * h);
    CHECK((jacobian_dot(kin, q, qd) - fd).norm() / std::max(1.0, fd.norm()) < 1e-5);
  }
  CHECK(jacobian_dot(kin, Vec5::Zero(), Vec5::Zero()).norm() == 0.0);
  Vec5 bad = Vec5::Zero();
  bad(2) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(jacobian_dot(kin, Vec5::Zero(), bad), std::invalid_argument);
}

TEST_CASE("arm centre of mass matches the mass-weighted oracle") {
  const ArmKinematics kin = ArmKinematics::default_arm();
  CHECK(kin.total_mass() == doctest::Approx(1.5));
  std::mt19937_64 rng(24);
  for (int k = 0; k < 200; ++k) {
    const Vec5 q = random_q(rng, kin);
    CHECK((arm_com(kin, q) - oracle_com(kin, q)).norm() < 1e-12);
    CHECK(arm_com_x(kin, q) == arm_com(kin, q).x());
  }
}

TEST_CASE("configurations outside the joint limits are rejected") {
  const ArmKinematics kin = ArmKinematics::default_arm();
  Vec5 q = Vec5::Zero();
  q(1) = kin.joint_upper(1) + 1e-6;
  CHECK_FALSE(kin.within_limits(q));
  CHECK_THROWS_AS(forward_kinematics(kin, q), std::domain_error);
  CHECK_THROWS_AS(jacobian(kin, q), std::domain_error);
  q(1) = kin.joint_upper(1);
  CHECK(kin.within_limits(q));
  q(0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(kin.within_limits(q));
}

TEST_CASE("arm description validation") {
  ArmKinematics kin = ArmKinematics::default_arm();
  CHECK_NOTHROW(kin.validate());
  kin.joint_axes[2] = Vec3(0, 2, 0);
  CHECK_THROWS_AS(kin.validate(), std::invalid_argument);
  kin = ArmKinematics::default_arm();
  kin.link_masses[0] = -0.1;
  CHECK_THROWS_AS(kin.validate(), std::invalid_argument);
  kin = ArmKinematics::default_arm();
  kin.joint_lower(3) = kin.joint_upper(3);
  CHECK_THROWS_AS(kin.validate(), std::invalid_argument);
}

TEST_CASE("battery setpoint law") {
  const BatteryCarriage c = BatteryCarriage::compensating(1.5, 1.75, 0.02);
  CHECK(c.gain_k == doctest::Approx(-1.5 / 1.75));

  // x0 + K x_g
  const BatterySetpoint s = battery_setpoint(c, 0.1);
  CHECK(s.x == doctest::Approx(0.02 - 0.1 * 1.5 / 1.75).epsilon(1e-15));
  CHECK_FALSE(s.saturated);

  // combined arm + battery moment stays m_batt x0
  for (double xg : {-0.05, 0.0, 0.07, 0.12}) {
    const double xb = battery_setpoint(c, xg).x;
    CHECK(std::abs(1.5 * xg + 1.75 * xb - 1.75 * 0.02) < 1e-12);
  }

  const BatterySetpoint hi = battery_setpoint(c, -0.5);
  CHECK(hi.saturated);
  CHECK(hi.x == c.travel_limit);
  const BatterySetpoint lo = battery_setpoint(c, 0.5);
  CHECK(lo.saturated);
  CHECK(lo.x == -c.travel_limit);
}

TEST_CASE("battery carriage validation") {
  BatteryCarriage c;
  CHECK_NOTHROW(c.validate());
  c.mass_batt = 0.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = BatteryCarriage{};
  c.travel_limit = -0.1;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = BatteryCarriage{};
  c.time_constant = 0.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}
