#pragma once

#include <Eigen/Dense>

#include <functional>
#include <stdexcept>

namespace uam {

using Vec3 = Eigen::Vector3d;
using Vec5 = Eigen::Matrix<double, 5, 1>;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat65 = Eigen::Matrix<double, 6, 5>;
using Quat = Eigen::Quaterniond;

// Dense matrix with stack storage; every matrix in this system fits in 8x8
// (the 6x8 allocation matrix and its 8x6 inverse are the largest).
inline constexpr int kMaxDim = 8;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxDim, kMaxDim>;
using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;

/// 6-D force/moment, translational part first.
using SpatialWrench = Vec6;
/// 6-D linear/angular velocity, translational part first.
using SpatialTwist = Vec6;

/// Rigid transform. The orientation is kept as a unit quaternion.
struct Pose {
  Vec3 position = Vec3::Zero();
  Quat orientation = Quat::Identity();

  static Pose identity() { return {}; }

  Mat3 rotation() const { return orientation.toRotationMatrix(); }

  /// this * other: other expressed in this pose's parent frame.
  Pose operator*(const Pose& other) const;
  Pose inverse() const;
  Vec3 transform_point(const Vec3& p) const { return position + orientation * p; }
};

/// Damped least-squares inverse. Wide/square inputs use M^T (M M^T + d^2 I)^-1,
/// tall inputs the transpose-dual form. damping == 0 returns the Moore-Penrose
/// inverse computed from an SVD, so rank-deficient inputs are fine.
/// Throws std::invalid_argument on non-finite input or negative damping.
Mat damped_pinv(const Mat& m, double damping);

/// Skew-symmetric cross-product matrix.
Mat3 skew(const Vec3& v);

/// Rotation vector (axis * angle, angle in [0, pi]) of a rotation matrix.
Vec3 rotation_vector(const Mat3& r);

/// Quaternion from a rotation vector.
Quat quat_from_rotation_vector(const Vec3& rv);

/// Central-difference Jacobian of f at x. Test oracle only.
template <typename F>
Mat numeric_jacobian(F&& f, const Vec& x, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("numeric_jacobian: step must be positive");
  const Vec f0 = f(x);
  Mat jac(f0.size(), x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vec xp = x;
    Vec xm = x;
    xp(i) += h;
    xm(i) -= h;
    jac.col(i) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return jac;
}

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

}  // namespace uam
