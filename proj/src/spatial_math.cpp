#include "uam/spatial_math.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace uam {

Pose Pose::operator*(const Pose& other) const {
  Pose out;
  out.position = position + orientation * other.position;
  out.orientation = (orientation * other.orientation).normalized();
  return out;
}

Pose Pose::inverse() const {
  Pose out;
  out.orientation = orientation.conjugate();
  out.position = -(out.orientation * position);
  return out;
}

Mat damped_pinv(const Mat& m, double damping) {
  if (!m.allFinite()) throw std::invalid_argument("damped_pinv: non-finite input");
  if (!(damping >= 0.0) || !std::isfinite(damping)) {
    throw std::invalid_argument("damped_pinv: damping must be finite and >= 0");
  }
  const Eigen::Index rows = m.rows();
  const Eigen::Index cols = m.cols();
  if (rows == 0 || cols == 0) return Mat::Zero(cols, rows);

  if (damping == 0.0) {
    // Extended precision keeps the weak singular directions accurate near
    // singular configurations, where the inverse has large entries.
    using LMat = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxDim, kMaxDim>;
    Eigen::JacobiSVD<LMat> svd(m.cast<long double>(), Eigen::ComputeFullU | Eigen::ComputeFullV);
    const auto& s = svd.singularValues();
    const long double tol = std::max(rows, cols) * s(0) * std::numeric_limits<double>::epsilon();
    LMat s_inv = LMat::Zero(cols, rows);
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      if (s(i) > tol) s_inv(i, i) = 1.0L / s(i);
    }
    return (svd.matrixV() * s_inv * svd.matrixU().transpose()).cast<double>();
  }

  const double d2 = damping * damping;
  if (rows <= cols) {
    Mat gram = m * m.transpose();
    gram.diagonal().array() += d2;
    return m.transpose() * gram.ldlt().solve(Mat::Identity(rows, rows));
  }
  Mat gram = m.transpose() * m;
  gram.diagonal().array() += d2;
  return gram.ldlt().solve(m.transpose());
}

Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return s;
}

Vec3 rotation_vector(const Mat3& r) {
  const Eigen::AngleAxisd aa(r);
  return aa.axis() * aa.angle();
}

Quat quat_from_rotation_vector(const Vec3& rv) {
  const double angle = rv.norm();
  if (angle < 1e-12) {
    // first-order expansion keeps tiny rotations exact to rounding
    return Quat(1.0, 0.5 * rv.x(), 0.5 * rv.y(), 0.5 * rv.z()).normalized();
  }
  return Quat(Eigen::AngleAxisd(angle, rv / angle));
}

}  // namespace uam
