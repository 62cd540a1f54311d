#include "rcmcal/geom.hpp"

#include <cmath>
#include <numbers>

#include "rcmcal/errors.hpp"

namespace rcmcal {

namespace {

// Below this angle the sinc-like coefficients switch to their Taylor series.
constexpr double kSmallAngle = 1e-2;
constexpr double kLogDomainMargin = 1e-6;

}  // namespace

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

Mat3 rot_x(double angle) { return Eigen::AngleAxisd(angle, Vec3::UnitX()).toRotationMatrix(); }
Mat3 rot_y(double angle) { return Eigen::AngleAxisd(angle, Vec3::UnitY()).toRotationMatrix(); }
Mat3 rot_z(double angle) { return Eigen::AngleAxisd(angle, Vec3::UnitZ()).toRotationMatrix(); }

RigidTransform::RigidTransform(const Quat& rotation, const Vec3& translation)
    : rotation_(rotation.normalized()), translation_(translation) {}

RigidTransform::RigidTransform(const Mat3& rotation, const Vec3& translation)
    : rotation_(Quat(rotation).normalized()), translation_(translation) {}

RigidTransform RigidTransform::from_stored(const Quat& rotation, const Vec3& translation) {
  RigidTransform t(rotation, translation);
  if (std::abs(rotation.norm() - 1.0) <= 1e-12) t.rotation_ = rotation;
  return t;
}

RigidTransform RigidTransform::from_matrix(const Mat4& m) {
  return {Mat3(m.topLeftCorner<3, 3>()), Vec3(m.topRightCorner<3, 1>())};
}

RigidTransform RigidTransform::from_translation(const Vec3& t) {
  return {Quat::Identity(), t};
}

RigidTransform RigidTransform::from_axis_angle(const Vec3& axis, double angle) {
  return {Quat(Eigen::AngleAxisd(angle, axis.normalized())), Vec3::Zero()};
}

Mat4 RigidTransform::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation();
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

RigidTransform RigidTransform::operator*(const RigidTransform& rhs) const {
  return {rotation_ * rhs.rotation_, rotation_ * rhs.translation_ + translation_};
}

RigidTransform RigidTransform::inverse() const {
  const Quat inv = rotation_.conjugate();
  return {inv, -(inv * translation_)};
}

double rotation_distance(const RigidTransform& a, const RigidTransform& b) {
  const Quat d = a.quaternion().conjugate() * b.quaternion();
  return 2.0 * std::atan2(d.vec().norm(), std::abs(d.w()));
}

double max_abs_difference(const RigidTransform& a, const RigidTransform& b) {
  return (a.matrix() - b.matrix()).topRows<3>().cwiseAbs().maxCoeff();
}

Vec6 Twist::vector() const {
  Vec6 v;
  v << rotation, translation;
  return v;
}

Twist Twist::from_vector(const Vec6& v) { return {v.head<3>(), v.tail<3>()}; }

RigidTransform exp_map(const Twist& xi) {
  const Vec3& w = xi.rotation;
  const double theta = w.norm();
  const double theta2 = theta * theta;

  double half_sinc;  // sin(theta/2) / theta
  double b;          // (1 - cos theta) / theta^2
  double c;          // (theta - sin theta) / theta^3
  if (theta < kSmallAngle) {
    const double theta4 = theta2 * theta2;
    half_sinc = 0.5 - theta2 / 48.0 + theta4 / 3840.0;
    b = 0.5 - theta2 / 24.0 + theta4 / 720.0;
    c = 1.0 / 6.0 - theta2 / 120.0 + theta4 / 5040.0 - theta4 * theta2 / 362880.0;
  } else {
    const double s = std::sin(0.5 * theta);
    half_sinc = s / theta;
    b = 2.0 * s * s / theta2;
    c = (theta - std::sin(theta)) / (theta2 * theta);
  }

  const Quat q(std::cos(0.5 * theta), half_sinc * w.x(), half_sinc * w.y(), half_sinc * w.z());
  const Mat3 W = skew(w);
  const Mat3 V = Mat3::Identity() + b * W + c * W * W;
  return {q, V * xi.translation};
}

Twist log_map(const RigidTransform& t) {
  Quat q = t.quaternion();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const double n = q.vec().norm();
  const double theta = 2.0 * std::atan2(n, q.w());
  if (theta >= std::numbers::pi - kLogDomainMargin) {
    throw Error(ErrorKind::domain, "log_map: rotation angle too close to pi");
  }

  // theta / n, the scale from quaternion vector part to rotation vector.
  double scale;
  if (n < 1e-8) {
    scale = 2.0 / q.w() * (1.0 - n * n / (3.0 * q.w() * q.w()));
  } else {
    scale = theta / n;
  }
  const Vec3 w = scale * q.vec();

  const double theta2 = theta * theta;
  double d;  // (1 - (theta/2) cot(theta/2)) / theta^2
  if (theta < kSmallAngle) {
    d = 1.0 / 12.0 + theta2 / 720.0 + theta2 * theta2 / 30240.0;
  } else {
    const double half = 0.5 * theta;
    d = (1.0 - half * std::cos(half) / std::sin(half)) / theta2;
  }
  const Mat3 W = skew(w);
  const Mat3 V_inv = Mat3::Identity() - 0.5 * W + d * W * W;
  return {w, V_inv * t.translation()};
}

Line3::Line3(const Vec3& origin, const Vec3& direction) : origin_(origin) {
  const double n = direction.norm();
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw Error(ErrorKind::invalid_argument, "Line3: direction must be a finite non-zero vector");
  }
  direction_ = direction / n;
}

Vec3 point_line_distance_vector(const Vec3& p, const Line3& line) {
  const Vec3 d = p - line.origin();
  return d - line.direction() * line.direction().dot(d);
}

}  // namespace rcmcal
