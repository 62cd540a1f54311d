#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace rcmcal {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Quat = Eigen::Quaterniond;

Mat3 skew(const Vec3& v);
Mat3 rot_x(double angle);
Mat3 rot_y(double angle);
Mat3 rot_z(double angle);

/// Rigid motion p' = R p + t, stored as a unit quaternion and a translation in
/// mm. The quaternion is renormalized on construction and after composition.
class RigidTransform {
 public:
  RigidTransform() = default;
  RigidTransform(const Quat& rotation, const Vec3& translation);
  RigidTransform(const Mat3& rotation, const Vec3& translation);

  static RigidTransform identity() { return {}; }
  static RigidTransform from_matrix(const Mat4& m);
  static RigidTransform from_translation(const Vec3& t);
  static RigidTransform from_axis_angle(const Vec3& axis, double angle);
  /// Keeps `rotation` bit-for-bit when its norm is within 1e-12 of one, so
  /// serialized transforms read back identically; renormalizes otherwise.
  static RigidTransform from_stored(const Quat& rotation, const Vec3& translation);

  const Quat& quaternion() const { return rotation_; }
  const Vec3& translation() const { return translation_; }
  Mat3 rotation() const { return rotation_.toRotationMatrix(); }
  Mat4 matrix() const;

  Vec3 apply(const Vec3& p) const { return rotation_ * p + translation_; }
  Vec3 operator*(const Vec3& p) const { return apply(p); }
  RigidTransform operator*(const RigidTransform& rhs) const;
  RigidTransform inverse() const;

 private:
  Quat rotation_ = Quat::Identity();
  Vec3 translation_ = Vec3::Zero();
};

/// a * b: b is applied first.
inline RigidTransform compose(const RigidTransform& a, const RigidTransform& b) { return a * b; }
inline RigidTransform invert(const RigidTransform& t) { return t.inverse(); }

/// Geodesic angle (rad) between the rotations of a and b.
double rotation_distance(const RigidTransform& a, const RigidTransform& b);
/// Largest absolute entry difference of the 3x4 upper blocks.
double max_abs_difference(const RigidTransform& a, const RigidTransform& b);

/// se(3) tangent vector: rotation (rad) and translation (mm) parts.
struct Twist {
  Vec3 rotation = Vec3::Zero();
  Vec3 translation = Vec3::Zero();

  Vec6 vector() const;
  static Twist from_vector(const Vec6& v);
};

RigidTransform exp_map(const Twist& xi);
/// Throws ErrorKind::domain when the rotation angle is within 1e-6 of pi.
Twist log_map(const RigidTransform& t);

/// Oriented line o + gamma * x with unit direction x.
class Line3 {
 public:
  /// Normalizes `direction`; throws ErrorKind::invalid_argument if it is zero.
  Line3(const Vec3& origin, const Vec3& direction);

  const Vec3& origin() const { return origin_; }
  const Vec3& direction() const { return direction_; }
  Vec3 point_at(double gamma) const { return origin_ + gamma * direction_; }

 private:
  Vec3 origin_;
  Vec3 direction_;
};

/// (I - x x^T)(p - o): perpendicular residual from the line to p.
Vec3 point_line_distance_vector(const Vec3& p, const Line3& line);
inline double point_line_distance(const Vec3& p, const Line3& line) {
  return point_line_distance_vector(p, line).norm();
}

}  // namespace rcmcal
