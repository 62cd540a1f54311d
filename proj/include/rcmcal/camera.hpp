#pragma once

#include "rcmcal/geom.hpp"

namespace rcmcal {

/// Distortion-free pinhole intrinsics in pixels.
struct PinholeCamera {
  double fx = 800.0;
  double fy = 800.0;
  double cx = 320.0;
  double cy = 256.0;
  int width = 640;
  int height = 512;

  /// Throws ErrorKind::invalid_argument unless fx, fy > 0 and the principal
  /// point lies strictly inside the image.
  void validate() const;
  Mat3 intrinsics() const;
  bool in_image(const Vec2& px) const;
};

/// Two pinhole cameras; right_from_left maps left-camera points into the
/// right camera frame (P_r = K_r [R | t]).
struct StereoRig {
  PinholeCamera left;
  PinholeCamera right;
  RigidTransform right_from_left;

  double baseline() const { return right_from_left.translation().norm(); }
  void validate() const;
};

/// Throws ErrorKind::behind_camera when p.z <= 1e-6 mm.
Vec2 project(const PinholeCamera& cam, const Vec3& p);

/// Jacobian of project() with respect to the camera-frame point.
Eigen::Matrix<double, 2, 3> project_jacobian(const PinholeCamera& cam, const Vec3& p);

/// Two-view triangulation in the left camera frame: linear DLT followed by
/// Gauss-Newton on the summed squared reprojection error. Throws
/// ErrorKind::degenerate_geometry when the rays do not determine a point.
Vec3 triangulate(const StereoRig& rig, const Vec2& left_px, const Vec2& right_px);

/// Metric size of one pixel at depth z: z / fx. Throws ErrorKind::non_positive_depth.
double px_to_mm_scale(const PinholeCamera& cam, double depth_mm);

}  // namespace rcmcal
