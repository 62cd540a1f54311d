#include "rcmcal/camera.hpp"

#include <Eigen/SVD>
#include <cmath>

#include "rcmcal/errors.hpp"

namespace rcmcal {

namespace {

constexpr double kMinDepth = 1e-6;
constexpr double kRankTolerance = 1e-12;
constexpr int kRefineIterations = 10;
constexpr double kRefineStep = 1e-10;

struct View {
  const PinholeCamera* cam;
  Mat3 rotation;
  Vec3 translation;
};

}  // namespace

void PinholeCamera::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw Error(ErrorKind::invalid_argument, "PinholeCamera: focal lengths must be positive");
  }
  if (!(cx > 0.0 && cx < width) || !(cy > 0.0 && cy < height)) {
    throw Error(ErrorKind::invalid_argument, "PinholeCamera: principal point outside the image");
  }
}

Mat3 PinholeCamera::intrinsics() const {
  Mat3 k;
  k << fx, 0.0, cx,
       0.0, fy, cy,
       0.0, 0.0, 1.0;
  return k;
}

bool PinholeCamera::in_image(const Vec2& px) const {
  return px.x() >= 0.0 && px.x() < width && px.y() >= 0.0 && px.y() < height;
}

void StereoRig::validate() const {
  left.validate();
  right.validate();
  if (!(baseline() > 0.0)) {
    throw Error(ErrorKind::invalid_argument, "StereoRig: baseline must be positive");
  }
}

Vec2 project(const PinholeCamera& cam, const Vec3& p) {
  if (!(p.z() > kMinDepth)) {
    throw Error(ErrorKind::behind_camera, "project: point is behind the camera");
  }
  return {cam.fx * p.x() / p.z() + cam.cx, cam.fy * p.y() / p.z() + cam.cy};
}

Eigen::Matrix<double, 2, 3> project_jacobian(const PinholeCamera& cam, const Vec3& p) {
  const double iz = 1.0 / p.z();
  Eigen::Matrix<double, 2, 3> j;
  j << cam.fx * iz, 0.0, -cam.fx * p.x() * iz * iz,
       0.0, cam.fy * iz, -cam.fy * p.y() * iz * iz;
  return j;
}

Vec3 triangulate(const StereoRig& rig, const Vec2& left_px, const Vec2& right_px) {
  if (!left_px.allFinite() || !right_px.allFinite()) {
    throw Error(ErrorKind::invalid_argument, "triangulate: observations must be finite");
  }
  const View views[2] = {
      {&rig.left, Mat3::Identity(), Vec3::Zero()},
      {&rig.right, rig.right_from_left.rotation(), rig.right_from_left.translation()},
  };
  const Vec2 observed[2] = {left_px, right_px};

  // DLT on normalized image coordinates with unit-norm rows.
  Eigen::Matrix4d a;
  for (int v = 0; v < 2; ++v) {
    const PinholeCamera& cam = *views[v].cam;
    Eigen::Matrix<double, 3, 4> p;
    p << views[v].rotation, views[v].translation;
    const double xn = (observed[v].x() - cam.cx) / cam.fx;
    const double yn = (observed[v].y() - cam.cy) / cam.fy;
    a.row(2 * v) = xn * p.row(2) - p.row(0);
    a.row(2 * v + 1) = yn * p.row(2) - p.row(1);
  }
  for (int r = 0; r < 4; ++r) a.row(r).normalize();

  const Eigen::JacobiSVD<Eigen::Matrix4d> svd(a, Eigen::ComputeFullV);
  const Eigen::Vector4d sv = svd.singularValues();
  if (!(sv(2) > kRankTolerance * sv(0))) {
    throw Error(ErrorKind::degenerate_geometry, "triangulate: rays do not determine a unique point");
  }
  const Eigen::Vector4d h = svd.matrixV().col(3);
  if (std::abs(h(3)) < kRankTolerance * h.head<3>().norm()) {
    throw Error(ErrorKind::degenerate_geometry, "triangulate: rays are parallel");
  }
  Vec3 x = h.head<3>() / h(3);

  for (int it = 0; it < kRefineIterations; ++it) {
    Eigen::Vector4d residual;
    Eigen::Matrix<double, 4, 3> jac;
    bool in_front = true;
    for (int v = 0; v < 2; ++v) {
      const Vec3 pc = views[v].rotation * x + views[v].translation;
      if (!(pc.z() > kMinDepth)) {
        in_front = false;
        break;
      }
      residual.segment<2>(2 * v) = project(*views[v].cam, pc) - observed[v];
      jac.middleRows<2>(2 * v) = project_jacobian(*views[v].cam, pc) * views[v].rotation;
    }
    if (!in_front) break;
    const Vec3 step = (jac.transpose() * jac).ldlt().solve(-jac.transpose() * residual);
    if (!step.allFinite()) break;
    x += step;
    if (step.norm() < kRefineStep) break;
  }
  return x;
}

double px_to_mm_scale(const PinholeCamera& cam, double depth_mm) {
  if (!(depth_mm > 0.0)) {
    throw Error(ErrorKind::non_positive_depth, "px_to_mm_scale: depth must be positive");
  }
  return depth_mm / cam.fx;
}

}  // namespace rcmcal
