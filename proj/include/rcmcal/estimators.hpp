#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "rcmcal/camera.hpp"
#include "rcmcal/geom.hpp"

namespace rcmcal {

struct Correspondence2D3D {
  std::string label;
  Vec2 image = Vec2::Zero();   // px
  Vec3 object = Vec3::Zero();  // mm, object frame
};

/// Camera-from-object pose from at least four 2D-3D correspondences.
///
/// EPnP with four control points placed along the principal axes of the
/// object points (three when they are planar), the beta approximations for
/// one, two and three kernel vectors, Gauss-Newton refinement of the betas,
/// and a final Gauss-Newton polish of the reprojection error. The result
/// never has a larger reprojection RMS than the best EPnP candidate.
///
/// Errors: insufficient_points (< 4), collinear_points,
/// all_candidates_behind_camera, invalid_argument for duplicate labels.
RigidTransform solve_epnp(std::span<const Correspondence2D3D> corrs, const PinholeCamera& cam);

/// Root-mean-square pixel error of `pose` over `corrs`.
double reprojection_rms(std::span<const Correspondence2D3D> corrs, const PinholeCamera& cam,
                        const RigidTransform& pose);

/// Least-squares intersection of 3D lines: solves
/// sum(I - x x^T) p = sum(I - x x^T) o. Throws near_parallel_bundle when the
/// normal matrix has condition number above 1e8, insufficient_points for < 2 lines.
Vec3 estimate_rcm(std::span<const Line3> lines);

struct RcmEstimate {
  Vec3 point = Vec3::Zero();
  std::vector<std::uint8_t> inliers;  // one flag per input line
  double rms_residual = 0.0;          // mm, over inliers
  int rounds = 0;
  bool low_confidence = false;        // fewer than three inlier lines

  std::size_t inlier_count() const;
};

struct RobustRcmOptions {
  double residual_threshold = 3.0;  // mm
  int max_rounds = 5;
};

/// Iterative outlier rejection around estimate_rcm(): re-fit on the inlier
/// lines and re-classify (inlier iff perpendicular distance <= threshold)
/// until the inlier set stops changing or max_rounds is reached.
/// Throws insufficient_points (< 3 lines) and no_consensus (< 2 inliers).
RcmEstimate estimate_rcm_robust(std::span<const Line3> lines, double residual_threshold,
                                int max_rounds);
inline RcmEstimate estimate_rcm_robust(std::span<const Line3> lines,
                                       const RobustRcmOptions& options = {}) {
  return estimate_rcm_robust(lines, options.residual_threshold, options.max_rounds);
}

/// Weighted rigid alignment dst ~ R src + t (no scale), with the reflection
/// case corrected so det R = +1. Empty `weights` means uniform.
/// Throws invalid_argument for mismatched sizes, fewer than three pairs or
/// bad weights; degenerate_configuration for collinear sources.
RigidTransform kabsch_umeyama(std::span<const Vec3> src, std::span<const Vec3> dst,
                              std::span<const double> weights = {});

/// sqrt(sum w |dst - T src|^2 / sum w).
double alignment_rmsd(std::span<const Vec3> src, std::span<const Vec3> dst, const RigidTransform& t,
                      std::span<const double> weights = {});

}  // namespace rcmcal
