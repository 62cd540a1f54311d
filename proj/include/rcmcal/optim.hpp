#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rcmcal/camera.hpp"
#include "rcmcal/estimators.hpp"
#include "rcmcal/kinematics.hpp"

namespace rcmcal {

/// Local parameters of one frame: the right-perturbation twist of cT_s
/// (rotation, then translation) followed by wrist pitch, left and right jaw.
using PoseVector = Eigen::Matrix<double, 9, 1>;
using PoseMatrix = Eigen::Matrix<double, 9, 9>;

struct LossWeights {
  double kpt = 1.0;
  double rcm = 10.0;
  // Rendering-based terms. Kept for configuration parity; must stay 0.
  double silh = 0.0;
  double px = 0.0;

  void validate() const;
};

struct DetectedKeypoint {
  std::string label;
  Vec2 pixel = Vec2::Zero();
};

struct FrameObservation {
  std::vector<DetectedKeypoint> keypoints;
  PinholeCamera camera;

  /// Frames with fewer than four detections are left untouched by the optimizer.
  bool eligible() const { return keypoints.size() >= 4; }
};

enum class KeypointLossKind {
  chamfer,  // symmetric nearest-neighbour loss, labels only select the model subset
  labeled,  // mean squared error between same-label pairs
};

struct LossAndGradient {
  double value = 0.0;
  PoseVector gradient = PoseVector::Zero();
};

/// Keypoint loss in px^2 and its gradient with respect to the local
/// parameters of `pose` (see PoseVector).
///
/// The Chamfer form is 0.5 * (mean over projected model points of the squared
/// distance to the nearest detection + mean over detections of the squared
/// distance to the nearest projected model point). Model keypoints whose label
/// is missing from the detections are left out.
///
/// Throws behind_camera if a model keypoint has non-positive depth.
LossAndGradient keypoint_loss(const InstrumentPose& pose, const InstrumentModel& model,
                              const FrameObservation& obs,
                              KeypointLossKind kind = KeypointLossKind::chamfer);

struct RcmLoss {
  double value = 0.0;
  std::vector<Vec6> gradients;  // per pose, with respect to the shaft twist
};

/// Mean squared perpendicular distance from `p_rcm` to the shaft lines (mm^2).
RcmLoss rcm_loss(std::span<const InstrumentPose> poses, const Vec3& p_rcm);

/// Applies a local update, clamping the articulation to [-pi/2, pi/2] and
/// keeping jaw_left >= jaw_right.
InstrumentPose retract(const InstrumentPose& pose, const PoseVector& delta);

struct OptimizerOptions {
  LossWeights weights;
  KeypointLossKind loss_kind = KeypointLossKind::chamfer;
  int epochs = 5;               // phase 1
  int steps_per_epoch = 5;      // phase 1, per frame
  int patience = 10;            // phase 2
  int max_iterations = 200;     // phase 2, per frame
  RobustRcmOptions rcm;
  int threads = 1;              // 0 picks the hardware concurrency

  void validate() const;
};

struct OptimizationReport {
  std::vector<double> final_loss;                  // per frame
  std::vector<int> iterations;                     // per frame
  std::vector<std::vector<double>> loss_history;   // per frame, accepted values only
  std::vector<Vec3> rcm_trajectory;                // per epoch (phase 1)
  std::vector<std::vector<std::uint8_t>> inlier_masks;  // per epoch (phase 1)
};

struct Phase1Result {
  std::vector<InstrumentPose> poses;
  RcmEstimate rcm;
  OptimizationReport report;
};

/// Epoch-wise refinement on the keypoint loss alone, re-estimating the RCM
/// from the refined shaft lines after every epoch. Two frames are accepted but
/// the estimate is flagged low_confidence.
///
/// Errors: invalid_argument for mismatched sizes or fewer than two frames;
/// no_consensus and near_parallel_bundle from the RCM estimate.
Phase1Result optimize_phase1(std::span<const FrameObservation> frames,
                             std::span<const InstrumentPose> init, const InstrumentModel& model,
                             const OptimizerOptions& options = {});

struct Phase2Result {
  std::vector<InstrumentPose> poses;
  OptimizationReport report;
};

/// Independent per-frame refinement on kpt * L_kpt + rcm * |r|^2 with the RCM
/// held fixed. A frame stops after `patience` consecutive iterations without
/// improvement or after `max_iterations`.
Phase2Result optimize_phase2(std::span<const FrameObservation> frames,
                             std::span<const InstrumentPose> poses, const Vec3& p_rcm,
                             const InstrumentModel& model, const OptimizerOptions& options = {});

/// Perpendicular distance from `p_rcm` to the shaft line of each pose.
std::vector<double> shaft_rcm_distances(std::span<const InstrumentPose> poses, const Vec3& p_rcm);

}  // namespace rcmcal
