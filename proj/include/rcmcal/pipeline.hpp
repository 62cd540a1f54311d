#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "rcmcal/camera.hpp"
#include "rcmcal/estimators.hpp"
#include "rcmcal/kinematics.hpp"
#include "rcmcal/optim.hpp"
#include "rcmcal/simdata.hpp"

namespace rcmcal {

/// Hidden truth attached to a frame by the simulator. Never read by calibrate().
struct FrameTruth {
  Vec3 tip = Vec3::Zero();      // camera frame, mm
  Vec2 tip_px = Vec2::Zero();   // noiseless projection, px
  RigidTransform end_effector;  // cT_ee
  JointState joints;
};

struct SequenceFrame {
  double t = 0.0;
  std::vector<DetectedKeypoint> keypoints;
  JointState joints;                     // as reported by the robot
  RigidTransform reported_base_from_ee;  // rbT_ee
  std::optional<Vec2> tip_left;          // detected tool tip, left camera
  std::optional<Vec2> tip_right;         // detected tool tip, right camera
  std::optional<FrameTruth> gt;
};

struct Sequence {
  PinholeCamera camera;
  std::optional<StereoRig> rig;
  InstrumentModel model = InstrumentModel::default_model();
  /// cT_rb the robot would use without calibration, if known.
  std::optional<RigidTransform> nominal_camera_from_base;
  std::vector<SequenceFrame> frames;

  /// Hash of the calibration inputs, used to recognise the training sequence.
  std::uint64_t fingerprint() const;
};

/// Packs simulator output into the on-disk sequence layout, including truth.
Sequence make_sequence(const ScenarioConfig& cfg, std::span<const SyntheticFrame> frames);

struct CalibrationConfig {
  OptimizerOptions optimizer;
  /// A frame is an outlier when its keypoint RMS exceeds Q3 + factor * IQR
  /// of all frames and also exceeds the floor.
  double exclusion_iqr_factor = 1.5;
  double exclusion_rms_floor_px = 0.5;
};

struct CalibrationDiagnostics {
  RcmEstimate initial_rcm;
  RcmEstimate phase1_rcm;
  std::vector<double> keypoint_rms;  // per frame after phase 2, px
  double mean_rcm_distance_init = 0.0;
  double mean_rcm_distance_phase1 = 0.0;
  double mean_rcm_distance_phase2 = 0.0;
  /// Mean angle between the corrected reported and the refined end-effector
  /// orientations over included frames, rad.
  double rotation_agreement = 0.0;
  OptimizationReport phase1;
  OptimizationReport phase2;
};

struct CalibrationResult {
  RigidTransform camera_from_base;                 // cT_rb
  std::vector<RigidTransform> refined_end_effector;  // per frame, cT_ee
  std::vector<InstrumentPose> refined_poses;
  Vec3 rcm = Vec3::Zero();
  std::vector<std::uint8_t> included;  // per frame
  double alignment_rmsd = 0.0;         // mm
  int frames_used = 0;
  std::uint64_t sequence_fingerprint = 0;
  CalibrationDiagnostics diagnostics;
};

/// Pose initialization, robust RCM, two-phase refinement, outlier-pose
/// exclusion and the point-cloud hand-eye solve.
///
/// Frames with fewer than four detections or a failed initialization are
/// excluded up front. Errors: too_few_inliers when fewer than three frames
/// remain, plus anything the estimators signal.
CalibrationResult calibrate(const Sequence& seq, const CalibrationConfig& config = {});

/// cT_rb * rbT_ee.
RigidTransform apply_calibration(const CalibrationResult& result, const RigidTransform& base_from_ee);

struct FrameMetrics {
  int frame = 0;
  double err2d_px = 0.0;
  double err2d_mm = 0.0;
  double err3d_mm = 0.0;
  bool included = false;
};

struct ErrorSummary {
  double avg = 0.0;
  double median = 0.0;
};

struct MetricsReport {
  std::vector<FrameMetrics> frames;
  ErrorSummary err2d_px;
  ErrorSummary err2d_mm;
  ErrorSummary err3d_mm;
  int skipped = 0;  // frames without a tip reference
};

/// Tool-tip errors of the reported poses mapped through `camera_from_base`.
/// The reference tip is the frame's truth when present, otherwise the stereo
/// triangulation of the detected tips. `included` marks frames used for
/// calibration and may be empty.
MetricsReport evaluate_transform(const RigidTransform& camera_from_base, const Sequence& seq,
                                 std::span<const std::uint8_t> included = {});

/// evaluate_transform() with the recovered transform. Inclusion flags are
/// reported when `seq` is the sequence the result was fitted on.
MetricsReport evaluate(const CalibrationResult& result, const Sequence& seq);

ErrorSummary summarize(std::vector<double> values);

}  // namespace rcmcal
