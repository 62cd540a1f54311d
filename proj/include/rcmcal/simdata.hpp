#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "rcmcal/camera.hpp"
#include "rcmcal/kinematics.hpp"
#include "rcmcal/optim.hpp"

namespace rcmcal {

using JointArray = std::array<double, JointState::size>;

/// Error processes applied to the proprioception channel and the detector.
/// Per-joint arrays follow JointState::to_array() order.
struct NoiseModel {
  JointArray joint_bias{};      // rad, or mm for insertion
  JointArray backlash_width{};  // rad; must be 0 for insertion
  double keypoint_sigma = 0.0;  // px
  double dropout = 0.0;         // probability per keypoint per frame
  RigidTransform base_offset;   // camera-frame error folded into the reported poses

  void validate() const;
};

/// Bounded mean-reverting walk: q[k+1] = q[k] + reversion * (center - q[k]) +
/// step * amplitude * N(0, 1), clamped to center +/- amplitude.
struct RandomWalk {
  JointState center{0.0, 0.0, 60.0, 0.0, 0.0, 0.3, -0.3};
  JointArray amplitude{0.3, 0.3, 15.0, 0.8, 0.5, 0.2, 0.2};
  double reversion = 0.05;
  double step = 0.15;
};

struct TrajectorySpec {
  enum class Kind { random_walk, waypoints };
  Kind kind = Kind::random_walk;
  RandomWalk walk;
  /// Piecewise-linear path resampled to the frame count.
  std::vector<JointState> waypoints;
};

struct ScenarioConfig {
  int frames = 50;
  TrajectorySpec trajectory;
  RigidTransform camera_from_base = default_camera_from_base();
  /// Frame whose origin is the RCM, camera coordinates.
  RigidTransform rcm_frame = default_rcm_frame();
  PinholeCamera camera;
  std::optional<StereoRig> rig;
  InstrumentModel model = InstrumentModel::default_model();
  NoiseModel noise;
  std::uint64_t seed = 1;

  static RigidTransform default_camera_from_base();
  static RigidTransform default_rcm_frame();

  /// Throws ErrorKind::invalid_config.
  void validate() const;
};

struct SyntheticFrame {
  double t = 0.0;
  JointState true_joints;
  InstrumentPose true_pose;
  RigidTransform true_end_effector;  // cT_ee
  FrameObservation observation;
  std::vector<Vec2> keypoint_noise;  // parallel to observation.keypoints
  JointState reported_joints;
  RigidTransform reported_base_from_ee;  // rbT_ee
  Vec3 true_tip = Vec3::Zero();          // camera frame
  Vec2 tip_left = Vec2::Zero();          // detected tool tip, px
  std::optional<Vec2> tip_right;         // detected tool tip in the right camera
};

/// Joint path for the scenario, consuming draws from `rng` for random walks.
std::vector<JointState> sample_trajectory(const ScenarioConfig& cfg, std::mt19937_64& rng);

/// Reported joints: true + bias + backlash. Backlash adds +w/2 while a joint
/// moves in the positive direction and -w/2 while it moves in the negative
/// direction; the offset is held while the joint is at rest. The first
/// frame uses the direction of the first motion.
std::vector<JointState> reported_joint_sequence(std::span<const JointState> truth, const NoiseModel& noise);

/// Throws invalid_config for an invalid scenario and frustum_violation when a
/// frame has no keypoint inside the image.
std::vector<SyntheticFrame> generate_sequence(const ScenarioConfig& cfg);

struct GroundTruthBundle {
  RigidTransform camera_from_base;  // cT_rb as configured
  /// The transform that maps the reported poses onto the true ones; differs
  /// from camera_from_base by the base offset.
  RigidTransform effective_camera_from_base;
  Vec3 rcm_point = Vec3::Zero();
  std::vector<Vec3> tips;
};

GroundTruthBundle ground_truth_bundle(const ScenarioConfig& cfg, std::span<const SyntheticFrame> frames);

}  // namespace rcmcal
