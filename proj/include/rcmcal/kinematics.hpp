#pragma once

#include <array>
#include <string>
#include <vector>

#include "rcmcal/geom.hpp"

namespace rcmcal {

// Axis conventions shared by the simulator and the solver:
//   shaft frame    x along the shaft centerline, origin at the distal shaft end
//   wrist frame    sT_w = Trans(wrist_offset * x) * Ry(wrist_pitch)
//   jaw frames     wT_l = Rz(jaw_left), wT_r = Rz(jaw_right)
//   end effector   wT_ee = Rz((jaw_left + jaw_right) / 2), tool tip at
//                  (gripper_length, 0, 0) in the end-effector frame
//   RCM chain      cT_s = rcm * Rz(yaw) * Ry(pitch) * Trans(insertion * x) * Rx(roll)

struct JointState {
  double yaw = 0.0;          // rad
  double pitch = 0.0;        // rad
  double insertion = 0.0;    // mm
  double roll = 0.0;         // rad
  double wrist_pitch = 0.0;  // rad
  double jaw_left = 0.0;     // rad
  double jaw_right = 0.0;    // rad

  /// Throws ErrorKind::invalid_argument unless jaw_left >= jaw_right and insertion >= 0.
  void validate() const;

  static constexpr std::size_t size = 7;
  std::array<double, size> to_array() const;
  static JointState from_array(const std::array<double, size>& a);
  /// Whether the i-th entry of to_array() is a revolute joint.
  static constexpr bool is_revolute(std::size_t i) { return i != 2; }
};

enum class Part { shaft, wrist, left_jaw, right_jaw };

const char* part_name(Part part) noexcept;
/// Accepts "s", "w", "l", "r". Throws ErrorKind::invalid_argument otherwise.
Part part_from_name(const std::string& name);

struct ModelKeypoint {
  Part part = Part::shaft;
  std::string label;
  Vec3 position = Vec3::Zero();  // mm, in the part frame
};

struct InstrumentModel {
  double wrist_offset = 9.1;    // mm, shaft origin to wrist joint along x
  double gripper_length = 9.6;  // mm, wrist joint to tool tip
  std::vector<ModelKeypoint> keypoints;

  /// Seven keypoints: two on the shaft centerline and a marker on the shaft
  /// surface, the wrist centre and the head of its pitch pin, and both jaw tips.
  static InstrumentModel default_model();

  /// Throws ErrorKind::invalid_argument for non-positive lengths or duplicate labels.
  void validate() const;
};

/// The articulated state {jaw_left, jaw_right, wrist_pitch, cT_s}.
struct InstrumentPose {
  RigidTransform shaft;
  double wrist_pitch = 0.0;
  double jaw_left = 0.0;
  double jaw_right = 0.0;
};

struct PartTransforms {
  RigidTransform shaft;
  RigidTransform wrist;
  RigidTransform left_jaw;
  RigidTransform right_jaw;

  const RigidTransform& operator[](Part part) const;
};

struct LabeledPoint3 {
  std::string label;
  Vec3 position;
};

// Local joint transforms.
RigidTransform shaft_to_wrist(double wrist_pitch, const InstrumentModel& model);
RigidTransform wrist_to_jaw(double jaw_angle);

PartTransforms part_transforms(const InstrumentPose& pose, const InstrumentModel& model);

/// cT_s * sT_w * wT_l * lT_ee, the x-axis bisecting the jaws. Throws
/// ErrorKind::invalid_argument when jaw_left < jaw_right.
RigidTransform end_effector_pose(const InstrumentPose& pose, const InstrumentModel& model);

Line3 shaft_line(const InstrumentPose& pose);

/// Instrument pose for `joints` about an RCM whose frame is `rcm_frame` in
/// camera coordinates. The shaft line passes through the RCM origin.
InstrumentPose rcm_forward(const JointState& joints, const RigidTransform& rcm_frame,
                           const InstrumentModel& model);

std::vector<LabeledPoint3> keypoints_3d(const InstrumentPose& pose, const InstrumentModel& model);

/// Tool-tip position, camera frame.
Vec3 tool_tip(const InstrumentPose& pose, const InstrumentModel& model);
/// Tool tip of an end-effector frame.
Vec3 tool_tip(const RigidTransform& end_effector, const InstrumentModel& model);

}  // namespace rcmcal
