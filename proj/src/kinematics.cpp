#include "rcmcal/kinematics.hpp"

#include <set>

#include "rcmcal/errors.hpp"

namespace rcmcal {

void JointState::validate() const {
  if (!(jaw_left >= jaw_right)) {
    throw Error(ErrorKind::invalid_argument, "JointState: jaw_left must be >= jaw_right");
  }
  if (!(insertion >= 0.0)) {
    throw Error(ErrorKind::invalid_argument, "JointState: insertion must be >= 0");
  }
}

std::array<double, JointState::size> JointState::to_array() const {
  return {yaw, pitch, insertion, roll, wrist_pitch, jaw_left, jaw_right};
}

JointState JointState::from_array(const std::array<double, size>& a) {
  return {a[0], a[1], a[2], a[3], a[4], a[5], a[6]};
}

const char* part_name(Part part) noexcept {
  switch (part) {
    case Part::shaft: return "s";
    case Part::wrist: return "w";
    case Part::left_jaw: return "l";
    case Part::right_jaw: return "r";
  }
  return "?";
}

Part part_from_name(const std::string& name) {
  if (name == "s") return Part::shaft;
  if (name == "w") return Part::wrist;
  if (name == "l") return Part::left_jaw;
  if (name == "r") return Part::right_jaw;
  throw Error(ErrorKind::invalid_argument, "unknown instrument part '" + name + "'");
}

InstrumentModel InstrumentModel::default_model() {
  InstrumentModel m;
  m.keypoints = {
      {Part::shaft, "shaft_proximal", Vec3(-15.0, 0.0, 0.0)},
      {Part::shaft, "shaft_marker", Vec3(-8.0, 0.0, 4.0)},
      {Part::shaft, "shaft_distal", Vec3::Zero()},
      {Part::wrist, "wrist_center", Vec3::Zero()},
      {Part::wrist, "wrist_pin", Vec3(0.0, 3.0, 0.0)},
      {Part::left_jaw, "left_tip", Vec3(m.gripper_length, 0.0, 0.0)},
      {Part::right_jaw, "right_tip", Vec3(m.gripper_length, 0.0, 0.0)},
  };
  return m;
}

void InstrumentModel::validate() const {
  if (!(wrist_offset > 0.0) || !(gripper_length > 0.0)) {
    throw Error(ErrorKind::invalid_argument, "InstrumentModel: link lengths must be positive");
  }
  std::set<std::string> seen;
  for (const auto& kp : keypoints) {
    if (!seen.insert(kp.label).second) {
      throw Error(ErrorKind::invalid_argument, "InstrumentModel: duplicate keypoint label '" + kp.label + "'");
    }
  }
}

const RigidTransform& PartTransforms::operator[](Part part) const {
  switch (part) {
    case Part::shaft: return shaft;
    case Part::wrist: return wrist;
    case Part::left_jaw: return left_jaw;
    case Part::right_jaw: return right_jaw;
  }
  return shaft;
}

RigidTransform shaft_to_wrist(double wrist_pitch, const InstrumentModel& model) {
  return {rot_y(wrist_pitch), Vec3(model.wrist_offset, 0.0, 0.0)};
}

RigidTransform wrist_to_jaw(double jaw_angle) { return {rot_z(jaw_angle), Vec3::Zero()}; }

PartTransforms part_transforms(const InstrumentPose& pose, const InstrumentModel& model) {
  PartTransforms parts;
  parts.shaft = pose.shaft;
  parts.wrist = pose.shaft * shaft_to_wrist(pose.wrist_pitch, model);
  parts.left_jaw = parts.wrist * wrist_to_jaw(pose.jaw_left);
  parts.right_jaw = parts.wrist * wrist_to_jaw(pose.jaw_right);
  return parts;
}

RigidTransform end_effector_pose(const InstrumentPose& pose, const InstrumentModel& model) {
  if (!(pose.jaw_left >= pose.jaw_right)) {
    throw Error(ErrorKind::invalid_argument, "end_effector_pose: jaw_left must be >= jaw_right");
  }
  const double bisector = 0.5 * (pose.jaw_left + pose.jaw_right);
  const RigidTransform left_to_ee = wrist_to_jaw(bisector - pose.jaw_left);
  return pose.shaft * shaft_to_wrist(pose.wrist_pitch, model) * wrist_to_jaw(pose.jaw_left) * left_to_ee;
}

Line3 shaft_line(const InstrumentPose& pose) {
  return {pose.shaft.translation(), pose.shaft.rotation().col(0)};
}

InstrumentPose rcm_forward(const JointState& joints, const RigidTransform& rcm_frame,
                           const InstrumentModel& /*model*/) {
  const RigidTransform pivot(Mat3(rot_z(joints.yaw) * rot_y(joints.pitch)), Vec3::Zero());
  const RigidTransform insert = RigidTransform::from_translation(Vec3(joints.insertion, 0.0, 0.0));
  const RigidTransform roll(rot_x(joints.roll), Vec3::Zero());
  InstrumentPose pose;
  pose.shaft = rcm_frame * pivot * insert * roll;
  pose.wrist_pitch = joints.wrist_pitch;
  pose.jaw_left = joints.jaw_left;
  pose.jaw_right = joints.jaw_right;
  return pose;
}

std::vector<LabeledPoint3> keypoints_3d(const InstrumentPose& pose, const InstrumentModel& model) {
  const PartTransforms parts = part_transforms(pose, model);
  std::vector<LabeledPoint3> out;
  out.reserve(model.keypoints.size());
  for (const auto& kp : model.keypoints) {
    out.push_back({kp.label, parts[kp.part].apply(kp.position)});
  }
  return out;
}

Vec3 tool_tip(const RigidTransform& end_effector, const InstrumentModel& model) {
  return end_effector.apply(Vec3(model.gripper_length, 0.0, 0.0));
}

Vec3 tool_tip(const InstrumentPose& pose, const InstrumentModel& model) {
  return tool_tip(end_effector_pose(pose, model), model);
}

}  // namespace rcmcal
