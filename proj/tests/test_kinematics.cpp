#include <gtest/gtest.h>

#include <algorithm>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "rcmcal/errors.hpp"
#include "rcmcal/kinematics.hpp"

namespace rcmcal {
namespace {

using oracle::M4;
constexpr double kDeg = std::numbers::pi / 180.0;

InstrumentPose random_pose(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> art(-1.2, 1.2);
  InstrumentPose pose;
  pose.shaft = RigidTransform::from_matrix(oracle::random_hom(rng, 100.0));
  pose.wrist_pitch = art(rng);
  const double a = art(rng), b = art(rng);
  pose.jaw_left = std::max(a, b);
  pose.jaw_right = std::min(a, b);
  return pose;
}

// Explicit homogeneous chain for the wrist and jaws.
M4 wrist_chain(const InstrumentPose& pose, const InstrumentModel& model) {
  return pose.shaft.matrix() * oracle::hom_trans(model.wrist_offset, 0, 0) * oracle::hom_rot_y(pose.wrist_pitch);
}

TEST(PartTransforms, ZeroArticulationIsAxisAligned) {
  const InstrumentModel model = InstrumentModel::default_model();
  std::mt19937_64 rng(11);
  InstrumentPose pose;
  pose.shaft = RigidTransform::from_matrix(oracle::random_hom(rng, 50.0));
  const PartTransforms parts = part_transforms(pose, model);
  for (const RigidTransform* t : {&parts.wrist, &parts.left_jaw, &parts.right_jaw}) {
    EXPECT_LT(rotation_distance(*t, pose.shaft), 1e-12);
    const Vec3 expected = pose.shaft.apply(Vec3(model.wrist_offset, 0, 0));
    EXPECT_LT((t->translation() - expected).norm(), 1e-12);
  }
}

TEST(PartTransforms, WristPitchRotatesAboutWristAxis) {
  const InstrumentModel model = InstrumentModel::default_model();
  InstrumentPose pose;
  pose.wrist_pitch = 90.0 * kDeg;
  const PartTransforms parts = part_transforms(pose, model);
  EXPECT_LT((parts.wrist.rotation() - rot_y(90.0 * kDeg)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(PartTransforms, MatchesExplicitMatrixChain) {
  const InstrumentModel model = InstrumentModel::default_model();
  std::mt19937_64 rng(12);
  for (int i = 0; i < 100; ++i) {
    const InstrumentPose pose = random_pose(rng);
    const PartTransforms parts = part_transforms(pose, model);
    const M4 right = wrist_chain(pose, model) * oracle::hom_rot_z(pose.jaw_right);
    const M4 left = wrist_chain(pose, model) * oracle::hom_rot_z(pose.jaw_left);
    EXPECT_LT((parts.right_jaw.matrix() - right).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((parts.left_jaw.matrix() - left).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((parts.wrist.matrix() - wrist_chain(pose, model)).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(EndEffector, BisectsJawAngle) {
  const InstrumentModel model = InstrumentModel::default_model();
  InstrumentPose pose;
  pose.jaw_left = 30.0 * kDeg;
  pose.jaw_right = 10.0 * kDeg;
  const RigidTransform ee = end_effector_pose(pose, model);
  const PartTransforms parts = part_transforms(pose, model);
  const Mat3 local = parts.wrist.rotation().transpose() * ee.rotation();
  EXPECT_LT((local - rot_z(20.0 * kDeg)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(EndEffector, ClosedJawsCoincideWithJawFrames) {
  const InstrumentModel model = InstrumentModel::default_model();
  std::mt19937_64 rng(13);
  InstrumentPose pose = random_pose(rng);
  pose.jaw_left = pose.jaw_right = 0.0;
  const RigidTransform ee = end_effector_pose(pose, model);
  const PartTransforms parts = part_transforms(pose, model);
  EXPECT_LT(max_abs_difference(ee, parts.left_jaw), 1e-12);
  EXPECT_LT(max_abs_difference(ee, parts.right_jaw), 1e-12);
}

TEST(EndEffector, SharesOriginAndZAxisWithJaws) {
  const InstrumentModel model = InstrumentModel::default_model();
  std::mt19937_64 rng(14);
  for (int i = 0; i < 100; ++i) {
    const InstrumentPose pose = random_pose(rng);
    const RigidTransform ee = end_effector_pose(pose, model);
    const PartTransforms parts = part_transforms(pose, model);
    EXPECT_LT((ee.translation() - parts.left_jaw.translation()).norm(), 1e-9);
    EXPECT_LT((ee.translation() - parts.right_jaw.translation()).norm(), 1e-9);
    const Vec3 z = ee.rotation().col(2);
    EXPECT_LT(z.cross(parts.left_jaw.rotation().col(2)).norm(), 1e-9);
    EXPECT_LT(z.cross(parts.right_jaw.rotation().col(2)).norm(), 1e-9);
  }
}

TEST(EndEffector, RejectsCrossedJaws) {
  InstrumentPose pose;
  pose.jaw_left = -0.1;
  pose.jaw_right = 0.1;
  EXPECT_THROW(end_effector_pose(pose, InstrumentModel::default_model()), Error);
}

TEST(ShaftLine, FollowsShaftXAxis) {
  InstrumentPose pose;
  Line3 l = shaft_line(pose);
  EXPECT_LT(l.origin().norm(), 1e-15);
  EXPECT_LT((l.direction() - Vec3::UnitX()).norm(), 1e-15);

  pose.shaft = RigidTransform(Mat3(rot_y(90.0 * kDeg)), Vec3::Zero());
  l = shaft_line(pose);
  EXPECT_LT((l.direction() - Vec3(0, 0, -1)).norm(), 1e-12);
}

TEST(ShaftLine, ContainsCenterlineKeypoints) {
  const InstrumentModel model = InstrumentModel::default_model();
  std::mt19937_64 rng(15);
  for (int i = 0; i < 100; ++i) {
    const InstrumentPose pose = random_pose(rng);
    const Line3 l = shaft_line(pose);
    const auto kps = keypoints_3d(pose, model);
    for (std::size_t k = 0; k < model.keypoints.size(); ++k) {
      const ModelKeypoint& mk = model.keypoints[k];
      if (mk.part != Part::shaft || mk.position.tail<2>().norm() > 0.0) continue;
      EXPECT_LT(point_line_distance(kps[k].position, l), 1e-9);
    }
  }
}

TEST(RcmForward, ZeroJointsPointAlongRcmX) {
  const InstrumentModel model = InstrumentModel::default_model();
  std::mt19937_64 rng(16);
  const RigidTransform rcm = RigidTransform::from_matrix(oracle::random_hom(rng, 80.0));
  const Line3 l = shaft_line(rcm_forward(JointState{}, rcm, model));
  EXPECT_LT(point_line_distance(rcm.translation(), l), 1e-12);
  EXPECT_LT((l.direction() - rcm.rotation().col(0)).norm(), 1e-12);
}

TEST(RcmForward, PureInsertion) {
  const InstrumentModel model = InstrumentModel::default_model();
  std::mt19937_64 rng(17);
  const RigidTransform rcm = RigidTransform::from_matrix(oracle::random_hom(rng, 80.0));
  JointState j;
  j.insertion = 50.0;
  const InstrumentPose pose = rcm_forward(j, rcm, model);
  EXPECT_LT((pose.shaft.translation() - rcm.apply(Vec3(50, 0, 0))).norm(), 1e-12);
}

TEST(RcmForward, MatchesExplicitChain) {
  const InstrumentModel model = InstrumentModel::default_model();
  std::mt19937_64 rng(18);
  std::uniform_real_distribution<double> ang(-1.0, 1.0), ins(0.0, 150.0);
  for (int i = 0; i < 50; ++i) {
    const M4 rcm = oracle::random_hom(rng, 80.0);
    JointState j{ang(rng), ang(rng), ins(rng), ang(rng), ang(rng), 0.4, -0.2};
    const M4 expected = rcm * oracle::hom_rot_z(j.yaw) * oracle::hom_rot_y(j.pitch) *
                        oracle::hom_trans(j.insertion, 0, 0) * oracle::hom_rot_x(j.roll);
    const InstrumentPose pose = rcm_forward(j, RigidTransform::from_matrix(rcm), model);
    EXPECT_LT((pose.shaft.matrix() - expected).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_EQ(pose.wrist_pitch, j.wrist_pitch);
    EXPECT_EQ(pose.jaw_left, j.jaw_left);
  }
}

TEST(RcmForward, ShaftAlwaysPassesThroughRcm) {
  const InstrumentModel model = InstrumentModel::default_model();
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> ang(-std::numbers::pi, std::numbers::pi), ins(0.0, 200.0);
  const RigidTransform rcm = RigidTransform::from_matrix(oracle::random_hom(rng, 100.0));
  for (int i = 0; i < 100; ++i) {
    JointState j{ang(rng), ang(rng), ins(rng), ang(rng), ang(rng), 0.5, 0.1};
    EXPECT_LT(point_line_distance(rcm.translation(), shaft_line(rcm_forward(j, rcm, model))), 1e-9);
  }
}

TEST(Keypoints, IdentityPoseShaftOrigin) {
  const InstrumentModel model = InstrumentModel::default_model();
  const auto kps = keypoints_3d(InstrumentPose{}, model);
  ASSERT_EQ(kps.size(), 7u);
  EXPECT_EQ(kps[2].label, "shaft_distal");
  EXPECT_LT(kps[2].position.norm(), 1e-15);
  EXPECT_EQ(kps[4].label, "wrist_pin");
  EXPECT_LT((kps[4].position - Vec3(model.wrist_offset, 3.0, 0.0)).norm(), 1e-15);
}

TEST(Keypoints, TipAtLinkLengthSumWhenStraight) {
  const InstrumentModel model = InstrumentModel::default_model();
  const InstrumentPose pose;
  const auto kps = keypoints_3d(pose, model);
  const Vec3 expected(model.wrist_offset + model.gripper_length, 0, 0);
  EXPECT_LT((kps[5].position - expected).norm(), 1e-12);
  EXPECT_LT((kps[6].position - expected).norm(), 1e-12);
  EXPECT_LT((tool_tip(pose, model) - expected).norm(), 1e-12);
}

TEST(Keypoints, MatchPerPointMatrixApplication) {
  const InstrumentModel model = InstrumentModel::default_model();
  std::mt19937_64 rng(20);
  for (int i = 0; i < 100; ++i) {
    const InstrumentPose pose = random_pose(rng);
    const M4 wrist = wrist_chain(pose, model);
    const M4 frames[4] = {pose.shaft.matrix(), wrist, wrist * oracle::hom_rot_z(pose.jaw_left),
                          wrist * oracle::hom_rot_z(pose.jaw_right)};
    const auto kps = keypoints_3d(pose, model);
    for (std::size_t k = 0; k < kps.size(); ++k) {
      const auto& mk = model.keypoints[k];
      const Vec3 expected = oracle::hom_apply(frames[static_cast<int>(mk.part)], mk.position);
      EXPECT_LT((kps[k].position - expected).norm(), 1e-9);
      EXPECT_EQ(kps[k].label, mk.label);
    }
  }
}

TEST(Keypoints, JawSwapReflectsGripperAcrossBisectorPlane) {
  const InstrumentModel model = InstrumentModel::default_model();
  std::mt19937_64 rng(21);
  for (int i = 0; i < 50; ++i) {
    InstrumentPose pose = random_pose(rng);
    InstrumentPose swapped = pose;
    swapped.jaw_left = -pose.jaw_right;
    swapped.jaw_right = -pose.jaw_left;
    const RigidTransform wrist = part_transforms(pose, model).wrist;
    auto local = [&](const InstrumentPose& p, const char* label) {
      for (const auto& kp : keypoints_3d(p, model)) {
        if (kp.label == label) return Vec3(wrist.inverse().apply(kp.position));
      }
      return Vec3(Vec3::Constant(NAN));
    };
    const Vec3 flip(1, -1, 1);
    EXPECT_LT((local(swapped, "left_tip") - local(pose, "right_tip").cwiseProduct(flip)).norm(), 1e-9);
    EXPECT_LT((local(swapped, "right_tip") - local(pose, "left_tip").cwiseProduct(flip)).norm(), 1e-9);
  }
}

TEST(Validation, JointStateAndModel) {
  JointState j;
  j.jaw_left = 0.1;
  j.jaw_right = 0.2;
  EXPECT_THROW(j.validate(), Error);
  j.jaw_right = 0.0;
  j.insertion = -1.0;
  EXPECT_THROW(j.validate(), Error);
  j.insertion = 0.0;
  EXPECT_NO_THROW(j.validate());

  InstrumentModel m = InstrumentModel::default_model();
  EXPECT_NO_THROW(m.validate());
  m.keypoints.push_back(m.keypoints.front());
  EXPECT_THROW(m.validate(), Error);
  m = InstrumentModel::default_model();
  m.gripper_length = 0.0;
  EXPECT_THROW(m.validate(), Error);
  EXPECT_EQ(part_from_name("w"), Part::wrist);
  EXPECT_THROW(part_from_name("x"), Error);
}

}  // namespace
}  // namespace rcmcal
