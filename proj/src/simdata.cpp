#include "rcmcal/simdata.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "rcmcal/errors.hpp"

namespace rcmcal {

namespace {

int sign_of(double v) { return (v > 0.0) - (v < 0.0); }

void keep_jaw_order(JointState& q) {
  if (q.jaw_left < q.jaw_right) q.jaw_left = q.jaw_right = 0.5 * (q.jaw_left + q.jaw_right);
}

std::vector<JointState> random_walk(const RandomWalk& walk, int frames, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  const JointArray center = walk.center.to_array();
  JointArray q = center;
  std::vector<JointState> out;
  out.reserve(static_cast<std::size_t>(frames));
  for (int k = 0; k < frames; ++k) {
    if (k > 0) {
      for (std::size_t j = 0; j < q.size(); ++j) {
        const double a = walk.amplitude[j];
        q[j] += walk.reversion * (center[j] - q[j]) + walk.step * a * gauss(rng);
        q[j] = std::clamp(q[j], center[j] - a, center[j] + a);
      }
    }
    JointState s = JointState::from_array(q);
    keep_jaw_order(s);
    out.push_back(s);
  }
  return out;
}

std::vector<JointState> resample_waypoints(std::span<const JointState> waypoints, int frames) {
  std::vector<JointState> out;
  out.reserve(static_cast<std::size_t>(frames));
  const double last = static_cast<double>(waypoints.size() - 1);
  for (int k = 0; k < frames; ++k) {
    const double s = frames > 1 ? last * k / (frames - 1) : 0.0;
    const auto i = std::min(static_cast<std::size_t>(s), waypoints.size() - 1);
    const std::size_t j = std::min(i + 1, waypoints.size() - 1);
    const double f = s - static_cast<double>(i);
    const JointArray a = waypoints[i].to_array();
    const JointArray b = waypoints[j].to_array();
    JointArray q;
    for (std::size_t n = 0; n < q.size(); ++n) q[n] = (1.0 - f) * a[n] + f * b[n];
    out.push_back(JointState::from_array(q));
  }
  return out;
}

bool same_camera(const PinholeCamera& a, const PinholeCamera& b) {
  return a.fx == b.fx && a.fy == b.fy && a.cx == b.cx && a.cy == b.cy && a.width == b.width && a.height == b.height;
}

}  // namespace

void NoiseModel::validate() const {
  for (std::size_t j = 0; j < JointState::size; ++j) {
    if (!std::isfinite(joint_bias[j]) || !(backlash_width[j] >= 0.0)) {
      throw Error(ErrorKind::invalid_config, "noise: bias must be finite and backlash widths >= 0");
    }
    if (!JointState::is_revolute(j) && backlash_width[j] != 0.0) {
      throw Error(ErrorKind::invalid_config, "noise: backlash applies to revolute joints only");
    }
  }
  if (!(keypoint_sigma >= 0.0)) throw Error(ErrorKind::invalid_config, "noise: keypoint sigma must be >= 0");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw Error(ErrorKind::invalid_config, "noise: dropout must be in [0, 1)");
}

RigidTransform ScenarioConfig::default_camera_from_base() {
  return {Mat3(rot_z(0.5) * rot_y(-0.3) * rot_x(2.2)), Vec3(80.0, -120.0, 350.0)};
}

RigidTransform ScenarioConfig::default_rcm_frame() {
  // Pivot up and to the left of the view, shaft pointing at the scene centre.
  const Vec3 origin(-25.0, -15.0, 45.0);
  const Vec3 x = (Vec3(0.0, 0.0, 110.0) - origin).normalized();
  const Vec3 y = Vec3::UnitZ().cross(x).normalized();
  Mat3 r;
  r << x, y, x.cross(y);
  return {r, origin};
}

void ScenarioConfig::validate() const {
  if (frames < 3) throw Error(ErrorKind::invalid_config, "scenario: at least 3 frames required");
  try {
    camera.validate();
    if (rig) rig->validate();
    model.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::invalid_config, std::string("scenario: ") + e.what());
  }
  if (rig && !same_camera(rig->left, camera)) {
    throw Error(ErrorKind::invalid_config, "scenario: rig.left must equal camera");
  }
  noise.validate();
  if (trajectory.kind == TrajectorySpec::Kind::waypoints) {
    if (trajectory.waypoints.empty()) throw Error(ErrorKind::invalid_config, "scenario: waypoint list is empty");
    for (const auto& w : trajectory.waypoints) {
      if (!(w.jaw_left >= w.jaw_right) || !(w.insertion >= 0.0)) {
        throw Error(ErrorKind::invalid_config, "scenario: waypoint needs jaw_left >= jaw_right and insertion >= 0");
      }
    }
  } else {
    const RandomWalk& w = trajectory.walk;
    if (!(w.reversion >= 0.0 && w.reversion <= 1.0) || !(w.step >= 0.0)) {
      throw Error(ErrorKind::invalid_config, "scenario: walk reversion must be in [0, 1] and step >= 0");
    }
    for (double a : w.amplitude) {
      if (!(a >= 0.0)) throw Error(ErrorKind::invalid_config, "scenario: walk amplitudes must be >= 0");
    }
    if (!(w.center.insertion - w.amplitude[2] >= 0.0)) {
      throw Error(ErrorKind::invalid_config, "scenario: walk allows negative insertion");
    }
  }
}

std::vector<JointState> sample_trajectory(const ScenarioConfig& cfg, std::mt19937_64& rng) {
  if (cfg.trajectory.kind == TrajectorySpec::Kind::waypoints) {
    return resample_waypoints(cfg.trajectory.waypoints, cfg.frames);
  }
  return random_walk(cfg.trajectory.walk, cfg.frames, rng);
}

std::vector<JointState> reported_joint_sequence(std::span<const JointState> truth, const NoiseModel& noise) {
  std::vector<JointState> out;
  out.reserve(truth.size());
  std::array<int, JointState::size> direction{};
  // Seed each joint's direction with its first motion.
  for (std::size_t j = 0; j < JointState::size; ++j) {
    for (std::size_t k = 1; k < truth.size() && direction[j] == 0; ++k) {
      direction[j] = sign_of(truth[k].to_array()[j] - truth[k - 1].to_array()[j]);
    }
  }
  for (std::size_t k = 0; k < truth.size(); ++k) {
    const JointArray q = truth[k].to_array();
    JointArray r = q;
    for (std::size_t j = 0; j < r.size(); ++j) {
      if (k > 0) {
        const int s = sign_of(q[j] - truth[k - 1].to_array()[j]);
        if (s != 0) direction[j] = s;
      }
      r[j] += noise.joint_bias[j] + 0.5 * noise.backlash_width[j] * direction[j];
    }
    out.push_back(JointState::from_array(r));
  }
  return out;
}

std::vector<SyntheticFrame> generate_sequence(const ScenarioConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const std::vector<JointState> truth = sample_trajectory(cfg, rng);
  const std::vector<JointState> reported = reported_joint_sequence(truth, cfg.noise);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const auto draw_noise = [&] {
    if (cfg.noise.keypoint_sigma == 0.0) return Vec2::Zero().eval();
    const double u = gauss(rng);
    const double v = gauss(rng);
    return Vec2(cfg.noise.keypoint_sigma * u, cfg.noise.keypoint_sigma * v);
  };
  const RigidTransform base_from_camera = invert(cfg.camera_from_base);

  std::vector<SyntheticFrame> frames;
  frames.reserve(truth.size());
  for (std::size_t k = 0; k < truth.size(); ++k) {
    SyntheticFrame f;
    f.t = static_cast<double>(k);
    f.true_joints = truth[k];
    f.reported_joints = reported[k];
    f.true_pose = rcm_forward(truth[k], cfg.rcm_frame, cfg.model);
    f.true_end_effector = end_effector_pose(f.true_pose, cfg.model);
    f.reported_base_from_ee = base_from_camera * cfg.noise.base_offset * f.true_end_effector;
    f.true_tip = tool_tip(f.true_end_effector, cfg.model);
    f.observation.camera = cfg.camera;

    const auto visible = [&](const PinholeCamera& cam, const Vec3& p, Vec2& px) {
      if (!(p.z() > 1e-6)) return false;
      px = project(cam, p);
      return cam.in_image(px);
    };
    int in_view = 0;
    for (const auto& kp : keypoints_3d(f.true_pose, cfg.model)) {
      const Vec2 noise = draw_noise();
      const bool dropped = cfg.noise.dropout > 0.0 && uniform(rng) < cfg.noise.dropout;
      Vec2 px;
      if (!visible(cfg.camera, kp.position, px)) continue;
      ++in_view;
      if (dropped) continue;
      f.observation.keypoints.push_back({kp.label, px + noise});
      f.keypoint_noise.push_back(noise);
    }
    Vec2 tip_px;
    const Vec2 tip_noise = draw_noise();
    if (!visible(cfg.camera, f.true_tip, tip_px)) {
      throw Error(ErrorKind::frustum_violation, "generate_sequence: tool tip leaves the image at frame " + std::to_string(k));
    }
    f.tip_left = tip_px + tip_noise;
    if (cfg.rig) {
      const Vec2 right_noise = draw_noise();
      Vec2 right_px;
      if (!visible(cfg.rig->right, cfg.rig->right_from_left.apply(f.true_tip), right_px)) {
        throw Error(ErrorKind::frustum_violation,
                    "generate_sequence: tool tip leaves the right image at frame " + std::to_string(k));
      }
      f.tip_right = right_px + right_noise;
    }
    if (in_view == 0) {
      throw Error(ErrorKind::frustum_violation, "generate_sequence: no keypoint in view at frame " + std::to_string(k));
    }
    frames.push_back(std::move(f));
  }
  return frames;
}

GroundTruthBundle ground_truth_bundle(const ScenarioConfig& cfg, std::span<const SyntheticFrame> frames) {
  GroundTruthBundle gt;
  gt.camera_from_base = cfg.camera_from_base;
  gt.effective_camera_from_base = invert(cfg.noise.base_offset) * cfg.camera_from_base;
  gt.rcm_point = cfg.rcm_frame.translation();
  gt.tips.reserve(frames.size());
  for (const auto& f : frames) gt.tips.push_back(f.true_tip);
  return gt;
}

}  // namespace rcmcal
