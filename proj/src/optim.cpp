#include "rcmcal/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>
#include <unordered_map>

#include "parallel.hpp"
#include "rcmcal/errors.hpp"

namespace rcmcal {

namespace {

using Jac2 = Eigen::Matrix<double, 2, 9>;
using Jac3 = Eigen::Matrix<double, 3, 9>;

constexpr double kArticulationLimit = std::numbers::pi / 2.0;
constexpr double kArmijo = 1e-4;
constexpr double kShrink = 0.5;
constexpr int kMaxBacktracks = 40;
constexpr double kDamping = 1e-6;
constexpr double kRelativeImprovement = 1e-12;
constexpr double kAbsoluteImprovement = 1e-16;  // px^2
constexpr int kShaftOnlyEpochs = 1;  // phase-1 epochs that hold the articulation fixed

struct ProjectedKeypoint {
  std::string label;
  Vec2 pixel;
  Jac2 jacobian;
};

// Camera-frame position of a model keypoint and its derivative with respect
// to the local parameters.
Vec3 keypoint_with_jacobian(const InstrumentPose& pose, const InstrumentModel& model,
                            const ModelKeypoint& kp, Jac3& dp) {
  Vec3 q = kp.position;
  Vec3 dq_pitch = Vec3::Zero();
  Vec3 dq_jaw = Vec3::Zero();
  int jaw_column = -1;
  if (kp.part != Part::shaft) {
    const RigidTransform wrist = shaft_to_wrist(pose.wrist_pitch, model);
    Vec3 m = kp.position;
    if (kp.part == Part::left_jaw || kp.part == Part::right_jaw) {
      const bool left = kp.part == Part::left_jaw;
      const RigidTransform jaw = wrist_to_jaw(left ? pose.jaw_left : pose.jaw_right);
      m = jaw.apply(kp.position);
      dq_jaw = wrist.rotation() * jaw.rotation() * Vec3::UnitZ().cross(kp.position);
      jaw_column = left ? 7 : 8;
    }
    q = wrist.apply(m);
    dq_pitch = wrist.rotation() * Vec3::UnitY().cross(m);
  }
  const Mat3 rs = pose.shaft.rotation();
  dp.setZero();
  dp.block<3, 3>(0, 0) = -rs * skew(q);
  dp.block<3, 3>(0, 3) = rs;
  dp.col(6) = rs * dq_pitch;
  if (jaw_column >= 0) dp.col(jaw_column) = rs * dq_jaw;
  return pose.shaft.apply(q);
}

std::vector<ProjectedKeypoint> project_model(const InstrumentPose& pose, const InstrumentModel& model,
                                             const PinholeCamera& cam, const std::set<std::string>* subset) {
  std::vector<ProjectedKeypoint> out;
  out.reserve(model.keypoints.size());
  for (const auto& kp : model.keypoints) {
    if (subset && !subset->contains(kp.label)) continue;
    Jac3 dp;
    const Vec3 p = keypoint_with_jacobian(pose, model, kp, dp);
    out.push_back({kp.label, project(cam, p), project_jacobian(cam, p) * dp});
  }
  return out;
}

// Sum of w * |r|^2 over residual blocks with its gradient and Gauss-Newton
// curvature.
struct Objective {
  double value = 0.0;
  PoseVector gradient = PoseVector::Zero();
  PoseMatrix curvature = PoseMatrix::Zero();

  template <int Rows>
  void add(double w, const Eigen::Matrix<double, Rows, 1>& r, const Eigen::Matrix<double, Rows, 9>& j) {
    value += w * r.squaredNorm();
    gradient += 2.0 * w * j.transpose() * r;
    curvature += 2.0 * w * j.transpose() * j;
  }
};

void add_keypoint_terms(const InstrumentPose& pose, const InstrumentModel& model, const FrameObservation& obs,
                        KeypointLossKind kind, double weight, Objective& out) {
  if (obs.keypoints.empty()) return;
  if (kind == KeypointLossKind::labeled) {
    std::unordered_map<std::string, const ModelKeypoint*> by_label;
    for (const auto& kp : model.keypoints) by_label.emplace(kp.label, &kp);
    std::vector<std::pair<Vec2, Jac2>> pairs;
    for (const auto& det : obs.keypoints) {
      const auto it = by_label.find(det.label);
      if (it == by_label.end()) continue;
      Jac3 dp;
      const Vec3 p = keypoint_with_jacobian(pose, model, *it->second, dp);
      pairs.emplace_back(project(obs.camera, p) - det.pixel, project_jacobian(obs.camera, p) * dp);
    }
    const double w = weight / static_cast<double>(std::max<std::size_t>(pairs.size(), 1));
    for (const auto& [r, j] : pairs) out.add<2>(w, r, j);
    return;
  }

  std::set<std::string> detected;
  for (const auto& det : obs.keypoints) detected.insert(det.label);
  const bool any_match = std::any_of(model.keypoints.begin(), model.keypoints.end(),
                                     [&](const ModelKeypoint& kp) { return detected.contains(kp.label); });
  const auto projected = project_model(pose, model, obs.camera, any_match ? &detected : nullptr);
  if (projected.empty()) return;

  const double w_model = 0.5 * weight / static_cast<double>(projected.size());
  for (const auto& pm : projected) {
    const DetectedKeypoint* nearest = &obs.keypoints.front();
    for (const auto& det : obs.keypoints) {
      if ((pm.pixel - det.pixel).squaredNorm() < (pm.pixel - nearest->pixel).squaredNorm()) nearest = &det;
    }
    out.add<2>(w_model, Vec2(pm.pixel - nearest->pixel), pm.jacobian);
  }
  const double w_detected = 0.5 * weight / static_cast<double>(obs.keypoints.size());
  for (const auto& det : obs.keypoints) {
    const ProjectedKeypoint* nearest = &projected.front();
    for (const auto& pm : projected) {
      if ((pm.pixel - det.pixel).squaredNorm() < (nearest->pixel - det.pixel).squaredNorm()) nearest = &pm;
    }
    out.add<2>(w_detected, Vec2(nearest->pixel - det.pixel), nearest->jacobian);
  }
}

// Perpendicular residual of `p_rcm` from the shaft line and its Jacobian with
// respect to the shaft twist.
Vec3 rcm_residual(const InstrumentPose& pose, const Vec3& p_rcm, Jac3& j) {
  const Mat3 r = pose.shaft.rotation();
  const Vec3 x = r.col(0);
  const Vec3 d = p_rcm - pose.shaft.translation();
  const Mat3 proj = Mat3::Identity() - x * x.transpose();
  j.setZero();
  j.block<3, 3>(0, 0) = (x.dot(d) * skew(x) + x * d.transpose() * skew(x)) * r;
  j.block<3, 3>(0, 3) = -proj * r;
  return proj * d;
}

struct FrameProblem {
  const InstrumentModel& model;
  const FrameObservation& obs;
  KeypointLossKind kind;
  double kpt_weight;
  const Vec3* p_rcm;
  double rcm_weight;

  Objective evaluate(const InstrumentPose& pose) const {
    Objective o;
    add_keypoint_terms(pose, model, obs, kind, kpt_weight, o);
    if (p_rcm) {
      Jac3 j;
      const Vec3 r = rcm_residual(pose, *p_rcm, j);
      o.add<3>(rcm_weight, r, j);
    }
    return o;
  }

  double value(const InstrumentPose& pose) const {
    try {
      return evaluate(pose).value;
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::behind_camera) return std::numeric_limits<double>::infinity();
      throw;
    }
  }
};

// One damped Gauss-Newton direction followed by an Armijo backtracking search.
// With `shaft_only` the articulation block is left untouched. Returns false
// when no step strictly decreases the objective.
bool descent_step(const FrameProblem& problem, InstrumentPose& pose, Objective& current,
                  bool shaft_only = false) {
  if (!(current.value > 0.0) || !current.gradient.allFinite()) return false;
  PoseMatrix lhs = current.curvature;
  PoseVector gradient = current.gradient;
  if (shaft_only) {
    lhs.bottomRows<3>().setZero();
    lhs.rightCols<3>().setZero();
    lhs.bottomRightCorner<3, 3>().setIdentity();
    gradient.tail<3>().setZero();
  }
  lhs.diagonal() *= 1.0 + kDamping;
  lhs.diagonal().array() += 1e-12 * (current.curvature.trace() / 9.0 + 1.0);
  PoseVector direction = lhs.ldlt().solve(-gradient);
  double slope = gradient.dot(direction);
  if (!direction.allFinite() || !(slope < 0.0)) {
    direction = -gradient;
    slope = -gradient.squaredNorm();
  }
  if (!(slope < 0.0)) return false;

  double t = 1.0;
  for (int k = 0; k < kMaxBacktracks; ++k, t *= kShrink) {
    const InstrumentPose trial = retract(pose, t * direction);
    const double value = problem.value(trial);
    if (value < current.value && value <= current.value + kArmijo * t * slope) {
      pose = trial;
      current = problem.evaluate(pose);
      return true;
    }
  }
  return false;
}

void check_frames(std::span<const FrameObservation> frames, std::size_t poses, const char* who) {
  if (frames.size() != poses) {
    throw Error(ErrorKind::invalid_argument, std::string(who) + ": frames and poses differ in length");
  }
}

}  // namespace

void LossWeights::validate() const {
  if (!(kpt > 0.0) || !(rcm >= 0.0) || !(silh >= 0.0) || !(px >= 0.0)) {
    throw Error(ErrorKind::invalid_argument, "LossWeights: kpt must be > 0 and all weights >= 0");
  }
  if (silh != 0.0 || px != 0.0) {
    throw Error(ErrorKind::invalid_argument, "LossWeights: silhouette and photometric terms are not available");
  }
}

void OptimizerOptions::validate() const {
  weights.validate();
  if (epochs < 1 || steps_per_epoch < 1 || patience < 1 || max_iterations < 1 || threads < 0) {
    throw Error(ErrorKind::invalid_argument, "OptimizerOptions: counts must be positive");
  }
  if (!(rcm.residual_threshold > 0.0) || rcm.max_rounds < 1) {
    throw Error(ErrorKind::invalid_argument, "OptimizerOptions: invalid RCM options");
  }
}

LossAndGradient keypoint_loss(const InstrumentPose& pose, const InstrumentModel& model,
                              const FrameObservation& obs, KeypointLossKind kind) {
  Objective o;
  add_keypoint_terms(pose, model, obs, kind, 1.0, o);
  return {o.value, o.gradient};
}

RcmLoss rcm_loss(std::span<const InstrumentPose> poses, const Vec3& p_rcm) {
  RcmLoss out;
  if (poses.empty()) {
    throw Error(ErrorKind::invalid_argument, "rcm_loss: at least one pose required");
  }
  const double n = static_cast<double>(poses.size());
  out.gradients.reserve(poses.size());
  for (const auto& pose : poses) {
    Jac3 j;
    const Vec3 r = rcm_residual(pose, p_rcm, j);
    out.value += r.squaredNorm() / n;
    out.gradients.push_back((2.0 / n) * j.leftCols<6>().transpose() * r);
  }
  return out;
}

InstrumentPose retract(const InstrumentPose& pose, const PoseVector& delta) {
  InstrumentPose out;
  out.shaft = pose.shaft * exp_map(Twist{delta.segment<3>(0), delta.segment<3>(3)});
  const auto clamp = [](double a) { return std::clamp(a, -kArticulationLimit, kArticulationLimit); };
  out.wrist_pitch = clamp(pose.wrist_pitch + delta(6));
  out.jaw_left = clamp(pose.jaw_left + delta(7));
  out.jaw_right = clamp(pose.jaw_right + delta(8));
  if (out.jaw_left < out.jaw_right) {
    out.jaw_left = out.jaw_right = 0.5 * (out.jaw_left + out.jaw_right);
  }
  return out;
}

std::vector<double> shaft_rcm_distances(std::span<const InstrumentPose> poses, const Vec3& p_rcm) {
  std::vector<double> out;
  out.reserve(poses.size());
  for (const auto& pose : poses) out.push_back(point_line_distance(p_rcm, shaft_line(pose)));
  return out;
}

Phase1Result optimize_phase1(std::span<const FrameObservation> frames,
                             std::span<const InstrumentPose> init, const InstrumentModel& model,
                             const OptimizerOptions& options) {
  options.validate();
  check_frames(frames, init.size(), "optimize_phase1");
  if (frames.size() < 2) {
    throw Error(ErrorKind::invalid_argument, "optimize_phase1: at least two frames required");
  }
  const std::size_t n = frames.size();
  Phase1Result result;
  result.poses.assign(init.begin(), init.end());
  OptimizationReport& report = result.report;
  report.final_loss.assign(n, 0.0);
  report.iterations.assign(n, 0);
  report.loss_history.assign(n, {});

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    detail::parallel_for(n, options.threads, [&](std::size_t i) {
      const FrameProblem problem{model, frames[i], options.loss_kind, options.weights.kpt, nullptr, 0.0};
      InstrumentPose& pose = result.poses[i];
      Objective current = problem.evaluate(pose);
      if (epoch == 0) report.loss_history[i].push_back(current.value);
      if (frames[i].eligible()) {
        for (int step = 0; step < options.steps_per_epoch; ++step) {
          ++report.iterations[i];
          if (!descent_step(problem, pose, current, epoch < kShaftOnlyEpochs)) break;
          report.loss_history[i].push_back(current.value);
        }
      }
      report.final_loss[i] = current.value;
    });

    std::vector<Line3> lines;
    lines.reserve(n);
    for (const auto& pose : result.poses) lines.push_back(shaft_line(pose));
    if (n >= 3) {
      result.rcm = estimate_rcm_robust(lines, options.rcm);
    } else {
      result.rcm = RcmEstimate{};
      result.rcm.point = estimate_rcm(lines);
      result.rcm.inliers.assign(n, 1);
      double sum = 0.0;
      for (const auto& l : lines) sum += std::pow(point_line_distance(result.rcm.point, l), 2);
      result.rcm.rms_residual = std::sqrt(sum / static_cast<double>(n));
      result.rcm.rounds = 1;
      result.rcm.low_confidence = true;
    }
    report.rcm_trajectory.push_back(result.rcm.point);
    report.inlier_masks.push_back(result.rcm.inliers);
  }
  return result;
}

Phase2Result optimize_phase2(std::span<const FrameObservation> frames,
                             std::span<const InstrumentPose> poses, const Vec3& p_rcm,
                             const InstrumentModel& model, const OptimizerOptions& options) {
  options.validate();
  check_frames(frames, poses.size(), "optimize_phase2");
  const std::size_t n = frames.size();
  Phase2Result result;
  result.poses.assign(poses.begin(), poses.end());
  OptimizationReport& report = result.report;
  report.final_loss.assign(n, 0.0);
  report.iterations.assign(n, 0);
  report.loss_history.assign(n, {});

  detail::parallel_for(n, options.threads, [&](std::size_t i) {
    const FrameProblem problem{model, frames[i], options.loss_kind, options.weights.kpt, &p_rcm,
                               options.weights.rcm};
    InstrumentPose& pose = result.poses[i];
    Objective current = problem.evaluate(pose);
    report.loss_history[i].push_back(current.value);
    if (frames[i].eligible()) {
      int stalled = 0;
      for (int it = 0; it < options.max_iterations && stalled < options.patience; ++it) {
        ++report.iterations[i];
        const double before = current.value;
        if (descent_step(problem, pose, current)) report.loss_history[i].push_back(current.value);
        const bool improved = before - current.value > kRelativeImprovement * before + kAbsoluteImprovement;
        stalled = improved ? 0 : stalled + 1;
      }
    }
    report.final_loss[i] = current.value;
  });
  return result;
}

}  // namespace rcmcal
