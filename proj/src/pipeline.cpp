#include "rcmcal/pipeline.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "rcmcal/errors.hpp"

namespace rcmcal {

namespace {

class Fnv1a {
 public:
  void add(double v) { add(std::bit_cast<std::uint64_t>(v)); }
  void add(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      hash_ ^= (v >> (8 * i)) & 0xffu;
      hash_ *= 0x100000001b3ull;
    }
  }
  void add(const std::string& s) {
    for (unsigned char c : s) {
      hash_ ^= c;
      hash_ *= 0x100000001b3ull;
    }
    add(static_cast<std::uint64_t>(s.size()));
  }
  std::uint64_t value() const { return hash_; }

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ull;
};

double mean(std::span<const double> v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Linear-interpolation quantile of sorted data.
double quantile(std::span<const double> sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double labeled_rms(const InstrumentPose& pose, const InstrumentModel& model, const FrameObservation& obs) {
  std::unordered_map<std::string, Vec3> points;
  for (const auto& kp : keypoints_3d(pose, model)) points.emplace(kp.label, kp.position);
  double sum = 0.0;
  int count = 0;
  for (const auto& det : obs.keypoints) {
    const auto it = points.find(det.label);
    if (it == points.end()) continue;
    sum += (project(obs.camera, it->second) - det.pixel).squaredNorm();
    ++count;
  }
  return count ? std::sqrt(sum / count) : 0.0;
}

std::optional<InstrumentPose> initial_pose(const SequenceFrame& frame, const InstrumentModel& model,
                                           const PinholeCamera& camera) {
  InstrumentPose local;
  local.wrist_pitch = frame.joints.wrist_pitch;
  local.jaw_left = frame.joints.jaw_left;
  local.jaw_right = frame.joints.jaw_right;
  local = retract(local, PoseVector::Zero());

  std::unordered_map<std::string, Vec3> object;
  for (const auto& kp : keypoints_3d(local, model)) object.emplace(kp.label, kp.position);
  std::vector<Correspondence2D3D> corrs;
  for (const auto& det : frame.keypoints) {
    const auto it = object.find(det.label);
    if (it != object.end()) corrs.push_back({det.label, det.pixel, it->second});
  }
  try {
    local.shaft = solve_epnp(corrs, camera);
  } catch (const Error& e) {
    switch (e.kind()) {
      case ErrorKind::insufficient_points:
      case ErrorKind::collinear_points:
      case ErrorKind::all_candidates_behind_camera:
      case ErrorKind::invalid_argument:
        return std::nullopt;
      default:
        throw;
    }
  }
  return local;
}

}  // namespace

std::uint64_t Sequence::fingerprint() const {
  Fnv1a h;
  h.add(camera.fx);
  h.add(camera.fy);
  h.add(camera.cx);
  h.add(camera.cy);
  h.add(static_cast<std::uint64_t>(frames.size()));
  for (const auto& f : frames) {
    h.add(f.t);
    for (const auto& kp : f.keypoints) {
      h.add(kp.label);
      h.add(kp.pixel.x());
      h.add(kp.pixel.y());
    }
    for (double q : f.joints.to_array()) h.add(q);
    const Quat& r = f.reported_base_from_ee.quaternion();
    for (double v : {r.w(), r.x(), r.y(), r.z()}) h.add(v);
    for (int i = 0; i < 3; ++i) h.add(f.reported_base_from_ee.translation()(i));
  }
  return h.value();
}

Sequence make_sequence(const ScenarioConfig& cfg, std::span<const SyntheticFrame> frames) {
  Sequence seq;
  seq.camera = cfg.camera;
  seq.rig = cfg.rig;
  seq.model = cfg.model;
  seq.nominal_camera_from_base = cfg.camera_from_base;
  seq.frames.reserve(frames.size());
  for (const auto& f : frames) {
    SequenceFrame out;
    out.t = f.t;
    out.keypoints = f.observation.keypoints;
    out.joints = f.reported_joints;
    out.reported_base_from_ee = f.reported_base_from_ee;
    out.tip_left = f.tip_left;
    out.tip_right = f.tip_right;
    out.gt = FrameTruth{f.true_tip, project(cfg.camera, f.true_tip), f.true_end_effector, f.true_joints};
    seq.frames.push_back(std::move(out));
  }
  return seq;
}

CalibrationResult calibrate(const Sequence& seq, const CalibrationConfig& config) {
  config.optimizer.validate();
  seq.camera.validate();
  seq.model.validate();
  const InstrumentModel& model = seq.model;
  const std::size_t total = seq.frames.size();

  // (1) Per-frame initialization from the reported articulation.
  std::vector<std::size_t> used;
  std::vector<FrameObservation> observations;
  std::vector<InstrumentPose> init;
  for (std::size_t i = 0; i < total; ++i) {
    const SequenceFrame& f = seq.frames[i];
    if (f.keypoints.size() < 4) continue;
    const auto pose = initial_pose(f, model, seq.camera);
    if (!pose) continue;
    used.push_back(i);
    observations.push_back({f.keypoints, seq.camera});
    init.push_back(*pose);
  }
  if (used.size() < 3) {
    throw Error(ErrorKind::too_few_inliers, "calibrate: fewer than 3 frames could be initialized");
  }

  CalibrationResult result;
  result.sequence_fingerprint = seq.fingerprint();
  CalibrationDiagnostics& diag = result.diagnostics;

  // (2) RCM from the initial shaft lines.
  std::vector<Line3> lines;
  for (const auto& p : init) lines.push_back(shaft_line(p));
  diag.initial_rcm = estimate_rcm_robust(lines, config.optimizer.rcm);
  diag.mean_rcm_distance_init = mean(shaft_rcm_distances(init, diag.initial_rcm.point));

  // (3) Two-phase refinement.
  Phase1Result p1 = optimize_phase1(observations, init, model, config.optimizer);
  diag.phase1_rcm = p1.rcm;
  diag.phase1 = std::move(p1.report);
  result.rcm = p1.rcm.point;
  diag.mean_rcm_distance_phase1 = mean(shaft_rcm_distances(p1.poses, result.rcm));
  Phase2Result p2 = optimize_phase2(observations, p1.poses, result.rcm, model, config.optimizer);
  diag.phase2 = std::move(p2.report);
  const std::vector<double> distances = shaft_rcm_distances(p2.poses, result.rcm);
  diag.mean_rcm_distance_phase2 = mean(distances);

  // (4) Outlier-pose exclusion.
  std::vector<double> rms(used.size());
  for (std::size_t k = 0; k < used.size(); ++k) rms[k] = labeled_rms(p2.poses[k], model, observations[k]);
  std::vector<double> sorted = rms;
  std::sort(sorted.begin(), sorted.end());
  const double q1 = quantile(sorted, 0.25);
  const double q3 = quantile(sorted, 0.75);
  const double rms_limit = std::max(q3 + config.exclusion_iqr_factor * (q3 - q1), config.exclusion_rms_floor_px);

  result.included.assign(total, 0);
  result.refined_end_effector.assign(total, RigidTransform{});
  result.refined_poses.assign(total, InstrumentPose{});
  diag.keypoint_rms.assign(total, std::numeric_limits<double>::quiet_NaN());
  std::vector<Vec3> src, dst;
  std::vector<std::size_t> kept;
  for (std::size_t k = 0; k < used.size(); ++k) {
    const std::size_t i = used[k];
    result.refined_poses[i] = p2.poses[k];
    result.refined_end_effector[i] = end_effector_pose(p2.poses[k], model);
    diag.keypoint_rms[i] = rms[k];
    if (rms[k] > rms_limit || distances[k] > config.optimizer.rcm.residual_threshold) continue;
    result.included[i] = 1;
    kept.push_back(i);
    src.push_back(seq.frames[i].reported_base_from_ee.translation());
    dst.push_back(result.refined_end_effector[i].translation());
  }
  if (kept.size() < 3) {
    throw Error(ErrorKind::too_few_inliers, "calibrate: fewer than 3 frames survive outlier exclusion");
  }

  // (5) Hand-eye from the end-effector origins.
  result.camera_from_base = kabsch_umeyama(src, dst);
  result.alignment_rmsd = alignment_rmsd(src, dst, result.camera_from_base);
  result.frames_used = static_cast<int>(kept.size());
  double angle = 0.0;
  for (std::size_t i : kept) {
    angle += rotation_distance(apply_calibration(result, seq.frames[i].reported_base_from_ee),
                               result.refined_end_effector[i]);
  }
  diag.rotation_agreement = angle / static_cast<double>(kept.size());
  return result;
}

RigidTransform apply_calibration(const CalibrationResult& result, const RigidTransform& base_from_ee) {
  return result.camera_from_base * base_from_ee;
}

ErrorSummary summarize(std::vector<double> values) {
  if (values.empty()) return {};
  ErrorSummary s;
  s.avg = mean(values);
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  s.median = n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
  return s;
}

MetricsReport evaluate_transform(const RigidTransform& camera_from_base, const Sequence& seq,
                                 std::span<const std::uint8_t> included) {
  MetricsReport report;
  std::vector<double> px, mm, e3;
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    const SequenceFrame& f = seq.frames[i];
    std::optional<Vec3> tip_ref;
    std::optional<Vec2> tip_ref_px;
    if (f.gt) {
      tip_ref = f.gt->tip;
      tip_ref_px = f.gt->tip_px;
    } else if (seq.rig && f.tip_left && f.tip_right) {
      tip_ref = triangulate(*seq.rig, *f.tip_left, *f.tip_right);
      tip_ref_px = *f.tip_left;
    }
    if (!tip_ref) {
      ++report.skipped;
      continue;
    }
    const Vec3 tip = tool_tip(camera_from_base * f.reported_base_from_ee, seq.model);
    FrameMetrics m;
    m.frame = static_cast<int>(i);
    m.err2d_px = (project(seq.camera, tip) - *tip_ref_px).norm();
    m.err2d_mm = m.err2d_px * px_to_mm_scale(seq.camera, tip_ref->z());
    m.err3d_mm = (tip - *tip_ref).norm();
    m.included = i < included.size() && included[i] != 0;
    px.push_back(m.err2d_px);
    mm.push_back(m.err2d_mm);
    e3.push_back(m.err3d_mm);
    report.frames.push_back(m);
  }
  report.err2d_px = summarize(px);
  report.err2d_mm = summarize(mm);
  report.err3d_mm = summarize(e3);
  return report;
}

MetricsReport evaluate(const CalibrationResult& result, const Sequence& seq) {
  const bool training = result.sequence_fingerprint == seq.fingerprint();
  return evaluate_transform(result.camera_from_base, seq,
                            training ? std::span<const std::uint8_t>(result.included) : std::span<const std::uint8_t>{});
}

}  // namespace rcmcal
