#include "rcmcal/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <initializer_list>
#include <sstream>
#include <string_view>

#include "rcmcal/errors.hpp"

namespace rcmcal {

namespace {

[[noreturn]] void fail(std::string_view where, const std::string& what) {
  throw Error(ErrorKind::invalid_config, std::string(where) + ": " + what);
}

// Runs a reader and reports library-level JSON errors as invalid_config.
template <class Fn>
auto guarded(std::string_view where, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Json::exception& e) {
    fail(where, e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::invalid_config) throw;
    fail(where, e.what());
  }
}

void check_object(const Json& j, std::string_view where, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) fail(where, "expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end()) {
      fail(where, "unknown key '" + it.key() + "'");
    }
  }
}

void check_schema(const Json& j, std::string_view where, bool required) {
  if (!j.contains("schema_version")) {
    if (required) fail(where, "missing schema_version");
    return;
  }
  const Json& v = j.at("schema_version");
  if (!v.is_number_integer() || v.get<int>() != kSchemaVersion) {
    fail(where, "unsupported schema_version (expected " + std::to_string(kSchemaVersion) + ")");
  }
}

double number(const Json& j) {
  if (!j.is_number()) throw Error(ErrorKind::invalid_config, "expected a number, got " + j.dump());
  return j.get<double>();
}

template <class T>
void optional_field(const Json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  const Json& v = j.at(key);
  if constexpr (std::is_same_v<T, double>) {
    out = number(v);
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) throw Error(ErrorKind::invalid_config, std::string(key) + ": expected an integer");
    out = v.get<T>();
  } else {
    out = v.get<T>();
  }
}

template <int N>
Json vec_to_json(const Eigen::Matrix<double, N, 1>& v) {
  Json a = Json::array();
  for (int i = 0; i < N; ++i) a.push_back(v(i));
  return a;
}

template <int N>
Eigen::Matrix<double, N, 1> vec_from_json(const Json& j) {
  if (!j.is_array() || j.size() != static_cast<std::size_t>(N)) {
    throw Error(ErrorKind::invalid_config, "expected an array of " + std::to_string(N) + " numbers");
  }
  Eigen::Matrix<double, N, 1> v;
  for (int i = 0; i < N; ++i) v(i) = number(j[static_cast<std::size_t>(i)]);
  return v;
}

Json joint_array_to_json(const JointArray& a) { return Json(std::vector<double>(a.begin(), a.end())); }

JointArray joint_array_from_json(const Json& j) {
  if (!j.is_array() || j.size() != JointState::size) {
    throw Error(ErrorKind::invalid_config, "expected an array of 7 numbers");
  }
  JointArray a{};
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = number(j[i]);
  return a;
}

Json mask_to_json(const std::vector<std::uint8_t>& mask) {
  Json a = Json::array();
  for (auto m : mask) a.push_back(static_cast<int>(m));
  return a;
}

Json finite_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json walk_to_json(const RandomWalk& w) {
  return Json{{"center", to_json(w.center)},
              {"amplitude", joint_array_to_json(w.amplitude)},
              {"reversion", w.reversion},
              {"step", w.step}};
}

RandomWalk walk_from_json(const Json& j) {
  check_object(j, "trajectory.walk", {"center", "amplitude", "reversion", "step"});
  RandomWalk w;
  if (j.contains("center")) w.center = joints_from_json(j.at("center"));
  if (j.contains("amplitude")) w.amplitude = joint_array_from_json(j.at("amplitude"));
  optional_field(j, "reversion", w.reversion);
  optional_field(j, "step", w.step);
  return w;
}

Json noise_to_json(const NoiseModel& n) {
  return Json{{"joint_bias", joint_array_to_json(n.joint_bias)},
              {"backlash_width", joint_array_to_json(n.backlash_width)},
              {"keypoint_sigma_px", n.keypoint_sigma},
              {"dropout", n.dropout},
              {"base_offset", to_json(n.base_offset)}};
}

NoiseModel noise_from_json(const Json& j) {
  check_object(j, "noise", {"joint_bias", "backlash_width", "keypoint_sigma_px", "dropout", "base_offset"});
  NoiseModel n;
  if (j.contains("joint_bias")) n.joint_bias = joint_array_from_json(j.at("joint_bias"));
  if (j.contains("backlash_width")) n.backlash_width = joint_array_from_json(j.at("backlash_width"));
  optional_field(j, "keypoint_sigma_px", n.keypoint_sigma);
  optional_field(j, "dropout", n.dropout);
  if (j.contains("base_offset")) n.base_offset = transform_from_json(j.at("base_offset"));
  return n;
}

const char* loss_kind_name(KeypointLossKind kind) {
  return kind == KeypointLossKind::labeled ? "labeled" : "chamfer";
}

std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t parse_hex64(const Json& j) {
  const std::string s = j.get<std::string>();
  if (s.size() != 18 || s.rfind("0x", 0) != 0) throw Error(ErrorKind::invalid_config, "bad fingerprint " + s);
  std::size_t used = 0;
  const std::uint64_t v = std::stoull(s.substr(2), &used, 16);
  if (used != 16) throw Error(ErrorKind::invalid_config, "bad fingerprint " + s);
  return v;
}

Json pose_to_json(const InstrumentPose& p) {
  return Json{{"cT_s", to_json(p.shaft)},
              {"alpha", p.wrist_pitch},
              {"theta_l", p.jaw_left},
              {"theta_r", p.jaw_right}};
}

InstrumentPose pose_from_json(const Json& j) {
  check_object(j, "refined_poses[]", {"cT_s", "alpha", "theta_l", "theta_r"});
  InstrumentPose p;
  p.shaft = transform_from_json(j.at("cT_s"));
  p.wrist_pitch = number(j.at("alpha"));
  p.jaw_left = number(j.at("theta_l"));
  p.jaw_right = number(j.at("theta_r"));
  return p;
}

Json summary_to_json(const ErrorSummary& s) { return Json{{"avg", s.avg}, {"median", s.median}}; }

}  // namespace

Json to_json(const RigidTransform& t) {
  const Quat& q = t.quaternion();
  return Json{{"quat", {q.w(), q.x(), q.y(), q.z()}}, {"trans", vec_to_json<3>(t.translation())}};
}

RigidTransform transform_from_json(const Json& j) {
  return guarded("transform", [&] {
    check_object(j, "transform", {"quat", "trans"});
    const Eigen::Vector4d q = vec_from_json<4>(j.at("quat"));
    if (std::abs(q.norm() - 1.0) > 1e-6) fail("transform", "quaternion is not unit length");
    return RigidTransform::from_stored(Quat(q(0), q(1), q(2), q(3)), vec_from_json<3>(j.at("trans")));
  });
}

Json to_json(const PinholeCamera& cam) {
  return Json{{"fx", cam.fx}, {"fy", cam.fy},       {"cx", cam.cx},
              {"cy", cam.cy}, {"width", cam.width}, {"height", cam.height}};
}

PinholeCamera camera_from_json(const Json& j) {
  return guarded("camera", [&] {
    check_object(j, "camera", {"fx", "fy", "cx", "cy", "width", "height"});
    PinholeCamera cam;
    optional_field(j, "fx", cam.fx);
    optional_field(j, "fy", cam.fy);
    optional_field(j, "cx", cam.cx);
    optional_field(j, "cy", cam.cy);
    optional_field(j, "width", cam.width);
    optional_field(j, "height", cam.height);
    cam.validate();
    return cam;
  });
}

Json to_json(const StereoRig& rig) {
  return Json{{"left", to_json(rig.left)}, {"right", to_json(rig.right)}, {"right_from_left", to_json(rig.right_from_left)}};
}

StereoRig rig_from_json(const Json& j) {
  return guarded("rig", [&] {
    check_object(j, "rig", {"left", "right", "right_from_left"});
    StereoRig rig;
    if (j.contains("left")) rig.left = camera_from_json(j.at("left"));
    if (j.contains("right")) rig.right = camera_from_json(j.at("right"));
    rig.right_from_left = transform_from_json(j.at("right_from_left"));
    return rig;
  });
}

Json to_json(const JointState& q) {
  return Json{{"q1", q.yaw},           {"q2", q.pitch},       {"q3", q.insertion},    {"q4", q.roll},
              {"alpha", q.wrist_pitch}, {"theta_l", q.jaw_left}, {"theta_r", q.jaw_right}};
}

JointState joints_from_json(const Json& j) {
  return guarded("joints", [&] {
    check_object(j, "joints", {"q1", "q2", "q3", "q4", "alpha", "theta_l", "theta_r"});
    JointState q;
    optional_field(j, "q1", q.yaw);
    optional_field(j, "q2", q.pitch);
    optional_field(j, "q3", q.insertion);
    optional_field(j, "q4", q.roll);
    optional_field(j, "alpha", q.wrist_pitch);
    optional_field(j, "theta_l", q.jaw_left);
    optional_field(j, "theta_r", q.jaw_right);
    return q;
  });
}

Json to_json(const InstrumentModel& model) {
  Json kps = Json::array();
  for (const auto& kp : model.keypoints) {
    kps.push_back(Json{{"part", part_name(kp.part)}, {"label", kp.label}, {"xyz_mm", vec_to_json<3>(kp.position)}});
  }
  return Json{{"wrist_offset_mm", model.wrist_offset},
              {"gripper_length_mm", model.gripper_length},
              {"keypoints", kps}};
}

InstrumentModel model_from_json(const Json& j) {
  return guarded("model", [&] {
    check_object(j, "model", {"wrist_offset_mm", "gripper_length_mm", "keypoints"});
    InstrumentModel model;
    model.wrist_offset = number(j.at("wrist_offset_mm"));
    model.gripper_length = number(j.at("gripper_length_mm"));
    for (const Json& k : j.at("keypoints")) {
      check_object(k, "model.keypoints[]", {"part", "label", "xyz_mm"});
      model.keypoints.push_back(
          {part_from_name(k.at("part").get<std::string>()), k.at("label").get<std::string>(), vec_from_json<3>(k.at("xyz_mm"))});
    }
    model.validate();
    return model;
  });
}

Json to_json(const ScenarioConfig& cfg) {
  Json trajectory;
  if (cfg.trajectory.kind == TrajectorySpec::Kind::random_walk) {
    trajectory = Json{{"kind", "random_walk"}, {"walk", walk_to_json(cfg.trajectory.walk)}};
  } else {
    Json points = Json::array();
    for (const auto& q : cfg.trajectory.waypoints) points.push_back(to_json(q));
    trajectory = Json{{"kind", "waypoints"}, {"waypoints", points}};
  }
  Json j{{"schema_version", kSchemaVersion},
         {"frames", cfg.frames},
         {"seed", cfg.seed},
         {"camera", to_json(cfg.camera)}};
  if (cfg.rig) j["rig"] = to_json(*cfg.rig);
  j["camera_from_base"] = to_json(cfg.camera_from_base);
  j["rcm_frame"] = to_json(cfg.rcm_frame);
  j["model"] = to_json(cfg.model);
  j["trajectory"] = trajectory;
  j["noise"] = noise_to_json(cfg.noise);
  return j;
}

ScenarioConfig scenario_from_json(const Json& j) {
  return guarded("scenario", [&] {
    check_object(j, "scenario",
                 {"schema_version", "frames", "seed", "camera", "rig", "camera_from_base", "rcm_frame", "model",
                  "trajectory", "noise", "calibration"});
    check_schema(j, "scenario", false);
    ScenarioConfig cfg;
    optional_field(j, "frames", cfg.frames);
    optional_field(j, "seed", cfg.seed);
    if (j.contains("camera")) cfg.camera = camera_from_json(j.at("camera"));
    if (j.contains("rig")) {
      const Json& r = j.at("rig");
      StereoRig rig = rig_from_json(r);
      if (!r.contains("left")) rig.left = cfg.camera;
      if (!r.contains("right")) rig.right = cfg.camera;
      cfg.rig = rig;
    }
    if (j.contains("camera_from_base")) cfg.camera_from_base = transform_from_json(j.at("camera_from_base"));
    if (j.contains("rcm_frame")) cfg.rcm_frame = transform_from_json(j.at("rcm_frame"));
    if (j.contains("model")) cfg.model = model_from_json(j.at("model"));
    if (j.contains("trajectory")) {
      const Json& t = j.at("trajectory");
      check_object(t, "trajectory", {"kind", "walk", "waypoints"});
      const std::string kind = t.value("kind", std::string("random_walk"));
      if (kind == "random_walk") {
        cfg.trajectory.kind = TrajectorySpec::Kind::random_walk;
      } else if (kind == "waypoints") {
        cfg.trajectory.kind = TrajectorySpec::Kind::waypoints;
      } else {
        fail("trajectory", "unknown kind '" + kind + "'");
      }
      if (t.contains("walk")) cfg.trajectory.walk = walk_from_json(t.at("walk"));
      if (t.contains("waypoints")) {
        for (const Json& q : t.at("waypoints")) cfg.trajectory.waypoints.push_back(joints_from_json(q));
      }
    }
    if (j.contains("noise")) cfg.noise = noise_from_json(j.at("noise"));
    cfg.validate();
    return cfg;
  });
}

Json to_json(const CalibrationConfig& config) {
  const OptimizerOptions& o = config.optimizer;
  return Json{{"loss", loss_kind_name(o.loss_kind)},
              {"weights", {{"kpt", o.weights.kpt}, {"rcm", o.weights.rcm}, {"silh", o.weights.silh}, {"px", o.weights.px}}},
              {"epochs", o.epochs},
              {"steps_per_epoch", o.steps_per_epoch},
              {"patience", o.patience},
              {"max_iterations", o.max_iterations},
              {"threads", o.threads},
              {"rcm", {{"residual_threshold_mm", o.rcm.residual_threshold}, {"max_rounds", o.rcm.max_rounds}}},
              {"exclusion_iqr_factor", config.exclusion_iqr_factor},
              {"exclusion_rms_floor_px", config.exclusion_rms_floor_px}};
}

CalibrationConfig calibration_config_from_json(const Json& j) {
  return guarded("calibration", [&] {
    check_object(j, "calibration",
                 {"loss", "weights", "epochs", "steps_per_epoch", "patience", "max_iterations", "threads", "rcm",
                  "exclusion_iqr_factor", "exclusion_rms_floor_px"});
    CalibrationConfig config;
    OptimizerOptions& o = config.optimizer;
    if (j.contains("loss")) {
      const std::string loss = j.at("loss").get<std::string>();
      if (loss == "chamfer") {
        o.loss_kind = KeypointLossKind::chamfer;
      } else if (loss == "labeled") {
        o.loss_kind = KeypointLossKind::labeled;
      } else {
        fail("calibration", "unknown loss '" + loss + "'");
      }
    }
    if (j.contains("weights")) {
      const Json& w = j.at("weights");
      check_object(w, "calibration.weights", {"kpt", "rcm", "silh", "px"});
      optional_field(w, "kpt", o.weights.kpt);
      optional_field(w, "rcm", o.weights.rcm);
      optional_field(w, "silh", o.weights.silh);
      optional_field(w, "px", o.weights.px);
    }
    optional_field(j, "epochs", o.epochs);
    optional_field(j, "steps_per_epoch", o.steps_per_epoch);
    optional_field(j, "patience", o.patience);
    optional_field(j, "max_iterations", o.max_iterations);
    optional_field(j, "threads", o.threads);
    if (j.contains("rcm")) {
      const Json& r = j.at("rcm");
      check_object(r, "calibration.rcm", {"residual_threshold_mm", "max_rounds"});
      optional_field(r, "residual_threshold_mm", o.rcm.residual_threshold);
      optional_field(r, "max_rounds", o.rcm.max_rounds);
    }
    optional_field(j, "exclusion_iqr_factor", config.exclusion_iqr_factor);
    optional_field(j, "exclusion_rms_floor_px", config.exclusion_rms_floor_px);
    o.validate();
    if (!(config.exclusion_iqr_factor >= 0.0) || !(config.exclusion_rms_floor_px >= 0.0)) {
      fail("calibration", "exclusion parameters must be non-negative");
    }
    return config;
  });
}

Json to_json(const Sequence& seq) {
  Json j{{"schema_version", kSchemaVersion},
         {"units", {{"length", "mm"}, {"angle", "rad"}, {"pixel", "px"}}},
         {"camera", to_json(seq.camera)}};
  if (seq.rig) j["rig"] = to_json(*seq.rig);
  j["model"] = to_json(seq.model);
  if (seq.nominal_camera_from_base) j["nominal_cT_rb"] = to_json(*seq.nominal_camera_from_base);
  Json frames = Json::array();
  for (const auto& f : seq.frames) {
    Json kps = Json::array();
    for (const auto& kp : f.keypoints) kps.push_back(Json{{"label", kp.label}, {"u", kp.pixel.x()}, {"v", kp.pixel.y()}});
    Json frame{{"t", f.t}, {"keypoints_2d", kps}, {"joints", to_json(f.joints)}, {"reported_rbT_ee", to_json(f.reported_base_from_ee)}};
    if (f.tip_left || f.tip_right) {
      Json tips = Json::object();
      if (f.tip_left) tips["left"] = vec_to_json<2>(*f.tip_left);
      if (f.tip_right) tips["right"] = vec_to_json<2>(*f.tip_right);
      frame["tips_2d"] = tips;
    }
    if (f.gt) {
      frame["gt"] = Json{{"tip_mm", vec_to_json<3>(f.gt->tip)},
                         {"tip_px", vec_to_json<2>(f.gt->tip_px)},
                         {"cT_ee", to_json(f.gt->end_effector)},
                         {"joints", to_json(f.gt->joints)}};
    }
    frames.push_back(std::move(frame));
  }
  j["frames"] = std::move(frames);
  return j;
}

Sequence sequence_from_json(const Json& j) {
  return guarded("sequence", [&] {
    check_object(j, "sequence", {"schema_version", "units", "camera", "rig", "model", "nominal_cT_rb", "frames"});
    check_schema(j, "sequence", true);
    if (j.contains("units") && j.at("units") != Json{{"length", "mm"}, {"angle", "rad"}, {"pixel", "px"}}) {
      fail("sequence", "units must be mm, rad and px");
    }
    Sequence seq;
    seq.camera = camera_from_json(j.at("camera"));
    if (j.contains("rig")) seq.rig = rig_from_json(j.at("rig"));
    if (j.contains("model")) seq.model = model_from_json(j.at("model"));
    if (j.contains("nominal_cT_rb")) seq.nominal_camera_from_base = transform_from_json(j.at("nominal_cT_rb"));
    for (const Json& fj : j.at("frames")) {
      check_object(fj, "frames[]", {"t", "keypoints_2d", "joints", "reported_rbT_ee", "tips_2d", "gt"});
      SequenceFrame f;
      optional_field(fj, "t", f.t);
      for (const Json& k : fj.at("keypoints_2d")) {
        check_object(k, "keypoints_2d[]", {"label", "u", "v"});
        f.keypoints.push_back({k.at("label").get<std::string>(), Vec2(number(k.at("u")), number(k.at("v")))});
      }
      f.joints = joints_from_json(fj.at("joints"));
      f.reported_base_from_ee = transform_from_json(fj.at("reported_rbT_ee"));
      if (fj.contains("tips_2d")) {
        const Json& t = fj.at("tips_2d");
        check_object(t, "tips_2d", {"left", "right"});
        if (t.contains("left")) f.tip_left = vec_from_json<2>(t.at("left"));
        if (t.contains("right")) f.tip_right = vec_from_json<2>(t.at("right"));
      }
      if (fj.contains("gt")) {
        const Json& g = fj.at("gt");
        check_object(g, "gt", {"tip_mm", "tip_px", "cT_ee", "joints"});
        FrameTruth gt;
        gt.tip = vec_from_json<3>(g.at("tip_mm"));
        gt.tip_px = vec_from_json<2>(g.at("tip_px"));
        if (g.contains("cT_ee")) gt.end_effector = transform_from_json(g.at("cT_ee"));
        if (g.contains("joints")) gt.joints = joints_from_json(g.at("joints"));
        f.gt = gt;
      }
      seq.frames.push_back(std::move(f));
    }
    return seq;
  });
}

Json to_json(const OptimizationReport& report) {
  Json trajectory = Json::array();
  for (const auto& p : report.rcm_trajectory) trajectory.push_back(vec_to_json<3>(p));
  Json masks = Json::array();
  for (const auto& m : report.inlier_masks) masks.push_back(mask_to_json(m));
  return Json{{"final_loss", report.final_loss},
              {"iterations", report.iterations},
              {"loss_history", report.loss_history},
              {"rcm_trajectory_mm", trajectory},
              {"inlier_masks", masks}};
}

Json to_json(const RcmEstimate& rcm) {
  return Json{{"point_mm", vec_to_json<3>(rcm.point)},
              {"inliers", mask_to_json(rcm.inliers)},
              {"rms_residual_mm", rcm.rms_residual},
              {"rounds", rcm.rounds},
              {"low_confidence", rcm.low_confidence}};
}

Json to_json(const CalibrationResult& result) {
  const CalibrationDiagnostics& d = result.diagnostics;
  Json refined_ee = Json::array();
  Json refined_poses = Json::array();
  Json rms = Json::array();
  for (std::size_t i = 0; i < result.refined_end_effector.size(); ++i) {
    const bool refined = i < d.keypoint_rms.size() && std::isfinite(d.keypoint_rms[i]);
    refined_ee.push_back(refined ? to_json(result.refined_end_effector[i]) : Json(nullptr));
    refined_poses.push_back(refined ? pose_to_json(result.refined_poses[i]) : Json(nullptr));
  }
  for (double v : d.keypoint_rms) rms.push_back(finite_or_null(v));
  return Json{{"schema_version", kSchemaVersion},
              {"cT_rb", to_json(result.camera_from_base)},
              {"rcm_mm", vec_to_json<3>(result.rcm)},
              {"alignment_rmsd_mm", result.alignment_rmsd},
              {"frames_used", result.frames_used},
              {"sequence_fingerprint", hex64(result.sequence_fingerprint)},
              {"included", mask_to_json(result.included)},
              {"refined_cT_ee", refined_ee},
              {"refined_poses", refined_poses},
              {"diagnostics",
               {{"initial_rcm", to_json(d.initial_rcm)},
                {"phase1_rcm", to_json(d.phase1_rcm)},
                {"keypoint_rms_px", rms},
                {"mean_rcm_distance_init_mm", d.mean_rcm_distance_init},
                {"mean_rcm_distance_phase1_mm", d.mean_rcm_distance_phase1},
                {"mean_rcm_distance_phase2_mm", d.mean_rcm_distance_phase2},
                {"rotation_agreement_rad", d.rotation_agreement},
                {"phase1", to_json(d.phase1)},
                {"phase2", to_json(d.phase2)}}}};
}

CalibrationResult result_from_json(const Json& j) {
  return guarded("result", [&] {
    check_object(j, "result",
                 {"schema_version", "cT_rb", "rcm_mm", "alignment_rmsd_mm", "frames_used", "sequence_fingerprint",
                  "included", "refined_cT_ee", "refined_poses", "diagnostics"});
    check_schema(j, "result", true);
    CalibrationResult r;
    r.camera_from_base = transform_from_json(j.at("cT_rb"));
    if (j.contains("rcm_mm")) r.rcm = vec_from_json<3>(j.at("rcm_mm"));
    optional_field(j, "alignment_rmsd_mm", r.alignment_rmsd);
    optional_field(j, "frames_used", r.frames_used);
    if (j.contains("sequence_fingerprint")) r.sequence_fingerprint = parse_hex64(j.at("sequence_fingerprint"));
    if (j.contains("included")) {
      for (const Json& v : j.at("included")) r.included.push_back(v.get<int>() != 0 ? 1 : 0);
    }
    if (j.contains("refined_cT_ee")) {
      for (const Json& t : j.at("refined_cT_ee")) {
        r.refined_end_effector.push_back(t.is_null() ? RigidTransform{} : transform_from_json(t));
      }
    }
    if (j.contains("refined_poses")) {
      for (const Json& p : j.at("refined_poses")) {
        r.refined_poses.push_back(p.is_null() ? InstrumentPose{} : pose_from_json(p));
      }
    }
    return r;
  });
}

Json to_json(const MetricsReport& metrics) {
  Json frames = Json::array();
  for (const auto& f : metrics.frames) {
    frames.push_back(Json{{"frame", f.frame},
                          {"err2d_px", f.err2d_px},
                          {"err2d_mm", f.err2d_mm},
                          {"err3d_mm", f.err3d_mm},
                          {"included", f.included}});
  }
  return Json{{"schema_version", kSchemaVersion},
              {"frames", frames},
              {"summary",
               {{"err2d_px", summary_to_json(metrics.err2d_px)},
                {"err2d_mm", summary_to_json(metrics.err2d_mm)},
                {"err3d_mm", summary_to_json(metrics.err3d_mm)}}},
              {"skipped", metrics.skipped}};
}

std::string metrics_to_csv(const MetricsReport& metrics) {
  std::string out = "frame,err2d_px,err2d_mm,err3d_mm,included_flag\n";
  char line[160];
  for (const auto& f : metrics.frames) {
    std::snprintf(line, sizeof line, "%d,%.9g,%.9g,%.9g,%d\n", f.frame, f.err2d_px, f.err2d_mm, f.err3d_mm,
                  f.included ? 1 : 0);
    out += line;
  }
  std::snprintf(line, sizeof line, "avg,%.9g,%.9g,%.9g,\n", metrics.err2d_px.avg, metrics.err2d_mm.avg,
                metrics.err3d_mm.avg);
  out += line;
  std::snprintf(line, sizeof line, "median,%.9g,%.9g,%.9g,\n", metrics.err2d_px.median, metrics.err2d_mm.median,
                metrics.err3d_mm.median);
  out += line;
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw Error(ErrorKind::io, "cannot read " + path.string());
  return buf.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot create " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
}

Json read_json_file(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorKind::invalid_config, path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const Json& j) { write_text_file(path, j.dump(2) + "\n"); }

}  // namespace rcmcal
