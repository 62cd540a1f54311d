#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "rcmcal/pipeline.hpp"

namespace rcmcal {

using Json = nlohmann::ordered_json;

/// Written into every JSON document and checked on read.
inline constexpr int kSchemaVersion = 1;

// Documents are strict: unknown keys, wrong types and a mismatched
// schema_version raise ErrorKind::invalid_config. Missing optional keys take
// the defaults of the corresponding struct. Lengths are mm, angles rad,
// pixels px; rotations are unit quaternions written as [w, x, y, z].

Json to_json(const RigidTransform& t);
RigidTransform transform_from_json(const Json& j);

Json to_json(const PinholeCamera& cam);
PinholeCamera camera_from_json(const Json& j);

Json to_json(const StereoRig& rig);
StereoRig rig_from_json(const Json& j);

/// {q1, q2, q3, q4, alpha, theta_l, theta_r}
Json to_json(const JointState& q);
JointState joints_from_json(const Json& j);

/// {wrist_offset_mm, gripper_length_mm, keypoints: [{part, label, xyz_mm}]}
Json to_json(const InstrumentModel& model);
InstrumentModel model_from_json(const Json& j);

/// Schema in docs/scenario_config.md. A "calibration" member is allowed and
/// ignored here; see calibration_config_from_json().
Json to_json(const ScenarioConfig& cfg);
ScenarioConfig scenario_from_json(const Json& j);

Json to_json(const CalibrationConfig& config);
CalibrationConfig calibration_config_from_json(const Json& j);

Json to_json(const Sequence& seq);
Sequence sequence_from_json(const Json& j);

Json to_json(const OptimizationReport& report);
Json to_json(const RcmEstimate& rcm);

/// Includes the diagnostics block. Reading restores everything except the
/// diagnostics.
Json to_json(const CalibrationResult& result);
CalibrationResult result_from_json(const Json& j);

Json to_json(const MetricsReport& metrics);

/// Columns frame, err2d_px, err2d_mm, err3d_mm, included_flag, then an "avg"
/// and a "median" row. Nine significant digits, "\n" line endings.
std::string metrics_to_csv(const MetricsReport& metrics);

/// Throws ErrorKind::io when the file cannot be read or written.
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

/// Parses a file into JSON; syntax errors raise ErrorKind::invalid_config.
Json read_json_file(const std::filesystem::path& path);
/// Two-space indentation and a trailing newline.
void write_json_file(const std::filesystem::path& path, const Json& j);

}  // namespace rcmcal
