#include "rcmcal/errors.hpp"

namespace rcmcal {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::domain: return "domain";
    case ErrorKind::behind_camera: return "behind_camera";
    case ErrorKind::degenerate_geometry: return "degenerate_geometry";
    case ErrorKind::non_positive_depth: return "non_positive_depth";
    case ErrorKind::insufficient_points: return "insufficient_points";
    case ErrorKind::collinear_points: return "collinear_points";
    case ErrorKind::all_candidates_behind_camera: return "all_candidates_behind_camera";
    case ErrorKind::near_parallel_bundle: return "near_parallel_bundle";
    case ErrorKind::no_consensus: return "no_consensus";
    case ErrorKind::degenerate_configuration: return "degenerate_configuration";
    case ErrorKind::frustum_violation: return "frustum_violation";
    case ErrorKind::too_few_inliers: return "too_few_inliers";
    case ErrorKind::missing_tip_observation: return "missing_tip_observation";
    case ErrorKind::invalid_config: return "invalid_config";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

}  // namespace rcmcal
