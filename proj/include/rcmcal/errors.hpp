#pragma once

#include <stdexcept>
#include <string>

namespace rcmcal {

// Failure classes surfaced by every module. The CLI prints the class name on
// stderr, so the strings returned by to_string() are part of its interface.
enum class ErrorKind {
  invalid_argument,
  domain,
  behind_camera,
  degenerate_geometry,
  non_positive_depth,
  insufficient_points,
  collinear_points,
  all_candidates_behind_camera,
  near_parallel_bundle,
  no_consensus,
  degenerate_configuration,
  frustum_violation,
  too_few_inliers,
  missing_tip_observation,
  invalid_config,
  io,
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace rcmcal
