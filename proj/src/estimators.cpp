#include "rcmcal/estimators.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "rcmcal/errors.hpp"

namespace rcmcal {

namespace {

constexpr double kCollinearRatio = 1e-12;
constexpr double kPlanarRatio = 1e-8;
constexpr double kMaxConditionNumber = 1e8;
constexpr int kBetaIterations = 10;
constexpr int kPolishIterations = 10;
constexpr int kDampingAttempts = 8;
constexpr double kMinDepth = 1e-6;

using MatX = Eigen::MatrixXd;
using VecX = Eigen::VectorXd;

// Control-point frame of the object points.
struct ControlPoints {
  std::vector<Vec3> world;
  Vec3 thinnest_axis;  // object-frame direction of least spread
  MatX alphas;  // n x count, barycentric coordinates
};

ControlPoints choose_control_points(std::span<const Correspondence2D3D> corrs) {
  const auto n = static_cast<double>(corrs.size());
  Vec3 centroid = Vec3::Zero();
  for (const auto& c : corrs) centroid += c.object;
  centroid /= n;

  Mat3 scatter = Mat3::Zero();
  for (const auto& c : corrs) {
    const Vec3 d = c.object - centroid;
    scatter += d * d.transpose();
  }
  const Eigen::SelfAdjointEigenSolver<Mat3> eig(scatter);
  const Vec3 lambda = eig.eigenvalues().cwiseMax(0.0);  // ascending
  if (!(lambda(2) > 0.0) || lambda(1) <= kCollinearRatio * lambda(2)) {
    throw Error(ErrorKind::collinear_points, "solve_epnp: object points are collinear");
  }
  const bool planar = lambda(0) < kPlanarRatio * lambda(2);

  ControlPoints cp;
  cp.thinnest_axis = eig.eigenvectors().col(0);
  cp.world.push_back(centroid);
  const int axes = planar ? 2 : 3;
  for (int a = 0; a < axes; ++a) {
    const int k = 2 - a;
    cp.world.push_back(centroid + std::sqrt(lambda(k) / n) * eig.eigenvectors().col(k));
  }

  Eigen::MatrixXd basis(3, axes);
  for (int a = 0; a < axes; ++a) basis.col(a) = cp.world[a + 1] - centroid;
  const auto qr = basis.colPivHouseholderQr();
  cp.alphas.resize(static_cast<Eigen::Index>(corrs.size()), axes + 1);
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    const VecX a = qr.solve(corrs[i].object - centroid);
    const auto row = static_cast<Eigen::Index>(i);
    cp.alphas(row, 0) = 1.0 - a.sum();
    cp.alphas.row(row).tail(axes) = a.transpose();
  }
  return cp;
}

// Camera-frame control points from kernel coefficients.
std::vector<Vec3> control_points_from_betas(const MatX& kernel, const VecX& betas) {
  const VecX stacked = kernel * betas;
  std::vector<Vec3> out(static_cast<std::size_t>(stacked.size() / 3));
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = stacked.segment<3>(3 * static_cast<Eigen::Index>(j));
  return out;
}

struct DistanceConstraint {
  MatX gram;  // D^T D with D the stacked kernel differences of a control-point pair
  double squared_distance;
};

std::vector<DistanceConstraint> distance_constraints(const ControlPoints& cp, const MatX& kernel) {
  std::vector<DistanceConstraint> out;
  const std::size_t count = cp.world.size();
  for (std::size_t a = 0; a < count; ++a) {
    for (std::size_t b = a + 1; b < count; ++b) {
      const MatX diff = kernel.middleRows(3 * static_cast<Eigen::Index>(a), 3) -
                        kernel.middleRows(3 * static_cast<Eigen::Index>(b), 3);
      out.push_back({diff.transpose() * diff, (cp.world[a] - cp.world[b]).squaredNorm()});
    }
  }
  return out;
}

// Linearized beta estimate using the first `used` kernel vectors: solve for
// the products b_kl = beta_k beta_l in the least-squares sense.
VecX approximate_betas(const std::vector<DistanceConstraint>& constraints, int used, int total) {
  std::vector<std::pair<int, int>> products;
  for (int k = 0; k < used; ++k) {
    for (int l = k; l < used; ++l) products.emplace_back(k, l);
  }
  MatX lhs(static_cast<Eigen::Index>(constraints.size()), static_cast<Eigen::Index>(products.size()));
  VecX rhs(static_cast<Eigen::Index>(constraints.size()));
  for (std::size_t r = 0; r < constraints.size(); ++r) {
    const auto row = static_cast<Eigen::Index>(r);
    for (std::size_t c = 0; c < products.size(); ++c) {
      const auto [k, l] = products[c];
      lhs(row, static_cast<Eigen::Index>(c)) = (k == l ? 1.0 : 2.0) * constraints[r].gram(k, l);
    }
    rhs(row) = constraints[r].squared_distance;
  }
  const VecX b = lhs.colPivHouseholderQr().solve(rhs);

  auto product = [&](int k, int l) {
    const auto it = std::find(products.begin(), products.end(), std::make_pair(k, l));
    return b(it - products.begin());
  };
  VecX betas = VecX::Zero(total);
  betas(0) = std::sqrt(std::abs(product(0, 0)));
  for (int k = 1; k < used; ++k) {
    const double cross = product(0, k);
    betas(k) = std::sqrt(std::abs(product(k, k))) * (cross < 0.0 ? -1.0 : 1.0);
  }
  return betas;
}

double beta_residual(const std::vector<DistanceConstraint>& constraints, const VecX& betas) {
  double sum = 0.0;
  for (const auto& c : constraints) {
    const double r = betas.dot(c.gram * betas) - c.squared_distance;
    sum += r * r;
  }
  return sum;
}

VecX refine_betas(const std::vector<DistanceConstraint>& constraints, VecX betas) {
  double best = beta_residual(constraints, betas);
  for (int it = 0; it < kBetaIterations; ++it) {
    MatX jac(static_cast<Eigen::Index>(constraints.size()), betas.size());
    VecX res(static_cast<Eigen::Index>(constraints.size()));
    for (std::size_t r = 0; r < constraints.size(); ++r) {
      const auto row = static_cast<Eigen::Index>(r);
      const VecX g = constraints[r].gram * betas;
      jac.row(row) = 2.0 * g.transpose();
      res(row) = betas.dot(g) - constraints[r].squared_distance;
    }
    const VecX step = jac.colPivHouseholderQr().solve(-res);
    if (!step.allFinite()) break;
    const VecX trial = betas + step;
    const double value = beta_residual(constraints, trial);
    if (!(value < best)) break;
    best = value;
    betas = trial;
  }
  return betas;
}

// Rigid pose mapping the object points onto their estimated camera-frame
// positions. Returns false if any object point ends up behind the camera.
bool pose_from_camera_points(std::span<const Correspondence2D3D> corrs, const ControlPoints& cp,
                             std::vector<Vec3> control_cam, RigidTransform& pose) {
  std::vector<Vec3> object(corrs.size());
  std::vector<Vec3> camera(corrs.size());
  double mean_depth = 0.0;
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    Vec3 p = Vec3::Zero();
    for (std::size_t j = 0; j < control_cam.size(); ++j) {
      p += cp.alphas(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * control_cam[j];
    }
    object[i] = corrs[i].object;
    camera[i] = p;
    mean_depth += p.z();
  }
  if (mean_depth < 0.0) {
    for (auto& p : camera) p = -p;
  }
  if (!camera.front().allFinite()) return false;
  try {
    pose = kabsch_umeyama(object, camera);
  } catch (const Error&) {
    return false;
  }
  return std::all_of(object.begin(), object.end(),
                     [&](const Vec3& p) { return pose.apply(p).z() > kMinDepth; });
}

// The other member of the near-planar depth-reversal ambiguity: mirror the
// object about its thinnest axis and the camera-side offsets about the plane
// normal to the viewing ray, keeping the centroid in place.
RigidTransform depth_flipped(const RigidTransform& pose, const ControlPoints& cp) {
  const Vec3& centroid = cp.world.front();
  const Vec3 center_cam = pose.apply(centroid);
  const Vec3 view = center_cam.normalized();
  const Mat3 camera_mirror = Mat3::Identity() - 2.0 * view * view.transpose();
  const Mat3 object_mirror = Mat3::Identity() - 2.0 * cp.thinnest_axis * cp.thinnest_axis.transpose();
  const Mat3 r = camera_mirror * pose.rotation() * object_mirror;
  return {r, center_cam - r * centroid};
}

struct NormalEquations {
  Eigen::Matrix<double, 6, 6> jtj = Eigen::Matrix<double, 6, 6>::Zero();
  Vec6 jtr = Vec6::Zero();
};

NormalEquations reprojection_normal_equations(std::span<const Correspondence2D3D> corrs,
                                              const PinholeCamera& cam, const RigidTransform& pose) {
  NormalEquations ne;
  for (const auto& c : corrs) {
    const Vec3 pc = pose.apply(c.object);
    Eigen::Matrix<double, 3, 6> dp;
    dp << -skew(pc), Mat3::Identity();
    const Eigen::Matrix<double, 2, 6> j = project_jacobian(cam, pc) * dp;
    const Vec2 r = project(cam, pc) - c.image;
    ne.jtj += j.transpose() * j;
    ne.jtr += j.transpose() * r;
  }
  return ne;
}

// Damped Gauss-Newton on the reprojection error; only non-worsening steps are
// taken, so the result is never worse than the input. Close to the minimum the
// cost can no longer separate nearby poses, so the last few steps are plain
// Gauss-Newton steps accepted while their length keeps shrinking.
RigidTransform polish_pose(std::span<const Correspondence2D3D> corrs, const PinholeCamera& cam,
                           RigidTransform pose) {
  double current = reprojection_rms(corrs, cam, pose);
  if (!std::isfinite(current)) return pose;
  double damping = 1e-6;
  for (int it = 0; it < kPolishIterations; ++it) {
    const NormalEquations ne = reprojection_normal_equations(corrs, cam, pose);
    bool improved = false;
    Vec6 step = Vec6::Zero();
    for (int attempt = 0; attempt < kDampingAttempts && !improved; ++attempt) {
      Eigen::Matrix<double, 6, 6> lhs = ne.jtj;
      lhs.diagonal() *= 1.0 + damping;
      step = lhs.ldlt().solve(-ne.jtr);
      if (!step.allFinite()) break;
      const RigidTransform trial = exp_map(Twist::from_vector(step)) * pose;
      const double value = reprojection_rms(corrs, cam, trial);
      if (value <= current) {
        current = value;
        pose = trial;
        improved = true;
        damping = std::max(damping * 0.1, 1e-9);
      } else {
        damping *= 10.0;
      }
    }
    if (!improved || step.norm() < 1e-12) break;
  }

  double last_step = std::numeric_limits<double>::infinity();
  for (int it = 0; it < kPolishIterations; ++it) {
    const NormalEquations ne = reprojection_normal_equations(corrs, cam, pose);
    const Vec6 step = ne.jtj.ldlt().solve(-ne.jtr);
    if (!step.allFinite() || !(step.norm() < last_step)) break;
    const RigidTransform trial = exp_map(Twist::from_vector(step)) * pose;
    const double value = reprojection_rms(corrs, cam, trial);
    if (!(value <= current * (1.0 + 1e-12))) break;
    pose = trial;
    current = std::min(current, value);
    last_step = step.norm();
    if (last_step < 1e-15) break;
  }
  return pose;
}

}  // namespace

double reprojection_rms(std::span<const Correspondence2D3D> corrs, const PinholeCamera& cam,
                        const RigidTransform& pose) {
  if (corrs.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& c : corrs) {
    const Vec3 pc = pose.apply(c.object);
    if (!(pc.z() > kMinDepth)) return std::numeric_limits<double>::infinity();
    sum += (project(cam, pc) - c.image).squaredNorm();
  }
  return std::sqrt(sum / static_cast<double>(corrs.size()));
}

RigidTransform solve_epnp(std::span<const Correspondence2D3D> corrs, const PinholeCamera& cam) {
  if (corrs.size() < 4) {
    throw Error(ErrorKind::insufficient_points, "solve_epnp: at least 4 correspondences required");
  }
  std::set<std::string> labels;
  for (const auto& c : corrs) {
    if (!labels.insert(c.label).second) {
      throw Error(ErrorKind::invalid_argument, "solve_epnp: duplicate label '" + c.label + "'");
    }
  }

  const ControlPoints cp = choose_control_points(corrs);
  const auto count = static_cast<Eigen::Index>(cp.world.size());
  const auto n = static_cast<Eigen::Index>(corrs.size());

  MatX m = MatX::Zero(2 * n, 3 * count);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec2& uv = corrs[static_cast<std::size_t>(i)].image;
    for (Eigen::Index j = 0; j < count; ++j) {
      const double a = cp.alphas(i, j);
      m(2 * i, 3 * j) = a * cam.fx;
      m(2 * i, 3 * j + 2) = a * (cam.cx - uv.x());
      m(2 * i + 1, 3 * j + 1) = a * cam.fy;
      m(2 * i + 1, 3 * j + 2) = a * (cam.cy - uv.y());
    }
  }
  const Eigen::SelfAdjointEigenSolver<MatX> eig(m.transpose() * m);
  // Smallest `count` eigenvectors; column 0 is the best null-space estimate.
  const MatX kernel = eig.eigenvectors().leftCols(count);
  const auto constraints = distance_constraints(cp, kernel);

  const int total = static_cast<int>(count);
  const int max_used = total == 4 ? 3 : 2;
  bool found = false;
  RigidTransform best;
  double best_rms = std::numeric_limits<double>::infinity();
  for (int used = 1; used <= max_used; ++used) {
    const VecX betas = refine_betas(constraints, approximate_betas(constraints, used, total));
    RigidTransform candidate;
    if (!pose_from_camera_points(corrs, cp, control_points_from_betas(kernel, betas), candidate)) {
      continue;
    }
    for (const RigidTransform& start : {candidate, depth_flipped(candidate, cp)}) {
      const RigidTransform polished = polish_pose(corrs, cam, start);
      const double rms = reprojection_rms(corrs, cam, polished);
      if (rms < best_rms) {
        best_rms = rms;
        best = polished;
        found = true;
      }
    }
  }
  if (!found) {
    throw Error(ErrorKind::all_candidates_behind_camera, "solve_epnp: no candidate places the points in front of the camera");
  }
  return best;
}

Vec3 estimate_rcm(std::span<const Line3> lines) {
  if (lines.size() < 2) {
    throw Error(ErrorKind::insufficient_points, "estimate_rcm: at least 2 lines required");
  }
  Mat3 a = Mat3::Zero();
  Vec3 b = Vec3::Zero();
  for (const auto& l : lines) {
    const Mat3 proj = Mat3::Identity() - l.direction() * l.direction().transpose();
    a += proj;
    b += proj * l.origin();
  }
  const Vec3 ev = Eigen::SelfAdjointEigenSolver<Mat3>(a, Eigen::EigenvaluesOnly).eigenvalues();
  if (!(ev(0) * kMaxConditionNumber >= ev(2))) {
    throw Error(ErrorKind::near_parallel_bundle, "estimate_rcm: line directions are (nearly) parallel");
  }
  return a.ldlt().solve(b);
}

std::size_t RcmEstimate::inlier_count() const {
  return static_cast<std::size_t>(std::count(inliers.begin(), inliers.end(), std::uint8_t{1}));
}

RcmEstimate estimate_rcm_robust(std::span<const Line3> lines, double residual_threshold,
                                int max_rounds) {
  if (lines.size() < 3) {
    throw Error(ErrorKind::insufficient_points, "estimate_rcm_robust: at least 3 lines required");
  }
  if (max_rounds < 1 || std::isnan(residual_threshold)) {
    throw Error(ErrorKind::invalid_argument, "estimate_rcm_robust: max_rounds must be >= 1 and threshold a number");
  }

  auto fit = [&](const std::vector<std::uint8_t>& mask) {
    std::vector<Line3> subset;
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (mask[i]) subset.push_back(lines[i]);
    }
    return estimate_rcm(subset);
  };

  RcmEstimate est;
  est.inliers.assign(lines.size(), 1);
  for (int round = 1; round <= max_rounds; ++round) {
    est.rounds = round;
    est.point = fit(est.inliers);
    std::vector<std::uint8_t> next(lines.size());
    for (std::size_t i = 0; i < lines.size(); ++i) {
      next[i] = point_line_distance(est.point, lines[i]) <= residual_threshold ? 1 : 0;
    }
    if (std::count(next.begin(), next.end(), std::uint8_t{1}) < 2) {
      throw Error(ErrorKind::no_consensus, "estimate_rcm_robust: fewer than 2 inlier lines");
    }
    if (next == est.inliers) break;
    est.inliers = std::move(next);
    if (round == max_rounds) est.point = fit(est.inliers);
  }

  double sum = 0.0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (est.inliers[i]) sum += point_line_distance_vector(est.point, lines[i]).squaredNorm();
  }
  const std::size_t count = est.inlier_count();
  est.rms_residual = std::sqrt(sum / static_cast<double>(count));
  est.low_confidence = count < 3;
  return est;
}

RigidTransform kabsch_umeyama(std::span<const Vec3> src, std::span<const Vec3> dst,
                              std::span<const double> weights) {
  if (src.size() != dst.size() || src.size() < 3) {
    throw Error(ErrorKind::invalid_argument, "kabsch_umeyama: need equal counts of at least 3 points");
  }
  if (!weights.empty() && weights.size() != src.size()) {
    throw Error(ErrorKind::invalid_argument, "kabsch_umeyama: one weight per pair required");
  }
  auto weight = [&](std::size_t i) { return weights.empty() ? 1.0 : weights[i]; };

  double total = 0.0;
  Vec3 mu_src = Vec3::Zero();
  Vec3 mu_dst = Vec3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double w = weight(i);
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw Error(ErrorKind::invalid_argument, "kabsch_umeyama: weights must be finite and >= 0");
    }
    total += w;
    mu_src += w * src[i];
    mu_dst += w * dst[i];
  }
  if (!(total > 0.0)) {
    throw Error(ErrorKind::invalid_argument, "kabsch_umeyama: weights are all zero");
  }
  mu_src /= total;
  mu_dst /= total;

  Mat3 cross = Mat3::Zero();
  Mat3 scatter = Mat3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Vec3 s = src[i] - mu_src;
    cross += weight(i) * s * (dst[i] - mu_dst).transpose();
    scatter += weight(i) * s * s.transpose();
  }
  const Vec3 spread = Eigen::SelfAdjointEigenSolver<Mat3>(scatter, Eigen::EigenvaluesOnly).eigenvalues();
  if (!(spread(2) > 0.0) || spread(1) <= kCollinearRatio * spread(2)) {
    throw Error(ErrorKind::degenerate_configuration, "kabsch_umeyama: source points are collinear");
  }

  const Eigen::JacobiSVD<Mat3> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3& u = svd.matrixU();
  const Mat3& v = svd.matrixV();
  Mat3 d = Mat3::Identity();
  if ((v * u.transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  const Mat3 r = v * d * u.transpose();
  return {r, mu_dst - r * mu_src};
}

double alignment_rmsd(std::span<const Vec3> src, std::span<const Vec3> dst, const RigidTransform& t,
                      std::span<const double> weights) {
  double sum = 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < src.size() && i < dst.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    sum += w * (dst[i] - t.apply(src[i])).squaredNorm();
    total += w;
  }
  return total > 0.0 ? std::sqrt(sum / total) : 0.0;
}

}  // namespace rcmcal
