#include <gtest/gtest.h>

#include <algorithm>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include "oracles.hpp"
#include "rcmcal/errors.hpp"
#include "rcmcal/estimators.hpp"

namespace rcmcal {
namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

ErrorKind kind_of(const auto& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no exception thrown";
  return ErrorKind::invalid_argument;
}

// Random object points in a box and a pose that puts them 80-150 mm ahead.
struct PnpProblem {
  RigidTransform pose;
  std::vector<Correspondence2D3D> corrs;
};

PnpProblem make_problem(std::mt19937_64& rng, int count, double box, double noise_px = 0.0) {
  const PinholeCamera cam;
  std::uniform_real_distribution<double> depth(80.0, 150.0), lateral(-15.0, 15.0);
  std::normal_distribution<double> noise(0.0, noise_px > 0.0 ? noise_px : 1.0);
  PnpProblem prob;
  const Mat3 r = RigidTransform::from_matrix(oracle::random_hom(rng, 0.0)).rotation();
  prob.pose = RigidTransform(r, Vec3(lateral(rng), lateral(rng), depth(rng)));
  for (int i = 0; i < count; ++i) {
    const Vec3 obj = oracle::random_vec(rng, -box / 2, box / 2);
    Vec2 px = project(cam, prob.pose.apply(obj));
    if (noise_px > 0.0) px += Vec2(noise(rng), noise(rng));
    prob.corrs.push_back({"k" + std::to_string(i), px, obj});
  }
  return prob;
}

TEST(Epnp, NoiselessRoundTrip) {
  std::mt19937_64 rng(41);
  for (int i = 0; i < 100; ++i) {
    const PnpProblem prob = make_problem(rng, 6, 25.0);
    const RigidTransform got = solve_epnp(prob.corrs, PinholeCamera{});
    EXPECT_LT(rotation_distance(got, prob.pose), 1e-4);
    EXPECT_LT((got.translation() - prob.pose.translation()).norm(), 1e-3);
  }
}

TEST(Epnp, IdentityPose) {
  const PinholeCamera cam;
  const std::vector<Vec3> pts = {{-10, -8, 95}, {12, -5, 105}, {3, 9, 100}, {-6, 7, 112}, {8, 4, 90}};
  std::vector<Correspondence2D3D> corrs;
  for (std::size_t i = 0; i < pts.size(); ++i) corrs.push_back({std::to_string(i), project(cam, pts[i]), pts[i]});
  const RigidTransform got = solve_epnp(corrs, cam);
  EXPECT_LT(max_abs_difference(got, RigidTransform::identity()), 1e-6);
}

TEST(Epnp, PlanarObjectUsesThreeControlPoints) {
  const PinholeCamera cam;
  // Fronto-parallel plane at z = 100 seen with the identity pose.
  const std::vector<Vec3> pts = {{-10, -8, 100}, {12, -5, 100}, {3, 9, 100}, {-6, 7, 100}, {8, 4, 100}};
  std::vector<Correspondence2D3D> corrs;
  for (std::size_t i = 0; i < pts.size(); ++i) corrs.push_back({std::to_string(i), project(cam, pts[i]), pts[i]});
  EXPECT_LT(max_abs_difference(solve_epnp(corrs, cam), RigidTransform::identity()), 1e-6);

  std::mt19937_64 rng(42);
  for (int i = 0; i < 50; ++i) {
    PnpProblem prob = make_problem(rng, 6, 25.0);
    for (auto& c : prob.corrs) {
      c.object.z() = 0.0;
      c.image = project(cam, prob.pose.apply(c.object));
    }
    const RigidTransform got = solve_epnp(prob.corrs, cam);
    EXPECT_LT(rotation_distance(got, prob.pose), 1e-4);
    EXPECT_LT((got.translation() - prob.pose.translation()).norm(), 1e-3);
  }
}

TEST(Epnp, NoisyPixelsMonteCarlo) {
  std::mt19937_64 rng(43);
  std::vector<double> rot_err, trans_err;
  for (int i = 0; i < 100; ++i) {
    const PnpProblem prob = make_problem(rng, 6, 25.0, 1.0);
    const RigidTransform got = solve_epnp(prob.corrs, PinholeCamera{});
    rot_err.push_back(rotation_distance(got, prob.pose));
    trans_err.push_back((got.translation() - prob.pose.translation()).norm());
  }
  std::nth_element(rot_err.begin(), rot_err.begin() + 50, rot_err.end());
  std::nth_element(trans_err.begin(), trans_err.begin() + 50, trans_err.end());
  EXPECT_LT(rot_err[50], 2.0 * kDeg);
  EXPECT_LT(trans_err[50], 3.0);
}

TEST(Epnp, PolishNeverWorsensReprojection) {
  std::mt19937_64 rng(44);
  for (int i = 0; i < 20; ++i) {
    const PnpProblem prob = make_problem(rng, 8, 25.0, 2.0);
    const PinholeCamera cam;
    const RigidTransform got = solve_epnp(prob.corrs, cam);
    EXPECT_LE(reprojection_rms(prob.corrs, cam, got), reprojection_rms(prob.corrs, cam, prob.pose) + 1e-9);
  }
}

TEST(Epnp, PermutationInvariant) {
  std::mt19937_64 rng(45);
  for (int i = 0; i < 20; ++i) {
    PnpProblem prob = make_problem(rng, 7, 25.0, 1.0);
    const RigidTransform a = solve_epnp(prob.corrs, PinholeCamera{});
    std::shuffle(prob.corrs.begin(), prob.corrs.end(), rng);
    const RigidTransform b = solve_epnp(prob.corrs, PinholeCamera{});
    EXPECT_LT(max_abs_difference(a, b), 1e-9);
  }
}

TEST(Epnp, Errors) {
  std::mt19937_64 rng(46);
  PnpProblem prob = make_problem(rng, 3, 25.0);
  EXPECT_EQ(kind_of([&] { solve_epnp(prob.corrs, PinholeCamera{}); }), ErrorKind::insufficient_points);

  prob = make_problem(rng, 6, 25.0);
  for (std::size_t i = 0; i < prob.corrs.size(); ++i) {
    prob.corrs[i].object = Vec3(static_cast<double>(i) * 3.0, 0, 0);
    prob.corrs[i].image = project(PinholeCamera{}, prob.pose.apply(prob.corrs[i].object));
  }
  EXPECT_EQ(kind_of([&] { solve_epnp(prob.corrs, PinholeCamera{}); }), ErrorKind::collinear_points);

  prob = make_problem(rng, 6, 25.0);
  prob.corrs[1].label = prob.corrs[0].label;
  EXPECT_EQ(kind_of([&] { solve_epnp(prob.corrs, PinholeCamera{}); }), ErrorKind::invalid_argument);
}

TEST(Epnp, PointsStraddlingTheCameraPlaneHaveNoValidCandidate) {
  const PinholeCamera cam;
  // Pinhole images of points on both sides of z = 0: no rigid pose can put
  // all of them in front of the camera.
  const std::vector<Vec3> pts = {{-30, 10, 60}, {25, -15, 80}, {5, 30, -40}, {-20, -25, -70}, {10, 5, 20}, {40, 20, -15}};
  std::vector<Correspondence2D3D> corrs;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Vec3& p = pts[i];
    corrs.push_back({std::to_string(i), Vec2(cam.fx * p.x() / p.z() + cam.cx, cam.fy * p.y() / p.z() + cam.cy), p});
  }
  EXPECT_EQ(kind_of([&] { solve_epnp(corrs, cam); }), ErrorKind::all_candidates_behind_camera);
}

TEST(EstimateRcm, ExactIntersection) {
  const Vec3 p(1, 2, 3);
  const std::vector<Line3> lines = {Line3(p + Vec3(5, 0, 0), Vec3(1, 0, 0)),
                                    Line3(p - Vec3(0, 7, 7), Vec3(0, 1, 1)),
                                    Line3(p + Vec3(2, -1, 4), Vec3(2, -1, 4))};
  EXPECT_LT((estimate_rcm(lines) - p).norm(), 1e-9);
}

TEST(EstimateRcm, SkewLinesGiveCommonPerpendicularMidpoint) {
  // Perpendicular skew pair: closest points (3,0,0) and (3,0,4).
  const std::vector<Line3> pair = {Line3(Vec3(0, 0, 0), Vec3(1, 0, 0)), Line3(Vec3(3, -2, 4), Vec3(0, 1, 0))};
  EXPECT_LT((estimate_rcm(pair) - Vec3(3, 0, 2)).norm(), 1e-12);

  std::mt19937_64 rng(47);
  for (int i = 0; i < 50; ++i) {
    const Vec3 o1 = oracle::random_vec(rng, -20, 20), o2 = oracle::random_vec(rng, -20, 20);
    Vec3 d1 = oracle::random_unit(rng);
    const Vec3 d2 = d1.cross(oracle::random_unit(rng)).normalized();  // perpendicular to d1
    // Closest points: solve [d1.d1 -d1.d2; d1.d2 -d2.d2] [s t] = [d1.(o2-o1); d2.(o2-o1)].
    Eigen::Matrix2d a;
    a << d1.dot(d1), -d1.dot(d2), d1.dot(d2), -d2.dot(d2);
    const Eigen::Vector2d st = a.inverse() * Eigen::Vector2d(d1.dot(o2 - o1), d2.dot(o2 - o1));
    const Vec3 mid = 0.5 * ((o1 + st(0) * d1) + (o2 + st(1) * d2));
    const std::vector<Line3> lines = {Line3(o1, d1), Line3(o2, d2)};
    EXPECT_LT((estimate_rcm(lines) - mid).norm(), 1e-9);
  }
}

TEST(EstimateRcm, ParallelBundleIsAnError) {
  const std::vector<Line3> lines = {Line3(Vec3(0, 0, 0), Vec3(0, 0, 1)), Line3(Vec3(1, 0, 0), Vec3(0, 0, 1)),
                                    Line3(Vec3(0, 1, 0), Vec3(0, 0, -1))};
  EXPECT_EQ(kind_of([&] { estimate_rcm(lines); }), ErrorKind::near_parallel_bundle);
  const std::vector<Line3> one = {lines[0]};
  EXPECT_EQ(kind_of([&] { estimate_rcm(one); }), ErrorKind::insufficient_points);
}

double sum_squared_distance(const Vec3& p, const std::vector<Line3>& lines) {
  double s = 0.0;
  for (const auto& l : lines) s += point_line_distance_vector(p, l).squaredNorm();
  return s;
}

TEST(EstimateRcm, IsLocalMinimumOnLattice) {
  std::mt19937_64 rng(48);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Line3> lines;
    for (int i = 0; i < 8; ++i) lines.emplace_back(oracle::random_vec(rng, -50, 50), oracle::random_unit(rng));
    const Vec3 p = estimate_rcm(lines);
    const double base = sum_squared_distance(p, lines);
    for (int dx = -1; dx <= 1; ++dx)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dz = -1; dz <= 1; ++dz) {
          if (dx == 0 && dy == 0 && dz == 0) continue;
          EXPECT_GE(sum_squared_distance(p + 1e-4 * Vec3(dx, dy, dz), lines), base);
        }
  }
}

// Lines through `center` in random directions plus lines that miss it by `offset`.
std::vector<Line3> bundle(std::mt19937_64& rng, const Vec3& center, int inliers, int outliers, double offset) {
  std::vector<Line3> lines;
  std::uniform_real_distribution<double> g(20.0, 120.0);
  for (int i = 0; i < inliers; ++i) {
    const Vec3 d = oracle::random_unit(rng);
    lines.emplace_back(center + g(rng) * d, d);
  }
  for (int i = 0; i < outliers; ++i) {
    const Vec3 d = oracle::random_unit(rng);
    const Vec3 n = d.cross(oracle::random_unit(rng)).normalized();
    lines.emplace_back(center + offset * n + g(rng) * d, d);
  }
  return lines;
}

TEST(EstimateRcmRobust, RejectsOffsetLines) {
  std::mt19937_64 rng(49);
  const Vec3 p(-40, 25, 60);
  const auto lines = bundle(rng, p, 10, 2, 20.0);
  const RcmEstimate est = estimate_rcm_robust(lines, 5.0, 5);
  EXPECT_LT((est.point - p).norm(), 1e-9);
  for (std::size_t i = 0; i < lines.size(); ++i) EXPECT_EQ(est.inliers[i], i < 10 ? 1 : 0) << i;
  EXPECT_EQ(est.inlier_count(), 10u);
  EXPECT_FALSE(est.low_confidence);
  EXPECT_LT(est.rms_residual, 1e-9);
}

TEST(EstimateRcmRobust, CleanBundleConvergesInOneRound) {
  std::mt19937_64 rng(50);
  const auto lines = bundle(rng, Vec3(1, 2, 3), 12, 0, 0.0);
  const RcmEstimate est = estimate_rcm_robust(lines);
  EXPECT_EQ(est.rounds, 1);
  EXPECT_EQ(est.inlier_count(), lines.size());
}

TEST(EstimateRcmRobust, ZeroThresholdWithNoiseHasNoConsensus) {
  std::mt19937_64 rng(51);
  auto lines = bundle(rng, Vec3(1, 2, 3), 8, 0, 0.0);
  std::normal_distribution<double> n(0.0, 0.5);
  for (auto& l : lines) l = Line3(l.origin() + Vec3(n(rng), n(rng), n(rng)), l.direction());
  EXPECT_EQ(kind_of([&] { estimate_rcm_robust(lines, 0.0, 5); }), ErrorKind::no_consensus);
}

TEST(EstimateRcmRobust, InfiniteThresholdEqualsPlainFit) {
  std::mt19937_64 rng(52);
  const auto lines = bundle(rng, Vec3(4, -2, 9), 6, 3, 15.0);
  const RcmEstimate est = estimate_rcm_robust(lines, std::numeric_limits<double>::infinity(), 5);
  const Vec3 plain = estimate_rcm(lines);
  EXPECT_EQ(est.point.x(), plain.x());
  EXPECT_EQ(est.point.y(), plain.y());
  EXPECT_EQ(est.point.z(), plain.z());
  EXPECT_EQ(est.inlier_count(), lines.size());
}

TEST(EstimateRcmRobust, RmsMatchesDefinition) {
  std::mt19937_64 rng(53);
  auto lines = bundle(rng, Vec3(0, 0, 0), 10, 0, 0.0);
  std::normal_distribution<double> n(0.0, 0.3);
  for (auto& l : lines) l = Line3(l.origin() + Vec3(n(rng), n(rng), n(rng)), l.direction());
  const RcmEstimate est = estimate_rcm_robust(lines, 5.0, 5);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (!est.inliers[i]) continue;
    sum += point_line_distance(est.point, lines[i]) * point_line_distance(est.point, lines[i]);
    ++count;
  }
  EXPECT_NEAR(est.rms_residual, std::sqrt(sum / static_cast<double>(count)), 1e-12);
}

TEST(EstimateRcmRobust, NeedsThreeLines) {
  const std::vector<Line3> two = {Line3(Vec3::Zero(), Vec3::UnitX()), Line3(Vec3::Zero(), Vec3::UnitY())};
  EXPECT_EQ(kind_of([&] { estimate_rcm_robust(two); }), ErrorKind::insufficient_points);
}

std::vector<Vec3> random_cloud(std::mt19937_64& rng, int n) {
  std::vector<Vec3> pts;
  for (int i = 0; i < n; ++i) pts.push_back(oracle::random_vec(rng, -50, 50));
  return pts;
}

TEST(KabschUmeyama, IdenticalCloudsGiveIdentity) {
  std::mt19937_64 rng(54);
  const auto pts = random_cloud(rng, 10);
  EXPECT_LT(max_abs_difference(kabsch_umeyama(pts, pts), RigidTransform::identity()), 1e-12);
}

TEST(KabschUmeyama, RecoversConstructedTransform) {
  std::mt19937_64 rng(55);
  for (int i = 0; i < 100; ++i) {
    const oracle::M4 m = oracle::random_hom(rng, 200.0);
    const auto src = random_cloud(rng, 12);
    std::vector<Vec3> dst;
    for (const auto& p : src) dst.push_back(oracle::hom_apply(m, p));
    const RigidTransform got = kabsch_umeyama(src, dst);
    EXPECT_LT((got.matrix() - m).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(KabschUmeyama, ReflectionYieldsProperRotation) {
  std::mt19937_64 rng(56);
  const auto src = random_cloud(rng, 10);
  std::vector<Vec3> dst;
  for (const auto& p : src) dst.emplace_back(-p.x(), p.y(), p.z());
  const RigidTransform got = kabsch_umeyama(src, dst);
  EXPECT_NEAR(got.rotation().determinant(), 1.0, 1e-9);
  EXPECT_GT(alignment_rmsd(src, dst, got), 1.0);
}

TEST(KabschUmeyama, BeatsRandomTransforms) {
  std::mt19937_64 rng(57);
  const auto src = random_cloud(rng, 15);
  std::vector<Vec3> dst;
  const oracle::M4 m = oracle::random_hom(rng, 30.0);
  std::normal_distribution<double> n(0.0, 2.0);
  for (const auto& p : src) dst.push_back(oracle::hom_apply(m, p) + Vec3(n(rng), n(rng), n(rng)));
  const double best = alignment_rmsd(src, dst, kabsch_umeyama(src, dst));
  for (int i = 0; i < 1000; ++i) {
    EXPECT_LE(best, alignment_rmsd(src, dst, RigidTransform::from_matrix(oracle::random_hom(rng, 30.0))));
  }
}

TEST(KabschUmeyama, ZeroWeightIgnoresPair) {
  std::mt19937_64 rng(58);
  const oracle::M4 m = oracle::random_hom(rng, 50.0);
  const auto src = random_cloud(rng, 8);
  std::vector<Vec3> dst;
  for (const auto& p : src) dst.push_back(oracle::hom_apply(m, p));
  dst[3] += Vec3(40, -10, 5);
  std::vector<double> w(src.size(), 1.0);
  w[3] = 0.0;
  EXPECT_LT((kabsch_umeyama(src, dst, w).matrix() - m).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(KabschUmeyama, Errors) {
  std::vector<Vec3> line = {{0, 0, 0}, {1, 1, 1}, {2, 2, 2}, {5, 5, 5}};
  EXPECT_EQ(kind_of([&] { kabsch_umeyama(line, line); }), ErrorKind::degenerate_configuration);
  std::vector<Vec3> two = {{0, 0, 0}, {1, 0, 0}};
  EXPECT_EQ(kind_of([&] { kabsch_umeyama(two, two); }), ErrorKind::invalid_argument);
  std::vector<Vec3> tri = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  std::vector<double> neg = {1.0, -1.0, 1.0};
  EXPECT_EQ(kind_of([&] { kabsch_umeyama(tri, tri, neg); }), ErrorKind::invalid_argument);
  std::vector<double> zero = {0.0, 0.0, 0.0};
  EXPECT_EQ(kind_of([&] { kabsch_umeyama(tri, tri, zero); }), ErrorKind::invalid_argument);
  EXPECT_EQ(kind_of([&] { kabsch_umeyama(tri, two); }), ErrorKind::invalid_argument);
}

}  // namespace
}  // namespace rcmcal
