#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include <Eigen/Cholesky>

#include "sivo/evalkit.h"

namespace sivo {
namespace {

std::vector<int> Inliers(const Intrinsics& k, const Pose& pose,
                         const std::vector<Point3>& points,
                         const std::vector<Eigen::Vector2d>& pixels, double threshold) {
  std::vector<int> inliers;
  const double t2 = threshold * threshold;
  for (size_t i = 0; i < points.size(); ++i) {
    const auto e = ReprojectionErrorSq(k, pose, points[i], pixels[i]);
    if (e && *e <= t2) inliers.push_back(static_cast<int>(i));
  }
  return inliers;
}

double SquaredError(const Intrinsics& k, const Pose& pose, const std::vector<Point3>& points,
                    const std::vector<Eigen::Vector2d>& pixels) {
  double total = 0.0;
  for (size_t i = 0; i < points.size(); ++i) {
    const auto e = ReprojectionErrorSq(k, pose, points[i], pixels[i]);
    if (!e) return std::numeric_limits<double>::infinity();
    total += *e;
  }
  return total;
}

int RequiredIterations(double confidence, int inliers, int total, int cap) {
  const double w = static_cast<double>(inliers) / total;
  const double p_good = w * w * w;
  if (p_good >= 1.0) return 0;
  if (p_good <= 0.0) return cap;
  const double needed = std::log(1.0 - confidence) / std::log(1.0 - p_good);
  return needed >= cap ? cap : static_cast<int>(std::ceil(needed));
}

}  // namespace

void PnPConfig::Validate() const {
  if (max_iterations <= 0) throw std::invalid_argument("pnp: iterations must be positive");
  if (!(inlier_threshold > 0.0)) throw std::invalid_argument("pnp: threshold must be positive");
  if (!(confidence > 0.0 && confidence < 1.0)) {
    throw std::invalid_argument("pnp: confidence must lie in (0, 1)");
  }
}

Pose RefinePose(const Intrinsics& k, const Pose& initial, const std::vector<Point3>& points,
                const std::vector<Eigen::Vector2d>& pixels, int max_iterations) {
  Pose pose = initial;
  double cost = SquaredError(k, pose, points, pixels);
  if (!std::isfinite(cost)) return pose;
  double lambda = 1e-4;
  for (int it = 0; it < max_iterations; ++it) {
    Eigen::Matrix<double, 6, 6> h = Eigen::Matrix<double, 6, 6>::Zero();
    Vector6d g = Vector6d::Zero();
    for (size_t i = 0; i < points.size(); ++i) {
      const Eigen::Vector3d cam = pose * points[i];
      const double z = cam.z();
      const Eigen::Vector2d r(k.fx * cam.x() / z + k.cx - pixels[i].x(),
                              k.fy * cam.y() / z + k.cy - pixels[i].y());
      Eigen::Matrix<double, 2, 3> dproj;
      dproj << k.fx / z, 0.0, -k.fx * cam.x() / (z * z), 0.0, k.fy / z,
          -k.fy * cam.y() / (z * z);
      Eigen::Matrix<double, 3, 6> dcam;
      dcam.leftCols<3>().setIdentity();
      dcam.rightCols<3>() = -Skew(cam);
      const Eigen::Matrix<double, 2, 6> j = dproj * dcam;
      h += j.transpose() * j;
      g += j.transpose() * r;
    }
    if (g.lpNorm<Eigen::Infinity>() < 1e-12) break;
    bool accepted = false;
    while (lambda < 1e12) {
      Eigen::Matrix<double, 6, 6> damped = h;
      damped.diagonal() += lambda * h.diagonal().cwiseMax(1e-9);
      const Vector6d step = damped.ldlt().solve(-g);
      const Pose candidate = RetractSE3(pose, step);
      const double candidate_cost = SquaredError(k, candidate, points, pixels);
      if (step.allFinite() && candidate_cost < cost) {
        const double decrease = cost - candidate_cost;
        pose = candidate;
        cost = candidate_cost;
        lambda = std::max(lambda * 0.1, 1e-14);
        accepted = true;
        if (decrease <= 1e-14 * (1.0 + cost)) return pose;
        break;
      }
      lambda *= 10.0;
    }
    if (!accepted) break;
  }
  return pose;
}

std::optional<PnPResult> SolvePnPRansac(const Intrinsics& intrinsics,
                                        const std::vector<Point3>& points,
                                        const std::vector<Eigen::Vector2d>& pixels,
                                        const PnPConfig& config) {
  config.Validate();
  if (points.size() != pixels.size()) {
    throw std::invalid_argument("pnp: points and pixels differ in count");
  }
  const int n = static_cast<int>(points.size());
  if (n < 4) {
    throw std::invalid_argument("pnp: at least 4 correspondences required, got " +
                                std::to_string(n));
  }

  std::mt19937_64 rng(config.seed);
  std::uniform_int_distribution<int> pick(0, n - 1);
  PnPResult result;
  int best_count = 0;
  int needed = config.max_iterations;
  int iteration = 0;
  for (; iteration < needed; ++iteration) {
    int s[3];
    s[0] = pick(rng);
    do s[1] = pick(rng); while (s[1] == s[0]);
    do s[2] = pick(rng); while (s[2] == s[0] || s[2] == s[1]);
    std::vector<Pose> candidates;
    try {
      candidates = SolveP3P(intrinsics, {pixels[s[0]], pixels[s[1]], pixels[s[2]]},
                            {points[s[0]], points[s[1]], points[s[2]]});
    } catch (const std::invalid_argument&) {
      continue;
    }
    for (const Pose& candidate : candidates) {
      std::vector<int> inliers =
          Inliers(intrinsics, candidate, points, pixels, config.inlier_threshold);
      const int count = static_cast<int>(inliers.size());
      result.hypothesis_inliers.push_back(count);
      if (count > best_count) {
        best_count = count;
        result.pose = candidate;
        result.inliers = std::move(inliers);
        needed = RequiredIterations(config.confidence, best_count, n, config.max_iterations);
      }
    }
  }
  result.iterations = iteration;
  if (best_count < 4) return std::nullopt;

  if (config.refine) {
    for (int round = 0; round < 2; ++round) {
      std::vector<Point3> in_points;
      std::vector<Eigen::Vector2d> in_pixels;
      for (int i : result.inliers) {
        in_points.push_back(points[i]);
        in_pixels.push_back(pixels[i]);
      }
      const Pose refined = RefinePose(intrinsics, result.pose, in_points, in_pixels);
      std::vector<int> inliers =
          Inliers(intrinsics, refined, points, pixels, config.inlier_threshold);
      if (inliers.size() < result.inliers.size()) break;
      const bool same = inliers == result.inliers;
      result.pose = refined;
      result.inliers = std::move(inliers);
      if (same) break;
    }
  }
  return result;
}

}  // namespace sivo
