#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sivo/frontend.h"
#include "sivo/geometry.h"
#include "sivo/image.h"

namespace sivo {

// ---- Pose errors ----------------------------------------------------------

struct PoseError {
  double rot_deg = 0.0;
  double trans = 0.0;
};

// Error of E = estimated * ground_truth^-1: rotation angle of E in degrees and
// the norm of its translation.
PoseError RelativePoseError(const Pose& estimated, const Pose& ground_truth);

// ---- Minimal and robust pose solvers --------------------------------------

// Camera poses (world-to-camera) that project the three world points onto the
// three pixels. At most four candidates. Throws std::invalid_argument when the
// points are collinear or coincide.
std::vector<Pose> SolveP3P(const Intrinsics& intrinsics,
                           const std::array<Eigen::Vector2d, 3>& pixels,
                           const std::array<Point3, 3>& points);

struct PnPConfig {
  int max_iterations = 100;
  double inlier_threshold = 8.0;  // pixels
  double confidence = 0.99;
  bool refine = true;
  uint64_t seed = 0;

  void Validate() const;
};

struct PnPResult {
  Pose pose;
  std::vector<int> inliers;  // ascending
  int iterations = 0;
  // Inlier count of every hypothesis scored during sampling.
  std::vector<int> hypothesis_inliers;
};

// RANSAC over SolveP3P; candidates are scored by the number of
// correspondences reprojecting within the threshold. The best model is
// refined by Levenberg-Marquardt on its inliers when requested (kept only if
// that does not lose inliers). Throws std::invalid_argument for fewer than
// four correspondences; returns nullopt when no model reaches four inliers.
std::optional<PnPResult> SolvePnPRansac(const Intrinsics& intrinsics,
                                        const std::vector<Point3>& points,
                                        const std::vector<Eigen::Vector2d>& pixels,
                                        const PnPConfig& config);

// Gauss-Newton/LM refinement of a pose on fixed correspondences, minimizing
// squared reprojection error.
Pose RefinePose(const Intrinsics& intrinsics, const Pose& initial,
                const std::vector<Point3>& points,
                const std::vector<Eigen::Vector2d>& pixels,
                int max_iterations = 20);

// ---- Trajectories ---------------------------------------------------------

struct StampedPose {
  double timestamp = 0.0;
  Pose pose;  // world-to-camera
};

// TUM text format, `timestamp tx ty tz qx qy qz qw` per line (camera-to-world).
// Lines starting with '#' are skipped.
std::vector<StampedPose> ReadTumTrajectory(const std::string& path);
void WriteTumTrajectory(const std::string& path,
                        const std::vector<StampedPose>& trajectory);

struct Sim3 {
  double scale = 1.0;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  // RMS distance between the aligned source and the target.
  double residual = 0.0;

  Eigen::Vector3d Apply(const Eigen::Vector3d& x) const {
    return scale * (rotation * x) + translation;
  }
};

// Closed-form least-squares similarity with target ~ s * R * source + t.
// Without scale, s is fixed to 1. Throws std::invalid_argument on size
// mismatch, fewer than three positions or collinear positions.
Sim3 AlignSim3(const std::vector<Eigen::Vector3d>& source,
               const std::vector<Eigen::Vector3d>& target,
               bool with_scale = true);

// Maps world-to-camera poses into the target frame of `sim`.
std::vector<Pose> TransformPoses(const Sim3& sim, const std::vector<Pose>& poses);

std::vector<Eigen::Vector3d> CameraCenters(const std::vector<Pose>& poses);

struct RelativeErrorRow {
  double length_s = 0.0;
  int count = 0;
  double rot_deg = 0.0;
  double trans = 0.0;
};

// For every start i and every length L (seconds), compares the motion between
// frame i and frame i + round(L * fps) in both trajectories; errors are
// averaged per length. Throws std::invalid_argument if the trajectories differ
// in length or are too short for the longest window.
std::vector<RelativeErrorRow> TrajectoryRelativeErrors(
    const std::vector<Pose>& estimated, const std::vector<Pose>& ground_truth,
    const std::vector<double>& lengths_s, double fps);

// ---- 3D-to-2D pose protocol -----------------------------------------------

struct PoseEvalSequence {
  Intrinsics intrinsics;
  std::vector<FrameFeatures> frames;
  std::vector<DepthImage> depth;
  double depth_scale = 1000.0;
  std::vector<Pose> poses;  // ground truth, world-to-camera
};

struct PosePairOutcome {
  int frame_a = 0;
  int frame_b = 0;
  int correspondences = 0;
  bool solved = false;
  PoseError error;
};

struct PoseEvalResult {
  int frame_diff = 0;
  int n_pairs = 0;
  double rot_lt_5deg = 0.0;
  double trans_lt_5cm = 0.0;
  std::vector<PosePairOutcome> pairs;
};

struct PoseEvalConfig {
  int pairs = 50;
  double rot_threshold_deg = 5.0;
  double trans_threshold = 0.05;
  PnPConfig pnp;
  uint64_t seed = 0;
};

// Samples pairs (a, a + frame_diff), matches all keypoints without a distance
// threshold, lifts frame-A keypoints with nearest-pixel depth (keypoints
// without valid depth are dropped), solves PnP into frame B and scores the
// result against the ground-truth relative pose. Failed solves count as
// misses. Throws std::invalid_argument when the sequence has no pair at that
// separation.
PoseEvalResult EvaluatePosePairs(const PoseEvalSequence& sequence, int frame_diff,
                                 const PoseEvalConfig& config);

}  // namespace sivo
