#include <limits>
#include <random>
#include <stdexcept>

#include "sivo/evalkit.h"
#include "sivo/tracking.h"

namespace sivo {

PoseEvalResult EvaluatePosePairs(const PoseEvalSequence& sequence, int frame_diff,
                                 const PoseEvalConfig& config) {
  const int n = static_cast<int>(sequence.frames.size());
  if (sequence.depth.size() != sequence.frames.size() ||
      sequence.poses.size() != sequence.frames.size()) {
    throw std::invalid_argument("pose eval: frames, depth maps and poses differ in count");
  }
  if (frame_diff <= 0) throw std::invalid_argument("pose eval: frame_diff must be positive");
  if (config.pairs <= 0) throw std::invalid_argument("pose eval: pair count must be positive");
  if (n <= frame_diff) {
    throw std::invalid_argument("pose eval: " + std::to_string(n) +
                                " frames allow no pair at frame_diff " +
                                std::to_string(frame_diff));
  }

  PoseEvalResult result;
  result.frame_diff = frame_diff;
  int rot_ok = 0;
  int trans_ok = 0;
  for (int p = 0; p < config.pairs; ++p) {
    std::seed_seq seq{static_cast<uint32_t>(config.seed), static_cast<uint32_t>(config.seed >> 32),
                      static_cast<uint32_t>(p)};
    std::mt19937_64 rng(seq);
    const int a = std::uniform_int_distribution<int>(0, n - 1 - frame_diff)(rng);
    const int b = a + frame_diff;

    PosePairOutcome outcome;
    outcome.frame_a = a;
    outcome.frame_b = b;
    const FrameFeatures& fa = sequence.frames[a];
    const FrameFeatures& fb = sequence.frames[b];
    std::vector<Point3> points;
    std::vector<Eigen::Vector2d> pixels;
    if (fa.size() > 0 && fb.size() > 0) {
      const auto matches = MatchBidirectional(fa.descriptors, fb.descriptors,
                                              std::numeric_limits<double>::infinity());
      for (const Match& m : matches) {
        const Eigen::Vector2d& pa = fa.keypoints[m.index_a];
        const auto z = LookupDepth(sequence.depth[a], pa, sequence.depth_scale);
        if (!z) continue;
        points.push_back(sequence.intrinsics.Backproject(pa, *z));
        pixels.push_back(fb.keypoints[m.index_b]);
      }
    }
    outcome.correspondences = static_cast<int>(points.size());
    if (points.size() >= 4) {
      PnPConfig pnp = config.pnp;
      pnp.seed = rng();
      const auto solved = SolvePnPRansac(sequence.intrinsics, points, pixels, pnp);
      if (solved) {
        outcome.solved = true;
        const Pose truth = sequence.poses[b] * sequence.poses[a].Inverse();
        outcome.error = RelativePoseError(solved->pose, truth);
        if (outcome.error.rot_deg < config.rot_threshold_deg) ++rot_ok;
        if (outcome.error.trans < config.trans_threshold) ++trans_ok;
      }
    }
    result.pairs.push_back(outcome);
  }
  result.n_pairs = config.pairs;
  result.rot_lt_5deg = static_cast<double>(rot_ok) / config.pairs;
  result.trans_lt_5cm = static_cast<double>(trans_ok) / config.pairs;
  return result;
}

}  // namespace sivo
