#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sivo/geometry.h"
#include "sivo/tracking.h"
#include "sivo/vo.h"

namespace sivo {

struct TrackStats {
  int track_id = 0;
  int num_observations = 0;  // T
  double mean_error = 0.0;   // pixels
  double max_error = 0.0;    // pixels
};

enum class StabilityLabel : int { kUnstable = 0, kStable = 1, kIgnore = 2 };

const char* StabilityLabelName(StabilityLabel label);

struct StabilityThresholds {
  int min_observations = 10;
  double max_mean_error = 1.0;
  double min_max_error = 5.0;
};

// stable if T >= min_observations and mean <= max_mean_error, otherwise
// unstable if T >= min_observations and max >= min_max_error, otherwise ignore.
StabilityLabel LabelTrack(const TrackStats& stats,
                          const StabilityThresholds& thresholds = {});

// Reprojection statistics of every track that became a 3D point, evaluated
// with the final point and each frame's final pose. An observation behind its
// camera has infinite error. Sorted by track id.
std::vector<TrackStats> ComputeTrackStats(const VOResult& result,
                                          const Intrinsics& intrinsics);

struct LabeledPoint {
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
  int keypoint_index = 0;
  int track_id = -1;
  StabilityLabel label = StabilityLabel::kIgnore;
};

struct LabeledFrame {
  int frame_index = 0;
  // One entry per keypoint, in keypoint order.
  std::vector<LabeledPoint> points;
};

// Attaches the label of each track to all of its observations; keypoints of
// tracks without statistics are ignored.
std::vector<LabeledFrame> LabelFrames(const TrackGraph& tracks,
                                      const std::vector<TrackStats>& stats,
                                      const StabilityThresholds& thresholds = {});

std::vector<LabeledFrame> LabelSequence(const VOResult& result,
                                        const Intrinsics& intrinsics,
                                        const StabilityThresholds& thresholds = {});

// Label file: `VOL1 <count>`, rows `x y track_id label`.
void WriteLabelFile(const std::string& path, const LabeledFrame& frame);
LabeledFrame ReadLabelFile(const std::string& path, int frame_index);

// CSV with header `track_id,T,mean_e,max_e`.
void WriteTrackStatsCsv(const std::string& path, const std::vector<TrackStats>& stats);
std::vector<TrackStats> ReadTrackStatsCsv(const std::string& path);

struct PairCorrespondence {
  Eigen::Vector2d pixel_a = Eigen::Vector2d::Zero();
  Eigen::Vector2d pixel_b = Eigen::Vector2d::Zero();
  int track_id = 0;
  StabilityLabel label = StabilityLabel::kIgnore;
};

struct TrainingPair {
  int frame_a = 0;
  int frame_b = 0;
  std::vector<PairCorrespondence> correspondences;
  // Keypoints without a partner in the other frame; always labeled ignore.
  std::vector<LabeledPoint> unmatched_a;
  std::vector<LabeledPoint> unmatched_b;
};

// Pairs keypoints sharing a track. nullopt unless 1 <= |b - a| <= window.
std::optional<TrainingPair> MakeTrainingPair(const LabeledFrame& a, const LabeledFrame& b,
                                             int window);

struct PairSamplingOptions {
  int pair_window = 60;
  int pairs_per_frame = 1;
  uint64_t seed = 0;
};

// For every frame, draws pairs_per_frame partners uniformly among the frames
// within the window. Throws std::invalid_argument for fewer than two frames.
std::vector<TrainingPair> EmitTrainingPairs(const std::vector<LabeledFrame>& frames,
                                            const PairSamplingOptions& options);

// Pair file: `VOP1 <frame_a> <frame_b> <count>`, rows
// `xa ya xb yb track_id label`.
void WritePairFile(const std::string& path, const TrainingPair& pair);
TrainingPair ReadPairFile(const std::string& path);

}  // namespace sivo
