#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sivo/backend.h"
#include "sivo/frontend.h"
#include "sivo/tracking.h"

namespace sivo {

// Final VO solution over a whole sequence. poses[i] (world-to-camera) belongs
// to frame_indices[i]; points holds every 3D point ever instantiated at its
// last optimized value.
struct VOResult {
  std::vector<int> frame_indices;
  std::vector<Pose> poses;
  std::map<int, Point3> points;
  TrackGraph tracks;

  // Pose of a frame; throws std::out_of_range if it was not processed.
  const Pose& PoseOf(int frame_index) const;
};

// Sliding-window monocular VO. The first frame defines the world frame
// (identity pose). Every new pose starts at the previous pose; a track that
// reaches two observations becomes a 3D point at unit depth along the ray of
// its first observation. Poses leaving the window are frozen into the
// exported history and their observations dropped.
class VOState {
 public:
  VOState(const Intrinsics& intrinsics, const BAConfig& config);

  // `matches` go from the previous frame's keypoints (index_a) to this frame's
  // (index_b) and are ignored for the first frame. `weights` holds one w_ij
  // per keypoint of `features`; empty means 1.0 everywhere.
  // Throws std::invalid_argument when the frame index does not increase.
  void ProcessFrame(const FrameFeatures& features,
                    const std::vector<Match>& matches,
                    std::span<const double> weights = {});

  const BAProblem& window() const { return window_; }
  const TrackGraph& tracks() const { return tracks_; }
  const std::vector<int>& exported_frames() const { return exported_frames_; }
  const std::vector<Pose>& exported_poses() const { return exported_poses_; }
  const OptimizeSummary& last_summary() const { return last_summary_; }

  VOResult Result() const;

 private:
  void SlideWindow();

  Intrinsics intrinsics_;
  BAConfig config_;
  TrackGraph tracks_;
  BAProblem window_;
  // Weights of the frames currently in the window, by frame index.
  std::map<int, std::vector<double>> window_weights_;
  std::vector<int> exported_frames_;
  std::vector<Pose> exported_poses_;
  std::map<int, Point3> retired_points_;
  OptimizeSummary last_summary_;
};

struct VOOptions {
  BAConfig ba;
  // Descriptor distance threshold for consecutive-frame matching.
  double match_tau = 0.7;
};

// Matches consecutive frames and feeds them through a VOState. `weights`, when
// given, has one vector per frame. `progress` is called after every frame.
VOResult RunVisualOdometry(
    const std::vector<FrameFeatures>& frames, const Intrinsics& intrinsics,
    const VOOptions& options,
    const std::vector<std::vector<double>>* weights = nullptr,
    const std::function<void(const VOState&)>& progress = {});

}  // namespace sivo
