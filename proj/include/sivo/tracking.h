#pragma once

#include <map>
#include <vector>

#include <Eigen/Core>

#include "sivo/frontend.h"

namespace sivo {

struct Match {
  int index_a = 0;
  int index_b = 0;
  double distance = 0.0;  // L2 descriptor distance
};

// Mutual nearest neighbours between the columns of `da` and `db` whose L2
// distance is at most `tau`. Distance ties resolve to the lowest index.
// Output is ordered by index_a. Throws std::invalid_argument when the
// descriptor dimensions differ or tau is not positive.
std::vector<Match> MatchBidirectional(const Eigen::MatrixXd& da,
                                      const Eigen::MatrixXd& db, double tau);

struct TrackObservation {
  int frame_index = 0;
  int keypoint_index = 0;
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
};

// A chain of observations of one physical point over consecutive frames.
struct Track {
  int track_id = 0;
  std::vector<TrackObservation> observations;
  // Extendable at the newest frame.
  bool live = true;

  int length() const { return static_cast<int>(observations.size()); }
};

// Every keypoint of every added frame belongs to exactly one track. Tracks are
// strictly consecutive: a keypoint that goes unmatched ends its track.
class TrackGraph {
 public:
  // Starts the graph (first frame) or appends a frame with no matches.
  void AddFrame(const FrameFeatures& features);

  // Appends `next` using matches from the newest frame (index_a) into `next`
  // (index_b). Matched keypoints extend their track, the rest start new
  // length-1 tracks, tracks left unextended stop being live.
  // Throws std::out_of_range for bad match indices and std::invalid_argument
  // when frame indices do not increase.
  void Extend(const std::vector<Match>& matches, const FrameFeatures& next);

  // Rebuilds a graph from stored tracks (e.g. a track file). Validates that
  // every (frame, keypoint) appears at most once.
  static TrackGraph FromTracks(std::vector<Track> tracks);

  const std::vector<Track>& tracks() const { return tracks_; }
  const Track& track(int track_id) const { return tracks_.at(track_id); }
  int num_tracks() const { return static_cast<int>(tracks_.size()); }

  // Frame indices in insertion order.
  const std::vector<int>& frames() const { return frames_; }
  bool empty() const { return frames_.empty(); }
  int newest_frame() const { return frames_.back(); }

  // keypoint index -> track id for one frame; empty if the frame is unknown.
  const std::vector<int>& FrameTrackIds(int frame_index) const;
  int TrackIdOf(int frame_index, int keypoint_index) const;

 private:
  int NewTrack(int frame_index, int keypoint_index, const Eigen::Vector2d& pixel);

  std::vector<Track> tracks_;
  std::vector<int> frames_;
  std::map<int, std::vector<int>> frame_track_ids_;
};

// Track file: header `VOT1 <num_observations>`, then rows
// `frame_index keypoint_index track_id x y`.
void WriteTrackFile(const std::string& path, const TrackGraph& graph);
TrackGraph ReadTrackFile(const std::string& path);

}  // namespace sivo
