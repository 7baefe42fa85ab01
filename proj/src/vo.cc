#include "sivo/vo.h"

#include <algorithm>
#include <stdexcept>

namespace sivo {

const Pose& VOResult::PoseOf(int frame_index) const {
  const auto it = std::lower_bound(frame_indices.begin(), frame_indices.end(),
                                   frame_index);
  if (it == frame_indices.end() || *it != frame_index) {
    throw std::out_of_range("vo result: frame " + std::to_string(frame_index) +
                            " was not processed");
  }
  return poses[it - frame_indices.begin()];
}

VOState::VOState(const Intrinsics& intrinsics, const BAConfig& config)
    : intrinsics_(intrinsics), config_(config) {
  intrinsics_.Validate();
  config_.Validate();
  window_.intrinsics = intrinsics_;
  window_.fix_first_pose = true;
}

void VOState::ProcessFrame(const FrameFeatures& features,
                           const std::vector<Match>& matches,
                           std::span<const double> weights) {
  if (!tracks_.empty() && features.frame_index <= tracks_.newest_frame()) {
    throw std::invalid_argument("vo: frame index regression (" +
                                std::to_string(features.frame_index) + " after " +
                                std::to_string(tracks_.newest_frame()) + ")");
  }
  if (!weights.empty() && static_cast<int>(weights.size()) != features.size()) {
    throw std::invalid_argument("vo: one weight per keypoint required");
  }
  std::vector<double> frame_weights(features.size(), 1.0);
  for (size_t k = 0; k < weights.size(); ++k) {
    if (!(weights[k] >= 0.0 && weights[k] <= 1.0)) {
      throw std::invalid_argument("vo: weight outside [0, 1]");
    }
    frame_weights[k] = weights[k];
  }

  const bool first = tracks_.empty();
  if (first) {
    tracks_.AddFrame(features);
  } else {
    tracks_.Extend(matches, features);
  }
  window_weights_[features.frame_index] = std::move(frame_weights);

  window_.frame_indices.push_back(features.frame_index);
  window_.poses.push_back(first ? Pose::Identity() : window_.poses.back());
  window_.observations.emplace_back();
  if (first) return;

  std::map<int, int> slot_of_frame;
  for (size_t s = 0; s < window_.frame_indices.size(); ++s) {
    slot_of_frame[window_.frame_indices[s]] = static_cast<int>(s);
  }
  const int newest_slot = static_cast<int>(window_.poses.size()) - 1;
  const std::vector<int>& track_ids = tracks_.FrameTrackIds(features.frame_index);
  for (int k = 0; k < features.size(); ++k) {
    const Track& track = tracks_.track(track_ids[k]);
    if (track.length() < 2) continue;
    if (window_.points.count(track.track_id)) {
      window_.observations[newest_slot].push_back(
          {track.track_id, features.keypoints[k],
           window_weights_.at(features.frame_index)[k]});
      continue;
    }
    // Instantiate at unit depth along the first observation's ray and attach
    // every observation that is still inside the window.
    const TrackObservation& origin = track.observations.front();
    const auto origin_slot = slot_of_frame.find(origin.frame_index);
    if (origin_slot == slot_of_frame.end()) continue;
    const Pose& origin_pose = window_.poses[origin_slot->second];
    window_.points[track.track_id] =
        origin_pose.Inverse() * intrinsics_.Backproject(origin.pixel, 1.0);
    for (const TrackObservation& obs : track.observations) {
      const auto slot = slot_of_frame.find(obs.frame_index);
      if (slot == slot_of_frame.end()) continue;
      window_.observations[slot->second].push_back(
          {track.track_id, obs.pixel,
           window_weights_.at(obs.frame_index)[obs.keypoint_index]});
    }
  }

  SlideWindow();
  last_summary_ = Optimize(window_, config_);
}

void VOState::SlideWindow() {
  while (static_cast<int>(window_.poses.size()) > config_.n_last) {
    exported_frames_.push_back(window_.frame_indices.front());
    exported_poses_.push_back(window_.poses.front());
    window_weights_.erase(window_.frame_indices.front());
    window_.frame_indices.erase(window_.frame_indices.begin());
    window_.poses.erase(window_.poses.begin());
    window_.observations.erase(window_.observations.begin());
  }
  std::map<int, int> remaining;
  for (const auto& frame : window_.observations) {
    for (const Observation& obs : frame) ++remaining[obs.track_id];
  }
  for (auto it = window_.points.begin(); it != window_.points.end();) {
    if (!remaining.count(it->first)) {
      retired_points_[it->first] = it->second;
      it = window_.points.erase(it);
    } else {
      ++it;
    }
  }
}

VOResult VOState::Result() const {
  VOResult result;
  result.frame_indices = exported_frames_;
  result.poses = exported_poses_;
  result.frame_indices.insert(result.frame_indices.end(),
                              window_.frame_indices.begin(),
                              window_.frame_indices.end());
  result.poses.insert(result.poses.end(), window_.poses.begin(),
                      window_.poses.end());
  result.points = retired_points_;
  for (const auto& [id, point] : window_.points) result.points[id] = point;
  result.tracks = tracks_;
  return result;
}

VOResult RunVisualOdometry(
    const std::vector<FrameFeatures>& frames, const Intrinsics& intrinsics,
    const VOOptions& options,
    const std::vector<std::vector<double>>* weights,
    const std::function<void(const VOState&)>& progress) {
  if (weights && weights->size() != frames.size()) {
    throw std::invalid_argument("vo: one weight vector per frame required");
  }
  VOState state(intrinsics, options.ba);
  for (size_t i = 0; i < frames.size(); ++i) {
    std::vector<Match> matches;
    if (i > 0) {
      matches = MatchBidirectional(frames[i - 1].descriptors,
                                   frames[i].descriptors, options.match_tau);
    }
    std::span<const double> frame_weights;
    if (weights) frame_weights = (*weights)[i];
    state.ProcessFrame(frames[i], matches, frame_weights);
    if (progress) progress(state);
  }
  return state.Result();
}

}  // namespace sivo
