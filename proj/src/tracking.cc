#include "sivo/tracking.h"

#include <algorithm>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "sivo/io_util.h"

namespace sivo {

std::vector<Match> MatchBidirectional(const Eigen::MatrixXd& da,
                                      const Eigen::MatrixXd& db, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("match: tau must be positive");
  std::vector<Match> matches;
  if (da.cols() == 0 || db.cols() == 0) return matches;
  if (da.rows() != db.rows()) {
    throw std::invalid_argument("match: descriptor dimensions differ");
  }
  const int na = static_cast<int>(da.cols());
  const int nb = static_cast<int>(db.cols());

  // Squared distances; the strict comparisons below keep the lowest index on
  // ties in both directions.
  std::vector<int> best_b(na, -1);
  std::vector<double> best_b_dist(na, std::numeric_limits<double>::infinity());
  std::vector<int> best_a(nb, -1);
  std::vector<double> best_a_dist(nb, std::numeric_limits<double>::infinity());
  for (int i = 0; i < na; ++i) {
    for (int j = 0; j < nb; ++j) {
      const double d = (da.col(i) - db.col(j)).squaredNorm();
      if (d < best_b_dist[i]) {
        best_b_dist[i] = d;
        best_b[i] = j;
      }
      if (d < best_a_dist[j]) {
        best_a_dist[j] = d;
        best_a[j] = i;
      }
    }
  }
  for (int i = 0; i < na; ++i) {
    const int j = best_b[i];
    if (j < 0 || best_a[j] != i) continue;
    const double distance = std::sqrt(best_b_dist[i]);
    if (distance <= tau) matches.push_back({i, j, distance});
  }
  return matches;
}

int TrackGraph::NewTrack(int frame_index, int keypoint_index,
                         const Eigen::Vector2d& pixel) {
  Track track;
  track.track_id = static_cast<int>(tracks_.size());
  track.observations.push_back({frame_index, keypoint_index, pixel});
  tracks_.push_back(std::move(track));
  return tracks_.back().track_id;
}

void TrackGraph::AddFrame(const FrameFeatures& features) {
  Extend({}, features);
}

void TrackGraph::Extend(const std::vector<Match>& matches,
                        const FrameFeatures& next) {
  if (!frames_.empty() && next.frame_index <= frames_.back()) {
    throw std::invalid_argument("track graph: frame index " +
                                std::to_string(next.frame_index) +
                                " does not follow " +
                                std::to_string(frames_.back()));
  }
  if (frames_.empty() && !matches.empty()) {
    throw std::invalid_argument("track graph: matches given for first frame");
  }
  const std::vector<int>* previous_ids =
      frames_.empty() ? nullptr : &frame_track_ids_.at(frames_.back());

  std::vector<int> next_ids(next.size(), -1);
  std::vector<char> used_previous(previous_ids ? previous_ids->size() : 0, 0);
  for (const Match& m : matches) {
    if (m.index_a < 0 || m.index_a >= static_cast<int>(previous_ids->size()) ||
        m.index_b < 0 || m.index_b >= next.size()) {
      throw std::out_of_range("track graph: match index out of range");
    }
    if (used_previous[m.index_a] || next_ids[m.index_b] != -1) {
      throw std::invalid_argument("track graph: keypoint matched twice");
    }
    used_previous[m.index_a] = 1;
    next_ids[m.index_b] = (*previous_ids)[m.index_a];
  }

  if (previous_ids) {
    for (size_t k = 0; k < previous_ids->size(); ++k) {
      if (!used_previous[k]) tracks_[(*previous_ids)[k]].live = false;
    }
  }
  for (int k = 0; k < next.size(); ++k) {
    if (next_ids[k] >= 0) {
      tracks_[next_ids[k]].observations.push_back(
          {next.frame_index, k, next.keypoints[k]});
    } else {
      next_ids[k] = NewTrack(next.frame_index, k, next.keypoints[k]);
    }
  }
  frames_.push_back(next.frame_index);
  frame_track_ids_[next.frame_index] = std::move(next_ids);
}

TrackGraph TrackGraph::FromTracks(std::vector<Track> tracks) {
  TrackGraph graph;
  std::sort(tracks.begin(), tracks.end(),
            [](const Track& a, const Track& b) { return a.track_id < b.track_id; });
  std::map<int, std::map<int, int>> membership;
  for (size_t i = 0; i < tracks.size(); ++i) {
    if (tracks[i].track_id != static_cast<int>(i)) {
      throw std::invalid_argument("track graph: track ids must be 0..n-1");
    }
    if (tracks[i].observations.empty()) {
      throw std::invalid_argument("track graph: empty track");
    }
    for (const TrackObservation& obs : tracks[i].observations) {
      auto [it, inserted] =
          membership[obs.frame_index].emplace(obs.keypoint_index, tracks[i].track_id);
      if (!inserted) {
        throw std::invalid_argument("track graph: keypoint in two tracks");
      }
    }
  }
  for (const auto& [frame, keypoints] : membership) {
    std::vector<int> ids;
    for (const auto& [keypoint, track_id] : keypoints) {
      if (keypoint != static_cast<int>(ids.size())) {
        throw std::invalid_argument("track graph: keypoints of frame " +
                                    std::to_string(frame) +
                                    " are not contiguous");
      }
      ids.push_back(track_id);
    }
    graph.frames_.push_back(frame);
    graph.frame_track_ids_[frame] = std::move(ids);
  }
  for (Track& track : tracks) {
    track.live = track.observations.back().frame_index ==
                 (graph.frames_.empty() ? -1 : graph.frames_.back());
  }
  graph.tracks_ = std::move(tracks);
  return graph;
}

const std::vector<int>& TrackGraph::FrameTrackIds(int frame_index) const {
  static const std::vector<int> kEmpty;
  const auto it = frame_track_ids_.find(frame_index);
  return it == frame_track_ids_.end() ? kEmpty : it->second;
}

int TrackGraph::TrackIdOf(int frame_index, int keypoint_index) const {
  const std::vector<int>& ids = FrameTrackIds(frame_index);
  if (keypoint_index < 0 || keypoint_index >= static_cast<int>(ids.size())) {
    return -1;
  }
  return ids[keypoint_index];
}

void WriteTrackFile(const std::string& path, const TrackGraph& graph) {
  std::ofstream out = OpenForWrite(path);
  size_t total = 0;
  for (const Track& track : graph.tracks()) total += track.observations.size();
  out << "VOT1 " << total << '\n';
  for (const Track& track : graph.tracks()) {
    for (const TrackObservation& obs : track.observations) {
      out << obs.frame_index << ' ' << obs.keypoint_index << ' '
          << track.track_id << ' ' << FormatDouble(obs.pixel.x()) << ' '
          << FormatDouble(obs.pixel.y()) << '\n';
    }
  }
  if (!out) throw IoError(path, "write failed");
}

TrackGraph ReadTrackFile(const std::string& path) {
  std::ifstream in = OpenForRead(path);
  std::string line;
  long long total = 0;
  if (!std::getline(in, line)) throw IoError(path, "missing header");
  const auto header = SplitWhitespace(line);
  if (header.size() != 2 || header[0] != "VOT1" || !ParseInt(header[1], &total) ||
      total < 0) {
    throw IoError(path, "expected `VOT1 <count>` header");
  }
  std::map<int, Track> tracks;
  for (long long row = 0; row < total; ++row) {
    if (!std::getline(in, line)) {
      throw IoError(path, "line " + std::to_string(row + 2) + ": missing row");
    }
    const auto tokens = SplitWhitespace(line);
    long long frame, keypoint, track_id;
    double x, y;
    if (tokens.size() != 5 || !ParseInt(tokens[0], &frame) ||
        !ParseInt(tokens[1], &keypoint) || !ParseInt(tokens[2], &track_id) ||
        !ParseDouble(tokens[3], &x) || !ParseDouble(tokens[4], &y)) {
      throw IoError(path, "line " + std::to_string(row + 2) + ": malformed row");
    }
    Track& track = tracks[static_cast<int>(track_id)];
    track.track_id = static_cast<int>(track_id);
    track.observations.push_back(
        {static_cast<int>(frame), static_cast<int>(keypoint), {x, y}});
  }
  std::vector<Track> list;
  for (auto& [id, track] : tracks) list.push_back(std::move(track));
  try {
    return TrackGraph::FromTracks(std::move(list));
  } catch (const std::invalid_argument& e) {
    throw IoError(path, e.what());
  }
}

}  // namespace sivo
