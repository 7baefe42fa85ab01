#include "sivo/labeler.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>

#include "sivo/io_util.h"

namespace sivo {
namespace {

std::string LineError(int line, const std::string& what) {
  return "line " + std::to_string(line) + ": " + what;
}

std::vector<std::string> NextRow(std::ifstream& in, const std::string& path, int* line_number,
                                 size_t expected) {
  std::string line;
  if (!std::getline(in, line)) {
    throw IoError(path, LineError(*line_number + 1, "unexpected end of file"));
  }
  ++*line_number;
  const auto tokens = SplitWhitespace(line);
  if (tokens.size() != expected) {
    throw IoError(path, LineError(*line_number, "expected " + std::to_string(expected) +
                                                    " values"));
  }
  return {tokens.begin(), tokens.end()};
}

double RowDouble(std::string_view token, const std::string& path, int line) {
  double v;
  if (!ParseDouble(token, &v) || std::isnan(v)) {
    throw IoError(path, LineError(line, "malformed number"));
  }
  return v;
}

long long RowInt(std::string_view token, const std::string& path, int line) {
  long long v;
  if (!ParseInt(token, &v)) throw IoError(path, LineError(line, "malformed integer"));
  return v;
}

StabilityLabel RowLabel(std::string_view token, const std::string& path, int line) {
  const long long v = RowInt(token, path, line);
  if (v < 0 || v > 2) throw IoError(path, LineError(line, "label outside {0, 1, 2}"));
  return static_cast<StabilityLabel>(v);
}

void ExpectEnd(std::ifstream& in, const std::string& path, int line_number) {
  std::string line;
  while (std::getline(in, line)) {
    ++line_number;
    if (!SplitWhitespace(line).empty()) {
      throw IoError(path, LineError(line_number, "more rows than the header declares"));
    }
  }
}

}  // namespace

const char* StabilityLabelName(StabilityLabel label) {
  switch (label) {
    case StabilityLabel::kUnstable: return "unstable";
    case StabilityLabel::kStable: return "stable";
    case StabilityLabel::kIgnore: return "ignore";
  }
  return "?";
}

StabilityLabel LabelTrack(const TrackStats& stats, const StabilityThresholds& t) {
  const bool long_enough = stats.num_observations >= t.min_observations;
  if (long_enough && stats.mean_error <= t.max_mean_error) return StabilityLabel::kStable;
  if (long_enough && stats.max_error >= t.min_max_error) return StabilityLabel::kUnstable;
  return StabilityLabel::kIgnore;
}

std::vector<TrackStats> ComputeTrackStats(const VOResult& result,
                                          const Intrinsics& intrinsics) {
  std::vector<TrackStats> stats;
  for (const auto& [track_id, point] : result.points) {
    const Track& track = result.tracks.track(track_id);
    TrackStats s;
    s.track_id = track_id;
    s.num_observations = track.length();
    double sum = 0.0;
    for (const TrackObservation& obs : track.observations) {
      const auto e2 = ReprojectionErrorSq(intrinsics, result.PoseOf(obs.frame_index), point,
                                          obs.pixel);
      const double e = e2 ? std::sqrt(*e2) : std::numeric_limits<double>::infinity();
      sum += e;
      s.max_error = std::max(s.max_error, e);
    }
    s.mean_error = sum / s.num_observations;
    stats.push_back(s);
  }
  return stats;
}

std::vector<LabeledFrame> LabelFrames(const TrackGraph& tracks,
                                      const std::vector<TrackStats>& stats,
                                      const StabilityThresholds& thresholds) {
  std::map<int, StabilityLabel> label_of;
  for (const TrackStats& s : stats) label_of[s.track_id] = LabelTrack(s, thresholds);

  std::vector<LabeledFrame> frames;
  frames.reserve(tracks.frames().size());
  for (int frame_index : tracks.frames()) {
    LabeledFrame frame;
    frame.frame_index = frame_index;
    const std::vector<int>& ids = tracks.FrameTrackIds(frame_index);
    for (size_t k = 0; k < ids.size(); ++k) {
      const Track& track = tracks.track(ids[k]);
      LabeledPoint p;
      p.keypoint_index = static_cast<int>(k);
      p.track_id = ids[k];
      for (const TrackObservation& obs : track.observations) {
        if (obs.frame_index == frame_index) {
          p.pixel = obs.pixel;
          break;
        }
      }
      const auto it = label_of.find(ids[k]);
      p.label = it == label_of.end() ? StabilityLabel::kIgnore : it->second;
      frame.points.push_back(p);
    }
    frames.push_back(std::move(frame));
  }
  return frames;
}

std::vector<LabeledFrame> LabelSequence(const VOResult& result, const Intrinsics& intrinsics,
                                        const StabilityThresholds& thresholds) {
  return LabelFrames(result.tracks, ComputeTrackStats(result, intrinsics), thresholds);
}

void WriteLabelFile(const std::string& path, const LabeledFrame& frame) {
  std::ofstream out = OpenForWrite(path);
  out << "VOL1 " << frame.points.size() << '\n';
  for (const LabeledPoint& p : frame.points) {
    out << FormatDouble(p.pixel.x()) << ' ' << FormatDouble(p.pixel.y()) << ' ' << p.track_id
        << ' ' << static_cast<int>(p.label) << '\n';
  }
  if (!out) throw IoError(path, "write failed");
}

LabeledFrame ReadLabelFile(const std::string& path, int frame_index) {
  std::ifstream in = OpenForRead(path);
  int line = 0;
  auto header = NextRow(in, path, &line, 2);
  if (header[0] != "VOL1") throw IoError(path, LineError(1, "expected VOL1 header"));
  const long long count = RowInt(header[1], path, line);
  if (count < 0) throw IoError(path, LineError(1, "negative count"));
  LabeledFrame frame;
  frame.frame_index = frame_index;
  for (long long i = 0; i < count; ++i) {
    auto row = NextRow(in, path, &line, 4);
    LabeledPoint p;
    p.pixel = {RowDouble(row[0], path, line), RowDouble(row[1], path, line)};
    p.track_id = static_cast<int>(RowInt(row[2], path, line));
    p.label = RowLabel(row[3], path, line);
    p.keypoint_index = static_cast<int>(i);
    frame.points.push_back(p);
  }
  ExpectEnd(in, path, line);
  return frame;
}

void WriteTrackStatsCsv(const std::string& path, const std::vector<TrackStats>& stats) {
  std::ofstream out = OpenForWrite(path);
  out << "track_id,T,mean_e,max_e\n";
  for (const TrackStats& s : stats) {
    out << s.track_id << ',' << s.num_observations << ',' << FormatDouble(s.mean_error) << ','
        << FormatDouble(s.max_error) << '\n';
  }
  if (!out) throw IoError(path, "write failed");
}

std::vector<TrackStats> ReadTrackStatsCsv(const std::string& path) {
  std::ifstream in = OpenForRead(path);
  std::string line;
  if (!std::getline(in, line) || line != "track_id,T,mean_e,max_e") {
    throw IoError(path, LineError(1, "expected header track_id,T,mean_e,max_e"));
  }
  std::vector<TrackStats> stats;
  int line_number = 1;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 4) throw IoError(path, LineError(line_number, "expected 4 fields"));
    TrackStats s;
    s.track_id = static_cast<int>(RowInt(fields[0], path, line_number));
    s.num_observations = static_cast<int>(RowInt(fields[1], path, line_number));
    s.mean_error = RowDouble(fields[2], path, line_number);
    s.max_error = RowDouble(fields[3], path, line_number);
    stats.push_back(s);
  }
  return stats;
}

std::optional<TrainingPair> MakeTrainingPair(const LabeledFrame& a, const LabeledFrame& b,
                                             int window) {
  const int gap = std::abs(b.frame_index - a.frame_index);
  if (gap < 1 || gap > window) return std::nullopt;
  TrainingPair pair;
  pair.frame_a = a.frame_index;
  pair.frame_b = b.frame_index;
  std::map<int, const LabeledPoint*> in_b;
  for (const LabeledPoint& p : b.points) in_b[p.track_id] = &p;
  std::map<int, bool> matched_b;
  for (const LabeledPoint& p : a.points) {
    const auto it = in_b.find(p.track_id);
    if (p.track_id < 0 || it == in_b.end()) {
      LabeledPoint u = p;
      u.label = StabilityLabel::kIgnore;
      pair.unmatched_a.push_back(u);
      continue;
    }
    pair.correspondences.push_back({p.pixel, it->second->pixel, p.track_id, p.label});
    matched_b[p.track_id] = true;
  }
  for (const LabeledPoint& p : b.points) {
    if (matched_b.count(p.track_id)) continue;
    LabeledPoint u = p;
    u.label = StabilityLabel::kIgnore;
    pair.unmatched_b.push_back(u);
  }
  return pair;
}

std::vector<TrainingPair> EmitTrainingPairs(const std::vector<LabeledFrame>& frames,
                                            const PairSamplingOptions& options) {
  if (frames.size() < 2) {
    throw std::invalid_argument("emit pairs: need at least 2 frames, got " +
                                std::to_string(frames.size()));
  }
  if (options.pair_window < 1 || options.pairs_per_frame < 1) {
    throw std::invalid_argument("emit pairs: window and pairs per frame must be positive");
  }
  std::mt19937_64 rng(options.seed);
  std::vector<TrainingPair> pairs;
  for (size_t i = 0; i < frames.size(); ++i) {
    std::vector<size_t> partners;
    for (size_t j = 0; j < frames.size(); ++j) {
      const int gap = std::abs(frames[j].frame_index - frames[i].frame_index);
      if (gap >= 1 && gap <= options.pair_window) partners.push_back(j);
    }
    if (partners.empty()) continue;
    std::uniform_int_distribution<size_t> pick(0, partners.size() - 1);
    for (int k = 0; k < options.pairs_per_frame; ++k) {
      auto pair = MakeTrainingPair(frames[i], frames[partners[pick(rng)]], options.pair_window);
      pairs.push_back(std::move(*pair));
    }
  }
  return pairs;
}

void WritePairFile(const std::string& path, const TrainingPair& pair) {
  std::ofstream out = OpenForWrite(path);
  out << "VOP1 " << pair.frame_a << ' ' << pair.frame_b << ' ' << pair.correspondences.size()
      << '\n';
  for (const PairCorrespondence& c : pair.correspondences) {
    out << FormatDouble(c.pixel_a.x()) << ' ' << FormatDouble(c.pixel_a.y()) << ' '
        << FormatDouble(c.pixel_b.x()) << ' ' << FormatDouble(c.pixel_b.y()) << ' '
        << c.track_id << ' ' << static_cast<int>(c.label) << '\n';
  }
  if (!out) throw IoError(path, "write failed");
}

TrainingPair ReadPairFile(const std::string& path) {
  std::ifstream in = OpenForRead(path);
  int line = 0;
  auto header = NextRow(in, path, &line, 4);
  if (header[0] != "VOP1") throw IoError(path, LineError(1, "expected VOP1 header"));
  TrainingPair pair;
  pair.frame_a = static_cast<int>(RowInt(header[1], path, line));
  pair.frame_b = static_cast<int>(RowInt(header[2], path, line));
  const long long count = RowInt(header[3], path, line);
  if (count < 0) throw IoError(path, LineError(1, "negative count"));
  for (long long i = 0; i < count; ++i) {
    auto row = NextRow(in, path, &line, 6);
    PairCorrespondence c;
    c.pixel_a = {RowDouble(row[0], path, line), RowDouble(row[1], path, line)};
    c.pixel_b = {RowDouble(row[2], path, line), RowDouble(row[3], path, line)};
    c.track_id = static_cast<int>(RowInt(row[4], path, line));
    c.label = RowLabel(row[5], path, line);
    pair.correspondences.push_back(c);
  }
  ExpectEnd(in, path, line);
  return pair;
}

}  // namespace sivo
