#include "sivo/manifest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "sivo/io_util.h"

namespace sivo {

std::string SequenceManifest::Resolve(const std::string& relative) const {
  const std::filesystem::path path(relative);
  if (path.is_absolute()) return relative;
  return (std::filesystem::path(base_dir) / path).string();
}

std::string SequenceManifest::FeaturePath(int frame_index) const {
  return Resolve(FormatFramePattern(features, frame_index));
}

std::string SequenceManifest::ImagePath(int frame_index) const {
  return Resolve(FormatFramePattern(images, frame_index));
}

std::string SequenceManifest::DepthPath(int frame_index) const {
  return Resolve(FormatFramePattern(depth, frame_index));
}

SequenceManifest ReadManifest(const std::string& path) {
  std::ifstream in = OpenForRead(path);
  SequenceManifest manifest;
  const std::filesystem::path parent = std::filesystem::path(path).parent_path();
  manifest.base_dir = parent.empty() ? "." : parent.string();

  std::set<std::string> seen;
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    const auto tokens = SplitWhitespace(line);
    if (tokens.empty() || tokens[0].front() == '#') continue;
    const std::string where = "line " + std::to_string(line_number) + ": ";
    if (tokens.size() != 2) {
      throw IoError(path, where + "expected `key value`");
    }
    const std::string key(tokens[0]);
    const std::string value(tokens[1]);
    if (!seen.insert(key).second) throw IoError(path, where + "duplicate key " + key);

    auto number = [&]() {
      double v;
      if (!ParseDouble(value, &v) || !std::isfinite(v)) {
        throw IoError(path, where + "bad number for " + key);
      }
      return v;
    };
    auto integer = [&]() {
      long long v;
      if (!ParseInt(value, &v) || v < 0) {
        throw IoError(path, where + "bad integer for " + key);
      }
      return static_cast<int>(v);
    };

    if (key == "fps") {
      manifest.fps = number();
      if (!(manifest.fps > 0.0)) throw IoError(path, where + "fps must be positive");
    } else if (key == "depth_scale") {
      manifest.depth_scale = number();
      if (!(manifest.depth_scale > 0.0)) {
        throw IoError(path, where + "depth_scale must be positive");
      }
    } else if (key == "intrinsics") {
      manifest.intrinsics = value;
    } else if (key == "frames") {
      manifest.frames = integer();
    } else if (key == "first_frame") {
      manifest.first_frame = integer();
    } else if (key == "features") {
      manifest.features = value;
    } else if (key == "images") {
      manifest.images = value;
    } else if (key == "depth") {
      manifest.depth = value;
    } else if (key == "gt_trajectory") {
      manifest.gt_trajectory = value;
    } else if (key == "annotations") {
      manifest.annotations = value;
    } else {
      throw IoError(path, where + "unknown key " + key);
    }
  }
  return manifest;
}

void WriteManifest(const std::string& path, const SequenceManifest& m) {
  std::ofstream out = OpenForWrite(path);
  out << "fps " << FormatDouble(m.fps) << '\n';
  out << "depth_scale " << FormatDouble(m.depth_scale) << '\n';
  if (!m.intrinsics.empty()) out << "intrinsics " << m.intrinsics << '\n';
  out << "frames " << m.frames << '\n';
  out << "first_frame " << m.first_frame << '\n';
  out << "features " << m.features << '\n';
  if (!m.images.empty()) out << "images " << m.images << '\n';
  if (!m.depth.empty()) out << "depth " << m.depth << '\n';
  if (!m.gt_trajectory.empty()) out << "gt_trajectory " << m.gt_trajectory << '\n';
  if (!m.annotations.empty()) out << "annotations " << m.annotations << '\n';
  if (!out) throw IoError(path, "write failed");
}

}  // namespace sivo
