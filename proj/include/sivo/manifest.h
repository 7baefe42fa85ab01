#pragma once

#include <string>

namespace sivo {

// Sequence manifest: text lines `key value`, '#' starts a comment. Relative
// paths are resolved against the manifest's directory.
//
//   fps 30
//   depth_scale 1000
//   intrinsics intrinsics.txt
//   frames 40
//   first_frame 0
//   features frame_%06d.features
//   images frame_%06d.pgm
//   depth depth_%06d.pgm
//   gt_trajectory gt.tum
//   annotations annotations.txt
struct SequenceManifest {
  std::string base_dir = ".";
  double fps = 30.0;
  double depth_scale = 1000.0;
  std::string intrinsics;
  int frames = 0;
  int first_frame = 0;
  std::string features = "frame_%06d.features";
  std::string images;
  std::string depth;
  std::string gt_trajectory;
  std::string annotations;

  std::string Resolve(const std::string& relative) const;
  std::string FeaturePath(int frame_index) const;
  std::string ImagePath(int frame_index) const;
  std::string DepthPath(int frame_index) const;
};

// Throws IoError on unknown keys, duplicate keys or malformed values.
SequenceManifest ReadManifest(const std::string& path);
void WriteManifest(const std::string& path, const SequenceManifest& manifest);

}  // namespace sivo
