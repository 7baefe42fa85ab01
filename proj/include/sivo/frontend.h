#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sivo/image.h"

namespace sivo {

// Keypoints, descriptors and scores for one frame. This is the contract a
// learned frontend fills through feature files; the built-in detector below
// produces the same structure from raw images.
struct FrameFeatures {
  int frame_index = 0;
  std::vector<Eigen::Vector2d> keypoints;
  // One unit-norm column per keypoint (dim x O).
  Eigen::MatrixXd descriptors;
  // Per-keypoint confidence in [0, 1].
  std::vector<double> scores;

  int size() const { return static_cast<int>(keypoints.size()); }
  int dim() const { return static_cast<int>(descriptors.rows()); }

  // Throws std::invalid_argument if the lists disagree in length, a keypoint
  // lies outside [0,width)x[0,height), a descriptor is not unit norm or a
  // score leaves [0, 1].
  void Validate(int width, int height) const;
};

struct DetectorOptions {
  int max_points = 500;
  // Corners below quality_level * strongest response are rejected.
  double quality_level = 0.01;
  // Structure tensor window is (2r+1)^2.
  int block_radius = 2;
  // Descriptor patch is (2r+1)^2; 5 gives 11x11 = 121 dimensions.
  int patch_radius = 5;
};

// Shi-Tomasi corners with 3x3 non-maximum suppression, ranked by score (ties
// by (y, x)), each described by a mean-subtracted, L2-normalized intensity
// patch zero-padded at the border.
FrameFeatures DetectAndDescribe(const GrayImage& image,
                                const DetectorOptions& options = {},
                                int frame_index = 0);

class FeatureFileError : public std::runtime_error {
 public:
  enum class Kind { kMalformedHeader, kLengthMismatch, kNonFinite, kMalformedValue };

  FeatureFileError(Kind kind, int line, const std::string& path,
                   const std::string& what);

  Kind kind() const { return kind_; }
  // 1-based line number in the file.
  int line() const { return line_; }

 private:
  Kind kind_;
  int line_;
};

// Text format: header `VOF1 <count> <dim>`, then one line per keypoint
// `x y score d1 ... d_dim`.
void WriteFeatureFile(const std::string& path, const FrameFeatures& features);
FrameFeatures ReadFeatureFile(const std::string& path, int frame_index);

}  // namespace sivo
