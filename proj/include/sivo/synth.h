#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sivo/frontend.h"
#include "sivo/geometry.h"
#include "sivo/image.h"

namespace sivo {

enum class OutlierMode {
  kNone,
  // Observations replaced by uniformly random pixels.
  kUniform,
  // Whole tracks whose second half slides linearly away from the true
  // projection (a point that cannot be explained by one rigid 3D position).
  kDrift,
};

struct SceneConfig {
  int n_frames = 40;
  int n_points = 200;
  Intrinsics intrinsics{500.0, 500.0, 320.0, 240.0, 640, 480};
  // Points fill the first camera's frustum between these depths.
  double min_depth = 0.5;
  double max_depth = 4.0;
  // Smooth random walk limits per frame (radians, scene units).
  double max_rotation_step = 0.005;
  double max_translation_step = 0.04;
  double pixel_noise = 0.0;
  OutlierMode outlier_mode = OutlierMode::kNone;
  // Fraction of observations (uniform) or of tracks (drift).
  double outlier_fraction = 0.0;
  // Uniform outliers land at least this far from the true projection.
  double min_outlier_offset = 24.0;
  // Final displacement of a drifting track, drawn from this range.
  double drift_min_px = 12.0;
  double drift_max_px = 20.0;
  // Only visibility runs at least this long drift; the ramp covers their
  // second half.
  int drift_min_run_length = 30;
  int descriptor_dim = 32;
  double descriptor_noise = 0.05;
  // Observations closer than this to the image border, or to the camera, are
  // not visible.
  double border = 4.0;
  double min_visible_depth = 0.3;
  uint64_t seed = 0;

  void Validate() const;
};

// Points outside the depth-regularizer range plus descriptor noise large
// enough to cause mismatches.
SceneConfig StressSceneConfig(uint64_t seed);

// A maximal run of consecutive frames in which one point is visible; the
// ground-truth counterpart of a track.
struct VisibilityRun {
  int point = 0;
  int first_frame = 0;
  int length = 0;
  bool drifted = false;
};

struct SyntheticScene {
  SceneConfig config;
  std::vector<Pose> poses;  // world-to-camera; poses[0] is the identity
  std::vector<Point3> points;
  std::vector<FrameFeatures> frames;
  std::vector<VisibilityRun> runs;
  // Per frame, per keypoint annotations.
  std::vector<std::vector<int>> point_of_keypoint;
  std::vector<std::vector<int>> run_of_keypoint;
  std::vector<std::vector<Eigen::Vector2d>> true_pixels;
  std::vector<std::vector<char>> is_outlier;
  std::vector<std::vector<char>> is_drifted;

  // Keypoint index of `point` in `frame`, or -1.
  int KeypointOf(int frame, int point) const;
};

// Deterministic for a given config. Throws std::runtime_error if no point is
// visible in any frame.
SyntheticScene GenerateScene(const SceneConfig& config);

// Per-pixel depth of the nearest point splatted over a square of
// (2 * radius + 1)^2 pixels around each projection; 0 where nothing projects.
DepthImage RenderDepth(const SyntheticScene& scene, int frame,
                       double depth_scale, int radius = 3);

struct SceneWriteOptions {
  double fps = 30.0;
  double depth_scale = 1000.0;
  bool write_depth = true;
};

// Writes manifest.txt, intrinsics.txt, frame_%06d.features,
// depth_%06d.pgm, gt.tum and annotations.txt into `directory`.
void WriteSceneDirectory(const SyntheticScene& scene,
                         const std::string& directory,
                         const SceneWriteOptions& options = {});

// Annotation file rows: `frame keypoint point run outlier drifted`.
struct KeypointAnnotation {
  int frame = 0;
  int keypoint = 0;
  int point = 0;
  int run = 0;
  bool outlier = false;
  bool drifted = false;
};
std::vector<KeypointAnnotation> ReadAnnotationFile(const std::string& path);

}  // namespace sivo
