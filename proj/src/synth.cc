#include "sivo/synth.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include <Eigen/Geometry>

#include "sivo/evalkit.h"
#include "sivo/io_util.h"
#include "sivo/manifest.h"

namespace sivo {
namespace {

Eigen::Vector3d RandomNormal3(std::mt19937_64& rng, double sigma) {
  std::normal_distribution<double> normal(0.0, sigma);
  const double x = normal(rng);
  const double y = normal(rng);
  const double z = normal(rng);
  return {x, y, z};
}

Eigen::Vector3d ClampNorm(const Eigen::Vector3d& v, double max_norm) {
  const double n = v.norm();
  return n > max_norm ? Eigen::Vector3d(v * (max_norm / n)) : v;
}

Eigen::VectorXd RandomUnit(std::mt19937_64& rng, int dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(dim);
  do {
    for (int i = 0; i < dim; ++i) v[i] = normal(rng);
  } while (v.norm() < 1e-6);
  return v.normalized();
}

// Camera-to-world rotation as a rotation vector.
Eigen::Vector3d RotationVector(const Eigen::Matrix3d& r) {
  const Eigen::AngleAxisd aa(r);
  return aa.angle() * aa.axis();
}

std::vector<Pose> GenerateTrajectory(const SceneConfig& c, std::mt19937_64& rng) {
  std::vector<Pose> poses;
  poses.reserve(c.n_frames);
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Vector3d velocity = Eigen::Vector3d::Zero();
  Eigen::Vector3d angular = Eigen::Vector3d::Zero();
  Eigen::Matrix3d r_wc = Eigen::Matrix3d::Identity();
  for (int k = 0; k < c.n_frames; ++k) {
    if (k > 0) {
      velocity = 0.9 * velocity + RandomNormal3(rng, 0.3 * c.max_translation_step) -
                 0.02 * position;
      velocity = ClampNorm(velocity, c.max_translation_step);
      position += velocity;
      angular = 0.9 * angular + RandomNormal3(rng, 0.3 * c.max_rotation_step) -
                0.02 * RotationVector(r_wc);
      angular = ClampNorm(angular, c.max_rotation_step);
      r_wc = NearestRotation(r_wc * ExpSO3(angular));
    }
    Pose pose;
    pose.rotation = r_wc.transpose();
    pose.translation = -(pose.rotation * position);
    poses.push_back(pose);
  }
  return poses;
}

bool Visible(const SceneConfig& c, const Pose& pose, const Point3& x,
             Eigen::Vector2d* pixel, double* depth) {
  const Eigen::Vector3d cam = pose * x;
  if (!(cam.z() > c.min_visible_depth)) return false;
  const Intrinsics& k = c.intrinsics;
  const Eigen::Vector2d p(k.fx * cam.x() / cam.z() + k.cx,
                          k.fy * cam.y() / cam.z() + k.cy);
  if (p.x() < c.border || p.x() >= k.width - c.border || p.y() < c.border ||
      p.y() >= k.height - c.border) {
    return false;
  }
  *pixel = p;
  if (depth) *depth = cam.z();
  return true;
}

Eigen::Vector2d ClampToImage(const Intrinsics& k, const Eigen::Vector2d& p) {
  const double max_x = std::nextafter(static_cast<double>(k.width), 0.0);
  const double max_y = std::nextafter(static_cast<double>(k.height), 0.0);
  return {std::clamp(p.x(), 0.0, max_x), std::clamp(p.y(), 0.0, max_y)};
}

}  // namespace

void SceneConfig::Validate() const {
  intrinsics.Validate();
  if (n_frames <= 0 || n_points <= 0) {
    throw std::invalid_argument("scene: frame and point counts must be positive");
  }
  if (!(min_visible_depth > 0.0)) {
    throw std::invalid_argument("scene: min_visible_depth must be positive");
  }
  if (!(min_depth > 0.0 && max_depth > min_depth)) {
    throw std::invalid_argument("scene: need 0 < min_depth < max_depth");
  }
  if (!(max_rotation_step >= 0.0) || !(max_translation_step >= 0.0)) {
    throw std::invalid_argument("scene: step limits must be non-negative");
  }
  if (!(pixel_noise >= 0.0) || !(descriptor_noise >= 0.0)) {
    throw std::invalid_argument("scene: noise must be non-negative");
  }
  if (!(outlier_fraction >= 0.0 && outlier_fraction <= 1.0)) {
    throw std::invalid_argument("scene: outlier fraction outside [0, 1]");
  }
  if (!(min_outlier_offset >= 0.0) || !(drift_min_px >= 0.0) ||
      !(drift_max_px >= drift_min_px)) {
    throw std::invalid_argument("scene: bad outlier offsets");
  }
  if (drift_min_run_length < 2) throw std::invalid_argument("scene: drift run length");
  if (descriptor_dim <= 0) throw std::invalid_argument("scene: descriptor dim");
  if (!(border >= 0.0 && 2.0 * border < std::min(intrinsics.width, intrinsics.height))) {
    throw std::invalid_argument("scene: border too large");
  }
}

SceneConfig StressSceneConfig(uint64_t seed) {
  SceneConfig config;
  config.min_depth = 0.05;
  config.max_depth = 8.0;
  config.min_visible_depth = 0.02;
  config.descriptor_noise = 0.35;
  config.pixel_noise = 1.0;
  config.seed = seed;
  return config;
}

int SyntheticScene::KeypointOf(int frame, int point) const {
  const auto& ids = point_of_keypoint.at(frame);
  const auto it = std::find(ids.begin(), ids.end(), point);
  return it == ids.end() ? -1 : static_cast<int>(it - ids.begin());
}

SyntheticScene GenerateScene(const SceneConfig& config) {
  config.Validate();
  std::mt19937_64 rng(config.seed);
  SyntheticScene scene;
  scene.config = config;
  scene.poses = GenerateTrajectory(config, rng);

  const Intrinsics& k = config.intrinsics;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  scene.points.reserve(config.n_points);
  for (int j = 0; j < config.n_points; ++j) {
    const double u = config.border + unit(rng) * (k.width - 2.0 * config.border);
    const double v = config.border + unit(rng) * (k.height - 2.0 * config.border);
    const double z = config.min_depth + unit(rng) * (config.max_depth - config.min_depth);
    scene.points.push_back(k.Backproject({u, v}, z));
  }
  std::vector<Eigen::VectorXd> bases;
  bases.reserve(config.n_points);
  for (int j = 0; j < config.n_points; ++j) {
    bases.push_back(RandomUnit(rng, config.descriptor_dim));
  }

  // Visibility runs.
  const int n_frames = config.n_frames;
  std::vector<std::vector<Eigen::Vector2d>> projection(
      n_frames, std::vector<Eigen::Vector2d>(config.n_points));
  std::vector<std::vector<int>> run_of(n_frames, std::vector<int>(config.n_points, -1));
  for (int j = 0; j < config.n_points; ++j) {
    for (int f = 0; f < n_frames; ++f) {
      if (!Visible(config, scene.poses[f], scene.points[j], &projection[f][j], nullptr)) {
        continue;
      }
      if (f > 0 && run_of[f - 1][j] >= 0) {
        run_of[f][j] = run_of[f - 1][j];
        ++scene.runs[run_of[f][j]].length;
      } else {
        run_of[f][j] = static_cast<int>(scene.runs.size());
        scene.runs.push_back({j, f, 1, false});
      }
    }
  }
  if (scene.runs.empty()) {
    throw std::runtime_error("scene: no point is visible in any frame");
  }

  // Drifting runs: chosen among long runs; the displacement ramps linearly
  // over the second half of the run. A run ends where its displaced pixel
  // leaves the image and the point's later frames start a new run.
  std::vector<std::vector<Eigen::Vector2d>> drift_offset(
      n_frames, std::vector<Eigen::Vector2d>(config.n_points, Eigen::Vector2d::Zero()));
  if (config.outlier_mode == OutlierMode::kDrift && config.outlier_fraction > 0.0) {
    std::vector<int> candidates;
    for (size_t r = 0; r < scene.runs.size(); ++r) {
      if (scene.runs[r].length >= config.drift_min_run_length) {
        candidates.push_back(static_cast<int>(r));
      }
    }
    std::shuffle(candidates.begin(), candidates.end(), rng);
    const size_t wanted = static_cast<size_t>(
        std::lround(config.outlier_fraction * static_cast<double>(scene.runs.size())));
    candidates.resize(std::min(wanted, candidates.size()));
    std::sort(candidates.begin(), candidates.end());
    for (int r : candidates) {
      const double angle = 2.0 * M_PI * unit(rng);
      const Eigen::Vector2d direction(std::cos(angle), std::sin(angle));
      const double magnitude =
          config.drift_min_px + unit(rng) * (config.drift_max_px - config.drift_min_px);
      const VisibilityRun run = scene.runs[r];
      const int j = run.point;
      const int start = run.length / 2;
      int kept = run.length;
      for (int step = start + 1; step < run.length; ++step) {
        const int f = run.first_frame + step;
        const double ramp = static_cast<double>(step - start) / (run.length - 1 - start);
        const Eigen::Vector2d offset = ramp * magnitude * direction;
        const Eigen::Vector2d shown = projection[f][j] + offset;
        if (shown.x() < config.border || shown.x() >= k.width - config.border ||
            shown.y() < config.border || shown.y() >= k.height - config.border) {
          kept = step;
          break;
        }
        drift_offset[f][j] = offset;
      }
      scene.runs[r].drifted = kept > start + 1;
      if (kept == run.length) continue;
      scene.runs[r].length = kept;
      run_of[run.first_frame + kept][j] = -1;
      const int rest = run.first_frame + kept + 1;
      const int end = run.first_frame + run.length;
      if (rest < end) {
        const int id = static_cast<int>(scene.runs.size());
        scene.runs.push_back({j, rest, end - rest, false});
        for (int f = rest; f < end; ++f) run_of[f][j] = id;
      }
    }
  }

  std::normal_distribution<double> pixel_noise(0.0, config.pixel_noise);
  scene.frames.resize(n_frames);
  scene.point_of_keypoint.resize(n_frames);
  scene.run_of_keypoint.resize(n_frames);
  scene.true_pixels.resize(n_frames);
  scene.is_outlier.resize(n_frames);
  scene.is_drifted.resize(n_frames);
  for (int f = 0; f < n_frames; ++f) {
    std::vector<int> visible;
    for (int j = 0; j < config.n_points; ++j) {
      if (run_of[f][j] >= 0) visible.push_back(j);
    }
    std::shuffle(visible.begin(), visible.end(), rng);

    FrameFeatures& features = scene.frames[f];
    features.frame_index = f;
    features.descriptors.resize(config.descriptor_dim, static_cast<Eigen::Index>(visible.size()));
    for (size_t i = 0; i < visible.size(); ++i) {
      const int j = visible[i];
      const int r = run_of[f][j];
      const Eigen::Vector2d& truth = projection[f][j];
      Eigen::Vector2d pixel = truth;
      if (config.pixel_noise > 0.0) {
        const double dx = pixel_noise(rng);
        const double dy = pixel_noise(rng);
        pixel += Eigen::Vector2d(dx, dy);
      }
      bool outlier = false;
      bool drifted = false;
      if (config.outlier_mode == OutlierMode::kUniform && config.outlier_fraction > 0.0 &&
          unit(rng) < config.outlier_fraction) {
        Eigen::Vector2d candidate;
        do {
          candidate = {unit(rng) * k.width, unit(rng) * k.height};
        } while ((candidate - truth).norm() < config.min_outlier_offset);
        pixel = candidate;
        outlier = true;
      }
      if (drift_offset[f][j] != Eigen::Vector2d::Zero()) {
        pixel += drift_offset[f][j];
        drifted = true;
      }
      features.keypoints.push_back(ClampToImage(k, pixel));
      features.scores.push_back(1.0);
      const Eigen::VectorXd noise = config.descriptor_noise * RandomUnit(rng, config.descriptor_dim);
      features.descriptors.col(static_cast<Eigen::Index>(i)) = (bases[j] + noise).normalized();
      scene.point_of_keypoint[f].push_back(j);
      scene.run_of_keypoint[f].push_back(r);
      scene.true_pixels[f].push_back(truth);
      scene.is_outlier[f].push_back(outlier);
      scene.is_drifted[f].push_back(drifted);
    }
  }
  return scene;
}

DepthImage RenderDepth(const SyntheticScene& scene, int frame, double depth_scale,
                       int radius) {
  if (!(depth_scale > 0.0) || radius < 0) {
    throw std::invalid_argument("render depth: bad scale or radius");
  }
  const Intrinsics& k = scene.config.intrinsics;
  std::vector<double> zbuffer(static_cast<size_t>(k.width) * k.height,
                              std::numeric_limits<double>::infinity());
  const Pose& pose = scene.poses.at(frame);
  for (const Point3& x : scene.points) {
    Eigen::Vector2d pixel;
    double depth;
    if (!Visible(scene.config, pose, x, &pixel, &depth)) continue;
    const int cx = static_cast<int>(std::lround(pixel.x()));
    const int cy = static_cast<int>(std::lround(pixel.y()));
    for (int y = cy - radius; y <= cy + radius; ++y) {
      for (int x_px = cx - radius; x_px <= cx + radius; ++x_px) {
        if (x_px < 0 || y < 0 || x_px >= k.width || y >= k.height) continue;
        double& z = zbuffer[static_cast<size_t>(y) * k.width + x_px];
        z = std::min(z, depth);
      }
    }
  }
  DepthImage image;
  image.width = k.width;
  image.height = k.height;
  image.data.assign(zbuffer.size(), 0);
  for (size_t i = 0; i < zbuffer.size(); ++i) {
    if (!std::isfinite(zbuffer[i])) continue;
    const double value = std::round(zbuffer[i] * depth_scale);
    if (value >= 1.0 && value <= 65535.0) image.data[i] = static_cast<uint16_t>(value);
  }
  return image;
}

void WriteSceneDirectory(const SyntheticScene& scene, const std::string& directory,
                         const SceneWriteOptions& options) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(directory, ec);
  if (ec) throw IoError(directory, "cannot create directory: " + ec.message());
  const fs::path dir(directory);

  SequenceManifest manifest;
  manifest.fps = options.fps;
  manifest.depth_scale = options.depth_scale;
  manifest.intrinsics = "intrinsics.txt";
  manifest.frames = static_cast<int>(scene.frames.size());
  manifest.features = "frame_%06d.features";
  if (options.write_depth) manifest.depth = "depth_%06d.pgm";
  manifest.gt_trajectory = "gt.tum";
  manifest.annotations = "annotations.txt";
  manifest.base_dir = directory;
  WriteManifest((dir / "manifest.txt").string(), manifest);
  WriteIntrinsicsFile((dir / "intrinsics.txt").string(), scene.config.intrinsics);

  std::vector<StampedPose> trajectory;
  for (size_t f = 0; f < scene.frames.size(); ++f) {
    WriteFeatureFile(manifest.FeaturePath(static_cast<int>(f)), scene.frames[f]);
    if (options.write_depth) {
      WritePgm16(manifest.DepthPath(static_cast<int>(f)),
                 RenderDepth(scene, static_cast<int>(f), options.depth_scale));
    }
    trajectory.push_back({static_cast<double>(f) / options.fps, scene.poses[f]});
  }
  WriteTumTrajectory((dir / "gt.tum").string(), trajectory);

  const std::string annotations = (dir / "annotations.txt").string();
  std::ofstream out = OpenForWrite(annotations);
  out << "# frame keypoint point run outlier drifted\n";
  for (size_t f = 0; f < scene.frames.size(); ++f) {
    for (size_t i = 0; i < scene.point_of_keypoint[f].size(); ++i) {
      out << f << ' ' << i << ' ' << scene.point_of_keypoint[f][i] << ' '
          << scene.run_of_keypoint[f][i] << ' ' << int(scene.is_outlier[f][i]) << ' '
          << int(scene.is_drifted[f][i]) << '\n';
    }
  }
  if (!out) throw IoError(annotations, "write failed");
}

std::vector<KeypointAnnotation> ReadAnnotationFile(const std::string& path) {
  std::ifstream in = OpenForRead(path);
  std::vector<KeypointAnnotation> rows;
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    const auto tokens = SplitWhitespace(line);
    if (tokens.empty() || tokens[0].front() == '#') continue;
    long long v[6];
    bool ok = tokens.size() == 6;
    for (size_t i = 0; ok && i < 6; ++i) ok = ParseInt(tokens[i], &v[i]);
    if (!ok) throw IoError(path, "line " + std::to_string(line_number) + ": malformed");
    rows.push_back({static_cast<int>(v[0]), static_cast<int>(v[1]), static_cast<int>(v[2]),
                    static_cast<int>(v[3]), v[4] != 0, v[5] != 0});
  }
  return rows;
}

}  // namespace sivo
