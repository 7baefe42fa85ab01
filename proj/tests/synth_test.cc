#include <cmath>
#include <fstream>

#include <gtest/gtest.h>

#include "sivo/evalkit.h"
#include "sivo/io_util.h"
#include "sivo/manifest.h"
#include "sivo/synth.h"
#include "test_support.h"

namespace sivo {
namespace {

using testing::TempDir;

std::string Slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

TEST(Synth, DeterministicForSeed) {
  SceneConfig c;
  c.seed = 3;
  c.pixel_noise = 0.5;
  c.outlier_mode = OutlierMode::kUniform;
  c.outlier_fraction = 0.1;
  const SyntheticScene a = GenerateScene(c);
  const SyntheticScene b = GenerateScene(c);
  ASSERT_EQ(a.frames.size(), b.frames.size());
  for (size_t f = 0; f < a.frames.size(); ++f) {
    EXPECT_EQ(a.frames[f].keypoints, b.frames[f].keypoints);
    EXPECT_EQ(a.frames[f].descriptors, b.frames[f].descriptors);
    EXPECT_EQ(a.point_of_keypoint[f], b.point_of_keypoint[f]);
  }
  c.seed = 4;
  EXPECT_NE(GenerateScene(c).frames[1].keypoints, a.frames[1].keypoints);
}

TEST(Synth, NoiseFreeKeypointsAreExactProjections) {
  SceneConfig c;
  c.seed = 5;
  const SyntheticScene s = GenerateScene(c);
  EXPECT_EQ(s.poses[0].rotation, Eigen::Matrix3d::Identity());
  EXPECT_EQ(s.poses[0].translation, Eigen::Vector3d::Zero());
  int total = 0;
  for (size_t f = 0; f < s.frames.size(); ++f) {
    EXPECT_NO_THROW(s.frames[f].Validate(640, 480));
    EXPECT_EQ(s.frames[f].dim(), c.descriptor_dim);
    for (int i = 0; i < s.frames[f].size(); ++i) {
      const auto p = Project(c.intrinsics, s.poses[f], s.points[s.point_of_keypoint[f][i]]);
      ASSERT_TRUE(p);
      EXPECT_GT(p->depth, c.min_visible_depth);
      EXPECT_LT((p->pixel - s.frames[f].keypoints[i]).norm(), 1e-12);
      EXPECT_EQ(s.true_pixels[f][i], s.frames[f].keypoints[i]);
      ++total;
    }
  }
  EXPECT_GT(total, 40 * 100);
}

TEST(Synth, MotionStaysWithinLimits) {
  SceneConfig c;
  c.seed = 6;
  c.n_frames = 100;
  const SyntheticScene s = GenerateScene(c);
  for (size_t f = 1; f < s.poses.size(); ++f) {
    const Pose rel = s.poses[f] * s.poses[f - 1].Inverse();
    EXPECT_LE((s.poses[f].Center() - s.poses[f - 1].Center()).norm(),
              c.max_translation_step + 1e-12);
    EXPECT_LE(RotationAngleDeg(rel.rotation, Eigen::Matrix3d::Identity()),
              c.max_rotation_step * 180 / M_PI + 1e-9);
  }
}

TEST(Synth, RunsAreMaximalConsecutiveVisibility) {
  SceneConfig c;
  c.seed = 7;
  c.n_frames = 60;
  const SyntheticScene s = GenerateScene(c);
  std::vector<int> seen(s.runs.size(), 0);
  for (size_t f = 0; f < s.frames.size(); ++f) {
    for (size_t i = 0; i < s.run_of_keypoint[f].size(); ++i) {
      const VisibilityRun& r = s.runs[s.run_of_keypoint[f][i]];
      EXPECT_EQ(r.point, s.point_of_keypoint[f][i]);
      EXPECT_GE(static_cast<int>(f), r.first_frame);
      EXPECT_LT(static_cast<int>(f), r.first_frame + r.length);
      ++seen[s.run_of_keypoint[f][i]];
    }
  }
  for (size_t r = 0; r < s.runs.size(); ++r) EXPECT_EQ(seen[r], s.runs[r].length);
  EXPECT_EQ(s.KeypointOf(0, s.point_of_keypoint[0][3]), 3);
}

TEST(Synth, UniformOutliersAreGross) {
  SceneConfig c;
  c.seed = 8;
  c.outlier_mode = OutlierMode::kUniform;
  c.outlier_fraction = 0.3;
  const SyntheticScene s = GenerateScene(c);
  int outliers = 0, total = 0;
  for (size_t f = 0; f < s.frames.size(); ++f) {
    for (int i = 0; i < s.frames[f].size(); ++i, ++total) {
      if (!s.is_outlier[f][i]) continue;
      ++outliers;
      EXPECT_GE((s.frames[f].keypoints[i] - s.true_pixels[f][i]).norm(), c.min_outlier_offset);
    }
  }
  EXPECT_NEAR(static_cast<double>(outliers) / total, 0.3, 0.03);
}

TEST(Synth, DriftRampsOverSecondHalfOfLongRuns) {
  SceneConfig c;
  c.seed = 9;
  c.n_frames = 100;
  c.n_points = 300;
  c.outlier_mode = OutlierMode::kDrift;
  c.outlier_fraction = 0.1;
  const SyntheticScene s = GenerateScene(c);
  int drifted = 0;
  for (const VisibilityRun& r : s.runs) drifted += r.drifted;
  EXPECT_GT(drifted, 0);
  for (size_t run = 0; run < s.runs.size(); ++run) {
    const VisibilityRun& r = s.runs[run];
    // A clean prefix covering at least the first half, then (for drifted
    // runs) a strictly growing offset up to the run's last frame.
    double last = 0.0;
    bool drifting = false;
    for (int step = 0; step < r.length; ++step) {
      const int f = r.first_frame + step;
      const int k = s.KeypointOf(f, r.point);
      ASSERT_GE(k, 0);
      const double offset = (s.frames[f].keypoints[k] - s.true_pixels[f][k]).norm();
      EXPECT_EQ(offset > 0.0, static_cast<bool>(s.is_drifted[f][k]));
      if (!r.drifted || step <= r.length / 2) {
        EXPECT_EQ(offset, 0.0);
        continue;
      }
      if (offset > 0.0) drifting = true;
      if (drifting) {
        EXPECT_GT(offset, last);
        EXPECT_LE(offset, c.drift_max_px + 1e-9);
      }
      last = offset;
    }
    EXPECT_EQ(drifting, r.drifted);
  }
}

TEST(Synth, RenderDepthMatchesPoints) {
  SceneConfig c;
  c.seed = 10;
  const SyntheticScene s = GenerateScene(c);
  const DepthImage d = RenderDepth(s, 5, 1000.0);
  int exact = 0;
  for (int i = 0; i < s.frames[5].size(); ++i) {
    const auto z = LookupDepth(d, s.frames[5].keypoints[i], 1000.0);
    ASSERT_TRUE(z);
    const double truth =
        (s.poses[5] * s.points[s.point_of_keypoint[5][i]]).z();
    // Nearer splats may cover a pixel; never farther than the point itself.
    EXPECT_LE(*z, truth + 0.0005);
    exact += std::abs(*z - truth) <= 0.0005;
  }
  EXPECT_GT(exact, s.frames[5].size() * 8 / 10);
}

TEST(Synth, ValidateRejectsBadConfig) {
  SceneConfig c;
  c.n_points = 0;
  EXPECT_THROW(GenerateScene(c), std::invalid_argument);
  c = SceneConfig{};
  c.outlier_fraction = 1.5;
  EXPECT_THROW(GenerateScene(c), std::invalid_argument);
  c = SceneConfig{};
  c.min_depth = 5.0;
  EXPECT_THROW(GenerateScene(c), std::invalid_argument);
}

TEST(Synth, StressConfigLeavesDepthBounds) {
  const SceneConfig c = StressSceneConfig(11);
  EXPECT_LT(c.min_depth, 0.1);
  EXPECT_GT(c.max_depth, 5.0);
  const SyntheticScene s = GenerateScene(c);
  EXPECT_EQ(s.frames.size(), 40u);
}

TEST(SceneDirectory, WritesReadableSequence) {
  TempDir dir;
  SceneConfig c;
  c.seed = 12;
  c.n_frames = 8;
  c.outlier_mode = OutlierMode::kUniform;
  c.outlier_fraction = 0.2;
  const SyntheticScene s = GenerateScene(c);
  WriteSceneDirectory(s, dir / "scene", {3.0, 1000.0, true});
  const SequenceManifest m = ReadManifest(dir / "scene/manifest.txt");
  EXPECT_EQ(m.frames, 8);
  EXPECT_EQ(m.fps, 3.0);
  const Intrinsics k = ReadIntrinsicsFile(m.Resolve(m.intrinsics));
  EXPECT_EQ(k.fx, c.intrinsics.fx);
  for (int f = 0; f < 8; ++f) {
    const FrameFeatures ff = ReadFeatureFile(m.FeaturePath(f), f);
    EXPECT_EQ(ff.keypoints, s.frames[f].keypoints);
    EXPECT_EQ(ff.descriptors, s.frames[f].descriptors);
    EXPECT_EQ(ReadPgm16(m.DepthPath(f)).data, RenderDepth(s, f, 1000.0).data);
  }
  const auto gt = ReadTumTrajectory(m.Resolve(m.gt_trajectory));
  ASSERT_EQ(gt.size(), 8u);
  EXPECT_NEAR(gt[3].timestamp, 1.0, 1e-15);
  EXPECT_NEAR((gt[7].pose.Center() - s.poses[7].Center()).norm(), 0.0, 1e-12);
  const auto rows = ReadAnnotationFile(m.Resolve(m.annotations));
  size_t n = 0;
  for (const auto& row : rows) {
    EXPECT_EQ(row.point, s.point_of_keypoint[row.frame][row.keypoint]);
    EXPECT_EQ(row.outlier, static_cast<bool>(s.is_outlier[row.frame][row.keypoint]));
    ++n;
  }
  size_t expected = 0;
  for (const auto& f : s.frames) expected += f.size();
  EXPECT_EQ(n, expected);

  // Same scene written twice is byte-identical.
  WriteSceneDirectory(GenerateScene(c), dir / "again", {3.0, 1000.0, true});
  for (const char* name : {"manifest.txt", "frame_000004.features", "depth_000004.pgm",
                           "gt.tum", "annotations.txt"}) {
    EXPECT_EQ(Slurp(dir / (std::string("scene/") + name)),
              Slurp(dir / (std::string("again/") + name)))
        << name;
  }
}

}  // namespace
}  // namespace sivo
