#include <cmath>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "sivo/evalkit.h"
#include "sivo/io_util.h"
#include "sivo/synth.h"
#include "test_support.h"

namespace sivo {
namespace {

using testing::Gaussian3;
using testing::RandomPose;
using testing::TempDir;

const Intrinsics kK{500.0, 500.0, 320.0, 240.0, 640, 480};

std::vector<Point3> PointsInView(std::mt19937_64& rng, const Pose& pose, int n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Point3> pts;
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector2d px(640 * u(rng), 480 * u(rng));
    pts.push_back(pose.Inverse() * kK.Backproject(px, 1.0 + 4.0 * u(rng)));
  }
  return pts;
}

TEST(RelativePoseError, RotationAndTranslation) {
  Pose gt = Pose::Identity();
  Pose est;
  est.rotation = ExpSO3(Eigen::Vector3d(0, 0, M_PI / 18));
  est.translation = Eigen::Vector3d(0.03, 0.04, 0);
  const PoseError e = RelativePoseError(est, gt);
  EXPECT_NEAR(e.rot_deg, 10.0, 1e-9);
  EXPECT_NEAR(e.trans, 0.05, 1e-15);
  std::mt19937_64 rng(1);
  const Pose p = RandomPose(rng, 1.0, 1.0);
  EXPECT_NEAR(RelativePoseError(p, p).rot_deg, 0.0, 1e-5);
  EXPECT_NEAR(RelativePoseError(p, p).trans, 0.0, 1e-12);
}

TEST(P3P, RecoversTruthAmongCandidates) {
  std::mt19937_64 rng(10);
  int found = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const Pose truth = RandomPose(rng, 1.0, 1.0);
    const auto pts = PointsInView(rng, truth, 3);
    std::array<Eigen::Vector2d, 3> px;
    std::array<Point3, 3> x;
    for (int i = 0; i < 3; ++i) {
      x[i] = pts[i];
      px[i] = Project(kK, truth, pts[i])->pixel;
    }
    const auto candidates = SolveP3P(kK, px, x);
    EXPECT_LE(candidates.size(), 4u);
    bool hit = false;
    for (const Pose& c : candidates) {
      EXPECT_TRUE(c.IsValid(1e-9));
      for (int i = 0; i < 3; ++i) {
        const auto p = Project(kK, c, x[i]);
        ASSERT_TRUE(p);
        EXPECT_LT((p->pixel - px[i]).norm(), 1e-6);
      }
      hit |= (c.rotation - truth.rotation).norm() < 1e-6 &&
             (c.translation - truth.translation).norm() < 1e-6;
    }
    found += hit;
  }
  // Near-degenerate triples can lose precision; nearly all must succeed.
  EXPECT_GE(found, 198);
}

TEST(P3P, CollinearPointsThrow) {
  std::array<Point3, 3> x = {Point3(0, 0, 2), Point3(1, 0, 3), Point3(2, 0, 4)};
  std::array<Eigen::Vector2d, 3> px;
  for (int i = 0; i < 3; ++i) px[i] = Project(kK, Pose::Identity(), x[i])->pixel;
  EXPECT_THROW(SolveP3P(kK, px, x), std::invalid_argument);
}

struct PnPInstance {
  Pose truth;
  std::vector<Point3> points;
  std::vector<Eigen::Vector2d> pixels;
  std::vector<char> outlier;
};

PnPInstance MakePnP(uint64_t seed, int n, double noise, double outliers) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  PnPInstance in;
  in.truth = RandomPose(rng, 0.5, 0.5);
  in.points = PointsInView(rng, in.truth, n);
  for (const Point3& x : in.points) {
    const Eigen::Vector2d p = Project(kK, in.truth, x)->pixel;
    Eigen::Vector2d obs = p + noise * Eigen::Vector2d(g(rng), g(rng));
    const bool out = u(rng) < outliers;
    if (out) {
      // Gross: at least 30 px from the true projection.
      do {
        obs = {640 * u(rng), 480 * u(rng)};
      } while ((obs - p).norm() < 30.0);
    }
    in.pixels.push_back(obs);
    in.outlier.push_back(out);
  }
  return in;
}

TEST(PnP, RansacRejectsGrossOutliers) {
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    const PnPInstance in = MakePnP(seed, 100, 1.0, 0.3);
    PnPConfig c;
    c.seed = seed;
    const auto r = SolvePnPRansac(kK, in.points, in.pixels, c);
    ASSERT_TRUE(r) << seed;
    const PoseError e = RelativePoseError(r->pose, in.truth);
    EXPECT_LT(e.rot_deg, 1.0) << seed;
    EXPECT_LT(e.trans, 0.05) << seed;
    int true_inliers = 0, outliers_kept = 0;
    for (int i : r->inliers) (in.outlier[i] ? outliers_kept : true_inliers)++;
    EXPECT_LE(outliers_kept, 3) << seed;
    EXPECT_GE(true_inliers, 55) << seed;
    EXPECT_TRUE(std::is_sorted(r->inliers.begin(), r->inliers.end()));
    EXPECT_FALSE(r->hypothesis_inliers.empty());
    EXPECT_LE(r->iterations, c.max_iterations);
  }
}

TEST(PnP, DeterministicForSeed) {
  const PnPInstance in = MakePnP(3, 60, 1.0, 0.3);
  PnPConfig c;
  c.seed = 9;
  const auto a = SolvePnPRansac(kK, in.points, in.pixels, c);
  const auto b = SolvePnPRansac(kK, in.points, in.pixels, c);
  ASSERT_TRUE(a && b);
  EXPECT_EQ(a->inliers, b->inliers);
  EXPECT_EQ(a->pose.rotation, b->pose.rotation);
  EXPECT_EQ(a->pose.translation, b->pose.translation);
}

TEST(PnP, ExactDataAndDegenerateInput) {
  const PnPInstance in = MakePnP(4, 30, 0.0, 0.0);
  const auto r = SolvePnPRansac(kK, in.points, in.pixels, PnPConfig{});
  ASSERT_TRUE(r);
  EXPECT_EQ(r->inliers.size(), 30u);
  EXPECT_LT(RelativePoseError(r->pose, in.truth).trans, 1e-9);
  EXPECT_THROW(SolvePnPRansac(kK, {in.points.begin(), in.points.begin() + 3},
                              {in.pixels.begin(), in.pixels.begin() + 3}, PnPConfig{}),
               std::invalid_argument);
}

TEST(PnP, RefinePoseReducesError) {
  const PnPInstance in = MakePnP(6, 80, 0.5, 0.0);
  std::mt19937_64 rng(7);
  const Pose start = RetractSE3(in.truth, (Vector6d() << Gaussian3(rng, 0.02),
                                           Gaussian3(rng, 0.02))
                                              .finished());
  const Pose refined = RefinePose(kK, start, in.points, in.pixels);
  EXPECT_LT(RelativePoseError(refined, in.truth).trans,
            RelativePoseError(start, in.truth).trans);
  EXPECT_LT(RelativePoseError(refined, in.truth).rot_deg, 0.1);
}

TEST(PoseEval, PerfectSequenceScoresOne) {
  SceneConfig c;
  c.seed = 21;
  const SyntheticScene scene = GenerateScene(c);
  PoseEvalSequence seq;
  seq.intrinsics = c.intrinsics;
  seq.frames = scene.frames;
  seq.poses = scene.poses;
  for (int f = 0; f < c.n_frames; ++f) seq.depth.push_back(RenderDepth(scene, f, 1000.0));
  PoseEvalConfig cfg;
  cfg.seed = 4;
  for (int diff : {5, 20, 30}) {
    const PoseEvalResult r = EvaluatePosePairs(seq, diff, cfg);
    EXPECT_EQ(r.n_pairs, 50);
    EXPECT_EQ(r.pairs.size(), 50u);
    EXPECT_EQ(r.rot_lt_5deg, 1.0) << diff;
    EXPECT_EQ(r.trans_lt_5cm, 1.0) << diff;
    for (const auto& p : r.pairs) EXPECT_EQ(p.frame_b - p.frame_a, diff);
  }
  EXPECT_THROW(EvaluatePosePairs(seq, 40, cfg), std::invalid_argument);
}

TEST(PoseEval, DeterministicForSeed) {
  SceneConfig c;
  c.seed = 22;
  c.pixel_noise = 1.0;
  const SyntheticScene scene = GenerateScene(c);
  PoseEvalSequence seq{c.intrinsics, scene.frames, {}, 1000.0, scene.poses};
  for (int f = 0; f < c.n_frames; ++f) seq.depth.push_back(RenderDepth(scene, f, 1000.0));
  PoseEvalConfig cfg;
  cfg.pairs = 10;
  cfg.seed = 3;
  const auto a = EvaluatePosePairs(seq, 10, cfg);
  const auto b = EvaluatePosePairs(seq, 10, cfg);
  for (int i = 0; i < 10; ++i) {
    EXPECT_EQ(a.pairs[i].frame_a, b.pairs[i].frame_a);
    EXPECT_EQ(a.pairs[i].error.rot_deg, b.pairs[i].error.rot_deg);
  }
}

TEST(Tum, RoundTripAndCanonicalQuaternion) {
  TempDir dir;
  std::mt19937_64 rng(30);
  std::vector<StampedPose> traj;
  for (int i = 0; i < 50; ++i) traj.push_back({i / 30.0, RandomPose(rng, 2.0, 3.0)});
  WriteTumTrajectory(dir / "t.tum", traj);
  const auto back = ReadTumTrajectory(dir / "t.tum");
  ASSERT_EQ(back.size(), traj.size());
  for (size_t i = 0; i < traj.size(); ++i) {
    EXPECT_EQ(back[i].timestamp, traj[i].timestamp);
    EXPECT_NEAR((back[i].pose.rotation - traj[i].pose.rotation).norm(), 0.0, 1e-14);
    EXPECT_NEAR((back[i].pose.Center() - traj[i].pose.Center()).norm(), 0.0, 1e-13);
  }
  std::ifstream in(dir / "t.tum");
  std::string line;
  while (std::getline(in, line)) {
    const auto tokens = SplitWhitespace(line);
    ASSERT_EQ(tokens.size(), 8u);
    double qw;
    ASSERT_TRUE(ParseDouble(tokens[7], &qw));
    EXPECT_GE(qw, 0.0);
  }
  // Camera-to-world convention: the stored translation is the camera center
  // and the quaternion is the inverse of the world-to-camera rotation.
  Pose p;
  p.rotation = ExpSO3(Eigen::Vector3d(0, M_PI / 2, 0));
  p.translation = -(p.rotation * Eigen::Vector3d(1, 2, 3));
  WriteTumTrajectory(dir / "one.tum", {{0.5, p}});
  std::ifstream one(dir / "one.tum");
  std::getline(one, line);
  const auto tokens = SplitWhitespace(line);
  double v[8];
  for (int i = 0; i < 8; ++i) ParseDouble(tokens[i], &v[i]);
  EXPECT_NEAR(v[1], 1.0, 1e-15);
  EXPECT_NEAR(v[2], 2.0, 1e-15);
  EXPECT_NEAR(v[3], 3.0, 1e-15);
  EXPECT_NEAR(v[5], -std::sqrt(0.5), 1e-15);
  EXPECT_NEAR(v[7], std::sqrt(0.5), 1e-15);

  {
    std::ofstream bad(dir / "bad.tum");
    bad << "# header\n0 1 2 3 0 0 0\n";
  }
  EXPECT_THROW(ReadTumTrajectory(dir / "bad.tum"), IoError);
}

TEST(Sim3, RecoversKnownTransform) {
  std::mt19937_64 rng(40);
  std::vector<Eigen::Vector3d> src, dst;
  Sim3 truth;
  truth.scale = 2.5;
  truth.rotation = ExpSO3(Eigen::Vector3d(0.3, -1.0, 0.4));
  truth.translation = Eigen::Vector3d(1, -2, 3);
  for (int i = 0; i < 30; ++i) {
    src.push_back(Gaussian3(rng, 2.0));
    dst.push_back(truth.Apply(src.back()));
  }
  const Sim3 s = AlignSim3(src, dst);
  EXPECT_NEAR(s.scale, 2.5, 1e-12);
  EXPECT_NEAR((s.rotation - truth.rotation).norm(), 0.0, 1e-12);
  EXPECT_NEAR((s.translation - truth.translation).norm(), 0.0, 1e-12);
  EXPECT_NEAR(s.residual, 0.0, 1e-12);
  const Sim3 rigid = AlignSim3(src, dst, false);
  EXPECT_EQ(rigid.scale, 1.0);
  EXPECT_GT(rigid.residual, 1.0);

  std::vector<Eigen::Vector3d> line;
  for (int i = 0; i < 5; ++i) line.emplace_back(i, 2 * i, 0);
  EXPECT_THROW(AlignSim3(line, line), std::invalid_argument);
  EXPECT_THROW(AlignSim3(src, {dst.begin(), dst.begin() + 5}), std::invalid_argument);
}

TEST(Sim3, TransformPosesMapsCenters) {
  std::mt19937_64 rng(41);
  std::vector<Pose> poses;
  for (int i = 0; i < 5; ++i) poses.push_back(RandomPose(rng, 1.0, 1.0));
  Sim3 s;
  s.scale = 0.5;
  s.rotation = ExpSO3(Eigen::Vector3d(0.1, 0.2, 0.3));
  s.translation = Eigen::Vector3d(4, 5, 6);
  const auto mapped = TransformPoses(s, poses);
  const Point3 x(0.3, -0.2, 1.0);
  for (size_t i = 0; i < poses.size(); ++i) {
    EXPECT_NEAR((mapped[i].Center() - s.Apply(poses[i].Center())).norm(), 0.0, 1e-12);
    // Viewing directions are preserved.
    const Eigen::Vector3d a = poses[i] * x, b = mapped[i] * s.Apply(x);
    EXPECT_NEAR((a.normalized() - b.normalized()).norm(), 0.0, 1e-12);
  }
}

// Stationary camera whose estimate yaws at 1 deg/s: every window of L
// seconds has L degrees of rotation error and no translation error.
TEST(RelativeErrors, YawDriftOracle) {
  const double fps = 30.0;
  std::vector<Pose> gt, est;
  for (int i = 0; i < 601; ++i) {
    gt.push_back(Pose::Identity());
    Pose p;
    p.rotation = ExpSO3(Eigen::Vector3d(0, (i / fps) * M_PI / 180.0, 0));
    est.push_back(p);
  }
  const auto rows = TrajectoryRelativeErrors(est, gt, {2, 5, 10}, fps);
  ASSERT_EQ(rows.size(), 3u);
  const double lengths[] = {2, 5, 10};
  for (int k = 0; k < 3; ++k) {
    EXPECT_EQ(rows[k].length_s, lengths[k]);
    EXPECT_EQ(rows[k].count, 601 - static_cast<int>(lengths[k] * fps));
    EXPECT_NEAR(rows[k].rot_deg, lengths[k], 1e-9);
    EXPECT_NEAR(rows[k].trans, 0.0, 1e-12);
  }
}

// Straight motion at 1 unit/s estimated 10% too fast: translation error
// 0.1 * L per window.
TEST(RelativeErrors, ScaleDriftOracle) {
  const double fps = 10.0;
  std::vector<Pose> gt, est;
  for (int i = 0; i < 200; ++i) {
    Pose g, e;
    g.translation = -Eigen::Vector3d(0, 0, i / fps);
    e.translation = -Eigen::Vector3d(0, 0, 1.1 * i / fps);
    gt.push_back(g);
    est.push_back(e);
  }
  const auto rows = TrajectoryRelativeErrors(est, gt, {2, 5, 10}, fps);
  for (const auto& r : rows) {
    EXPECT_NEAR(r.trans, 0.1 * r.length_s, 1e-12);
    EXPECT_NEAR(r.rot_deg, 0.0, 1e-9);
  }
  EXPECT_THROW(TrajectoryRelativeErrors(est, gt, {20}, fps), std::invalid_argument);
  EXPECT_THROW(TrajectoryRelativeErrors(est, {gt.begin(), gt.end() - 1}, {2}, fps),
               std::invalid_argument);
}

}  // namespace
}  // namespace sivo
