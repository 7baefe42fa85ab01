// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
// criterion fails.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "sivo/backend.h"
#include "sivo/evalkit.h"
#include "sivo/labeler.h"
#include "sivo/synth.h"
#include "sivo/tracking.h"
#include "sivo/vo.h"
#include "test_support.h"

namespace sivo {
namespace {

using testing::MakeWindow;
using testing::RandomPose;
using testing::SyntheticWindow;
using testing::TempDir;
using testing::WindowOptions;

using Clock = std::chrono::steady_clock;

double Seconds(Clock::time_point since) {
  return std::chrono::duration<double>(Clock::now() - since).count();
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

template <typename... Args>
std::string Format(const char* fmt, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), fmt, args...);
  return buf;
}

// ---- BA correctness ---------------------------------------------------------

Verdict BaCorrectness() {
  SyntheticWindow w = MakeWindow(42);
  const auto t0 = Clock::now();
  const OptimizeSummary s = Optimize(w.start, BAConfig{});
  const double seconds = Seconds(t0);
  const double rms = RmsReprojectionError(w.start);
  const auto est = CameraCenters(w.start.poses);
  const auto gt = CameraCenters(w.truth.poses);
  const Sim3 sim = AlignSim3(est, gt);
  double worst = 0.0;
  for (size_t i = 0; i < est.size(); ++i) worst = std::max(worst, (sim.Apply(est[i]) - gt[i]).norm());
  const double relative = worst / w.scene_scale;
  return {!s.Failed() && rms < 1e-6 && relative < 1e-4 && seconds < 10.0,
          Format("rms %.3g px, max position error %.3g of scene scale, %.2f s, %s", rms,
                 relative, seconds, TerminationName(s.termination))};
}

// ---- Jacobians ----------------------------------------------------------------

const Intrinsics kK{500.0, 480.0, 320.0, 240.0, 640, 480};

double Rel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& n) {
  return (a - n).norm() / std::max(n.norm(), 1.0);
}

Verdict JacobianSuite() {
  std::mt19937_64 rng(7001);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const BAConfig c;
  const double h = 1e-6;
  // The cost is only C1 at the Huber boundary and the depth bounds.
  const double h_cost = 1e-8;
  double worst = 0.0;
  int boundary = 0, corners = 0;
  for (int i = 0; i < 200; ++i) {
    // Cycle through interior, Huber boundary, upper and lower depth corner.
    const int regime = i % 4;
    const Pose pose = RandomPose(rng, 0.6, 1.0);
    const Eigen::Vector2d pixel(640 * u(rng), 480 * u(rng));
    double depth = 0.05 + 7.95 * u(rng);
    if (regime == 1) depth = 0.2 + 4.6 * u(rng);
    if (regime == 2) depth = c.depth_bounds.d_max;
    if (regime == 3) depth = c.depth_bounds.d_min;
    const Point3 x = pose.Inverse() * kK.Backproject(pixel, depth);
    const double angle = 2 * M_PI * u(rng);
    const double offset = regime == 1 ? c.robust.delta : 8.0 * u(rng);
    const Eigen::Vector2d obs =
        Project(kK, pose, x)->pixel - offset * Eigen::Vector2d(std::cos(angle), std::sin(angle));

    auto cost = [&](const Pose& p, const Point3& q) {
      return EvaluateObservationCost(kK, p, q, obs, 1.0, c).value;
    };
    auto residual = [&](const Pose& p, const Point3& q) {
      return EvaluateResidual(kK, p, q, obs, c.depth_bounds).residual;
    };
    // Perturbed arguments for coordinate k with step `step`.
    auto perturbed = [&](int k, double step) {
      std::pair<Pose, Point3> plus{pose, x}, minus{pose, x};
      if (k < 6) {
        Vector6d d = Vector6d::Zero();
        d[k] = step;
        plus.first = RetractSE3(pose, d);
        minus.first = RetractSE3(pose, -d);
      } else {
        plus.second[k - 6] += step;
        minus.second[k - 6] -= step;
      }
      return std::make_pair(plus, minus);
    };
    Eigen::Matrix<double, 9, 1> g_num;
    Eigen::Matrix<double, 3, 9> j_num;
    for (int k = 0; k < 9; ++k) {
      const auto [gp, gm] = perturbed(k, h_cost);
      g_num[k] = (cost(gp.first, gp.second) - cost(gm.first, gm.second)) / (2 * h_cost);
      const auto [jp, jm] = perturbed(k, h);
      j_num.col(k) = (residual(jp.first, jp.second) - residual(jm.first, jm.second)) / (2 * h);
    }
    const ObservationCost analytic = EvaluateObservationCost(kK, pose, x, obs, 1.0, c);
    worst = std::max(worst, Rel(analytic.gradient, g_num));
    if (regime <= 1) {
      const ObservationResidual r = EvaluateResidual(kK, pose, x, obs, c.depth_bounds);
      const double slack = 1e-4;
      if (std::abs(r.depth - c.depth_bounds.d_min) > slack &&
          std::abs(r.depth - c.depth_bounds.d_max) > slack) {
        Eigen::Matrix<double, 3, 9> j;
        j << r.d_pose, r.d_point;
        worst = std::max(worst, Rel(j, j_num));
      }
      if (regime == 1) {
        boundary += std::abs(r.residual.squaredNorm() - c.robust.delta * c.robust.delta) < 1e-8;
      }
    } else {
      ++corners;
    }
  }
  return {worst < 1e-5 && boundary == 50 && corners == 100,
          Format("200 configurations (%d on the Huber boundary, %d at depth bounds), "
                 "max relative error %.3g",
                 boundary, corners, worst)};
}

// ---- Gauge ----------------------------------------------------------------------

double TransformedObjective(const BAProblem& p, const BAConfig& c, double s, const Pose& t) {
  BAProblem q = p;
  const Pose t_inv = t.Inverse();
  for (auto& [id, x] : q.points) x = s * (t * x);
  for (Pose& pose : q.poses) {
    pose = pose * t_inv;
    pose.translation *= s;
  }
  return Objective(q, c);
}

Verdict GaugeInvariance() {
  WindowOptions o;
  o.pixel_noise = 1.0;
  o.outlier_fraction = 0.1;
  const SyntheticWindow w = MakeWindow(11, o);
  std::mt19937_64 rng(12);
  BAConfig rigid_cfg;
  rigid_cfg.depth_bounds = {0.1, 3.0};
  const double base_rigid = Objective(w.start, rigid_cfg);
  double worst_rigid = 0.0;
  for (int i = 0; i < 50; ++i) {
    const Pose t = RandomPose(rng, 1.5, 5.0);
    worst_rigid = std::max(worst_rigid,
                           std::abs(TransformedObjective(w.start, rigid_cfg, 1.0, t) - base_rigid));
  }
  BAConfig scale_cfg;
  scale_cfg.depth_bounds = {0.1, 50.0};
  const double base_scale = Objective(w.start, scale_cfg);
  double worst_scale = 0.0;
  for (double s : {0.2, 0.5, 0.9, 1.3, 3.0, 10.0}) {
    worst_scale = std::max(
        worst_scale,
        std::abs(TransformedObjective(w.start, scale_cfg, s, Pose::Identity()) - base_scale));
  }
  // Relative to the objective: a sum of thousands of terms carries rounding
  // error well above 1e-9 in absolute terms once it reaches 1e5.
  const double rel_rigid = worst_rigid / base_rigid;
  const double rel_scale = worst_scale / base_scale;
  return {rel_rigid <= 1e-9 && rel_scale <= 1e-9,
          Format("objective %.6g; max relative change %.3g (absolute %.3g) under 50 rigid "
                 "transforms, %.3g (absolute %.3g) under 6 scalings inside the depth bounds",
                 base_rigid, rel_rigid, worst_rigid, rel_scale, worst_scale)};
}

// ---- Robustness ------------------------------------------------------------------

double MeanPositionError(const BAProblem& est, const BAProblem& truth) {
  const auto a = CameraCenters(est.poses), b = CameraCenters(truth.poses);
  const Sim3 sim = AlignSim3(a, b);
  double sum = 0.0;
  for (size_t i = 0; i < a.size(); ++i) sum += (sim.Apply(a[i]) - b[i]).norm();
  return sum / a.size();
}

Verdict RobustnessOrdering() {
  int wins = 0;
  std::ostringstream detail;
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    WindowOptions o;
    o.pixel_noise = 1.0;
    o.outlier_fraction = 0.1;
    const SyntheticWindow w = MakeWindow(1000 + seed, o);
    BAProblem robust = w.start, plain = w.start;
    BAConfig robust_cfg, plain_cfg;
    plain_cfg.robust.delta = 1e12;  // quadratic everywhere
    Optimize(robust, robust_cfg);
    Optimize(plain, plain_cfg);
    const double er = MeanPositionError(robust, w.truth);
    const double ep = MeanPositionError(plain, w.truth);
    wins += er <= ep;
    if (seed <= 3) detail << Format("seed %d: %.2e vs %.2e; ", int(seed), er, ep);
  }
  return {wins >= 18, Format("robust <= non-robust in %d/20 trials (", wins) +
                          detail.str() + "...)"};
}

// ---- Labeling rule ---------------------------------------------------------------

Verdict LabelGrid() {
  // Frozen expectations from a separate truth-table script.
  const int ts[] = {5, 9, 10, 11, 30};
  const double means[] = {0.0, 0.5, 1.0, 1.01, 2.0};
  const double maxes[] = {2.0, 4.99, 5.0, 8.0};
  const char* expected[] = {"IIIIIIIIIIIIIIIIIIII", "IIIIIIIIIIIIIIIIIIII",
                            "SSSSSSSSSSSSIIUUIIUU", "SSSSSSSSSSSSIIUUIIUU",
                            "SSSSSSSSSSSSIIUUIIUU"};
  int matched = 0;
  for (int t = 0; t < 5; ++t) {
    int k = 0;
    for (double m : means) {
      for (double x : maxes) {
        const StabilityLabel l = LabelTrack({0, ts[t], m, x});
        const char c = l == StabilityLabel::kStable     ? 'S'
                       : l == StabilityLabel::kUnstable ? 'U'
                                                        : 'I';
        matched += c == expected[t][k++];
      }
    }
  }
  return {matched == 100, Format("%d/100 grid cells match", matched)};
}

// ---- Self-labeling -----------------------------------------------------------------

SceneConfig DriftScene(uint64_t seed) {
  SceneConfig c;
  c.n_frames = 100;
  c.n_points = 300;
  c.outlier_mode = OutlierMode::kDrift;
  c.outlier_fraction = 0.1;
  c.seed = seed;
  return c;
}

Verdict SelfLabeling() {
  const auto t0 = Clock::now();
  const SceneConfig c = DriftScene(1);
  const SyntheticScene scene = GenerateScene(c);
  const VOResult vo = RunVisualOdometry(scene.frames, c.intrinsics, VOOptions{});
  const auto stats = ComputeTrackStats(vo, c.intrinsics);
  const StabilityThresholds thresholds;
  int drifted = 0, drifted_unstable = 0, clean = 0, clean_unstable = 0;
  for (const TrackStats& s : stats) {
    if (s.num_observations < thresholds.min_observations) continue;
    const TrackObservation& first = vo.tracks.track(s.track_id).observations.front();
    const int run = scene.run_of_keypoint[first.frame_index][first.keypoint_index];
    const bool unstable = LabelTrack(s, thresholds) == StabilityLabel::kUnstable;
    if (scene.runs[run].drifted) {
      ++drifted;
      drifted_unstable += unstable;
    } else {
      ++clean;
      clean_unstable += unstable;
    }
  }
  const auto frames = LabelFrames(vo.tracks, stats, thresholds);
  const double seconds = Seconds(t0);
  const double recall = drifted ? static_cast<double>(drifted_unstable) / drifted : 0.0;
  return {drifted > 0 && recall >= 0.9 && clean_unstable == 0 && seconds < 60.0 &&
              frames.size() == 100,
          Format("drifted long tracks unstable %d/%d (recall %.3f), clean long tracks "
                 "unstable %d/%d, %.1f s",
                 drifted_unstable, drifted, recall, clean_unstable, clean, seconds)};
}

// ---- Stability-weighted VO --------------------------------------------------------

std::vector<RelativeErrorRow> AlignedErrors(const VOResult& r, const SyntheticScene& s,
                                            double fps) {
  const Sim3 sim = AlignSim3(CameraCenters(r.poses), CameraCenters(s.poses));
  return TrajectoryRelativeErrors(TransformPoses(sim, r.poses), s.poses, {2, 5, 10}, fps);
}

Verdict WeightedVo() {
  // 100 frames at 3 fps span 33 s, long enough for 10 s windows.
  const double fps = 3.0;
  int wins = 0;
  std::ostringstream detail;
  for (uint64_t seed = 1; seed <= 10; ++seed) {
    const SceneConfig c = DriftScene(seed);
    const SyntheticScene scene = GenerateScene(c);
    const VOOptions options;
    const VOResult base = RunVisualOdometry(scene.frames, c.intrinsics, options);
    std::vector<std::vector<double>> weights;
    for (const LabeledFrame& f : LabelSequence(base, c.intrinsics)) {
      std::vector<double> w;
      for (const LabeledPoint& p : f.points) {
        w.push_back(p.label == StabilityLabel::kUnstable ? 0.1 : 1.0);
      }
      weights.push_back(std::move(w));
    }
    const VOResult weighted = RunVisualOdometry(scene.frames, c.intrinsics, options, &weights);
    const auto eb = AlignedErrors(base, scene, fps);
    const auto ew = AlignedErrors(weighted, scene, fps);
    bool win = true;
    for (int k = 0; k < 3; ++k) win &= ew[k].trans <= eb[k].trans;
    wins += win;
    detail << Format("%d:%s ", int(seed), win ? "win" : "loss");
  }
  return {wins >= 8, Format("weighted <= unweighted at 2/5/10 s in %d/10 seeds (", wins) +
                         detail.str() + ")"};
}

// ---- PnP protocol ----------------------------------------------------------------

PoseEvalSequence EvalSequence(const SyntheticScene& scene) {
  PoseEvalSequence seq;
  seq.intrinsics = scene.config.intrinsics;
  seq.frames = scene.frames;
  seq.poses = scene.poses;
  for (size_t f = 0; f < scene.frames.size(); ++f) {
    seq.depth.push_back(RenderDepth(scene, static_cast<int>(f), seq.depth_scale));
  }
  return seq;
}

Verdict PnPProtocol() {
  SceneConfig clean;
  clean.n_frames = 60;
  clean.seed = 31;
  PoseEvalConfig cfg;
  cfg.seed = 5;
  const PoseEvalResult perfect = EvaluatePosePairs(EvalSequence(GenerateScene(clean)), 30, cfg);

  SceneConfig noisy = clean;
  noisy.pixel_noise = 1.0;
  noisy.outlier_mode = OutlierMode::kUniform;
  noisy.outlier_fraction = 0.3;
  const PoseEvalResult hard = EvaluatePosePairs(EvalSequence(GenerateScene(noisy)), 30, cfg);
  return {perfect.rot_lt_5deg == 1.0 && perfect.trans_lt_5cm == 1.0 && hard.n_pairs == 50 &&
              hard.rot_lt_5deg > 0.9,
          Format("perfect (%.2f, %.2f); 1 px + 30%% outliers: rot<5deg %.2f, trans<5cm %.2f "
                 "over %d pairs",
                 perfect.rot_lt_5deg, perfect.trans_lt_5cm, hard.rot_lt_5deg, hard.trans_lt_5cm,
                 hard.n_pairs)};
}

// ---- Matching ----------------------------------------------------------------------

Verdict MatchingOracle() {
  std::mt19937_64 rng(8080);
  std::uniform_int_distribution<int> size(0, 50), dims(1, 8), level(-2, 2);
  std::normal_distribution<double> g(0.0, 1.0);
  int agree = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int na = size(rng), nb = size(rng), dim = dims(rng);
    const bool lattice = trial % 2 == 0;
    Eigen::MatrixXd a(dim, na), b(dim, nb);
    for (int i = 0; i < a.size(); ++i) a.data()[i] = lattice ? level(rng) : g(rng);
    for (int i = 0; i < b.size(); ++i) b.data()[i] = lattice ? level(rng) : g(rng);
    const double tau = trial % 3 == 0 ? 1e300 : 0.5 + 2.5 * std::abs(g(rng));
    auto dist = [&](int i, int j) {
      double s = 0.0;
      for (int d = 0; d < dim; ++d) s += (a(d, i) - b(d, j)) * (a(d, i) - b(d, j));
      return std::sqrt(s);
    };
    std::vector<std::pair<int, int>> want;
    for (int i = 0; i < na; ++i) {
      int jb = -1;
      for (int j = 0; j < nb; ++j) {
        if (jb < 0 || dist(i, j) < dist(i, jb)) jb = j;
      }
      if (jb < 0) continue;
      int ia = -1;
      for (int k = 0; k < na; ++k) {
        if (ia < 0 || dist(k, jb) < dist(ia, jb)) ia = k;
      }
      if (ia == i && dist(i, jb) <= tau) want.emplace_back(i, jb);
    }
    std::vector<std::pair<int, int>> got;
    for (const Match& m : MatchBidirectional(a, b, tau)) got.emplace_back(m.index_a, m.index_b);
    agree += got == want;
  }
  return {agree == 1000, Format("%d/1000 instances identical to brute force", agree)};
}

// ---- Determinism -------------------------------------------------------------------

std::string Slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

int Shell(const std::string& args) {
  const std::string cmd = std::string(SIVO_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Verdict Determinism() {
  TempDir dir;
  bool ok = true;
  size_t compared = 0;
  for (const char* run : {"1", "2"}) {
    const std::string r(run);
    ok &= Shell("synth --seed 77 --frames 40 --points 200 --noise 1 --outlier-mode drift "
                "--outlier-fraction 0.1 --out " + (dir / ("scene" + r))) == 0;
    ok &= Shell("vo --manifest " + (dir / ("scene" + r + "/manifest.txt")) + " --traj " +
                (dir / ("traj" + r + ".tum")) + " --stats " + (dir / ("stats" + r + ".csv")) +
                " --tracks " + (dir / ("tracks" + r + ".vot"))) == 0;
  }
  for (const auto& entry : std::filesystem::directory_iterator(dir.path() / "scene1")) {
    ok &= Slurp(entry.path()) == Slurp(dir.path() / "scene2" / entry.path().filename());
    ++compared;
  }
  for (const char* name : {"traj", "stats", "tracks"}) {
    const std::string ext = std::string(name) == "traj"    ? ".tum"
                            : std::string(name) == "stats" ? ".csv"
                                                           : ".vot";
    const std::string a = Slurp(dir / (name + std::string("1") + ext));
    ok &= !a.empty() && a == Slurp(dir / (name + std::string("2") + ext));
    ++compared;
  }
  return {ok && compared > 80, Format("%zu output files compared across two runs", compared)};
}

}  // namespace
}  // namespace sivo

int main() {
  using namespace sivo;
  const std::pair<const char*, std::function<Verdict()>> criteria[] = {
      {"ba_correctness", BaCorrectness},
      {"jacobian_suite", JacobianSuite},
      {"gauge_invariance", GaugeInvariance},
      {"robustness_ordering", RobustnessOrdering},
      {"label_rule_grid", LabelGrid},
      {"self_labeling_end_to_end", SelfLabeling},
      {"stability_weighted_vo", WeightedVo},
      {"pnp_protocol", PnPProtocol},
      {"matching_oracle", MatchingOracle},
      {"determinism", Determinism},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %s: %s\n", v.pass ? "PASS" : "FAIL", name, v.detail.c_str());
    std::fflush(stdout);
    failures += !v.pass;
  }
  return failures == 0 ? 0 : 1;
}
