// sivo: command-line driver for the VO, labeling and evaluation pipeline.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sivo/evalkit.h"
#include "sivo/frontend.h"
#include "sivo/io_util.h"
#include "sivo/labeler.h"
#include "sivo/manifest.h"
#include "sivo/synth.h"
#include "sivo/vo.h"

namespace fs = std::filesystem;
using namespace sivo;

namespace {

// Thrown for argument combinations CLI11 cannot check on its own.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void RequireFile(const std::string& path) {
  if (!fs::is_regular_file(path)) throw IoError(path, "no such file");
}

void MakeOutputDir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(dir, "cannot create directory: " + ec.message());
}

std::string InDir(const std::string& dir, const std::string& pattern, int index) {
  return (fs::path(dir) / FormatFramePattern(pattern, index)).string();
}

// Sequence description assembled from an optional manifest plus flag
// overrides.
struct SequenceFlags {
  std::string manifest;
  std::string intrinsics;
  std::string features;
  std::string images;
  int frames = -1;
  int first_frame = -1;
  double fps = 0.0;

  void Add(CLI::App* app, bool with_images) {
    app->add_option("--manifest", manifest, "Sequence manifest (key value lines)");
    app->add_option("--intrinsics", intrinsics, "Intrinsics file, overrides the manifest");
    app->add_option("--features", features, "Feature file pattern, e.g. dir/frame_%06d.features");
    if (with_images) app->add_option("--images", images, "Image pattern, e.g. dir/frame_%06d.pgm");
    app->add_option("--frames", frames, "Number of frames")->check(CLI::PositiveNumber);
    app->add_option("--first-frame", first_frame, "Index of the first frame")
        ->check(CLI::NonNegativeNumber);
    app->add_option("--fps", fps, "Frame rate")->check(CLI::PositiveNumber);
  }

  SequenceManifest Resolve() const {
    SequenceManifest m;
    if (!manifest.empty()) {
      RequireFile(manifest);
      m = ReadManifest(manifest);
    }
    // Flag values are taken relative to the working directory.
    if (!intrinsics.empty()) m.intrinsics = fs::absolute(intrinsics).string();
    if (!features.empty()) m.features = fs::absolute(features).string();
    if (!images.empty()) m.images = fs::absolute(images).string();
    if (frames >= 0) m.frames = frames;
    if (first_frame >= 0) m.first_frame = first_frame;
    if (fps > 0.0) m.fps = fps;
    if (m.frames <= 0) throw UsageError("frame count missing (--frames or manifest)");
    return m;
  }
};

Intrinsics LoadIntrinsics(const SequenceManifest& m) {
  if (m.intrinsics.empty()) throw UsageError("intrinsics missing (--intrinsics or manifest)");
  const std::string path = m.Resolve(m.intrinsics);
  RequireFile(path);
  return ReadIntrinsicsFile(path);
}

std::vector<int> FrameIndices(const SequenceManifest& m, int every) {
  std::vector<int> indices;
  for (int i = 0; i < m.frames; i += every) indices.push_back(m.first_frame + i);
  return indices;
}

void WriteCsv(const std::string& out, const std::string& text) {
  if (out.empty()) {
    std::cout << text;
    std::cout.flush();
    return;
  }
  std::ofstream file = OpenForWrite(out);
  file << text;
  if (!file) throw IoError(out, "write failed");
}

std::vector<double> ParseList(const std::string& text, const char* what) {
  std::vector<double> values;
  size_t start = 0;
  while (start <= text.size()) {
    const size_t comma = text.find(',', start);
    const std::string token =
        text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    double v;
    if (!ParseDouble(token, &v) || !(v > 0.0)) {
      throw UsageError(std::string("bad value in ") + what + ": '" + token + "'");
    }
    values.push_back(v);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return values;
}

// ---- features -------------------------------------------------------------

struct FeaturesCmd {
  SequenceFlags seq;
  DetectorOptions detector;
  std::string out;

  void Add(CLI::App* app) {
    seq.Add(app, true);
    app->add_option("--out", out, "Output directory for frame_%06d.features")->required();
    app->add_option("--max-points", detector.max_points)->check(CLI::PositiveNumber);
    app->add_option("--quality", detector.quality_level)->check(CLI::Range(0.0, 1.0));
  }

  int Run() {
    const SequenceManifest m = seq.Resolve();
    if (m.images.empty()) throw UsageError("image pattern missing (--images or manifest)");
    for (int f : FrameIndices(m, 1)) RequireFile(m.ImagePath(f));
    MakeOutputDir(out);
    for (int f : FrameIndices(m, 1)) {
      const FrameFeatures features = DetectAndDescribe(ReadPgm(m.ImagePath(f)), detector, f);
      WriteFeatureFile(InDir(out, "frame_%06d.features", f), features);
    }
    std::cerr << "features: wrote " << m.frames << " frames to " << out << '\n';
    return 0;
  }
};

// ---- vo -------------------------------------------------------------------

struct VoCmd {
  SequenceFlags seq;
  VOOptions options;
  std::string traj;
  std::string stats;
  std::string tracks;
  std::string weights_dir;
  int every = 1;
  double stable_weight = 1.0;
  double unstable_weight = 0.1;
  double ignore_weight = 1.0;

  void Add(CLI::App* app) {
    seq.Add(app, false);
    app->add_option("--traj", traj, "Output TUM trajectory")->required();
    app->add_option("--stats", stats, "Output per-track reprojection statistics CSV");
    app->add_option("--tracks", tracks, "Output track file");
    app->add_option("--weights-dir", weights_dir,
                    "Directory of frame_%06d.labels used as observation weights");
    app->add_option("--every", every, "Use every n-th frame")->check(CLI::PositiveNumber);
    app->add_option("--stable-weight", stable_weight)->check(CLI::Range(0.0, 1.0));
    app->add_option("--unstable-weight", unstable_weight)->check(CLI::Range(0.0, 1.0));
    app->add_option("--ignore-weight", ignore_weight)->check(CLI::Range(0.0, 1.0));
    BAConfig& ba = options.ba;
    app->add_option("--n-last", ba.n_last, "Window length")->check(CLI::Range(2, 1000000));
    app->add_option("--max-iterations", ba.max_iterations)->check(CLI::PositiveNumber);
    app->add_option("--huber-delta", ba.robust.delta)->check(CLI::PositiveNumber);
    app->add_option("--d-min", ba.depth_bounds.d_min)->check(CLI::PositiveNumber);
    app->add_option("--d-max", ba.depth_bounds.d_max)->check(CLI::PositiveNumber);
    app->add_option("--match-tau", options.match_tau)->check(CLI::PositiveNumber);
  }

  double WeightOf(StabilityLabel label) const {
    switch (label) {
      case StabilityLabel::kStable: return stable_weight;
      case StabilityLabel::kUnstable: return unstable_weight;
      case StabilityLabel::kIgnore: return ignore_weight;
    }
    return 1.0;
  }

  int Run() {
    options.ba.Validate();
    const SequenceManifest m = seq.Resolve();
    const Intrinsics intrinsics = LoadIntrinsics(m);
    const std::vector<int> indices = FrameIndices(m, every);
    for (int f : indices) RequireFile(m.FeaturePath(f));
    if (!weights_dir.empty()) {
      for (int f : indices) RequireFile(InDir(weights_dir, "frame_%06d.labels", f));
    }

    std::vector<FrameFeatures> frames;
    std::vector<std::vector<double>> weights;
    for (int f : indices) {
      frames.push_back(ReadFeatureFile(m.FeaturePath(f), f));
      frames.back().Validate(intrinsics.width, intrinsics.height);
      if (weights_dir.empty()) continue;
      const std::string path = InDir(weights_dir, "frame_%06d.labels", f);
      const LabeledFrame labels = ReadLabelFile(path, f);
      if (static_cast<int>(labels.points.size()) != frames.back().size()) {
        throw IoError(path, "label count does not match the frame's keypoints");
      }
      std::vector<double> w;
      for (const LabeledPoint& p : labels.points) w.push_back(WeightOf(p.label));
      weights.push_back(std::move(w));
    }

    const VOResult result = RunVisualOdometry(frames, intrinsics, options,
                                              weights_dir.empty() ? nullptr : &weights);
    std::vector<StampedPose> trajectory;
    for (size_t i = 0; i < result.poses.size(); ++i) {
      trajectory.push_back({result.frame_indices[i] / m.fps, result.poses[i]});
    }
    WriteTumTrajectory(traj, trajectory);
    if (!stats.empty()) WriteTrackStatsCsv(stats, ComputeTrackStats(result, intrinsics));
    if (!tracks.empty()) WriteTrackFile(tracks, result.tracks);
    std::cerr << "vo: " << result.poses.size() << " poses, " << result.points.size()
              << " points\n";
    return 0;
  }
};

// ---- label ----------------------------------------------------------------

struct LabelCmd {
  std::string tracks;
  std::string stats;
  std::string out;
  StabilityThresholds thresholds;

  void Add(CLI::App* app) {
    app->add_option("--tracks", tracks, "Track file written by `vo --tracks`")->required();
    app->add_option("--stats", stats, "Statistics CSV written by `vo --stats`")->required();
    app->add_option("--out", out, "Output directory for frame_%06d.labels")->required();
    app->add_option("--min-observations", thresholds.min_observations)
        ->check(CLI::PositiveNumber);
    app->add_option("--max-mean-error", thresholds.max_mean_error)
        ->check(CLI::NonNegativeNumber);
    app->add_option("--min-max-error", thresholds.min_max_error)->check(CLI::NonNegativeNumber);
  }

  int Run() {
    RequireFile(tracks);
    RequireFile(stats);
    const TrackGraph graph = ReadTrackFile(tracks);
    const std::vector<TrackStats> track_stats = ReadTrackStatsCsv(stats);
    MakeOutputDir(out);
    const auto frames = LabelFrames(graph, track_stats, thresholds);
    for (const LabeledFrame& frame : frames) {
      WriteLabelFile(InDir(out, "frame_%06d.labels", frame.frame_index), frame);
    }
    std::cerr << "label: wrote " << frames.size() << " label files to " << out << '\n';
    return 0;
  }
};

// ---- emit-pairs -----------------------------------------------------------

struct EmitPairsCmd {
  std::string labels;
  std::string out;
  PairSamplingOptions options;
  std::optional<uint64_t> seed;

  void Add(CLI::App* app) {
    app->add_option("--labels", labels, "Directory of frame_%06d.labels")->required();
    app->add_option("--out", out, "Output directory for pair_%06d.pairs")->required();
    app->add_option("--seed", seed, "Sampling seed")->required();
    app->add_option("--window", options.pair_window, "Maximum frame gap")
        ->check(CLI::PositiveNumber);
    app->add_option("--pairs-per-frame", options.pairs_per_frame)->check(CLI::PositiveNumber);
  }

  int Run() {
    options.seed = *seed;
    if (!fs::is_directory(labels)) throw IoError(labels, "no such directory");
    std::vector<std::pair<int, std::string>> files;
    for (const auto& entry : fs::directory_iterator(labels)) {
      const std::string name = entry.path().filename().string();
      long long index;
      if (name.size() == 19 && name.rfind("frame_", 0) == 0 &&
          name.compare(12, 7, ".labels") == 0 && ParseInt(name.substr(6, 6), &index)) {
        files.emplace_back(static_cast<int>(index), entry.path().string());
      }
    }
    std::sort(files.begin(), files.end());
    std::vector<LabeledFrame> frames;
    for (const auto& [index, path] : files) frames.push_back(ReadLabelFile(path, index));
    const auto pairs = EmitTrainingPairs(frames, options);
    MakeOutputDir(out);
    for (size_t i = 0; i < pairs.size(); ++i) {
      WritePairFile(InDir(out, "pair_%06d.pairs", static_cast<int>(i)), pairs[i]);
    }
    std::cerr << "emit-pairs: wrote " << pairs.size() << " pairs to " << out << '\n';
    return 0;
  }
};

// ---- eval-pnp -------------------------------------------------------------

struct EvalPnpCmd {
  SequenceFlags seq;
  std::string frame_diffs = "30,60,90";
  std::string out;
  std::optional<uint64_t> seed;
  PoseEvalConfig config;
  bool no_refine = false;

  void Add(CLI::App* app) {
    seq.Add(app, false);
    app->add_option("--frame-diff", frame_diffs, "Comma-separated frame separations");
    app->add_option("--pairs", config.pairs, "Pairs per separation")->check(CLI::PositiveNumber);
    app->add_option("--seed", seed, "Sampling seed")->required();
    app->add_option("--out", out, "Output CSV (standard output if omitted)");
    app->add_option("--ransac-iterations", config.pnp.max_iterations)
        ->check(CLI::PositiveNumber);
    app->add_option("--threshold", config.pnp.inlier_threshold, "Inlier threshold in pixels")
        ->check(CLI::PositiveNumber);
    app->add_option("--confidence", config.pnp.confidence)->check(CLI::Range(0.0, 1.0));
    app->add_flag("--no-refine", no_refine, "Skip refinement on inliers");
  }

  int Run() {
    config.seed = *seed;
    config.pnp.refine = !no_refine;
    config.pnp.Validate();
    std::vector<int> diffs;
    for (double d : ParseList(frame_diffs, "--frame-diff")) {
      if (d != std::floor(d)) throw UsageError("--frame-diff takes integers");
      diffs.push_back(static_cast<int>(d));
    }
    const SequenceManifest m = seq.Resolve();
    PoseEvalSequence sequence;
    sequence.intrinsics = LoadIntrinsics(m);
    sequence.depth_scale = m.depth_scale;
    if (m.depth.empty()) throw UsageError("manifest has no depth pattern");
    if (m.gt_trajectory.empty()) throw UsageError("manifest has no gt_trajectory");
    const std::vector<int> indices = FrameIndices(m, 1);
    for (int f : indices) {
      RequireFile(m.FeaturePath(f));
      RequireFile(m.DepthPath(f));
    }
    const std::string gt_path = m.Resolve(m.gt_trajectory);
    RequireFile(gt_path);
    const auto gt = ReadTumTrajectory(gt_path);
    if (gt.size() < indices.size()) {
      throw IoError(gt_path, "fewer poses than frames");
    }
    for (size_t i = 0; i < indices.size(); ++i) {
      sequence.frames.push_back(ReadFeatureFile(m.FeaturePath(indices[i]), indices[i]));
      sequence.depth.push_back(ReadPgm16(m.DepthPath(indices[i])));
      sequence.poses.push_back(gt[i].pose);
    }

    std::string csv = "frame_diff,rot_lt_5deg,trans_lt_5cm,n_pairs\n";
    for (int diff : diffs) {
      const PoseEvalResult r = EvaluatePosePairs(sequence, diff, config);
      csv += std::to_string(diff) + ',' + FormatDouble(r.rot_lt_5deg) + ',' +
             FormatDouble(r.trans_lt_5cm) + ',' + std::to_string(r.n_pairs) + '\n';
    }
    WriteCsv(out, csv);
    return 0;
  }
};

// ---- eval-traj ------------------------------------------------------------

struct EvalTrajCmd {
  std::string est;
  std::string gt;
  std::string lengths = "2,5,10";
  double fps = 30.0;
  bool no_align = false;
  std::string out;

  void Add(CLI::App* app) {
    app->add_option("--est", est, "Estimated TUM trajectory")->required();
    app->add_option("--gt", gt, "Ground-truth TUM trajectory")->required();
    app->add_option("--lengths", lengths, "Comma-separated sub-trajectory lengths in seconds");
    app->add_option("--fps", fps, "Frame rate of the estimated trajectory")
        ->check(CLI::PositiveNumber);
    app->add_flag("--no-align", no_align, "Skip the similarity alignment");
    app->add_option("--out", out, "Output CSV (standard output if omitted)");
  }

  int Run() {
    const std::vector<double> lengths_s = ParseList(lengths, "--lengths");
    RequireFile(est);
    RequireFile(gt);
    const auto estimated = ReadTumTrajectory(est);
    const auto truth = ReadTumTrajectory(gt);
    // Associate each estimated pose with the ground-truth pose at the same
    // timestamp (within half a frame period).
    const double tolerance = 0.5 / fps;
    std::vector<Pose> est_poses, gt_poses;
    size_t j = 0;
    for (const StampedPose& e : estimated) {
      while (j < truth.size() && truth[j].timestamp < e.timestamp - tolerance) ++j;
      if (j == truth.size() || std::abs(truth[j].timestamp - e.timestamp) > tolerance) {
        throw IoError(gt, "no pose at timestamp " + FormatDouble(e.timestamp));
      }
      est_poses.push_back(e.pose);
      gt_poses.push_back(truth[j].pose);
    }
    if (!no_align) {
      const Sim3 sim = AlignSim3(CameraCenters(est_poses), CameraCenters(gt_poses));
      est_poses = TransformPoses(sim, est_poses);
    }
    const auto rows = TrajectoryRelativeErrors(est_poses, gt_poses, lengths_s, fps);
    std::string csv = "length_s,n,rot_deg,trans\n";
    for (const RelativeErrorRow& row : rows) {
      csv += FormatDouble(row.length_s) + ',' + std::to_string(row.count) + ',' +
             FormatDouble(row.rot_deg) + ',' + FormatDouble(row.trans) + '\n';
    }
    WriteCsv(out, csv);
    return 0;
  }
};

// ---- synth ----------------------------------------------------------------

struct SynthCmd {
  SceneConfig config;
  std::optional<uint64_t> seed;
  std::string out;
  std::string outlier_mode = "none";
  SceneWriteOptions write;
  bool no_depth = false;
  bool stress = false;

  void Add(CLI::App* app) {
    app->add_option("--seed", seed, "Scene seed")->required();
    app->add_option("--out", out, "Output scene directory")->required();
    app->add_option("--frames", config.n_frames)->check(CLI::PositiveNumber);
    app->add_option("--points", config.n_points)->check(CLI::PositiveNumber);
    app->add_option("--noise", config.pixel_noise, "Pixel noise sigma")
        ->check(CLI::NonNegativeNumber);
    app->add_option("--outlier-mode", outlier_mode)
        ->check(CLI::IsMember({"none", "uniform", "drift"}));
    app->add_option("--outlier-fraction", config.outlier_fraction)->check(CLI::Range(0.0, 1.0));
    app->add_option("--descriptor-noise", config.descriptor_noise)
        ->check(CLI::NonNegativeNumber);
    app->add_option("--fps", write.fps, "Frame rate written to the manifest")
        ->check(CLI::PositiveNumber);
    app->add_flag("--no-depth", no_depth, "Skip depth maps");
    app->add_flag("--stress", stress, "Points beyond the depth bounds, noisy descriptors");
  }

  int Run() {
    SceneConfig c = config;
    if (stress) {
      SceneConfig s = StressSceneConfig(*seed);
      s.n_frames = c.n_frames;
      s.n_points = c.n_points;
      s.outlier_fraction = c.outlier_fraction;
      c = s;
    }
    c.seed = *seed;
    c.outlier_mode = outlier_mode == "uniform" ? OutlierMode::kUniform
                     : outlier_mode == "drift" ? OutlierMode::kDrift
                                               : OutlierMode::kNone;
    write.write_depth = !no_depth;
    const SyntheticScene scene = GenerateScene(c);
    WriteSceneDirectory(scene, out, write);
    std::cerr << "synth: " << scene.frames.size() << " frames, " << scene.points.size()
              << " points, " << scene.runs.size() << " tracks in " << out << '\n';
    return 0;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse monocular VO with stability self-labeling and evaluation"};
  app.name("sivo");
  app.require_subcommand(1);

  FeaturesCmd features;
  VoCmd vo;
  LabelCmd label;
  EmitPairsCmd emit_pairs;
  EvalPnpCmd eval_pnp;
  EvalTrajCmd eval_traj;
  SynthCmd synth;
  struct Entry {
    CLI::App* app;
    std::function<int()> run;
  };
  std::vector<Entry> commands;
  auto add = [&](const char* name, const char* help, auto& cmd) {
    CLI::App* sub = app.add_subcommand(name, help);
    cmd.Add(sub);
    commands.push_back({sub, [&cmd] { return cmd.Run(); }});
  };
  add("features", "Detect keypoints and descriptors in images", features);
  add("vo", "Run sliding-window VO over feature files", vo);
  add("label", "Label tracks stable/unstable/ignore from VO statistics", label);
  add("emit-pairs", "Sample labeled training pairs", emit_pairs);
  add("eval-pnp", "3D-to-2D pose accuracy over frame pairs", eval_pnp);
  add("eval-traj", "Sub-trajectory relative errors", eval_traj);
  add("synth", "Generate a synthetic scene directory", synth);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "sivo: " << e.what() << "\n\n";
    const CLI::App* failed = &app;
    for (const Entry& c : commands) {
      if (c.app->parsed()) failed = c.app;
    }
    std::cerr << failed->help();
    return 2;
  }

  for (const Entry& c : commands) {
    if (!c.app->parsed()) continue;
    try {
      return c.run();
    } catch (const UsageError& e) {
      std::cerr << "sivo " << c.app->get_name() << ": " << e.what() << "\n\n"
                << c.app->help();
      return 2;
    } catch (const std::exception& e) {
      std::cerr << "sivo " << c.app->get_name() << ": " << e.what() << '\n';
      return 1;
    }
  }
  return 2;
}
