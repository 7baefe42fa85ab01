#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <Eigen/Geometry>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "sivo/evalkit.h"
#include "sivo/io_util.h"

namespace sivo {

PoseError RelativePoseError(const Pose& estimated, const Pose& ground_truth) {
  const Pose e = estimated * ground_truth.Inverse();
  PoseError error;
  error.rot_deg = RotationAngleDeg(e.rotation, Eigen::Matrix3d::Identity());
  error.trans = e.translation.norm();
  return error;
}

std::vector<StampedPose> ReadTumTrajectory(const std::string& path) {
  std::ifstream in = OpenForRead(path);
  std::vector<StampedPose> trajectory;
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    const auto tokens = SplitWhitespace(line);
    if (tokens.empty() || tokens[0].front() == '#') continue;
    const std::string where = "line " + std::to_string(line_number) + ": ";
    if (tokens.size() != 8) throw IoError(path, where + "expected 8 values");
    double v[8];
    for (int i = 0; i < 8; ++i) {
      if (!ParseDouble(tokens[i], &v[i]) || !std::isfinite(v[i])) {
        throw IoError(path, where + "malformed number");
      }
    }
    Eigen::Quaterniond q(v[7], v[4], v[5], v[6]);
    if (q.norm() < 1e-9) throw IoError(path, where + "zero quaternion");
    q.normalize();
    const Eigen::Matrix3d r_wc = q.toRotationMatrix();
    StampedPose stamped;
    stamped.timestamp = v[0];
    stamped.pose.rotation = r_wc.transpose();
    stamped.pose.translation = -(stamped.pose.rotation * Eigen::Vector3d(v[1], v[2], v[3]));
    trajectory.push_back(stamped);
  }
  return trajectory;
}

void WriteTumTrajectory(const std::string& path,
                        const std::vector<StampedPose>& trajectory) {
  std::ofstream out = OpenForWrite(path);
  for (const StampedPose& stamped : trajectory) {
    const Eigen::Matrix3d r_wc = stamped.pose.rotation.transpose();
    const Eigen::Vector3d c = stamped.pose.Center();
    Eigen::Quaterniond q(r_wc);
    q.normalize();
    if (q.w() < 0.0) q.coeffs() = -q.coeffs();
    out << FormatDouble(stamped.timestamp) << ' ' << FormatDouble(c.x()) << ' '
        << FormatDouble(c.y()) << ' ' << FormatDouble(c.z()) << ' '
        << FormatDouble(q.x()) << ' ' << FormatDouble(q.y()) << ' '
        << FormatDouble(q.z()) << ' ' << FormatDouble(q.w()) << '\n';
  }
  if (!out) throw IoError(path, "write failed");
}

Sim3 AlignSim3(const std::vector<Eigen::Vector3d>& source,
               const std::vector<Eigen::Vector3d>& target, bool with_scale) {
  if (source.size() != target.size()) {
    throw std::invalid_argument("sim3 align: size mismatch");
  }
  const size_t n = source.size();
  if (n < 3) throw std::invalid_argument("sim3 align: need at least 3 positions");

  Eigen::Vector3d mu_s = Eigen::Vector3d::Zero();
  Eigen::Vector3d mu_t = Eigen::Vector3d::Zero();
  for (size_t i = 0; i < n; ++i) {
    mu_s += source[i];
    mu_t += target[i];
  }
  mu_s /= static_cast<double>(n);
  mu_t /= static_cast<double>(n);

  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d scatter_s = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d scatter_t = Eigen::Matrix3d::Zero();
  double var_s = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d ds = source[i] - mu_s;
    const Eigen::Vector3d dt = target[i] - mu_t;
    cov += dt * ds.transpose();
    scatter_s += ds * ds.transpose();
    scatter_t += dt * dt.transpose();
    var_s += ds.squaredNorm();
  }
  cov /= static_cast<double>(n);
  var_s /= static_cast<double>(n);

  // Collinear (or coincident) positions leave rotation about the line free.
  auto collinear = [](const Eigen::Matrix3d& scatter) {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(scatter);
    const Eigen::Vector3d ev = eig.eigenvalues();
    return ev[1] <= 1e-12 * std::max(ev[2], 1e-300);
  };
  if (var_s <= 0.0 || collinear(scatter_s) || collinear(scatter_t)) {
    throw std::invalid_argument("sim3 align: degenerate (collinear) positions");
  }

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) d(2, 2) = -1.0;

  Sim3 sim;
  sim.rotation = svd.matrixU() * d * svd.matrixV().transpose();
  sim.scale = with_scale ? (svd.singularValues().asDiagonal() * d).trace() / var_s : 1.0;
  sim.translation = mu_t - sim.scale * sim.rotation * mu_s;
  double sq = 0.0;
  for (size_t i = 0; i < n; ++i) sq += (sim.Apply(source[i]) - target[i]).squaredNorm();
  sim.residual = std::sqrt(sq / static_cast<double>(n));
  return sim;
}

std::vector<Pose> TransformPoses(const Sim3& sim, const std::vector<Pose>& poses) {
  std::vector<Pose> out;
  out.reserve(poses.size());
  for (const Pose& pose : poses) {
    Pose mapped;
    mapped.rotation = pose.rotation * sim.rotation.transpose();
    mapped.translation = -(mapped.rotation * sim.Apply(pose.Center()));
    out.push_back(mapped);
  }
  return out;
}

std::vector<Eigen::Vector3d> CameraCenters(const std::vector<Pose>& poses) {
  std::vector<Eigen::Vector3d> centers;
  centers.reserve(poses.size());
  for (const Pose& pose : poses) centers.push_back(pose.Center());
  return centers;
}

std::vector<RelativeErrorRow> TrajectoryRelativeErrors(
    const std::vector<Pose>& estimated, const std::vector<Pose>& ground_truth,
    const std::vector<double>& lengths_s, double fps) {
  if (estimated.size() != ground_truth.size()) {
    throw std::invalid_argument("relative errors: trajectories differ in length");
  }
  if (!(fps > 0.0)) throw std::invalid_argument("relative errors: fps must be positive");
  const int n = static_cast<int>(estimated.size());
  std::vector<RelativeErrorRow> rows;
  for (double length : lengths_s) {
    const long step = std::lround(length * fps);
    if (!(length > 0.0) || step < 1) {
      throw std::invalid_argument("relative errors: lengths must span at least one frame");
    }
    if (step >= n) {
      throw std::invalid_argument(
          "relative errors: trajectory of " + std::to_string(n) +
          " frames is too short for a " + FormatDouble(length) + " s window");
    }
    RelativeErrorRow row;
    row.length_s = length;
    for (int i = 0; i + step < n; ++i) {
      // Motion of the camera from frame i to frame i + step, expressed as
      // camera-to-world composites: delta = P_i^-1 * P_{i+step}.
      const Pose d_est = estimated[i] * estimated[i + step].Inverse();
      const Pose d_gt = ground_truth[i] * ground_truth[i + step].Inverse();
      const Pose e = d_gt.Inverse() * d_est;
      row.rot_deg += RotationAngleDeg(e.rotation, Eigen::Matrix3d::Identity());
      row.trans += e.translation.norm();
      ++row.count;
    }
    row.rot_deg /= row.count;
    row.trans /= row.count;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace sivo
