#include "sivo/geometry.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <Eigen/LU>
#include <Eigen/SVD>

#include "sivo/io_util.h"

namespace sivo {

void Intrinsics::Validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw std::invalid_argument("intrinsics: focal lengths must be positive");
  }
  if (width <= 0 || height <= 0) {
    throw std::invalid_argument("intrinsics: image size must be positive");
  }
  if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height)) {
    throw std::invalid_argument(
        "intrinsics: principal point outside the image");
  }
}

Eigen::Matrix3d Intrinsics::Matrix() const {
  Eigen::Matrix3d k;
  k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return k;
}

Eigen::Vector3d Intrinsics::Backproject(const Eigen::Vector2d& pixel,
                                        double depth) const {
  return {depth * (pixel.x() - cx) / fx, depth * (pixel.y() - cy) / fy, depth};
}

Intrinsics ReadIntrinsicsFile(const std::string& path) {
  std::ifstream in = OpenForRead(path);
  std::string line;
  while (std::getline(in, line)) {
    const auto tokens = SplitWhitespace(line);
    if (tokens.empty() || tokens[0].front() == '#') continue;
    if (tokens.size() != 6) {
      throw IoError(path, "expected `fx fy cx cy width height`");
    }
    Intrinsics k;
    double values[6];
    for (int i = 0; i < 6; ++i) {
      if (!ParseDouble(tokens[i], &values[i]) || !std::isfinite(values[i])) {
        throw IoError(path, "bad number '" + std::string(tokens[i]) + "'");
      }
    }
    k.fx = values[0];
    k.fy = values[1];
    k.cx = values[2];
    k.cy = values[3];
    k.width = static_cast<int>(values[4]);
    k.height = static_cast<int>(values[5]);
    if (k.width != values[4] || k.height != values[5]) {
      throw IoError(path, "image size must be integral");
    }
    try {
      k.Validate();
    } catch (const std::invalid_argument& e) {
      throw IoError(path, e.what());
    }
    return k;
  }
  throw IoError(path, "no intrinsics line");
}

void WriteIntrinsicsFile(const std::string& path, const Intrinsics& k) {
  std::ofstream out = OpenForWrite(path);
  out << FormatDouble(k.fx) << ' ' << FormatDouble(k.fy) << ' '
      << FormatDouble(k.cx) << ' ' << FormatDouble(k.cy) << ' ' << k.width
      << ' ' << k.height << '\n';
}

Pose Pose::Inverse() const {
  Pose inverse;
  inverse.rotation = rotation.transpose();
  inverse.translation = -(inverse.rotation * translation);
  return inverse;
}

Pose Pose::operator*(const Pose& other) const {
  Pose composed;
  composed.rotation = rotation * other.rotation;
  composed.translation = rotation * other.translation + translation;
  return composed;
}

bool Pose::IsValid(double tolerance) const {
  if (!rotation.allFinite() || !translation.allFinite()) return false;
  const double orthogonality =
      (rotation.transpose() * rotation - Eigen::Matrix3d::Identity())
          .cwiseAbs()
          .maxCoeff();
  return orthogonality <= tolerance &&
         std::abs(rotation.determinant() - 1.0) <= tolerance;
}

std::optional<Projection> Project(const Intrinsics& k, const Pose& pose,
                                  const Point3& point) {
  const Eigen::Vector3d cam = pose * point;
  if (!(cam.z() > kMinCameraDepth)) return std::nullopt;
  Projection projection;
  projection.pixel = {k.fx * cam.x() / cam.z() + k.cx,
                      k.fy * cam.y() / cam.z() + k.cy};
  projection.depth = cam.z();
  return projection;
}

std::optional<double> ReprojectionErrorSq(const Intrinsics& k,
                                          const Pose& pose,
                                          const Point3& point,
                                          const Eigen::Vector2d& observed) {
  const auto projection = Project(k, pose, point);
  if (!projection) return std::nullopt;
  return (projection->pixel - observed).squaredNorm();
}

void DepthBounds::Validate() const {
  if (!(d_min > 0.0 && d_min < d_max)) {
    throw std::invalid_argument("depth bounds: need 0 < d_min < d_max");
  }
}

ValueAndDerivative DepthViolation(double depth, const DepthBounds& bounds) {
  if (depth > bounds.d_max) return {depth - bounds.d_max, 1.0};
  if (depth < bounds.d_min) return {depth - bounds.d_min, 1.0};
  return {0.0, 0.0};
}

ValueAndDerivative DepthRegularizer(double depth, const DepthBounds& bounds) {
  const ValueAndDerivative h = DepthViolation(depth, bounds);
  return {h.value * h.value, 2.0 * h.value * h.derivative};
}

ValueAndDerivative HuberLoss(double s, const RobustLossParams& params) {
  const double delta_sq = params.delta * params.delta;
  if (s <= delta_sq) return {s, 1.0};
  const double root = std::sqrt(s);
  return {2.0 * params.delta * root - delta_sq, params.delta / root};
}

Eigen::Matrix3d Skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

Eigen::Matrix3d ExpSO3(const Eigen::Vector3d& omega) {
  const double theta_sq = omega.squaredNorm();
  const Eigen::Matrix3d w = Skew(omega);
  double a;
  double b;
  if (theta_sq < 1e-16) {
    a = 1.0 - theta_sq / 6.0;
    b = 0.5 - theta_sq / 24.0;
  } else {
    const double theta = std::sqrt(theta_sq);
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / theta_sq;
  }
  return Eigen::Matrix3d::Identity() + a * w + b * w * w;
}

Pose RetractSE3(const Pose& pose, const Vector6d& xi) {
  const Eigen::Vector3d v = xi.head<3>();
  const Eigen::Vector3d omega = xi.tail<3>();
  const double theta_sq = omega.squaredNorm();
  const Eigen::Matrix3d w = Skew(omega);
  double b;
  double c;
  if (theta_sq < 1e-16) {
    b = 0.5 - theta_sq / 24.0;
    c = 1.0 / 6.0 - theta_sq / 120.0;
  } else {
    const double theta = std::sqrt(theta_sq);
    b = (1.0 - std::cos(theta)) / theta_sq;
    c = (theta - std::sin(theta)) / (theta_sq * theta);
  }
  Pose delta;
  delta.rotation = ExpSO3(omega);
  delta.translation = (Eigen::Matrix3d::Identity() + b * w + c * w * w) * v;
  return delta * pose;
}

double RotationAngleDeg(const Eigen::Matrix3d& ra, const Eigen::Matrix3d& rb) {
  const Eigen::Matrix3d relative = ra.transpose() * rb;
  const double cosine =
      std::clamp((relative.trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(cosine) * 180.0 / std::numbers::pi;
}

Eigen::Matrix3d NearestRotation(const Eigen::Matrix3d& m) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m,
                                        Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0
                ? -1.0
                : 1.0;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

}  // namespace sivo
