#pragma once

#include <optional>
#include <string>

#include <Eigen/Core>

namespace sivo {

using Vector6d = Eigen::Matrix<double, 6, 1>;
using Point3 = Eigen::Vector3d;

// Camera-frame depths at or below this value count as behind the camera.
inline constexpr double kMinCameraDepth = 1e-9;

// Pinhole intrinsics. A single fixed K is shared by every frame of a sequence.
struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  // Throws std::invalid_argument when fx/fy are not positive or the principal
  // point lies outside the image.
  void Validate() const;

  Eigen::Matrix3d Matrix() const;

  bool Contains(const Eigen::Vector2d& pixel) const {
    return pixel.x() >= 0.0 && pixel.y() >= 0.0 && pixel.x() < width &&
           pixel.y() < height;
  }

  // Ray through `pixel` scaled to camera-frame depth `depth`.
  Eigen::Vector3d Backproject(const Eigen::Vector2d& pixel,
                              double depth) const;
};

// Plain text, one line: `fx fy cx cy width height`.
Intrinsics ReadIntrinsicsFile(const std::string& path);
void WriteIntrinsicsFile(const std::string& path, const Intrinsics& intrinsics);

// Rigid transform mapping world coordinates into the camera frame:
// x_cam = rotation * x_world + translation.
struct Pose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static Pose Identity() { return {}; }

  Pose Inverse() const;
  Pose operator*(const Pose& other) const;
  Eigen::Vector3d operator*(const Eigen::Vector3d& x) const {
    return rotation * x + translation;
  }
  // Camera center in world coordinates.
  Eigen::Vector3d Center() const { return -rotation.transpose() * translation; }

  // Orthonormality and det(R) = +1 within `tolerance`.
  bool IsValid(double tolerance = 1e-9) const;
};

struct Projection {
  Eigen::Vector2d pixel;
  double depth = 0.0;  // camera-frame Z
};

// Returns std::nullopt when the point is behind the camera
// (camera-frame depth <= kMinCameraDepth).
std::optional<Projection> Project(const Intrinsics& intrinsics,
                                  const Pose& pose, const Point3& point);

// Squared pixel distance between the projection of `point` and `observed`.
std::optional<double> ReprojectionErrorSq(const Intrinsics& intrinsics,
                                          const Pose& pose,
                                          const Point3& point,
                                          const Eigen::Vector2d& observed);

struct DepthBounds {
  double d_min = 0.1;
  double d_max = 5.0;

  void Validate() const;
};

struct ValueAndDerivative {
  double value = 0.0;
  double derivative = 0.0;
};

// Signed depth violation h(z): z - d_max above the range, z - d_min below it,
// zero inside. The regularizer is h(z)^2.
ValueAndDerivative DepthViolation(double depth, const DepthBounds& bounds);

// max(0, z - d_max)^2 + min(z - d_min, 0)^2 and its derivative w.r.t. z.
ValueAndDerivative DepthRegularizer(double depth, const DepthBounds& bounds);

struct RobustLossParams {
  double delta = 2.0;  // pixels; the quadratic region ends at s = delta^2
};

// Huber loss on a squared argument s:
//   rho(s) = s                          for s <= delta^2
//   rho(s) = 2 delta sqrt(s) - delta^2  otherwise.
ValueAndDerivative HuberLoss(double s, const RobustLossParams& params);

Eigen::Matrix3d Skew(const Eigen::Vector3d& v);
Eigen::Matrix3d ExpSO3(const Eigen::Vector3d& omega);

// Left-multiplicative exponential-map update: Exp(xi) * pose, where
// xi = (v, omega) holds translation first, rotation second.
Pose RetractSE3(const Pose& pose, const Vector6d& xi);

// Angle of Ra^T Rb in degrees, in [0, 180].
double RotationAngleDeg(const Eigen::Matrix3d& ra, const Eigen::Matrix3d& rb);

// Closest rotation in the Frobenius sense (via SVD, det forced to +1).
Eigen::Matrix3d NearestRotation(const Eigen::Matrix3d& m);

}  // namespace sivo
