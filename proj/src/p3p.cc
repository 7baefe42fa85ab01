#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "sivo/evalkit.h"

namespace sivo {
namespace {

constexpr double kMaxCandidateError = 1e-6;  // pixels

// Polynomials as ascending coefficient vectors.
using Poly = Eigen::VectorXd;

Poly Multiply(const Poly& a, const Poly& b) {
  Poly out = Poly::Zero(a.size() + b.size() - 1);
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    for (Eigen::Index j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
  }
  return out;
}

Poly Add(const Poly& a, const Poly& b) {
  Poly out = Poly::Zero(std::max(a.size(), b.size()));
  out.head(a.size()) += a;
  out.head(b.size()) += b;
  return out;
}

double Evaluate(const Poly& p, double x) {
  double value = 0.0;
  for (Eigen::Index i = p.size() - 1; i >= 0; --i) value = value * x + p[i];
  return value;
}

double EvaluateDerivative(const Poly& p, double x) {
  double value = 0.0;
  for (Eigen::Index i = p.size() - 1; i >= 1; --i) value = value * x + i * p[i];
  return value;
}

std::vector<double> RealRoots(const Poly& p) {
  const double scale = p.cwiseAbs().maxCoeff();
  if (!(scale > 0.0)) return {};
  Eigen::Index degree = p.size() - 1;
  while (degree > 0 && std::abs(p[degree]) <= 1e-14 * scale) --degree;
  if (degree == 0) return {};

  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(degree, degree);
  for (Eigen::Index i = 0; i < degree; ++i) companion(0, i) = -p[degree - 1 - i] / p[degree];
  for (Eigen::Index i = 1; i < degree; ++i) companion(i, i - 1) = 1.0;
  Eigen::EigenSolver<Eigen::MatrixXd> solver(companion, false);
  std::vector<double> roots;
  for (Eigen::Index i = 0; i < degree; ++i) {
    const std::complex<double> z = solver.eigenvalues()[i];
    if (std::abs(z.imag()) > 1e-6 * (1.0 + std::abs(z.real()))) continue;
    double x = z.real();
    for (int it = 0; it < 20; ++it) {
      const double d = EvaluateDerivative(p, x);
      if (d == 0.0) break;
      const double step = Evaluate(p, x) / d;
      x -= step;
      if (std::abs(step) <= 1e-15 * (1.0 + std::abs(x))) break;
    }
    roots.push_back(x);
  }
  return roots;
}

// Gauss-Newton on the three law-of-cosines equations.
Eigen::Vector3d PolishDistances(Eigen::Vector3d s, const Eigen::Vector3d& cosines,
                                const Eigen::Vector3d& sides_sq) {
  // cosines = (cos_a, cos_b, cos_g) between rays (2,3), (1,3), (1,2);
  // sides_sq = (a^2, b^2, c^2) for the same pairs.
  for (int it = 0; it < 8; ++it) {
    Eigen::Vector3d r(s[1] * s[1] + s[2] * s[2] - 2.0 * s[1] * s[2] * cosines[0] - sides_sq[0],
                      s[0] * s[0] + s[2] * s[2] - 2.0 * s[0] * s[2] * cosines[1] - sides_sq[1],
                      s[0] * s[0] + s[1] * s[1] - 2.0 * s[0] * s[1] * cosines[2] - sides_sq[2]);
    Eigen::Matrix3d j;
    j << 0.0, 2.0 * s[1] - 2.0 * s[2] * cosines[0], 2.0 * s[2] - 2.0 * s[1] * cosines[0],
        2.0 * s[0] - 2.0 * s[2] * cosines[1], 0.0, 2.0 * s[2] - 2.0 * s[0] * cosines[1],
        2.0 * s[0] - 2.0 * s[1] * cosines[2], 2.0 * s[1] - 2.0 * s[0] * cosines[2], 0.0;
    const Eigen::FullPivLU<Eigen::Matrix3d> lu(j);
    if (!lu.isInvertible()) break;
    const Eigen::Vector3d step = lu.solve(r);
    if (!step.allFinite()) break;
    s -= step;
    if (step.norm() <= 1e-16 * s.norm()) break;
  }
  return s;
}

// Rigid transform with cam_i = R * world_i + t.
Pose Kabsch(const std::array<Point3, 3>& world, const std::array<Eigen::Vector3d, 3>& cam) {
  const Eigen::Vector3d mu_w = (world[0] + world[1] + world[2]) / 3.0;
  const Eigen::Vector3d mu_c = (cam[0] + cam[1] + cam[2]) / 3.0;
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (int i = 0; i < 3; ++i) cov += (cam[i] - mu_c) * (world[i] - mu_w).transpose();
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  Pose pose;
  pose.rotation = svd.matrixU() * d * svd.matrixV().transpose();
  pose.translation = mu_c - pose.rotation * mu_w;
  return pose;
}

}  // namespace

std::vector<Pose> SolveP3P(const Intrinsics& intrinsics,
                           const std::array<Eigen::Vector2d, 3>& pixels,
                           const std::array<Point3, 3>& points) {
  const Eigen::Vector3d e1 = points[1] - points[0];
  const Eigen::Vector3d e2 = points[2] - points[0];
  const double extent = std::max({e1.norm(), e2.norm(), (points[2] - points[1]).norm()});
  if (!(extent > 0.0) || !(e1.cross(e2).norm() > 1e-10 * extent * extent)) {
    throw std::invalid_argument("p3p: degenerate (collinear) point triple");
  }

  std::array<Eigen::Vector3d, 3> f;
  for (int i = 0; i < 3; ++i) {
    f[i] = Eigen::Vector3d((pixels[i].x() - intrinsics.cx) / intrinsics.fx,
                           (pixels[i].y() - intrinsics.cy) / intrinsics.fy, 1.0)
               .normalized();
  }
  const double cos_a = f[1].dot(f[2]);
  const double cos_b = f[0].dot(f[2]);
  const double cos_g = f[0].dot(f[1]);
  const double a2 = (points[1] - points[2]).squaredNorm();
  const double b2 = (points[0] - points[2]).squaredNorm();
  const double c2 = (points[0] - points[1]).squaredNorm();
  const double k = (a2 - c2) / b2;
  const double c_over_b = c2 / b2;

  // With u = s2/s1 and v = s3/s1: u = N(v)/D(v) and the remaining equation
  // gives a quartic in v.
  Poly n(3), d(2), q(3);
  n << 1.0 + k, -2.0 * k * cos_b, k - 1.0;
  d << 2.0 * cos_g, -2.0 * cos_a;
  q << 1.0, -2.0 * cos_b, 1.0;
  const Poly dd = Multiply(d, d);
  Poly one_minus(3);
  one_minus = -c_over_b * q;
  one_minus[0] += 1.0;
  const Poly quartic = Add(Add(Multiply(n, n), -2.0 * cos_g * Multiply(n, d)),
                           Multiply(one_minus, dd));

  const Eigen::Vector3d cosines(cos_a, cos_b, cos_g);
  const Eigen::Vector3d sides_sq(a2, b2, c2);
  std::vector<Pose> candidates;
  for (double v : RealRoots(quartic)) {
    if (!(v > 0.0)) continue;
    const double qv = Evaluate(q, v);
    const double dv = Evaluate(d, v);
    if (!(qv > 0.0) || std::abs(dv) < 1e-14) continue;
    const double u = Evaluate(n, v) / dv;
    if (!(u > 0.0)) continue;
    const double s1 = std::sqrt(b2 / qv);
    const Eigen::Vector3d s = PolishDistances({s1, u * s1, v * s1}, cosines, sides_sq);
    if (!s.allFinite() || (s.array() <= 0.0).any()) continue;
    const std::array<Eigen::Vector3d, 3> cam{s[0] * f[0], s[1] * f[1], s[2] * f[2]};
    const Pose pose = Kabsch(points, cam);

    bool exact = true;
    for (int i = 0; i < 3 && exact; ++i) {
      const auto e = ReprojectionErrorSq(intrinsics, pose, points[i], pixels[i]);
      exact = e && std::sqrt(*e) < kMaxCandidateError;
    }
    if (!exact) continue;
    const bool duplicate = std::any_of(candidates.begin(), candidates.end(), [&](const Pose& p) {
      return (p.rotation - pose.rotation).norm() < 1e-9 &&
             (p.translation - pose.translation).norm() < 1e-9 * (1.0 + pose.translation.norm());
    });
    if (!duplicate) candidates.push_back(pose);
    if (candidates.size() == 4) break;
  }
  return candidates;
}

}  // namespace sivo
