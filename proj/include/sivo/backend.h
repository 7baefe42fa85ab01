#pragma once

#include <map>
#include <vector>

#include <Eigen/Core>

#include "sivo/geometry.h"

namespace sivo {

struct Observation {
  int track_id = 0;
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
  // Confidence in [0, 1]; 0 removes the observation from the objective.
  double weight = 1.0;
};

// State of one windowed bundle adjustment. Poses are world-to-camera, ordered
// oldest first; observations[i] belongs to poses[i].
struct BAProblem {
  Intrinsics intrinsics;
  std::vector<int> frame_indices;
  std::vector<Pose> poses;
  std::vector<std::vector<Observation>> observations;
  std::map<int, Point3> points;  // track id -> X
  // Holds poses[0] constant (gauge).
  bool fix_first_pose = true;

  // Throws std::invalid_argument on size mismatches, observations of unknown
  // points, weights outside [0, 1] or more than `max_poses` poses.
  void Validate(int max_poses) const;
};

struct BAConfig {
  int n_last = 30;
  int max_iterations = 100;
  DepthBounds depth_bounds;
  RobustLossParams robust;
  // Stop when an accepted step lowers the cost by less than this fraction.
  double function_tolerance = 1e-8;
  // Stop when the max-norm of the objective gradient drops below this.
  double gradient_tolerance = 1e-10;
  // Stop when |step| <= tol * (|x| + tol).
  double parameter_tolerance = 1e-10;
  double initial_damping = 1e-4;
  double damping_increase = 10.0;
  double damping_decrease = 0.1;
  double min_damping = 1e-14;
  double max_damping = 1e16;

  void Validate() const;
};

// Residual of one observation: (projected - observed pixel, depth violation)
// together with its Jacobians w.r.t. the left se(3) pose update (translation
// first) and the world point. The squared norm is e^2 + d(Z').
// Behind the camera the projection uses depth kMinCameraDepth while the depth
// violation keeps the true depth.
struct ObservationResidual {
  Eigen::Vector3d residual = Eigen::Vector3d::Zero();
  Eigen::Matrix<double, 3, 6> d_pose = Eigen::Matrix<double, 3, 6>::Zero();
  Eigen::Matrix3d d_point = Eigen::Matrix3d::Zero();
  double depth = 0.0;
};

ObservationResidual EvaluateResidual(const Intrinsics& intrinsics,
                                     const Pose& pose, const Point3& point,
                                     const Eigen::Vector2d& observed,
                                     const DepthBounds& bounds);

// w * rho(e^2 + d(Z')) and its gradient w.r.t. (pose update, point).
struct ObservationCost {
  double value = 0.0;
  Eigen::Matrix<double, 9, 1> gradient = Eigen::Matrix<double, 9, 1>::Zero();
};

ObservationCost EvaluateObservationCost(const Intrinsics& intrinsics,
                                        const Pose& pose, const Point3& point,
                                        const Eigen::Vector2d& observed,
                                        double weight, const BAConfig& config);

// Sum over all observations of w * rho(e^2 + d(Z')).
double Objective(const BAProblem& problem, const BAConfig& config);

enum class Termination {
  kFunctionTolerance,
  kGradientTolerance,
  kParameterTolerance,
  kMaxIterations,
  // Damping reached max_damping without a cost decrease.
  kNoProgress,
  // Reduced camera system could not be solved at any damping.
  kSingular,
  // Cost was not finite at the starting point.
  kNonFiniteCost,
};

const char* TerminationName(Termination termination);

struct OptimizeSummary {
  Termination termination = Termination::kMaxIterations;
  int iterations = 0;
  int accepted_steps = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  // Cost after every accepted step, starting with the initial cost.
  std::vector<double> cost_history;

  bool Failed() const {
    return termination == Termination::kSingular ||
           termination == Termination::kNonFiniteCost;
  }
};

// Levenberg-Marquardt over all free poses and points. Each step solves the
// normal equations by eliminating the points first (Schur complement) and
// factorizing the dense reduced camera system. Only steps that lower the cost
// are applied, so on any termination `problem` holds the best state reached.
OptimizeSummary Optimize(BAProblem& problem, const BAConfig& config);

// Root-mean-square reprojection error in pixels over all observations with
// non-zero weight.
double RmsReprojectionError(const BAProblem& problem);

}  // namespace sivo
