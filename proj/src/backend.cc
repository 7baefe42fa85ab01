#include "sivo/backend.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Cholesky>

namespace sivo {

void BAProblem::Validate(int max_poses) const {
  intrinsics.Validate();
  if (poses.size() != observations.size() ||
      poses.size() != frame_indices.size()) {
    throw std::invalid_argument("ba problem: poses/observations/frames differ in size");
  }
  if (static_cast<int>(poses.size()) > max_poses) {
    throw std::invalid_argument("ba problem: window longer than n_last");
  }
  for (const auto& frame : observations) {
    for (const Observation& obs : frame) {
      if (!points.count(obs.track_id)) {
        throw std::invalid_argument("ba problem: observation of unknown point " +
                                    std::to_string(obs.track_id));
      }
      if (!(obs.weight >= 0.0 && obs.weight <= 1.0)) {
        throw std::invalid_argument("ba problem: weight outside [0, 1]");
      }
    }
  }
}

void BAConfig::Validate() const {
  depth_bounds.Validate();
  if (n_last < 2 || max_iterations <= 0 || !(robust.delta > 0.0) ||
      !(function_tolerance > 0.0) || !(gradient_tolerance > 0.0) ||
      !(parameter_tolerance > 0.0) || !(initial_damping > 0.0) ||
      !(damping_increase > 1.0) || !(damping_decrease > 0.0 && damping_decrease < 1.0) ||
      !(min_damping > 0.0) || !(max_damping > min_damping)) {
    throw std::invalid_argument("ba config: invalid parameter");
  }
}

const char* TerminationName(Termination termination) {
  switch (termination) {
    case Termination::kFunctionTolerance: return "function_tolerance";
    case Termination::kGradientTolerance: return "gradient_tolerance";
    case Termination::kParameterTolerance: return "parameter_tolerance";
    case Termination::kMaxIterations: return "max_iterations";
    case Termination::kNoProgress: return "no_progress";
    case Termination::kSingular: return "singular";
    case Termination::kNonFiniteCost: return "non_finite_cost";
  }
  return "unknown";
}

ObservationResidual EvaluateResidual(const Intrinsics& k, const Pose& pose,
                                     const Point3& point,
                                     const Eigen::Vector2d& observed,
                                     const DepthBounds& bounds) {
  ObservationResidual out;
  const Eigen::Vector3d cam = pose * point;
  out.depth = cam.z();
  const bool clamped = !(cam.z() > kMinCameraDepth);
  const double z = clamped ? kMinCameraDepth : cam.z();
  const double inv_z = 1.0 / z;
  out.residual.x() = k.fx * cam.x() * inv_z + k.cx - observed.x();
  out.residual.y() = k.fy * cam.y() * inv_z + k.cy - observed.y();
  const ValueAndDerivative violation = DepthViolation(cam.z(), bounds);
  out.residual.z() = violation.value;

  Eigen::Matrix3d d_cam = Eigen::Matrix3d::Zero();
  d_cam(0, 0) = k.fx * inv_z;
  d_cam(1, 1) = k.fy * inv_z;
  if (!clamped) {
    d_cam(0, 2) = -k.fx * cam.x() * inv_z * inv_z;
    d_cam(1, 2) = -k.fy * cam.y() * inv_z * inv_z;
  }
  d_cam(2, 2) = violation.derivative;

  // d(cam)/d(xi) for cam' = Exp(xi) * cam is [I, -[cam]x].
  out.d_pose.leftCols<3>() = d_cam;
  out.d_pose.rightCols<3>() = -d_cam * Skew(cam);
  out.d_point = d_cam * pose.rotation;
  return out;
}

ObservationCost EvaluateObservationCost(const Intrinsics& intrinsics,
                                        const Pose& pose, const Point3& point,
                                        const Eigen::Vector2d& observed,
                                        double weight, const BAConfig& config) {
  const ObservationResidual r =
      EvaluateResidual(intrinsics, pose, point, observed, config.depth_bounds);
  const ValueAndDerivative rho = HuberLoss(r.residual.squaredNorm(), config.robust);
  ObservationCost cost;
  cost.value = weight * rho.value;
  const double scale = 2.0 * weight * rho.derivative;
  cost.gradient.head<6>() = scale * r.d_pose.transpose() * r.residual;
  cost.gradient.tail<3>() = scale * r.d_point.transpose() * r.residual;
  return cost;
}

namespace {

// Squared argument of rho for one observation, without Jacobians.
double SquaredArgument(const Intrinsics& k, const Pose& pose,
                       const Point3& point, const Eigen::Vector2d& observed,
                       const DepthBounds& bounds) {
  const Eigen::Vector3d cam = pose * point;
  const double z = cam.z() > kMinCameraDepth ? cam.z() : kMinCameraDepth;
  const double ex = k.fx * cam.x() / z + k.cx - observed.x();
  const double ey = k.fy * cam.y() / z + k.cy - observed.y();
  return ex * ex + ey * ey + DepthRegularizer(cam.z(), bounds).value;
}

struct Term {
  int pose = 0;
  int point = 0;
  Eigen::Vector2d pixel;
  double weight = 1.0;
};

using Matrix63 = Eigen::Matrix<double, 6, 3>;
using Matrix66 = Eigen::Matrix<double, 6, 6>;

// Flattened view of a BAProblem. Terms are grouped by point so the Schur
// complement can be accumulated one point at a time.
class Solver {
 public:
  Solver(BAProblem& problem, const BAConfig& config)
      : problem_(problem), config_(config) {
    for (const auto& [track_id, point] : problem.points) {
      point_index_[track_id] = static_cast<int>(points_.size());
      track_ids_.push_back(track_id);
      points_.push_back(point);
    }
    poses_ = problem.poses;
    const int first_free = problem.fix_first_pose ? 1 : 0;
    camera_of_pose_.assign(poses_.size(), -1);
    for (size_t p = first_free; p < poses_.size(); ++p) {
      camera_of_pose_[p] = static_cast<int>(p) - first_free;
    }
    num_cameras_ = std::max<int>(0, static_cast<int>(poses_.size()) - first_free);

    for (size_t p = 0; p < problem.observations.size(); ++p) {
      for (const Observation& obs : problem.observations[p]) {
        terms_.push_back({static_cast<int>(p), point_index_.at(obs.track_id),
                          obs.pixel, obs.weight});
      }
    }
    std::stable_sort(terms_.begin(), terms_.end(),
                     [](const Term& a, const Term& b) { return a.point < b.point; });
    point_begin_.assign(points_.size() + 1, 0);
    for (const Term& t : terms_) ++point_begin_[t.point + 1];
    for (size_t j = 0; j < points_.size(); ++j) point_begin_[j + 1] += point_begin_[j];
  }

  OptimizeSummary Run() {
    OptimizeSummary summary;
    double cost = Cost(poses_, points_);
    summary.initial_cost = cost;
    summary.final_cost = cost;
    summary.cost_history.push_back(cost);
    if (!std::isfinite(cost)) {
      summary.termination = Termination::kNonFiniteCost;
      return summary;
    }

    double lambda = config_.initial_damping;
    bool need_linearization = true;
    summary.termination = Termination::kMaxIterations;
    while (summary.iterations < config_.max_iterations) {
      if (need_linearization) {
        Linearize();
        need_linearization = false;
        if (GradientMaxNorm() < config_.gradient_tolerance) {
          summary.termination = Termination::kGradientTolerance;
          break;
        }
      }
      ++summary.iterations;

      Eigen::VectorXd camera_step;
      std::vector<Eigen::Vector3d> point_step;
      if (!SolveDamped(lambda, &camera_step, &point_step)) {
        lambda *= config_.damping_increase;
        if (lambda > config_.max_damping) {
          summary.termination = Termination::kSingular;
          break;
        }
        continue;
      }

      double step_sq = camera_step.squaredNorm();
      for (const auto& d : point_step) step_sq += d.squaredNorm();
      const double step_norm = std::sqrt(step_sq);
      if (step_norm <= config_.parameter_tolerance *
                           (ParameterNorm() + config_.parameter_tolerance)) {
        summary.termination = Termination::kParameterTolerance;
        break;
      }

      std::vector<Pose> candidate_poses = poses_;
      for (size_t p = 0; p < poses_.size(); ++p) {
        const int c = camera_of_pose_[p];
        if (c < 0) continue;
        candidate_poses[p] =
            RetractSE3(poses_[p], camera_step.segment<6>(6 * c));
      }
      std::vector<Point3> candidate_points = points_;
      for (size_t j = 0; j < points_.size(); ++j) {
        candidate_points[j] += point_step[j];
      }
      const double new_cost = Cost(candidate_poses, candidate_points);

      if (std::isfinite(new_cost) && new_cost < cost) {
        const double relative_decrease = (cost - new_cost) / cost;
        poses_ = std::move(candidate_poses);
        points_ = std::move(candidate_points);
        cost = new_cost;
        ++summary.accepted_steps;
        summary.cost_history.push_back(cost);
        lambda = std::max(lambda * config_.damping_decrease, config_.min_damping);
        need_linearization = true;
        if (relative_decrease < config_.function_tolerance) {
          summary.termination = Termination::kFunctionTolerance;
          break;
        }
      } else {
        lambda *= config_.damping_increase;
        if (lambda > config_.max_damping) {
          summary.termination = Termination::kNoProgress;
          break;
        }
      }
    }

    summary.final_cost = cost;
    problem_.poses = poses_;
    for (size_t j = 0; j < points_.size(); ++j) {
      problem_.points[track_ids_[j]] = points_[j];
    }
    return summary;
  }

  double Cost(const std::vector<Pose>& poses,
              const std::vector<Point3>& points) const {
    double total = 0.0;
    for (const Term& t : terms_) {
      if (t.weight == 0.0) continue;
      const double s = SquaredArgument(problem_.intrinsics, poses[t.pose],
                                       points[t.point], t.pixel,
                                       config_.depth_bounds);
      total += t.weight * HuberLoss(s, config_.robust).value;
    }
    return total;
  }

 private:
  // Gauss-Newton blocks of 1/2 sum w rho'(s) |r|^2 at the current state.
  void Linearize() {
    camera_hessian_.assign(num_cameras_, Matrix66::Zero());
    camera_gradient_.assign(num_cameras_, Vector6d::Zero());
    point_hessian_.assign(points_.size(), Eigen::Matrix3d::Zero());
    point_gradient_.assign(points_.size(), Eigen::Vector3d::Zero());
    coupling_.assign(terms_.size(), Matrix63::Zero());

    for (size_t i = 0; i < terms_.size(); ++i) {
      const Term& t = terms_[i];
      if (t.weight == 0.0) continue;
      const ObservationResidual r =
          EvaluateResidual(problem_.intrinsics, poses_[t.pose], points_[t.point],
                           t.pixel, config_.depth_bounds);
      const double omega =
          t.weight * HuberLoss(r.residual.squaredNorm(), config_.robust).derivative;
      const Eigen::Matrix3d jp_w = omega * r.d_point.transpose();
      point_hessian_[t.point] += jp_w * r.d_point;
      point_gradient_[t.point] += jp_w * r.residual;
      const int c = camera_of_pose_[t.pose];
      if (c < 0) continue;
      const Eigen::Matrix<double, 6, 3> jc_w = omega * r.d_pose.transpose();
      camera_hessian_[c] += jc_w * r.d_pose;
      camera_gradient_[c] += jc_w * r.residual;
      coupling_[i] = jc_w * r.d_point;
    }
  }

  // Max-norm of the gradient of the objective (twice the GN gradient).
  double GradientMaxNorm() const {
    double norm = 0.0;
    for (const auto& g : camera_gradient_) norm = std::max(norm, g.cwiseAbs().maxCoeff());
    for (const auto& g : point_gradient_) norm = std::max(norm, g.cwiseAbs().maxCoeff());
    return 2.0 * norm;
  }

  double ParameterNorm() const {
    double sq = 0.0;
    for (size_t p = 0; p < poses_.size(); ++p) {
      if (camera_of_pose_[p] >= 0) sq += poses_[p].translation.squaredNorm();
    }
    for (const auto& x : points_) sq += x.squaredNorm();
    return std::sqrt(sq);
  }

  template <int N>
  Eigen::Matrix<double, N, N> Damp(const Eigen::Matrix<double, N, N>& h,
                                   double lambda) const {
    Eigen::Matrix<double, N, N> damped = h;
    for (int i = 0; i < N; ++i) {
      damped(i, i) += lambda * std::clamp(h(i, i), 1e-6, 1e32);
    }
    return damped;
  }

  bool SolveDamped(double lambda, Eigen::VectorXd* camera_step,
                   std::vector<Eigen::Vector3d>* point_step) const {
    const int n = 6 * num_cameras_;
    Eigen::MatrixXd reduced = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd rhs(n);
    for (int c = 0; c < num_cameras_; ++c) {
      reduced.block<6, 6>(6 * c, 6 * c) = Damp<6>(camera_hessian_[c], lambda);
      rhs.segment<6>(6 * c) = -camera_gradient_[c];
    }

    std::vector<Eigen::Matrix3d> point_inverse(points_.size());
    for (size_t j = 0; j < points_.size(); ++j) {
      const Eigen::LLT<Eigen::Matrix3d> llt(Damp<3>(point_hessian_[j], lambda));
      if (llt.info() != Eigen::Success) return false;
      point_inverse[j] = llt.solve(Eigen::Matrix3d::Identity());
      for (int a = point_begin_[j]; a < point_begin_[j + 1]; ++a) {
        const int ca = camera_of_pose_[terms_[a].pose];
        if (ca < 0 || terms_[a].weight == 0.0) continue;
        const Matrix63 wa_vinv = coupling_[a] * point_inverse[j];
        rhs.segment<6>(6 * ca) += wa_vinv * point_gradient_[j];
        for (int b = point_begin_[j]; b < point_begin_[j + 1]; ++b) {
          const int cb = camera_of_pose_[terms_[b].pose];
          if (cb < 0 || terms_[b].weight == 0.0) continue;
          reduced.block<6, 6>(6 * ca, 6 * cb).noalias() -=
              wa_vinv * coupling_[b].transpose();
        }
      }
    }

    if (n > 0) {
      const Eigen::LDLT<Eigen::MatrixXd> ldlt(reduced);
      if (ldlt.info() != Eigen::Success) return false;
      *camera_step = ldlt.solve(rhs);
      if (!camera_step->allFinite()) return false;
    } else {
      camera_step->resize(0);
    }

    point_step->assign(points_.size(), Eigen::Vector3d::Zero());
    for (size_t j = 0; j < points_.size(); ++j) {
      Eigen::Vector3d rhs_point = -point_gradient_[j];
      for (int a = point_begin_[j]; a < point_begin_[j + 1]; ++a) {
        const int ca = camera_of_pose_[terms_[a].pose];
        if (ca < 0 || terms_[a].weight == 0.0) continue;
        rhs_point -= coupling_[a].transpose() * camera_step->segment<6>(6 * ca);
      }
      (*point_step)[j] = point_inverse[j] * rhs_point;
      if (!(*point_step)[j].allFinite()) return false;
    }
    return true;
  }

  BAProblem& problem_;
  const BAConfig& config_;
  std::map<int, int> point_index_;
  std::vector<int> track_ids_;
  std::vector<Point3> points_;
  std::vector<Pose> poses_;
  std::vector<int> camera_of_pose_;
  int num_cameras_ = 0;
  std::vector<Term> terms_;
  std::vector<int> point_begin_;

  std::vector<Matrix66> camera_hessian_;
  std::vector<Vector6d> camera_gradient_;
  std::vector<Eigen::Matrix3d> point_hessian_;
  std::vector<Eigen::Vector3d> point_gradient_;
  std::vector<Matrix63> coupling_;
};

}  // namespace

double Objective(const BAProblem& problem, const BAConfig& config) {
  double total = 0.0;
  for (size_t p = 0; p < problem.poses.size(); ++p) {
    for (const Observation& obs : problem.observations[p]) {
      if (obs.weight == 0.0) continue;
      const double s =
          SquaredArgument(problem.intrinsics, problem.poses[p],
                          problem.points.at(obs.track_id), obs.pixel,
                          config.depth_bounds);
      total += obs.weight * HuberLoss(s, config.robust).value;
    }
  }
  return total;
}

OptimizeSummary Optimize(BAProblem& problem, const BAConfig& config) {
  config.Validate();
  problem.Validate(config.n_last);
  Solver solver(problem, config);
  return solver.Run();
}

double RmsReprojectionError(const BAProblem& problem) {
  double sum = 0.0;
  size_t count = 0;
  for (size_t p = 0; p < problem.poses.size(); ++p) {
    for (const Observation& obs : problem.observations[p]) {
      if (obs.weight == 0.0) continue;
      const Eigen::Vector3d cam = problem.poses[p] * problem.points.at(obs.track_id);
      const double z = cam.z() > kMinCameraDepth ? cam.z() : kMinCameraDepth;
      const Eigen::Vector2d pixel(problem.intrinsics.fx * cam.x() / z + problem.intrinsics.cx,
                                  problem.intrinsics.fy * cam.y() / z + problem.intrinsics.cy);
      sum += (pixel - obs.pixel).squaredNorm();
      ++count;
    }
  }
  return count == 0 ? 0.0 : std::sqrt(sum / count);
}

}  // namespace sivo
