#include "plvo/pose.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "plvo/geometry.hpp"
#include "plvo/rng.hpp"

namespace plvo {

LiftedFrame lift_frame(const FrameFeatures& frame, const CameraRig& camera) {
  LiftedFrame out;
  const bool disparity = frame.depth_kind == DepthKind::Disparity;
  auto lift = [&](double u, double v, double d) -> std::optional<Vec3> {
    if (!(d > 1e-9)) return std::nullopt;
    return disparity ? triangulate_from_disparity(camera, u, v, d)
                     : backproject_depth(camera, u, v, d);
  };
  out.points.resize(frame.ppoints.size());
  for (size_t i = 0; i < frame.ppoints.size(); ++i) {
    if (!frame.ppoint_depth) {
      ++out.skipped_points;
      continue;
    }
    const Keypoint& kp = frame.ppoints[i];
    out.points[i] = lift(kp.u(), kp.v(), (*frame.ppoint_depth)[i]);
    if (!out.points[i]) ++out.skipped_points;
  }
  out.lines.resize(frame.lines.size());
  for (size_t i = 0; i < frame.lines.size(); ++i) {
    if (!frame.line_endpoint_depth) {
      ++out.skipped_lines;
      continue;
    }
    const LineSegment& line = frame.lines[i];
    const auto& [da, db] = (*frame.line_endpoint_depth)[i];
    const auto a3 = lift(line.a.x(), line.a.y(), da);
    const auto b3 = lift(line.b.x(), line.b.y(), db);
    if (a3 && b3)
      out.lines[i] = std::make_pair(*a3, *b3);
    else
      ++out.skipped_lines;
  }
  return out;
}

namespace {

/// Residual block (2 components) of one correspondence. Returns false when
/// a transformed point falls behind the camera.
bool residual_block(const SE3Pose& pose, const Correspondence2D3D& c,
                    const CameraRig& camera, Vec2& r) {
  if (c.kind == Correspondence2D3D::Kind::Point) {
    const Vec3 p = pose.apply(c.point3d);
    if (p.z() <= 1e-9) return false;
    const Vec2 projected{camera.fx * p.x() / p.z() + camera.cx,
                         camera.fy * p.y() / p.z() + camera.cy};
    r = c.observed - projected;
    return true;
  }
  const Vec3 pa = pose.apply(c.line_a3d);
  const Vec3 pb = pose.apply(c.line_b3d);
  if (pa.z() <= 1e-9 || pb.z() <= 1e-9) return false;
  const Vec2 qa{camera.fx * pa.x() / pa.z() + camera.cx,
                camera.fy * pa.y() / pa.z() + camera.cy};
  const Vec2 qb{camera.fx * pb.x() / pb.z() + camera.cx,
                camera.fy * pb.y() / pb.z() + camera.cy};
  const Vec2 dir = c.obs_line_b - c.obs_line_a;
  const double len = dir.norm();
  if (len < 1e-9) return false;
  const Vec2 normal{-dir.y() / len, dir.x() / len};
  const double offset = -normal.dot(c.obs_line_a);
  r = {normal.dot(qa) + offset, normal.dot(qb) + offset};
  return true;
}

double huber_weight(double block_norm, double delta) {
  return block_norm <= delta ? 1.0 : delta / block_norm;
}

double huber_cost(double block_norm, double delta) {
  return block_norm <= delta
             ? 0.5 * block_norm * block_norm
             : delta * (block_norm - 0.5 * delta);
}

/// Robustified cost; invalid (behind-camera) blocks get a fixed penalty so
/// poses that push points behind the camera are never preferred.
double robust_cost(const SE3Pose& pose,
                   std::span<const Correspondence2D3D> cs,
                   const CameraRig& camera, double delta) {
  double cost = 0.0;
  Vec2 r;
  for (const Correspondence2D3D& c : cs) {
    if (residual_block(pose, c, camera, r))
      cost += huber_cost(r.norm(), delta);
    else
      cost += huber_cost(1e6, delta);
  }
  return cost;
}

}  // namespace

VecX pose_residuals(const SE3Pose& pose,
                    std::span<const Correspondence2D3D> correspondences,
                    const CameraRig& camera) {
  VecX out(2 * static_cast<Eigen::Index>(correspondences.size()));
  Vec2 r;
  for (size_t k = 0; k < correspondences.size(); ++k) {
    if (!residual_block(pose, correspondences[k], camera, r))
      throw NonPositiveDepth("pose_residuals: correspondence " +
                             std::to_string(k) + " behind camera");
    out[2 * k] = r.x();
    out[2 * k + 1] = r.y();
  }
  return out;
}

PoseEstimate estimate_pose_gn(
    std::span<const Correspondence2D3D> correspondences,
    const CameraRig& camera, const SE3Pose& init, double huber_delta,
    int max_iters, double tol) {
  const int n = static_cast<int>(correspondences.size());
  if (n < 3 || 2 * n < 6)
    throw InsufficientCorrespondences("estimate_pose_gn: " +
                                      std::to_string(n) + " correspondences");
  SE3Pose pose = init;
  double cost = robust_cost(pose, correspondences, camera, huber_delta);
  constexpr double kJacobianStep = 1e-6;
  int iterations = 0;

  for (int it = 0; it < max_iters; ++it) {
    // Residuals and validity at the current pose.
    std::vector<Vec2> r(n);
    std::vector<bool> valid(n);
    std::vector<double> w(n, 0.0);
    int n_valid = 0;
    for (int k = 0; k < n; ++k) {
      valid[k] = residual_block(pose, correspondences[k], camera, r[k]);
      if (valid[k]) {
        w[k] = huber_weight(r[k].norm(), huber_delta);
        ++n_valid;
      }
    }
    if (n_valid < 3) throw SingularNormalEquations(
        "estimate_pose_gn: fewer than 3 correspondences in front of camera");

    // Central-difference Jacobian of the stacked residual w.r.t. a left-
    // multiplicative tangent perturbation.
    Eigen::Matrix<double, Eigen::Dynamic, 6> jac(2 * n, 6);
    jac.setZero();
    for (int d = 0; d < 6; ++d) {
      Vec6 twist = Vec6::Zero();
      twist[d] = kJacobianStep;
      const SE3Pose plus = se3_exp(twist) * pose;
      twist[d] = -kJacobianStep;
      const SE3Pose minus = se3_exp(twist) * pose;
      Vec2 rp, rm;
      for (int k = 0; k < n; ++k) {
        if (!valid[k]) continue;
        if (!residual_block(plus, correspondences[k], camera, rp) ||
            !residual_block(minus, correspondences[k], camera, rm)) {
          valid[k] = false;
          w[k] = 0.0;
          continue;
        }
        jac(2 * k, d) = (rp.x() - rm.x()) / (2.0 * kJacobianStep);
        jac(2 * k + 1, d) = (rp.y() - rm.y()) / (2.0 * kJacobianStep);
      }
    }

    Eigen::Matrix<double, 6, 6> h = Eigen::Matrix<double, 6, 6>::Zero();
    Vec6 g = Vec6::Zero();
    for (int k = 0; k < n; ++k) {
      if (!valid[k]) continue;
      const auto jk = jac.block<2, 6>(2 * k, 0);
      h += w[k] * jk.transpose() * jk;
      g += w[k] * jk.transpose() * Vec2(r[k]);
    }
    // Solve (J^T W J) step = -J^T W r (minimizes ||r + J step||^2).
    // A rank-deficient system means the pose is not observable from these
    // correspondences; damping is tried first, but a damped step of zero
    // cannot make progress and is reported as singular.
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> eigen(h);
    const double lmax = eigen.eigenvalues()(5);
    const double lmin = eigen.eigenvalues()(0);
    Vec6 step;
    if (!(lmax > 0.0) || lmin < 1e-10 * std::max(lmax, 1.0)) {
      const Eigen::Matrix<double, 6, 6> damped =
          h + 1e-6 * Eigen::Matrix<double, 6, 6>::Identity();
      step = -damped.ldlt().solve(g);
      if (!step.allFinite() || step.norm() < 1e-12)
        throw SingularNormalEquations(
            "estimate_pose_gn: pose not observable from these "
            "correspondences");
    } else {
      step = -h.ldlt().solve(g);
      if (!step.allFinite())
        throw SingularNormalEquations("estimate_pose_gn: singular system");
    }

    // Backtracking keeps the robust cost non-increasing.
    bool accepted = false;
    double step_scale = 1.0;
    for (int half = 0; half < 10; ++half) {
      const SE3Pose candidate = se3_exp(Vec6(step_scale * step)) * pose;
      const double candidate_cost =
          robust_cost(candidate, correspondences, camera, huber_delta);
      if (candidate_cost <= cost) {
        pose = candidate;
        cost = candidate_cost;
        accepted = true;
        break;
      }
      step_scale *= 0.5;
    }
    ++iterations;
    if (!accepted) break;
    if ((step_scale * step).norm() < tol) break;
  }

  PoseEstimate out;
  out.pose = pose;
  out.iterations = iterations;
  double sq = 0.0;
  int n_res = 0;
  Vec2 r;
  for (int k = 0; k < n; ++k) {
    if (!residual_block(pose, correspondences[k], camera, r)) continue;
    out.inliers.push_back(k);
    sq += r.squaredNorm();
    n_res += 2;
  }
  out.residual_rms = n_res > 0 ? std::sqrt(sq / n_res) : 0.0;
  return out;
}

PoseEstimate ransac_pose(std::span<const Correspondence2D3D> correspondences,
                         const CameraRig& camera, const PoseConfig& config,
                         std::uint64_t seed) {
  const int n = static_cast<int>(correspondences.size());
  if (n < 4)
    throw InsufficientCorrespondences("ransac_pose: " + std::to_string(n) +
                                      " correspondences");
  Rng rng(mix_seed(seed, 0x4A5C));

  auto consensus = [&](const SE3Pose& pose, std::vector<int>& inliers,
                       double& rms) {
    inliers.clear();
    double sq = 0.0;
    Vec2 r;
    for (int k = 0; k < n; ++k) {
      if (!residual_block(pose, correspondences[k], camera, r)) continue;
      if (r.norm() < config.ransac_inlier_threshold) {
        inliers.push_back(k);
        sq += r.squaredNorm();
      }
    }
    rms = inliers.empty() ? 0.0 : std::sqrt(sq / (2.0 * inliers.size()));
  };

  int best_count = -1;
  double best_rms = 0.0;
  SE3Pose best_pose;
  std::vector<int> inliers;
  std::vector<Correspondence2D3D> sample(4);
  for (int it = 0; it < config.ransac_iterations; ++it) {
    int idx[4];
    for (int s = 0; s < 4; ++s) {
      bool fresh = false;
      while (!fresh) {
        idx[s] = static_cast<int>(rng.below(n));
        fresh = true;
        for (int t = 0; t < s; ++t) fresh &= idx[t] != idx[s];
      }
      sample[s] = correspondences[idx[s]];
    }
    SE3Pose hypothesis;
    try {
      hypothesis = estimate_pose_gn(sample, camera, SE3Pose::identity(),
                                    config.huber_delta, 15, 1e-9)
                       .pose;
    } catch (const Error&) {
      continue;  // degenerate minimal sample
    }
    double rms = 0.0;
    consensus(hypothesis, inliers, rms);
    const int count = static_cast<int>(inliers.size());
    if (count > best_count || (count == best_count && rms < best_rms)) {
      best_count = count;
      best_rms = rms;
      best_pose = hypothesis;
    }
  }
  if (best_count < 4)
    throw NoConsensus("ransac_pose: best consensus " +
                      std::to_string(std::max(best_count, 0)) + " < 4");

  // Refit on the best consensus set.
  std::vector<int> best_inliers;
  consensus(best_pose, best_inliers, best_rms);
  std::vector<Correspondence2D3D> subset;
  for (int k : best_inliers) subset.push_back(correspondences[k]);
  PoseEstimate refined;
  try {
    refined = estimate_pose_gn(subset, camera, best_pose, config.huber_delta,
                               config.gn_max_iters, config.gn_tol);
  } catch (const Error&) {
    refined.pose = best_pose;
  }
  PoseEstimate out;
  out.pose = refined.pose;
  consensus(out.pose, out.inliers, out.residual_rms);
  out.iterations = refined.iterations;
  if (static_cast<int>(out.inliers.size()) < 4)
    throw NoConsensus("ransac_pose: refit lost consensus");
  return out;
}

}  // namespace plvo
