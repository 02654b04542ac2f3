#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "plvo/types.hpp"

namespace plvo {

/// A 3D observation in frame i paired with its 2D observation in frame i+1.
struct Correspondence2D3D {
  enum class Kind { Point, Line };
  Kind kind = Kind::Point;
  // Point: 3D in frame i, observed pixel in frame i+1.
  Vec3 point3d = Vec3::Zero();
  Vec2 observed = Vec2::Zero();
  // Line: 3D endpoints in frame i, observed 2D endpoints in frame i+1.
  Vec3 line_a3d = Vec3::Zero(), line_b3d = Vec3::Zero();
  Vec2 obs_line_a = Vec2::Zero(), obs_line_b = Vec2::Zero();
};

/// 3D landmarks per feature, camera frame of the lifting image.
/// Features without usable depth are skipped and counted.
struct LiftedFrame {
  std::vector<std::optional<Vec3>> points;  // per P-point
  std::vector<std::optional<std::pair<Vec3, Vec3>>> lines;  // per line
  int skipped_points = 0;
  int skipped_lines = 0;
};

LiftedFrame lift_frame(const FrameFeatures& frame, const CameraRig& camera);

/// Point residual: observed - projected (px, 2 components). Line residual:
/// perpendicular distances of both projected 3D endpoints to the observed
/// infinite 2D line (px, 2 components). Throws NonPositiveDepth for points
/// behind the camera.
VecX pose_residuals(const SE3Pose& pose,
                    std::span<const Correspondence2D3D> correspondences,
                    const CameraRig& camera);

struct PoseEstimate {
  SE3Pose pose;  // frame i -> frame i+1
  std::vector<int> inliers;
  double residual_rms = 0.0;  // px, over inliers
  int iterations = 0;
};

/// Huber-robustified Gauss-Newton on the SE3 tangent, left-multiplicative
/// updates, central-difference Jacobians (h = 1e-6). The robust cost never
/// increases between accepted iterations.
PoseEstimate estimate_pose_gn(std::span<const Correspondence2D3D> correspondences,
                              const CameraRig& camera, const SE3Pose& init,
                              double huber_delta = 2.0, int max_iters = 50,
                              double tol = 1e-10);

struct PoseConfig {
  double huber_delta = 2.0;
  int gn_max_iters = 50;
  double gn_tol = 1e-10;
  int ransac_iterations = 200;
  double ransac_inlier_threshold = 3.0;  // px, residual block norm
};

/// Minimal-sample (4) RANSAC over estimate_pose_gn hypotheses; best
/// consensus by (inlier count, residual RMS, hypothesis index), final refit
/// on all inliers. Deterministic for a fixed seed.
PoseEstimate ransac_pose(std::span<const Correspondence2D3D> correspondences,
                         const CameraRig& camera, const PoseConfig& config,
                         std::uint64_t seed);

}  // namespace plvo
