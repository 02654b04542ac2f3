#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "plvo/errors.hpp"

namespace plvo {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

/// A point feature: pixel position, detection confidence and a unit-norm
/// visual descriptor. Descriptors are L2-normalized at construction.
class Keypoint {
 public:
  Keypoint(double u, double v, double c, VecX descriptor);

  double u() const { return u_; }
  double v() const { return v_; }
  double confidence() const { return c_; }
  const VecX& descriptor() const { return d_; }
  Vec2 pixel() const { return {u_, v_}; }
  int dim() const { return static_cast<int>(d_.size()); }

 private:
  double u_, v_, c_;
  VecX d_;
};

/// A detected 2D line segment together with the indices of the L-points
/// sampled along it (indices into the owning frame's lpoint list).
struct LineSegment {
  LineSegment(int id, Vec2 a, Vec2 b, std::vector<int> lpoint_indices);

  int id;
  Vec2 a;
  Vec2 b;
  std::vector<int> lpoint_indices;

  double length() const { return (b - a).norm(); }
};

/// Calibrated, rectified pinhole stereo rig.
struct CameraRig {
  CameraRig(double fx, double fy, double cx, double cy, double baseline,
            int width, int height);

  double fx, fy, cx, cy;
  double baseline;  // meters
  int width, height;
};

/// Rigid transform. Pixel origin is top-left, x right, y down; camera frame
/// is x right, y down, z forward.
class SE3Pose {
 public:
  SE3Pose();  // identity
  SE3Pose(const Mat3& rotation, const Vec3& translation);

  static SE3Pose identity() { return {}; }
  static SE3Pose from_quaternion(const Eigen::Quaterniond& q, const Vec3& t);

  const Mat3& rotation() const { return r_; }
  const Vec3& translation() const { return t_; }
  Eigen::Quaterniond quaternion() const { return Eigen::Quaterniond(r_); }

  Vec3 apply(const Vec3& p) const { return r_ * p + t_; }
  SE3Pose inverse() const;

 private:
  Mat3 r_;
  Vec3 t_;
};

SE3Pose se3_compose(const SE3Pose& a, const SE3Pose& b);
inline SE3Pose operator*(const SE3Pose& a, const SE3Pose& b) {
  return se3_compose(a, b);
}

/// Exponential map from a 6-vector twist (rotation part first) to SE3.
SE3Pose se3_exp(const Vec6& twist);

enum class DepthKind { Depth, Disparity };

/// All features detected in one image: independent P-points, line segments
/// and the L-points sampled along them, plus optional per-feature depth and
/// ground-truth landmark labels.
struct FrameFeatures {
  std::int64_t frame_id = 0;
  int width = 0;
  int height = 0;

  std::vector<Keypoint> ppoints;
  std::vector<LineSegment> lines;
  std::vector<Keypoint> lpoints;

  DepthKind depth_kind = DepthKind::Depth;
  std::optional<std::vector<double>> ppoint_depth;  // size == |ppoints|
  // per-line (depth at endpoint a, depth at endpoint b)
  std::optional<std::vector<std::pair<double, double>>> line_endpoint_depth;

  std::optional<std::vector<std::int64_t>> gt_point_ids;   // size == |ppoints|
  std::optional<std::vector<std::int64_t>> gt_line_ids;    // size == |lines|
  std::optional<std::vector<std::int64_t>> gt_lpoint_ids;  // size == |lpoints|

  bool has_depth() const { return ppoint_depth.has_value(); }
  bool has_gt() const { return gt_point_ids.has_value(); }

  /// Throws Error if any structural invariant is violated.
  void validate() const;
};

}  // namespace plvo
