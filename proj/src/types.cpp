#include "plvo/types.hpp"

#include <cmath>
#include <unordered_set>

namespace plvo {

Keypoint::Keypoint(double u, double v, double c, VecX descriptor)
    : u_(u), v_(v), c_(c), d_(std::move(descriptor)) {
  if (!std::isfinite(u_) || !std::isfinite(v_))
    throw Error("Keypoint: non-finite pixel position");
  if (!(c_ >= 0.0 && c_ <= 1.0))
    throw Error("Keypoint: confidence outside [0,1]");
  if (d_.size() == 0) throw Error("Keypoint: empty descriptor");
  const double norm = d_.norm();
  if (!(norm > 1e-12) || !std::isfinite(norm))
    throw Error("Keypoint: descriptor norm is zero or non-finite");
  // Already-unit descriptors are stored untouched so that noise-free
  // synthetic features keep their latent descriptor bit-exactly.
  if (std::abs(norm - 1.0) > 1e-12) d_ /= norm;
}

LineSegment::LineSegment(int id_, Vec2 a_, Vec2 b_,
                         std::vector<int> lpoint_indices_)
    : id(id_), a(std::move(a_)), b(std::move(b_)),
      lpoint_indices(std::move(lpoint_indices_)) {
  if (id <= 0) throw Error("LineSegment: id must be positive");
  if (a == b) throw Error("LineSegment: endpoints coincide");
}

CameraRig::CameraRig(double fx_, double fy_, double cx_, double cy_,
                     double baseline_, int width_, int height_)
    : fx(fx_), fy(fy_), cx(cx_), cy(cy_), baseline(baseline_),
      width(width_), height(height_) {
  if (!(fx > 0.0) || !(fy > 0.0)) throw Error("CameraRig: focal length <= 0");
  if (!(baseline > 0.0)) throw Error("CameraRig: baseline <= 0");
  if (width <= 0 || height <= 0) throw Error("CameraRig: image size <= 0");
}

SE3Pose::SE3Pose() : r_(Mat3::Identity()), t_(Vec3::Zero()) {}

SE3Pose::SE3Pose(const Mat3& rotation, const Vec3& translation)
    : r_(rotation), t_(translation) {
  if (!t_.allFinite() || !r_.allFinite())
    throw Error("SE3Pose: non-finite entries");
  const double ortho = (r_.transpose() * r_ - Mat3::Identity()).norm();
  if (ortho > 1e-9) throw Error("SE3Pose: rotation not orthonormal");
  if (std::abs(r_.determinant() - 1.0) > 1e-9)
    throw Error("SE3Pose: rotation determinant != 1");
}

SE3Pose SE3Pose::from_quaternion(const Eigen::Quaterniond& q, const Vec3& t) {
  return SE3Pose(q.normalized().toRotationMatrix(), t);
}

SE3Pose SE3Pose::inverse() const {
  return SE3Pose(r_.transpose(), -(r_.transpose() * t_));
}

SE3Pose se3_compose(const SE3Pose& a, const SE3Pose& b) {
  return SE3Pose(a.rotation() * b.rotation(),
                 a.rotation() * b.translation() + a.translation());
}

SE3Pose se3_exp(const Vec6& twist) {
  const Vec3 omega = twist.head<3>();
  const Vec3 rho = twist.tail<3>();
  const double theta = omega.norm();
  Mat3 omega_hat;
  omega_hat << 0, -omega.z(), omega.y(),
      omega.z(), 0, -omega.x(),
      -omega.y(), omega.x(), 0;
  Mat3 r;
  Mat3 v;
  if (theta < 1e-10) {
    r = Mat3::Identity() + omega_hat;
    v = Mat3::Identity() + 0.5 * omega_hat;
    // Re-orthonormalize the first-order rotation.
    Eigen::Quaterniond q(r);
    r = q.normalized().toRotationMatrix();
  } else {
    const double s = std::sin(theta), c = std::cos(theta);
    r = Mat3::Identity() + (s / theta) * omega_hat +
        ((1.0 - c) / (theta * theta)) * omega_hat * omega_hat;
    v = Mat3::Identity() + ((1.0 - c) / (theta * theta)) * omega_hat +
        ((theta - s) / (theta * theta * theta)) * omega_hat * omega_hat;
  }
  return SE3Pose(r, v * rho);
}

void FrameFeatures::validate() const {
  if (width <= 0 || height <= 0)
    throw Error("FrameFeatures: image size must be positive");
  std::unordered_set<int> ids;
  for (const auto& line : lines) {
    if (!ids.insert(line.id).second)
      throw Error("FrameFeatures: duplicate line id " +
                  std::to_string(line.id));
    for (int idx : line.lpoint_indices)
      if (idx < 0 || idx >= static_cast<int>(lpoints.size()))
        throw Error("FrameFeatures: lpoint index out of range");
  }
  if (ppoint_depth && ppoint_depth->size() != ppoints.size())
    throw Error("FrameFeatures: ppoint_depth size mismatch");
  if (line_endpoint_depth && line_endpoint_depth->size() != lines.size())
    throw Error("FrameFeatures: line_endpoint_depth size mismatch");
  if (ppoint_depth)
    for (double d : *ppoint_depth)
      if (!(d > 0.0)) throw Error("FrameFeatures: non-positive depth");
  if (line_endpoint_depth)
    for (const auto& [da, db] : *line_endpoint_depth)
      if (!(da > 0.0) || !(db > 0.0))
        throw Error("FrameFeatures: non-positive endpoint depth");
  if (gt_point_ids && gt_point_ids->size() != ppoints.size())
    throw Error("FrameFeatures: gt_point_ids size mismatch");
  if (gt_line_ids && gt_line_ids->size() != lines.size())
    throw Error("FrameFeatures: gt_line_ids size mismatch");
  if (gt_lpoint_ids && gt_lpoint_ids->size() != lpoints.size())
    throw Error("FrameFeatures: gt_lpoint_ids size mismatch");
}

}  // namespace plvo
