#include "plvo/geometry.hpp"

namespace plvo {

Vec2 project(const CameraRig& camera, const SE3Pose& pose, const Vec3& point) {
  const Vec3 p = pose.apply(point);
  if (p.z() <= 1e-9)
    throw NonPositiveDepth("project: point depth " + std::to_string(p.z()));
  return {camera.fx * p.x() / p.z() + camera.cx,
          camera.fy * p.y() / p.z() + camera.cy};
}

Vec3 triangulate_from_disparity(const CameraRig& camera, double u, double v,
                                double disparity) {
  if (disparity <= 1e-9)
    throw NonPositiveDisparity("triangulate_from_disparity: disparity " +
                               std::to_string(disparity));
  const double z = camera.fx * camera.baseline / disparity;
  return backproject_depth(camera, u, v, z);
}

Vec3 backproject_depth(const CameraRig& camera, double u, double v, double z) {
  if (z <= 1e-9)
    throw NonPositiveDepth("backproject_depth: depth " + std::to_string(z));
  return {(u - camera.cx) * z / camera.fx, (v - camera.cy) * z / camera.fy, z};
}

}  // namespace plvo
