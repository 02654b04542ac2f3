#pragma once

#include "plvo/types.hpp"

namespace plvo {

/// Pinhole projection of a 3D point after rigid transform by `pose`.
/// Throws NonPositiveDepth when the transformed point has Z <= 1e-9.
Vec2 project(const CameraRig& camera, const SE3Pose& pose, const Vec3& point);

/// Back-projects a rectified-stereo observation. Z = fx * baseline / d.
/// Throws NonPositiveDisparity when disparity <= 1e-9.
Vec3 triangulate_from_disparity(const CameraRig& camera, double u, double v,
                                double disparity);

/// Depth-to-3D helper used by the synthetic path (Z known directly).
Vec3 backproject_depth(const CameraRig& camera, double u, double v, double z);

}  // namespace plvo
