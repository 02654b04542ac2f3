#include <doctest.h>

#include "oracles.hpp"
#include "plvo/geometry.hpp"
#include "plvo/rng.hpp"
#include "plvo/types.hpp"

using namespace plvo;

namespace {

SE3Pose random_pose(Rng& rng, double translation_scale = 2.0) {
  const Vec3 axis =
      Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
  const double angle = rng.uniform(-3.0, 3.0);
  const Mat3 r = Eigen::AngleAxisd(angle, axis).toRotationMatrix();
  const Vec3 t(translation_scale * rng.normal(),
               translation_scale * rng.normal(),
               translation_scale * rng.normal());
  return SE3Pose(r, t);
}

}  // namespace

TEST_CASE("keypoint invariants") {
  VecX d = VecX::Zero(4);
  d[0] = 2.0;  // gets normalized
  const Keypoint kp(10.0, 20.0, 0.5, d);
  CHECK(kp.descriptor().norm() == doctest::Approx(1.0).epsilon(1e-12));

  // Already-unit descriptors are stored bit-exactly.
  VecX unit = VecX::Zero(4);
  unit[2] = 1.0;
  const Keypoint kp2(0.0, 0.0, 1.0, unit);
  CHECK(kp2.descriptor()[2] == 1.0);

  CHECK_THROWS_AS(Keypoint(0.0, 0.0, 1.5, unit), Error);
  CHECK_THROWS_AS(Keypoint(0.0, 0.0, -0.1, unit), Error);
  CHECK_THROWS_AS(
      Keypoint(std::numeric_limits<double>::quiet_NaN(), 0.0, 0.5, unit),
      Error);
  CHECK_THROWS_AS(Keypoint(0.0, 0.0, 0.5, VecX::Zero(4)), Error);
}

TEST_CASE("line segment invariants") {
  CHECK_THROWS_AS(LineSegment(1, Vec2(1, 1), Vec2(1, 1), {}), Error);
  CHECK_THROWS_AS(LineSegment(0, Vec2(0, 0), Vec2(1, 1), {}), Error);
  const LineSegment line(3, Vec2(0, 0), Vec2(3, 4), {0, 1});
  CHECK(line.length() == doctest::Approx(5.0));
}

TEST_CASE("se3 identity and inverse") {
  Rng rng(11);
  const SE3Pose pose = random_pose(rng);
  const SE3Pose id;

  const SE3Pose left = se3_compose(id, pose);
  CHECK((left.rotation() - pose.rotation()).norm() == 0.0);
  CHECK((left.translation() - pose.translation()).norm() == 0.0);

  const SE3Pose round = se3_compose(pose, pose.inverse());
  CHECK((round.rotation() - Mat3::Identity()).norm() < 1e-12);
  CHECK(round.translation().norm() < 1e-12);
}

TEST_CASE("se3 compose matches homogeneous-matrix oracle") {
  Rng rng(22);
  for (int trial = 0; trial < 20; ++trial) {
    const SE3Pose a = random_pose(rng);
    const SE3Pose b = random_pose(rng);
    const SE3Pose c = se3_compose(a, b);
    const Eigen::Matrix4d expected =
        oracle::homogeneous(a.rotation(), a.translation()) *
        oracle::homogeneous(b.rotation(), b.translation());
    CHECK((c.rotation() - expected.topLeftCorner<3, 3>()).norm() < 1e-12);
    CHECK((c.translation() - expected.topRightCorner<3, 1>()).norm() < 1e-12);
  }
}

TEST_CASE("se3 compose is associative") {
  Rng rng(33);
  for (int trial = 0; trial < 20; ++trial) {
    const SE3Pose a = random_pose(rng);
    const SE3Pose b = random_pose(rng);
    const SE3Pose c = random_pose(rng);
    const SE3Pose left = se3_compose(se3_compose(a, b), c);
    const SE3Pose right = se3_compose(a, se3_compose(b, c));
    CHECK((left.rotation() - right.rotation()).norm() < 1e-12);
    CHECK((left.translation() - right.translation()).norm() < 1e-12);
  }
}

TEST_CASE("se3 invariants preserved under composition and inversion") {
  Rng rng(44);
  SE3Pose acc;
  for (int trial = 0; trial < 50; ++trial) {
    acc = se3_compose(acc, random_pose(rng)).inverse();
    const Mat3& r = acc.rotation();
    CHECK((r.transpose() * r - Mat3::Identity()).norm() < 1e-9);
    CHECK(std::abs(r.determinant() - 1.0) < 1e-9);
  }
}

TEST_CASE("se3 construction rejects invalid rotations") {
  Mat3 bad = Mat3::Identity();
  bad(0, 0) = 2.0;
  CHECK_THROWS_AS(SE3Pose(bad, Vec3::Zero()), Error);
  Mat3 reflection = Mat3::Identity();
  reflection(2, 2) = -1.0;  // orthonormal but det -1
  CHECK_THROWS_AS(SE3Pose(reflection, Vec3::Zero()), Error);
}

TEST_CASE("project on the optical axis") {
  const CameraRig unit_cam(1.0, 1.0, 0.0, 0.0, 1.0, 100, 100);
  const Vec2 px = project(unit_cam, SE3Pose::identity(), Vec3(0, 0, 1));
  CHECK(px.x() == 0.0);
  CHECK(px.y() == 0.0);

  const CameraRig cam(100.0, 100.0, 50.0, 50.0, 1.0, 200, 200);
  const Vec2 px2 = project(cam, SE3Pose::identity(), Vec3(1, 1, 2));
  CHECK(px2.x() == doctest::Approx(100.0));
  CHECK(px2.y() == doctest::Approx(100.0));
}

TEST_CASE("project matches scalar oracle") {
  Rng rng(55);
  const CameraRig cam(350.0, 360.0, 310.0, 250.0, 0.3, 640, 480);
  for (int trial = 0; trial < 30; ++trial) {
    const SE3Pose pose = random_pose(rng, 0.5);
    const Vec3 p(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(4, 20));
    Vec3 cam_p = pose.apply(p);
    if (cam_p.z() <= 1e-6) continue;
    const Vec2 px = project(cam, pose, p);
    const auto expected = oracle::project_scalar(
        cam.fx, cam.fy, cam.cx, cam.cy, pose.rotation(), pose.translation(), p);
    CHECK(px.x() == doctest::Approx(expected[0]).epsilon(1e-12));
    CHECK(px.y() == doctest::Approx(expected[1]).epsilon(1e-12));
  }
}

TEST_CASE("project rejects non-positive depth") {
  const CameraRig cam(100.0, 100.0, 50.0, 50.0, 1.0, 100, 100);
  CHECK_THROWS_AS(project(cam, SE3Pose::identity(), Vec3(0, 0, -1)),
                  NonPositiveDepth);
  CHECK_THROWS_AS(project(cam, SE3Pose::identity(), Vec3(0, 0, 0)),
                  NonPositiveDepth);
}

TEST_CASE("triangulate_from_disparity unit cases") {
  const CameraRig unit_cam(1.0, 1.0, 0.0, 0.0, 1.0, 100, 100);
  CHECK((triangulate_from_disparity(unit_cam, 0, 0, 1) - Vec3(0, 0, 1)).norm() <
        1e-15);
  const CameraRig cam(500.0, 500.0, 0.0, 0.0, 0.5, 1000, 1000);
  CHECK(
      (triangulate_from_disparity(cam, 0, 0, 5) - Vec3(0, 0, 50)).norm() <
      1e-12);
  CHECK_THROWS_AS(triangulate_from_disparity(cam, 0, 0, 0.0),
                  NonPositiveDisparity);
  CHECK_THROWS_AS(triangulate_from_disparity(cam, 0, 0, -2.0),
                  NonPositiveDisparity);
}

TEST_CASE("triangulate then project recovers the pixel") {
  Rng rng(66);
  const CameraRig cam(420.0, 410.0, 315.0, 245.0, 0.25, 640, 480);
  for (int trial = 0; trial < 100; ++trial) {
    const double u = rng.uniform(0, cam.width);
    const double v = rng.uniform(0, cam.height);
    const double disparity = rng.uniform(0.5, 40.0);
    const Vec3 p = triangulate_from_disparity(cam, u, v, disparity);
    CHECK(p.z() > 0.0);
    const Vec2 px = project(cam, SE3Pose::identity(), p);
    CHECK(std::abs(px.x() - u) < 1e-9);
    CHECK(std::abs(px.y() - v) < 1e-9);
  }
}

TEST_CASE("frame feature validation") {
  FrameFeatures frame;
  frame.width = 64;
  frame.height = 48;
  VecX d = VecX::Unit(4, 0);
  frame.lpoints.emplace_back(1.0, 1.0, 0.5, d);
  frame.lines.emplace_back(1, Vec2(0, 0), Vec2(5, 5), std::vector<int>{0});
  CHECK_NOTHROW(frame.validate());
  frame.lines.emplace_back(1, Vec2(0, 1), Vec2(5, 6), std::vector<int>{0});
  CHECK_THROWS_AS(frame.validate(), Error);  // duplicate id
  frame.lines.pop_back();
  frame.lines.emplace_back(2, Vec2(0, 1), Vec2(5, 6), std::vector<int>{3});
  CHECK_THROWS_AS(frame.validate(), Error);  // bad lpoint index
  frame.lines.pop_back();
  frame.ppoint_depth = std::vector<double>{1.0};
  CHECK_THROWS_AS(frame.validate(), Error);  // depth size mismatch
}
