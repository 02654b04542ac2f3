#include <doctest.h>

#include <set>
#include <unordered_map>
#include <unordered_set>

#include "plvo/geometry.hpp"
#include "plvo/matcher.hpp"
#include "plvo/synthetic.hpp"

using namespace plvo;

namespace {

bool frames_identical(const FrameFeatures& a, const FrameFeatures& b) {
  if (a.ppoints.size() != b.ppoints.size()) return false;
  for (size_t i = 0; i < a.ppoints.size(); ++i) {
    if (a.ppoints[i].u() != b.ppoints[i].u()) return false;
    if (a.ppoints[i].v() != b.ppoints[i].v()) return false;
    if (a.ppoints[i].descriptor() != b.ppoints[i].descriptor()) return false;
  }
  if (a.lpoints.size() != b.lpoints.size()) return false;
  for (size_t i = 0; i < a.lpoints.size(); ++i)
    if (a.lpoints[i].u() != b.lpoints[i].u()) return false;
  if (a.lines.size() != b.lines.size()) return false;
  for (size_t i = 0; i < a.lines.size(); ++i)
    if (a.lines[i].id != b.lines[i].id || a.lines[i].a != b.lines[i].a)
      return false;
  return *a.gt_point_ids == *b.gt_point_ids &&
         *a.gt_line_ids == *b.gt_line_ids &&
         *a.gt_lpoint_ids == *b.gt_lpoint_ids;
}

}  // namespace

TEST_CASE("empty world") {
  WorldConfig config;
  config.n_points = 0;
  config.n_lines = 0;
  const World world = generate_world(1, config);
  CHECK(world.points.empty());
  CHECK(world.lines.empty());
}

TEST_CASE("same seed gives identical worlds") {
  WorldConfig config;
  const World w1 = generate_world(42, config);
  const World w2 = generate_world(42, config);
  REQUIRE(w1.points.size() == w2.points.size());
  for (size_t i = 0; i < w1.points.size(); ++i) {
    CHECK(w1.points[i].id == w2.points[i].id);
    CHECK(w1.points[i].position == w2.points[i].position);
    CHECK(w1.points[i].latent == w2.points[i].latent);
  }
  REQUIRE(w1.lines.size() == w2.lines.size());
  for (size_t i = 0; i < w1.lines.size(); ++i) {
    CHECK(w1.lines[i].a == w2.lines[i].a);
    CHECK(w1.lines[i].sample_ids == w2.lines[i].sample_ids);
  }
  const World w3 = generate_world(43, config);
  CHECK(w1.points[0].position != w3.points[0].position);
}

TEST_CASE("world invariants: unique ids, in bounds, unit latents") {
  WorldConfig config;
  config.n_points = 300;
  config.n_lines = 50;
  config.repetitive_copies = 3;
  config.repetitive_motif = 5;
  const World world = generate_world(9, config);
  std::set<std::int64_t> ids;
  for (const auto& p : world.points) {
    CHECK(ids.insert(p.id).second);
    CHECK((p.position.array() >= config.bounds.lo.array()).all());
    CHECK((p.position.array() <= config.bounds.hi.array()).all());
    CHECK(p.latent.norm() == doctest::Approx(1.0).epsilon(1e-12));
  }
  for (const auto& l : world.lines) {
    CHECK(ids.insert(l.id).second);
    for (const auto& id : l.sample_ids) CHECK(ids.insert(id).second);
    for (const auto& latent : l.sample_latents)
      CHECK(latent.norm() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(l.sample_ids.size() == l.sample_latents.size());
    CHECK(l.sample_ids.size() >= 2);
  }
}

TEST_CASE("uniform landmark statistics in the unit box") {
  WorldConfig config;
  config.n_points = 1000;
  config.n_lines = 0;
  config.bounds.lo = Vec3(0, 0, 0);
  config.bounds.hi = Vec3(1, 1, 1);
  const World world = generate_world(7, config);
  Vec3 mean = Vec3::Zero();
  for (const auto& p : world.points) mean += p.position;
  mean /= 1000.0;
  for (int axis = 0; axis < 3; ++axis)
    CHECK(std::abs(mean[axis] - 0.5) < 0.05);
  // Against the generator re-run: identical sample, identical mean.
  const World again = generate_world(7, config);
  Vec3 mean2 = Vec3::Zero();
  for (const auto& p : again.points) mean2 += p.position;
  CHECK(mean == mean2 / 1000.0);
}

TEST_CASE("repetitive mode duplicates latents at translated positions") {
  WorldConfig config;
  config.n_lines = 12;
  config.repetitive_copies = 2;
  config.repetitive_motif = 6;
  const World world = generate_world(4, config);
  REQUIRE(world.lines.size() >= 12);
  for (int k = 0; k < 6; ++k) {
    const LineLandmark& base = world.lines[k];
    const LineLandmark& copy = world.lines[k + 6];
    CHECK((copy.a - base.a - config.repetitive_offset).norm() < 1e-12);
    REQUIRE(copy.sample_latents.size() == base.sample_latents.size());
    for (size_t s = 0; s < base.sample_latents.size(); ++s)
      CHECK(copy.sample_latents[s] == base.sample_latents[s]);  // bit-identical
    CHECK(copy.sample_ids != base.sample_ids);
  }
}

TEST_CASE("render determinism and on-axis noise-free landmark") {
  WorldConfig config;
  config.n_points = 1;
  config.n_lines = 0;
  World world = generate_world(3, config);
  const CameraRig camera = default_camera();
  world.points[0].position = Vec3(0, 0, 10);  // optical axis

  const DegradationProfile clean = builtin_profile("clean");
  const FrameFeatures frame =
      render_frame(world, SE3Pose::identity(), camera, clean, 5);
  REQUIRE(frame.ppoints.size() == 1);
  CHECK(frame.ppoints[0].u() == camera.cx);
  CHECK(frame.ppoints[0].v() == camera.cy);
  CHECK(frame.ppoints[0].descriptor() == world.points[0].latent);
  CHECK((*frame.ppoint_depth)[0] == 10.0);
  CHECK((*frame.gt_point_ids)[0] == world.points[0].id);

  const FrameFeatures again =
      render_frame(world, SE3Pose::identity(), camera, clean, 5);
  CHECK(frames_identical(frame, again));
}

TEST_CASE("full dropout annihilates P-points") {
  WorldConfig config;
  const World world = generate_world(11, config);
  DegradationProfile profile = builtin_profile("clean");
  profile.point_dropout = 1.0;
  const FrameFeatures frame =
      render_frame(world, SE3Pose::identity(), default_camera(), profile, 1);
  CHECK(frame.ppoints.empty());
  CHECK(!frame.lines.empty());  // lines unaffected by point dropout
}

TEST_CASE("visible count equals brute-force frustum count") {
  WorldConfig config;
  config.n_points = 400;
  config.n_lines = 0;
  const World world = generate_world(17, config);
  const CameraRig camera = default_camera();
  const auto traj = make_trajectory({TrajectoryKind::Arc, 10, 1.0});
  for (const SE3Pose& pose : traj) {
    const FrameFeatures frame =
        render_frame(world, pose, camera, builtin_profile("clean"), 2);
    int expected = 0;
    const SE3Pose w2c = pose.inverse();
    for (const auto& lm : world.points) {
      const Vec3 pc = w2c.apply(lm.position);
      if (pc.z() < 0.25) continue;
      const double u = camera.fx * pc.x() / pc.z() + camera.cx;
      const double v = camera.fy * pc.y() / pc.z() + camera.cy;
      if (u < 0 || u >= camera.width || v < 0 || v >= camera.height) continue;
      ++expected;
    }
    CHECK(static_cast<int>(frame.ppoints.size()) == expected);
  }
}

TEST_CASE("every rendered gt id exists in the world") {
  WorldConfig config;
  const World world = generate_world(23, config);
  std::unordered_set<std::int64_t> known;
  for (const auto& p : world.points) known.insert(p.id);
  for (const auto& l : world.lines) {
    known.insert(l.id);
    for (auto id : l.sample_ids) known.insert(id);
  }
  const FrameFeatures frame = render_frame(
      world, SE3Pose::identity(), default_camera(), builtin_profile("fog"), 8);
  for (auto id : *frame.gt_point_ids) CHECK(known.count(id) == 1);
  for (auto id : *frame.gt_line_ids) CHECK(known.count(id) == 1);
  for (auto id : *frame.gt_lpoint_ids) CHECK(known.count(id) == 1);
}

TEST_CASE("increasing dropout never increases P-point count") {
  WorldConfig config;
  config.n_points = 120;
  config.n_lines = 0;
  const World world = generate_world(31, config);
  const CameraRig camera = default_camera();
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    int previous = 1 << 30;
    for (double dropout : {0.0, 0.2, 0.5, 0.8, 1.0}) {
      DegradationProfile profile = builtin_profile("clean");
      profile.point_dropout = dropout;
      const FrameFeatures frame =
          render_frame(world, SE3Pose::identity(), camera, profile, seed);
      const int count = static_cast<int>(frame.ppoints.size());
      CHECK(count <= previous);
      previous = count;
    }
  }
}

TEST_CASE("ground truth matches: self pairing and disjoint sets") {
  WorldConfig config;
  const World world = generate_world(2, config);
  const FrameFeatures frame = render_frame(
      world, SE3Pose::identity(), default_camera(), builtin_profile("clean"), 3);
  const GroundTruth self = ground_truth_matches(frame, frame);
  CHECK(self.point_pairs.size() == frame.ppoints.size());
  for (const auto& [i, j] : self.point_pairs) CHECK(i == j);
  CHECK(self.unmatched_points_a.empty());
  CHECK(self.unmatched_points_b.empty());
  CHECK(self.lpoint_pairs.size() == frame.lpoints.size());
  CHECK(self.line_pairs.size() == frame.lines.size());

  // Worlds are id-compatible only with themselves; make the second frame's
  // labels genuinely disjoint.
  const World other = generate_world(77, config);
  FrameFeatures frame_b = render_frame(
      other, SE3Pose::identity(), default_camera(), builtin_profile("clean"), 3);
  for (auto& id : *frame_b.gt_point_ids) id += 1'000'000'000;
  for (auto& id : *frame_b.gt_line_ids) id += 1'000'000'000;
  for (auto& id : *frame_b.gt_lpoint_ids) id += 1'000'000'000;
  const GroundTruth disjoint = ground_truth_matches(frame, frame_b);
  CHECK(disjoint.point_pairs.empty());
  CHECK(disjoint.unmatched_points_a.size() == frame.ppoints.size());
  CHECK(disjoint.unmatched_points_b.size() == frame_b.ppoints.size());

  FrameFeatures unlabeled = frame;
  unlabeled.gt_point_ids.reset();
  CHECK_THROWS_AS(ground_truth_matches(unlabeled, frame), MissingLabels);
}

TEST_CASE("ground truth equals a brute-force id join") {
  WorldConfig config;
  config.n_points = 150;
  const World world = generate_world(5, config);
  const auto traj = make_trajectory({TrajectoryKind::Straight, 2, 1.5});
  const CameraRig camera = default_camera();
  const FrameFeatures fa =
      render_frame(world, traj[0], camera, builtin_profile("fog"), 10, 0);
  const FrameFeatures fb =
      render_frame(world, traj[1], camera, builtin_profile("fog"), 11, 1);
  const GroundTruth gt = ground_truth_matches(fa, fb);

  std::unordered_map<std::int64_t, int> in_b;
  for (size_t j = 0; j < fb.ppoints.size(); ++j)
    in_b[(*fb.gt_point_ids)[j]] = static_cast<int>(j);
  size_t expected_pairs = 0;
  for (size_t i = 0; i < fa.ppoints.size(); ++i)
    if (in_b.count((*fa.gt_point_ids)[i])) ++expected_pairs;
  CHECK(gt.point_pairs.size() == expected_pairs);
  for (const auto& [i, j] : gt.point_pairs)
    CHECK((*fa.gt_point_ids)[i] == (*fb.gt_point_ids)[j]);
  CHECK(gt.point_pairs.size() + gt.unmatched_points_a.size() ==
        fa.ppoints.size());
  CHECK(gt.point_pairs.size() + gt.unmatched_points_b.size() ==
        fb.ppoints.size());
  CHECK(expected_pairs > 10);  // consecutive frames must overlap
}

TEST_CASE("builtin profile constants") {
  const auto profiles = builtin_profiles();
  REQUIRE(profiles.size() == 3);
  CHECK(profiles[0].name == "daytime");
  CHECK(profiles[0].point_dropout == 0.05);
  CHECK(profiles[0].line_dropout == 0.05);
  CHECK(profiles[0].descriptor_noise_sigma == 0.05);
  CHECK(profiles[1].name == "fog");
  CHECK(profiles[1].point_dropout == 0.45);
  CHECK(profiles[1].line_dropout == 0.10);
  CHECK(profiles[1].descriptor_noise_sigma == 0.20);
  CHECK(profiles[2].name == "nighttime");
  CHECK(profiles[2].point_dropout == 0.55);
  CHECK(profiles[2].line_dropout == 0.10);
  CHECK(profiles[2].descriptor_noise_sigma == 0.25);
  CHECK_THROWS_AS(builtin_profile("dusk"), Error);
}

TEST_CASE("profile ordering: daytime detects more P-points, stable lines") {
  WorldConfig config;
  config.n_points = 200;
  config.n_lines = 40;
  const World world = generate_world(13, config);
  const CameraRig camera = default_camera();
  const auto traj = make_trajectory({TrajectoryKind::Straight, 12, 0.4});

  long points_day = 0, points_fog = 0, points_night = 0;
  long lines_day = 0, lines_fog = 0, lines_night = 0;
  for (size_t k = 0; k < traj.size(); ++k) {
    const auto day = render_frame(world, traj[k], camera,
                                  builtin_profile("daytime"), 100 + k);
    const auto fog =
        render_frame(world, traj[k], camera, builtin_profile("fog"), 100 + k);
    const auto night = render_frame(world, traj[k], camera,
                                    builtin_profile("nighttime"), 100 + k);
    points_day += day.ppoints.size();
    points_fog += fog.ppoints.size();
    points_night += night.ppoints.size();
    lines_day += day.lines.size();
    lines_fog += fog.lines.size();
    lines_night += night.lines.size();
  }
  CHECK(points_day > points_fog);
  CHECK(points_day > points_night);
  const long line_max = std::max({lines_day, lines_fog, lines_night});
  const long line_min = std::min({lines_day, lines_fog, lines_night});
  CHECK((line_max - line_min) < 0.10 * line_max);
}

TEST_CASE("zero-noise profile gives the oracle matcher 100% recall") {
  WorldConfig config;
  config.n_points = 120;
  config.n_lines = 20;
  const World world = generate_world(21, config);
  const CameraRig camera = default_camera();
  const auto traj = make_trajectory({TrajectoryKind::Straight, 2, 0.4});
  const auto fa =
      render_frame(world, traj[0], camera, builtin_profile("clean"), 40, 0);
  const auto fb =
      render_frame(world, traj[1], camera, builtin_profile("clean"), 41, 1);
  const GroundTruth gt = ground_truth_matches(fa, fb);
  REQUIRE(gt.point_pairs.size() > 20);

  MatcherWeights weights;
  weights.point = EncoderWeights::descriptor_only(config.descriptor_dim);
  weights.line = EncoderWeights::descriptor_only(config.descriptor_dim);
  const PairMatchResult result = match_pair(fa, fb, weights);
  std::set<std::pair<int, int>> predicted;
  for (const auto& pr : result.points.pairs)
    predicted.insert({pr.idx_a, pr.idx_b});
  for (const auto& pair : gt.point_pairs) CHECK(predicted.count(pair) == 1);
  std::set<std::pair<int, int>> predicted_lp;
  for (const auto& pr : result.lpoints.pairs)
    predicted_lp.insert({pr.idx_a, pr.idx_b});
  for (const auto& pair : gt.lpoint_pairs) CHECK(predicted_lp.count(pair) == 1);
}

TEST_CASE("trajectory generators") {
  const auto straight = make_trajectory({TrajectoryKind::Straight, 5, 0.5});
  REQUIRE(straight.size() == 5);
  CHECK(straight[0].translation() == Vec3(0, 0, 0));
  CHECK((straight[4].translation() - Vec3(0, 0, 2.0)).norm() < 1e-12);
  CHECK((straight[0].rotation() - Mat3::Identity()).norm() < 1e-12);

  TrajectoryConfig with_stop{TrajectoryKind::Straight, 8, 1.0};
  with_stop.stop_begin = 2;
  with_stop.stop_length = 3;
  const auto stopped = make_trajectory(with_stop);
  CHECK((stopped[2].translation() - stopped[3].translation()).norm() == 0.0);
  CHECK((stopped[2].translation() - stopped[4].translation()).norm() == 0.0);
  CHECK((stopped[5].translation() - stopped[4].translation()).norm() > 0.1);

  const auto arc = make_trajectory({TrajectoryKind::Arc, 30, 0.5});
  for (const SE3Pose& pose : arc) {
    CHECK((pose.rotation().transpose() * pose.rotation() - Mat3::Identity())
              .norm() < 1e-9);
  }
  // Heading turns along the arc.
  CHECK((arc.back().rotation() - arc.front().rotation()).norm() > 0.1);

  const auto eight = make_trajectory({TrajectoryKind::FigureEight, 40, 0.5});
  CHECK(eight.size() == 40);
}
