#include "plvo/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include "plvo/geometry.hpp"
#include "plvo/line_matching.hpp"

namespace plvo {

namespace {

constexpr double kZNear = 0.25;

VecX random_unit_descriptor(int dim, Rng& rng) {
  VecX d(dim);
  for (int i = 0; i < dim; ++i) d[i] = rng.normal();
  const double norm = d.norm();
  return norm > 1e-12 ? VecX(d / norm) : random_unit_descriptor(dim, rng);
}

Vec3 uniform_in(const WorldBounds& bounds, Rng& rng) {
  return {rng.uniform(bounds.lo.x(), bounds.hi.x()),
          rng.uniform(bounds.lo.y(), bounds.hi.y()),
          rng.uniform(bounds.lo.z(), bounds.hi.z())};
}

bool inside(const WorldBounds& bounds, const Vec3& p) {
  return (p.array() >= bounds.lo.array()).all() &&
         (p.array() <= bounds.hi.array()).all();
}

int line_slot_count(double length, const WorldConfig& config) {
  const int by_length =
      static_cast<int>(std::lround(length / config.line_sample_spacing_m)) + 1;
  return std::clamp(by_length, std::max(2, config.min_line_samples),
                    config.max_line_samples);
}

LineLandmark make_line_landmark(std::int64_t id, const Vec3& a, const Vec3& b,
                                const WorldConfig& config, Rng& rng,
                                std::int64_t& next_sample_id) {
  LineLandmark line;
  line.id = id;
  line.a = a;
  line.b = b;
  const int slots = line_slot_count((b - a).norm(), config);
  for (int k = 0; k < slots; ++k) {
    line.sample_latents.push_back(
        random_unit_descriptor(config.descriptor_dim, rng));
    line.sample_ids.push_back(next_sample_id++);
  }
  return line;
}

}  // namespace

World generate_world(std::uint64_t seed, const WorldConfig& config) {
  if (config.n_points < 0 || config.n_lines < 0)
    throw Error("generate_world: negative landmark count");
  World world;
  world.config = config;
  Rng rng(mix_seed(seed, 0xB0D5));
  std::int64_t next_id = 1;

  for (int i = 0; i < config.n_points; ++i) {
    PointLandmark p;
    p.id = next_id++;
    p.position = uniform_in(config.bounds, rng);
    p.latent = random_unit_descriptor(config.descriptor_dim, rng);
    world.points.push_back(std::move(p));
  }

  // Line ids continue after point ids; L-point sample ids after that.
  std::int64_t next_sample_id = next_id + config.n_lines +
                                static_cast<std::int64_t>(
                                    config.repetitive_copies) *
                                    config.repetitive_motif + 16;
  auto random_segment = [&](Vec3& a, Vec3& b) {
    for (int attempt = 0; attempt < 64; ++attempt) {
      a = uniform_in(config.bounds, rng);
      Vec3 dir(rng.normal(), rng.normal(), rng.normal());
      if (dir.norm() < 1e-9) continue;
      dir.normalize();
      const double len =
          rng.uniform(config.min_line_length, config.max_line_length);
      b = a + len * dir;
      if (inside(config.bounds, b)) return;
    }
    b = config.bounds.lo + 0.5 * (config.bounds.hi - config.bounds.lo);
  };

  if (config.repetitive_copies > 0) {
    // Base motif, then translated copies sharing the motif's latents.
    std::vector<LineLandmark> motif;
    for (int i = 0; i < config.repetitive_motif; ++i) {
      Vec3 a, b;
      random_segment(a, b);
      motif.push_back(
          make_line_landmark(next_id++, a, b, config, rng, next_sample_id));
      world.lines.push_back(motif.back());
    }
    for (int copy = 1; copy < config.repetitive_copies; ++copy) {
      const Vec3 shift = static_cast<double>(copy) * config.repetitive_offset;
      for (const LineLandmark& base : motif) {
        LineLandmark dup;
        dup.id = next_id++;
        dup.a = base.a + shift;
        dup.b = base.b + shift;
        dup.sample_latents = base.sample_latents;  // identical descriptors
        for (size_t k = 0; k < base.sample_ids.size(); ++k)
          dup.sample_ids.push_back(next_sample_id++);
        world.lines.push_back(std::move(dup));
      }
    }
  }
  while (static_cast<int>(world.lines.size()) < config.n_lines) {
    Vec3 a, b;
    random_segment(a, b);
    world.lines.push_back(
        make_line_landmark(next_id++, a, b, config, rng, next_sample_id));
  }
  return world;
}

DegradationProfile builtin_profile(const std::string& name) {
  if (name == "daytime") return {"daytime", 0.05, 0.05, 0.05, 0.15, 1.0};
  if (name == "fog") return {"fog", 0.45, 0.10, 0.20, 0.30, 0.85};
  if (name == "nighttime") return {"nighttime", 0.55, 0.10, 0.25, 0.35, 0.75};
  if (name == "clean") return {"clean", 0.0, 0.0, 0.0, 0.0, 1.0};
  throw Error("builtin_profile: unknown profile '" + name + "'");
}

std::vector<DegradationProfile> builtin_profiles() {
  return {builtin_profile("daytime"), builtin_profile("fog"),
          builtin_profile("nighttime")};
}

namespace {

struct ProjectedPoint {
  Vec2 pixel;
  double depth;
  bool visible;
};

ProjectedPoint project_landmark(const Vec3& world_point, const SE3Pose& world_to_camera,
                                const CameraRig& camera) {
  ProjectedPoint out{Vec2::Zero(), 0.0, false};
  const Vec3 pc = world_to_camera.apply(world_point);
  if (pc.z() < kZNear) return out;
  const Vec2 px{camera.fx * pc.x() / pc.z() + camera.cx,
                camera.fy * pc.y() / pc.z() + camera.cy};
  if (px.x() < 0.0 || px.x() >= camera.width || px.y() < 0.0 ||
      px.y() >= camera.height)
    return out;
  return {px, pc.z(), true};
}

double confidence_draw(const DegradationProfile& profile, Rng& rng) {
  const double c = profile.confidence_scale * (0.6 + 0.4 * rng.uniform());
  return std::clamp(c, 0.01, 1.0);
}

VecX noisy_descriptor(const VecX& latent, double sigma, Rng& rng) {
  if (sigma <= 0.0) return latent;  // keep the latent bit-exact
  VecX d = latent;
  for (int i = 0; i < d.size(); ++i) d[i] += sigma * rng.normal();
  const double norm = d.norm();
  if (norm > 1e-12) d /= norm;
  return d;
}

}  // namespace

FrameFeatures render_frame(const World& world, const SE3Pose& camera_to_world,
                           const CameraRig& camera,
                           const DegradationProfile& profile,
                           std::uint64_t seed, std::int64_t frame_id) {
  FrameFeatures frame;
  frame.frame_id = frame_id;
  frame.width = camera.width;
  frame.height = camera.height;
  frame.depth_kind = DepthKind::Depth;
  frame.ppoint_depth.emplace();
  frame.line_endpoint_depth.emplace();
  frame.gt_point_ids.emplace();
  frame.gt_line_ids.emplace();
  frame.gt_lpoint_ids.emplace();

  const SE3Pose world_to_camera = camera_to_world.inverse();

  for (const PointLandmark& lm : world.points) {
    // One substream per landmark: dropout decisions stay coupled across
    // profiles and poses.
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(lm.id)));
    const double drop = rng.uniform();
    const ProjectedPoint proj =
        project_landmark(lm.position, world_to_camera, camera);
    if (!proj.visible || drop < profile.point_dropout) continue;
    const double nu = rng.normal(), nv = rng.normal();
    const double u = proj.pixel.x() + profile.pixel_noise_sigma * nu;
    const double v = proj.pixel.y() + profile.pixel_noise_sigma * nv;
    const double c = confidence_draw(profile, rng);
    frame.ppoints.emplace_back(
        u, v, c, noisy_descriptor(lm.latent, profile.descriptor_noise_sigma, rng));
    frame.ppoint_depth->push_back(proj.depth);
    frame.gt_point_ids->push_back(lm.id);
  }

  for (const LineLandmark& lm : world.lines) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(lm.id) ^ 0x11CEULL << 32));
    const double drop = rng.uniform();
    const ProjectedPoint pa = project_landmark(lm.a, world_to_camera, camera);
    const ProjectedPoint pb = project_landmark(lm.b, world_to_camera, camera);
    if (!pa.visible || !pb.visible || drop < profile.line_dropout) continue;
    const double nax = rng.normal(), nay = rng.normal();
    const double nbx = rng.normal(), nby = rng.normal();
    const Vec2 a = pa.pixel + profile.pixel_noise_sigma * Vec2(nax, nay);
    const Vec2 b = pb.pixel + profile.pixel_noise_sigma * Vec2(nbx, nby);
    const double len = (b - a).norm();
    if (len < 1e-6) continue;  // degenerate under this viewpoint
    const int slots = static_cast<int>(lm.sample_ids.size());
    const std::vector<Vec2> samples = sample_line_points(a, b, len, slots);
    std::vector<int> indices;
    for (int k = 0; k < slots; ++k) {
      const double su = rng.normal(), sv = rng.normal();
      const Vec2 p = samples[k] + profile.pixel_noise_sigma * Vec2(su, sv);
      const double c = confidence_draw(profile, rng);
      indices.push_back(static_cast<int>(frame.lpoints.size()));
      frame.lpoints.emplace_back(
          p.x(), p.y(), c,
          noisy_descriptor(lm.sample_latents[k],
                           profile.descriptor_noise_sigma, rng));
      frame.gt_lpoint_ids->push_back(lm.sample_ids[k]);
    }
    frame.lines.emplace_back(static_cast<int>(lm.id), a, b, std::move(indices));
    frame.line_endpoint_depth->emplace_back(pa.depth, pb.depth);
    frame.gt_line_ids->push_back(lm.id);
  }
  return frame;
}

namespace {

/// Hash-join of gt ids; first occurrence wins on duplicates.
void join_ids(const std::vector<std::int64_t>& ids_a,
              const std::vector<std::int64_t>& ids_b,
              std::vector<std::pair<int, int>>& pairs,
              std::vector<int>* unmatched_a, std::vector<int>* unmatched_b) {
  std::unordered_map<std::int64_t, int> index_b;
  for (size_t j = 0; j < ids_b.size(); ++j)
    index_b.emplace(ids_b[j], static_cast<int>(j));
  std::unordered_set<int> used_b;
  std::unordered_set<int> used_a;
  for (size_t i = 0; i < ids_a.size(); ++i) {
    const auto it = index_b.find(ids_a[i]);
    if (it == index_b.end()) continue;
    if (used_a.count(static_cast<int>(i)) || used_b.count(it->second)) continue;
    if (!used_a.insert(static_cast<int>(i)).second) continue;
    used_b.insert(it->second);
    pairs.emplace_back(static_cast<int>(i), it->second);
  }
  if (unmatched_a)
    for (size_t i = 0; i < ids_a.size(); ++i)
      if (!used_a.count(static_cast<int>(i)))
        unmatched_a->push_back(static_cast<int>(i));
  if (unmatched_b)
    for (size_t j = 0; j < ids_b.size(); ++j)
      if (!used_b.count(static_cast<int>(j)))
        unmatched_b->push_back(static_cast<int>(j));
}

}  // namespace

GroundTruth ground_truth_matches(const FrameFeatures& a,
                                 const FrameFeatures& b) {
  if (!a.gt_point_ids || !a.gt_lpoint_ids || !a.gt_line_ids ||
      !b.gt_point_ids || !b.gt_lpoint_ids || !b.gt_line_ids)
    throw MissingLabels("ground_truth_matches: frames lack gt labels");
  GroundTruth gt;
  join_ids(*a.gt_point_ids, *b.gt_point_ids, gt.point_pairs,
           &gt.unmatched_points_a, &gt.unmatched_points_b);
  join_ids(*a.gt_lpoint_ids, *b.gt_lpoint_ids, gt.lpoint_pairs,
           &gt.unmatched_lpoints_a, &gt.unmatched_lpoints_b);
  std::vector<std::pair<int, int>> line_index_pairs;
  join_ids(*a.gt_line_ids, *b.gt_line_ids, line_index_pairs, nullptr, nullptr);
  for (const auto& [i, j] : line_index_pairs)
    gt.line_pairs.emplace_back(a.lines[i].id, b.lines[j].id);
  return gt;
}

std::vector<SE3Pose> make_trajectory(const TrajectoryConfig& config) {
  if (config.frames < 0) throw Error("make_trajectory: negative frame count");
  // Stops freeze the pose: frames [stop_begin, stop_begin+stop_length)
  // all repeat the pose reached at stop_begin.
  std::vector<double> progress;
  double p = 0.0;
  for (int k = 0; k < config.frames; ++k) {
    const bool frozen = config.stop_begin >= 0 && k > config.stop_begin &&
                        k < config.stop_begin + config.stop_length;
    if (k > 0 && !frozen) p += 1.0;
    progress.push_back(p);
  }

  auto position = [&](double t) -> Vec3 {
    const double s = t * config.speed;
    switch (config.kind) {
      case TrajectoryKind::Straight:
        return {0.0, 0.0, s};
      case TrajectoryKind::Arc: {
        const double theta = s / config.arc_radius;
        return {config.arc_radius * (1.0 - std::cos(theta)), 0.0,
                config.arc_radius * std::sin(theta)};
      }
      case TrajectoryKind::FigureEight: {
        const double total =
            std::max(1.0, config.speed * std::max(1, config.frames - 1));
        const double theta = 2.0 * 3.14159265358979323846 * s / total;
        const double a = total / 6.0;
        return {0.45 * a * std::sin(2.0 * theta), 0.0, a * std::sin(theta)};
      }
    }
    return Vec3::Zero();
  };

  std::vector<SE3Pose> poses;
  for (int k = 0; k < config.frames; ++k) {
    const double t = progress[k];
    const Vec3 pos = position(t);
    Vec3 tangent = position(t + 0.5) - position(t - 0.5);
    tangent.y() = 0.0;  // curves are planar; keep the camera level
    if (tangent.norm() < 1e-9) tangent = Vec3(0, 0, 1);
    tangent.normalize();
    // Yaw-only orientation: z forward along the tangent, y down.
    Mat3 rot;
    rot.col(0) = Vec3(tangent.z(), 0.0, -tangent.x());
    rot.col(1) = Vec3(0, 1, 0);
    rot.col(2) = tangent;
    poses.emplace_back(rot, pos);
  }
  return poses;
}

TrajectoryKind trajectory_kind_from_string(const std::string& name) {
  if (name == "straight") return TrajectoryKind::Straight;
  if (name == "arc") return TrajectoryKind::Arc;
  if (name == "figure8") return TrajectoryKind::FigureEight;
  throw Error("unknown trajectory kind '" + name + "'");
}

CameraRig default_camera() { return CameraRig(400.0, 400.0, 320.0, 240.0, 0.2, 640, 480); }

}  // namespace plvo
