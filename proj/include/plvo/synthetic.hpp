#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "plvo/match_types.hpp"
#include "plvo/rng.hpp"
#include "plvo/types.hpp"

namespace plvo {

struct PointLandmark {
  std::int64_t id = 0;
  Vec3 position = Vec3::Zero();
  VecX latent;  // unit norm
};

struct LineLandmark {
  std::int64_t id = 0;
  Vec3 a = Vec3::Zero();
  Vec3 b = Vec3::Zero();
  std::vector<VecX> sample_latents;        // one per L-point slot, unit norm
  std::vector<std::int64_t> sample_ids;    // world-unique per slot
};

struct WorldBounds {
  Vec3 lo{-15.0, -8.0, 2.0};
  Vec3 hi{15.0, 8.0, 70.0};
};

struct WorldConfig {
  int n_points = 240;
  int n_lines = 40;
  int descriptor_dim = 32;
  WorldBounds bounds;
  int min_line_samples = 5;
  int max_line_samples = 9;
  double min_line_length = 1.5;
  double max_line_length = 6.0;
  double line_sample_spacing_m = 0.8;
  /// Repetitive-structure mode: a motif of `repetitive_motif` lines is
  /// duplicated `repetitive_copies` times at translated positions with
  /// byte-identical latent descriptors, so only position can tell the
  /// copies apart.
  int repetitive_copies = 0;
  int repetitive_motif = 6;
  Vec3 repetitive_offset{3.0, 0.0, 0.0};
};

struct World {
  WorldConfig config;
  std::vector<PointLandmark> points;
  std::vector<LineLandmark> lines;
};

/// Deterministic for fixed (seed, config).
World generate_world(std::uint64_t seed, const WorldConfig& config);

/// Detector degradation parameters emulating weather/lighting conditions.
struct DegradationProfile {
  std::string name = "custom";
  double point_dropout = 0.0;
  double line_dropout = 0.0;
  double descriptor_noise_sigma = 0.0;
  double pixel_noise_sigma = 0.0;
  double confidence_scale = 1.0;
};

/// "daytime", "fog", "nighttime", or the zero-noise "clean".
DegradationProfile builtin_profile(const std::string& name);
std::vector<DegradationProfile> builtin_profiles();  // the three weather ones

/// Projects world landmarks into the camera at `camera_to_world`, applies
/// the profile's dropout and noise, and emits a fully labeled frame
/// (depths from the true geometry, gt ids from the landmarks).
/// Deterministic for fixed inputs; per-landmark RNG substreams keep
/// dropout decisions identical across profiles with equal dropout.
FrameFeatures render_frame(const World& world, const SE3Pose& camera_to_world,
                           const CameraRig& camera,
                           const DegradationProfile& profile,
                           std::uint64_t seed, std::int64_t frame_id = 0);

/// Joins gt landmark ids between two labeled frames.
/// Throws MissingLabels when either frame lacks labels.
GroundTruth ground_truth_matches(const FrameFeatures& a,
                                 const FrameFeatures& b);

enum class TrajectoryKind { Straight, Arc, FigureEight };

struct TrajectoryConfig {
  TrajectoryKind kind = TrajectoryKind::Straight;
  int frames = 50;
  double speed = 0.35;      // meters per frame
  double arc_radius = 30.0; // Arc / FigureEight extent
  int stop_begin = -1;      // frames [stop_begin, stop_begin+stop_length)
  int stop_length = 0;      //   repeat the same pose (full stop)
};

/// Camera-to-world poses; the camera looks along the path tangent.
std::vector<SE3Pose> make_trajectory(const TrajectoryConfig& config);

TrajectoryKind trajectory_kind_from_string(const std::string& name);

/// Default synthetic rig: 640x480, fx=fy=400, principal point centered.
CameraRig default_camera();

}  // namespace plvo
