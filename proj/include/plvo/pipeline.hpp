#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "plvo/codec.hpp"
#include "plvo/matcher.hpp"
#include "plvo/pose.hpp"
#include "plvo/types.hpp"

namespace plvo {

/// Camera-to-world poses in a fixed world frame; frame_ids strictly
/// increasing, first pose identity by convention.
struct Trajectory {
  std::vector<TrajectoryEntry> entries;

  size_t size() const { return entries.size(); }
  void validate() const;
};

struct FrameLog {
  std::int64_t frame_id = 0;
  int point_detections = 0;
  int line_detections = 0;
  int lpoint_detections = 0;
};

struct PairLog {
  std::int64_t frame_a = 0;
  std::int64_t frame_b = 0;
  int point_matches = 0;
  int lpoint_matches = 0;
  int line_matches = 0;
  int correspondences = 0;
  int inliers = 0;
  double residual_rms = 0.0;
  double median_displacement_px = 0.0;
  bool stationary_snap = false;
  bool fallback = false;  // pose reused from the previous pair
  std::string error;      // recorded per-pair failure, empty when clean
};

/// Aggregate detection/match totals in Table-II style.
struct MatchStats {
  long point_detections = 0;
  long point_matches = 0;
  double point_match_pct = 0.0;
  bool point_pct_valid = false;  // false when detections == 0
  long line_detections = 0;
  long line_matches = 0;
  double line_match_pct = 0.0;
  bool line_pct_valid = false;
  long lpoint_detections = 0;
  long lpoint_matches = 0;
};

MatchStats match_stats(std::span<const FrameLog> frames,
                       std::span<const PairLog> pairs);

struct TrackConfig {
  MatchConfig match;
  PoseConfig pose;
  double stationary_median_px = 0.3;
  std::uint64_t seed = 1;
  int jobs = 1;
  bool use_points = true;
  bool use_lines = true;
};

struct TrackResult {
  Trajectory trajectory;
  MatchStats stats;
  std::vector<FrameLog> frame_logs;
  std::vector<PairLog> pair_logs;
};

/// Full per-pair flow: (mask) -> match P-points -> match L-points -> vote
/// lines -> lift frame i -> robust pose -> compose. Pairs without consensus
/// reuse the previous relative pose and are flagged, never aborting the run.
TrackResult track(std::span<const FrameFeatures> frames,
                  const CameraRig& camera, const MatcherWeights& weights,
                  const TrackConfig& config,
                  std::span<const MaskImage> masks = {});

struct Alignment {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  double scale = 1.0;

  Vec3 apply(const Vec3& p) const { return scale * (rotation * p) + translation; }
};

/// Closed-form least-squares alignment of traj positions onto gt positions
/// (rigid, or similarity when with_scale). Throws LengthMismatch /
/// DegenerateGeometry.
std::pair<Trajectory, Alignment> align_umeyama(const Trajectory& traj,
                                               const Trajectory& gt,
                                               bool with_scale = false);

struct ApeResult {
  std::vector<std::pair<std::int64_t, double>> series;  // (frame_id, APE m)
  double rmse = 0.0;
  double mean = 0.0;
  double max = 0.0;
};

/// Translational APE per frame; inputs must already be aligned and share
/// frame ids. Throws LengthMismatch.
ApeResult ape(const Trajectory& traj, const Trajectory& gt);

void save_ape_csv(const ApeResult& result, const std::filesystem::path& path);

/// Aligned plain-text stats table plus CSV.
std::string format_stats_table(const MatchStats& stats);
void save_stats_csv(const MatchStats& stats, const std::filesystem::path& path);

void save_pair_log_csv(std::span<const FrameLog> frames,
                       std::span<const PairLog> pairs,
                       const std::filesystem::path& path);
std::pair<std::vector<FrameLog>, std::vector<PairLog>> load_pair_log_csv(
    const std::filesystem::path& path);

/// Self-contained SVG line plot.
struct PlotSeries {
  std::string label;
  std::string color;  // SVG color
  std::vector<Vec2> points;
};

void write_svg_plot(const std::filesystem::path& path,
                    const std::string& title, const std::string& x_label,
                    const std::string& y_label,
                    std::span<const PlotSeries> series);

/// (x, z) positions for plotting a top-down trajectory.
std::vector<Vec2> trajectory_xz(const Trajectory& traj);

}  // namespace plvo
