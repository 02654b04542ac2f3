#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "plvo/match_types.hpp"
#include "plvo/types.hpp"

namespace plvo {

inline constexpr const char* kFeatureFormatVersion = "plvo-features/1";
inline constexpr const char* kWeightsFormatVersion = "plvo-weights/1";

/// Binary static/dynamic mask; 1 = static (keep), 0 = dynamic (drop).
struct MaskImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> keep;  // row-major, size width*height

  bool at(int u, int v) const {
    return keep[static_cast<size_t>(v) * width + u] != 0;
  }
};

/// Feature files: one JSON header line, then one text record per feature.
/// Doubles are written with 17 significant digits, so load(save(x)) == x.
void save_features(const FrameFeatures& frame, const std::filesystem::path& path);
FrameFeatures load_features(const std::filesystem::path& path);

/// PGM (P5) masks; any nonzero pixel is "keep".
void save_mask(const MaskImage& mask, const std::filesystem::path& path);
MaskImage load_mask(const std::filesystem::path& path);

/// Removes features at masked-out pixels. Lines keep surviving L-points;
/// lines with fewer than 2 surviving L-points are dropped. Indices are
/// re-densified. Throws DimensionMismatch when sizes disagree.
FrameFeatures apply_mask(const FrameFeatures& frame, const MaskImage& mask);

struct TrajectoryEntry {
  std::int64_t frame_id = 0;
  SE3Pose pose;  // camera-to-world
};

/// CSV `frame_id,tx,ty,tz,qx,qy,qz,qw`.
void save_trajectory_csv(std::span<const TrajectoryEntry> entries,
                         const std::filesystem::path& path);
std::vector<TrajectoryEntry> load_trajectory_csv(
    const std::filesystem::path& path);

/// CSV `frame_a,frame_b,kind(point|line),idx_a,idx_b,score`. Line rows carry
/// line IDs in the idx columns.
struct MatchRecord {
  std::int64_t frame_a = 0;
  std::int64_t frame_b = 0;
  std::string kind;  // "point" or "line"
  int idx_a = 0;
  int idx_b = 0;
  double score = 0.0;
};

void save_match_csv(std::span<const MatchRecord> records,
                    const std::filesystem::path& path);
std::vector<MatchRecord> load_match_csv(const std::filesystem::path& path);

std::vector<MatchRecord> to_match_records(std::int64_t frame_a,
                                          std::int64_t frame_b,
                                          const MatchSet& points,
                                          std::span<const LineMatch> lines);

namespace detail {
/// Shortest-round-trip formatting used by every text writer.
std::string format_double(double x);
/// Atomic file write: temp file in the same directory, then rename.
void write_file_atomic(const std::filesystem::path& path,
                       const std::string& contents);
}  // namespace detail

}  // namespace plvo
