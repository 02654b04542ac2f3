#include "plvo/pipeline.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include "plvo/line_matching.hpp"

namespace plvo {

void Trajectory::validate() const {
  for (size_t k = 1; k < entries.size(); ++k)
    if (entries[k].frame_id <= entries[k - 1].frame_id)
      throw Error("Trajectory: frame ids must be strictly increasing");
  if (!entries.empty()) {
    const SE3Pose& first = entries.front().pose;
    if (first.translation().norm() > 1e-9 ||
        (first.rotation() - Mat3::Identity()).norm() > 1e-9)
      throw Error("Trajectory: first pose must be identity");
  }
}

MatchStats match_stats(std::span<const FrameLog> frames,
                       std::span<const PairLog> pairs) {
  if (frames.empty() && pairs.empty())
    throw Error("match_stats: no logs");
  MatchStats stats;
  for (const FrameLog& f : frames) {
    stats.point_detections += f.point_detections;
    stats.line_detections += f.line_detections;
    stats.lpoint_detections += f.lpoint_detections;
  }
  for (const PairLog& p : pairs) {
    stats.point_matches += p.point_matches;
    stats.line_matches += p.line_matches;
    stats.lpoint_matches += p.lpoint_matches;
  }
  stats.point_pct_valid = stats.point_detections > 0;
  stats.point_match_pct =
      stats.point_pct_valid
          ? 100.0 * static_cast<double>(stats.point_matches) /
                static_cast<double>(stats.point_detections)
          : 0.0;
  stats.line_pct_valid = stats.line_detections > 0;
  stats.line_match_pct =
      stats.line_pct_valid
          ? 100.0 * static_cast<double>(stats.line_matches) /
                static_cast<double>(stats.line_detections)
          : 0.0;
  return stats;
}

namespace {

struct PairOutcome {
  bool has_pose = false;
  SE3Pose relative;  // frame k -> frame k+1
  PairLog log;
};

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const size_t n = values.size();
  return n % 2 == 1 ? values[n / 2]
                    : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

PairOutcome process_pair(const FrameFeatures& fa, const FrameFeatures& fb,
                         const CameraRig& camera,
                         const MatcherWeights& weights,
                         const TrackConfig& config, std::uint64_t pair_seed) {
  PairOutcome out;
  out.log.frame_a = fa.frame_id;
  out.log.frame_b = fb.frame_id;
  try {
    MatchConfig match_config = config.match;
    PairMatchResult matches;
    if (config.use_points) {
      matches.points = match_features(fa.ppoints, fa.width, fa.height,
                                      fb.ppoints, fb.width, fb.height,
                                      weights.point, match_config,
                                      &matches.point_info);
    }
    if (config.use_lines) {
      matches.lpoints = match_features(fa.lpoints, fa.width, fa.height,
                                       fb.lpoints, fb.width, fb.height,
                                       weights.line, match_config,
                                       &matches.lpoint_info);
      matches.lines =
          vote_line_matches(matches.lpoints, fa.lines, fb.lines,
                            match_config.line_majority,
                            match_config.line_min_support);
    }
    out.log.point_matches = static_cast<int>(matches.points.pairs.size());
    out.log.lpoint_matches = static_cast<int>(matches.lpoints.pairs.size());
    out.log.line_matches = static_cast<int>(matches.lines.size());

    std::vector<double> displacements;
    for (const auto& pr : matches.points.pairs)
      displacements.push_back(
          (fb.ppoints[pr.idx_b].pixel() - fa.ppoints[pr.idx_a].pixel())
              .norm());
    out.log.median_displacement_px = median(std::move(displacements));

    // Stationary snap: tiny point motion means the rig did not move.
    if (config.use_points && !matches.points.pairs.empty() &&
        out.log.median_displacement_px < config.stationary_median_px) {
      out.has_pose = true;
      out.relative = SE3Pose::identity();
      out.log.stationary_snap = true;
      return out;
    }

    const LiftedFrame lifted = lift_frame(fa, camera);
    std::vector<Correspondence2D3D> correspondences;
    if (config.use_points) {
      for (const auto& pr : matches.points.pairs) {
        if (!lifted.points[pr.idx_a]) continue;
        Correspondence2D3D c;
        c.kind = Correspondence2D3D::Kind::Point;
        c.point3d = *lifted.points[pr.idx_a];
        c.observed = fb.ppoints[pr.idx_b].pixel();
        correspondences.push_back(c);
      }
    }
    if (config.use_lines) {
      std::map<int, size_t> index_a, index_b;
      for (size_t i = 0; i < fa.lines.size(); ++i)
        index_a.emplace(fa.lines[i].id, i);
      for (size_t j = 0; j < fb.lines.size(); ++j)
        index_b.emplace(fb.lines[j].id, j);
      for (const LineMatch& lm : matches.lines) {
        const auto ia = index_a.find(lm.line_id_a);
        const auto ib = index_b.find(lm.line_id_b);
        if (ia == index_a.end() || ib == index_b.end()) continue;
        if (!lifted.lines[ia->second]) continue;
        Correspondence2D3D c;
        c.kind = Correspondence2D3D::Kind::Line;
        c.line_a3d = lifted.lines[ia->second]->first;
        c.line_b3d = lifted.lines[ia->second]->second;
        c.obs_line_a = fb.lines[ib->second].a;
        c.obs_line_b = fb.lines[ib->second].b;
        correspondences.push_back(c);
      }
    }
    out.log.correspondences = static_cast<int>(correspondences.size());

    const PoseEstimate estimate =
        ransac_pose(correspondences, camera, config.pose, pair_seed);
    out.has_pose = true;
    out.relative = estimate.pose;
    out.log.inliers = static_cast<int>(estimate.inliers.size());
    out.log.residual_rms = estimate.residual_rms;
  } catch (const Error& e) {
    out.has_pose = false;
    out.log.error = e.what();
  }
  return out;
}

}  // namespace

TrackResult track(std::span<const FrameFeatures> frames,
                  const CameraRig& camera, const MatcherWeights& weights,
                  const TrackConfig& config, std::span<const MaskImage> masks) {
  if (frames.size() < 2)
    throw EmptySequence("track: need at least 2 frames, got " +
                        std::to_string(frames.size()));
  if (!masks.empty() && masks.size() != frames.size())
    throw DimensionMismatch("track: " + std::to_string(masks.size()) +
                            " masks for " + std::to_string(frames.size()) +
                            " frames");

  std::vector<FrameFeatures> masked;
  if (!masks.empty()) {
    masked.reserve(frames.size());
    for (size_t k = 0; k < frames.size(); ++k)
      masked.push_back(apply_mask(frames[k], masks[k]));
  }
  const std::span<const FrameFeatures> input =
      masks.empty() ? frames : std::span<const FrameFeatures>(masked);

  TrackResult result;
  for (const FrameFeatures& f : input) {
    FrameLog log;
    log.frame_id = f.frame_id;
    log.point_detections = static_cast<int>(f.ppoints.size());
    log.line_detections = static_cast<int>(f.lines.size());
    log.lpoint_detections = static_cast<int>(f.lpoints.size());
    result.frame_logs.push_back(log);
  }

  const size_t n_pairs = input.size() - 1;
  std::vector<PairOutcome> outcomes(n_pairs);
  const int jobs = std::max(1, config.jobs);
  if (jobs == 1) {
    for (size_t k = 0; k < n_pairs; ++k)
      outcomes[k] = process_pair(input[k], input[k + 1], camera, weights,
                                 config, mix_seed(config.seed, k));
  } else {
    std::atomic<size_t> next{0};
    auto worker = [&]() {
      for (size_t k = next.fetch_add(1); k < n_pairs; k = next.fetch_add(1))
        outcomes[k] = process_pair(input[k], input[k + 1], camera, weights,
                                   config, mix_seed(config.seed, k));
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < std::min<int>(jobs, static_cast<int>(n_pairs)); ++t)
      pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  // Ordered composition with constant-velocity fallback.
  SE3Pose world_pose;  // camera-to-world of frame k
  SE3Pose previous_relative;
  result.trajectory.entries.push_back({input[0].frame_id, world_pose});
  for (size_t k = 0; k < n_pairs; ++k) {
    SE3Pose relative;
    if (outcomes[k].has_pose) {
      relative = outcomes[k].relative;
    } else {
      relative = previous_relative;
      outcomes[k].log.fallback = true;
    }
    world_pose = world_pose * relative.inverse();
    result.trajectory.entries.push_back({input[k + 1].frame_id, world_pose});
    previous_relative = relative;
    result.pair_logs.push_back(outcomes[k].log);
  }
  result.stats = match_stats(result.frame_logs, result.pair_logs);
  return result;
}

std::pair<Trajectory, Alignment> align_umeyama(const Trajectory& traj,
                                               const Trajectory& gt,
                                               bool with_scale) {
  const size_t n = traj.entries.size();
  if (n != gt.entries.size())
    throw LengthMismatch("align_umeyama: " + std::to_string(n) + " vs " +
                         std::to_string(gt.entries.size()));
  if (n < 3) throw LengthMismatch("align_umeyama: need at least 3 poses");
  for (size_t k = 0; k < n; ++k)
    if (traj.entries[k].frame_id != gt.entries[k].frame_id)
      throw LengthMismatch("align_umeyama: frame ids disagree at index " +
                           std::to_string(k));

  Vec3 mean_x = Vec3::Zero(), mean_y = Vec3::Zero();
  for (size_t k = 0; k < n; ++k) {
    mean_x += traj.entries[k].pose.translation();
    mean_y += gt.entries[k].pose.translation();
  }
  mean_x /= static_cast<double>(n);
  mean_y /= static_cast<double>(n);

  Mat3 sigma = Mat3::Zero();
  double var_x = 0.0;
  for (size_t k = 0; k < n; ++k) {
    const Vec3 dx = traj.entries[k].pose.translation() - mean_x;
    const Vec3 dy = gt.entries[k].pose.translation() - mean_y;
    sigma += dy * dx.transpose();
    var_x += dx.squaredNorm();
  }
  sigma /= static_cast<double>(n);
  var_x /= static_cast<double>(n);

  Eigen::JacobiSVD<Mat3> svd(sigma, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 d = svd.singularValues();
  if (d[0] < 1e-12 || d[1] < 1e-12 * d[0])
    throw DegenerateGeometry(
        "align_umeyama: positions are collinear or coincident");
  Mat3 s = Mat3::Identity();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0)
    s(2, 2) = -1.0;

  Alignment alignment;
  alignment.rotation = svd.matrixU() * s * svd.matrixV().transpose();
  if (with_scale) {
    if (var_x < 1e-15)
      throw DegenerateGeometry("align_umeyama: zero variance");
    alignment.scale = (d.asDiagonal().toDenseMatrix() * s).trace() / var_x;
  }
  alignment.translation =
      mean_y - alignment.scale * (alignment.rotation * mean_x);

  Trajectory aligned;
  for (const TrajectoryEntry& e : traj.entries) {
    TrajectoryEntry out;
    out.frame_id = e.frame_id;
    out.pose = SE3Pose(alignment.rotation * e.pose.rotation(),
                       alignment.apply(e.pose.translation()));
    aligned.entries.push_back(out);
  }
  return {aligned, alignment};
}

ApeResult ape(const Trajectory& traj, const Trajectory& gt) {
  const size_t n = traj.entries.size();
  if (n != gt.entries.size())
    throw LengthMismatch("ape: " + std::to_string(n) + " vs " +
                         std::to_string(gt.entries.size()));
  if (n == 0) throw LengthMismatch("ape: empty trajectories");
  ApeResult result;
  double sq = 0.0;
  for (size_t k = 0; k < n; ++k) {
    if (traj.entries[k].frame_id != gt.entries[k].frame_id)
      throw LengthMismatch("ape: frame ids disagree at index " +
                           std::to_string(k));
    const double e = (traj.entries[k].pose.translation() -
                      gt.entries[k].pose.translation())
                         .norm();
    result.series.emplace_back(traj.entries[k].frame_id, e);
    sq += e * e;
    result.mean += e;
    result.max = std::max(result.max, e);
  }
  result.rmse = std::sqrt(sq / static_cast<double>(n));
  result.mean /= static_cast<double>(n);
  return result;
}

void save_ape_csv(const ApeResult& result, const std::filesystem::path& path) {
  std::string out = "frame_id,ape_m\n";
  for (const auto& [frame_id, e] : result.series)
    out += std::to_string(frame_id) + ',' + detail::format_double(e) + '\n';
  detail::write_file_atomic(path, out);
}

std::string format_stats_table(const MatchStats& stats) {
  auto pct = [](double value, bool valid) -> std::string {
    if (!valid) return "n/a";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", value);
    return buf;
  };
  std::ostringstream os;
  os << "metric              detections    matches      %\n";
  char line[128];
  std::snprintf(line, sizeof(line), "%-18s %11ld %10ld %6s\n", "points",
                stats.point_detections, stats.point_matches,
                pct(stats.point_match_pct, stats.point_pct_valid).c_str());
  os << line;
  std::snprintf(line, sizeof(line), "%-18s %11ld %10ld %6s\n", "lines",
                stats.line_detections, stats.line_matches,
                pct(stats.line_match_pct, stats.line_pct_valid).c_str());
  os << line;
  std::snprintf(line, sizeof(line), "%-18s %11ld %10ld\n", "l-points",
                stats.lpoint_detections, stats.lpoint_matches);
  os << line;
  return os.str();
}

void save_stats_csv(const MatchStats& stats,
                    const std::filesystem::path& path) {
  std::string out =
      "kind,detections,matches,match_pct,pct_valid\n";
  out += "point," + std::to_string(stats.point_detections) + ',' +
         std::to_string(stats.point_matches) + ',' +
         detail::format_double(stats.point_match_pct) + ',' +
         (stats.point_pct_valid ? "1" : "0") + '\n';
  out += "line," + std::to_string(stats.line_detections) + ',' +
         std::to_string(stats.line_matches) + ',' +
         detail::format_double(stats.line_match_pct) + ',' +
         (stats.line_pct_valid ? "1" : "0") + '\n';
  out += "lpoint," + std::to_string(stats.lpoint_detections) + ',' +
         std::to_string(stats.lpoint_matches) + ",,\n";
  detail::write_file_atomic(path, out);
}

namespace {
constexpr const char* kLogHeader =
    "kind,frame_a,frame_b,point_detections,line_detections,lpoint_detections,"
    "point_matches,lpoint_matches,line_matches,correspondences,inliers,"
    "residual_rms,median_displacement_px,stationary_snap,fallback,error";

std::string sanitize(std::string text) {
  for (char& c : text)
    if (c == ',' || c == '\n') c = ';';
  return text;
}
}  // namespace

void save_pair_log_csv(std::span<const FrameLog> frames,
                       std::span<const PairLog> pairs,
                       const std::filesystem::path& path) {
  std::string out = std::string(kLogHeader) + '\n';
  for (const FrameLog& f : frames) {
    out += "frame," + std::to_string(f.frame_id) + ",0," +
           std::to_string(f.point_detections) + ',' +
           std::to_string(f.line_detections) + ',' +
           std::to_string(f.lpoint_detections) + ",0,0,0,0,0,0,0,0,0,\n";
  }
  for (const PairLog& p : pairs) {
    out += "pair," + std::to_string(p.frame_a) + ',' +
           std::to_string(p.frame_b) + ",0,0,0," +
           std::to_string(p.point_matches) + ',' +
           std::to_string(p.lpoint_matches) + ',' +
           std::to_string(p.line_matches) + ',' +
           std::to_string(p.correspondences) + ',' +
           std::to_string(p.inliers) + ',' +
           detail::format_double(p.residual_rms) + ',' +
           detail::format_double(p.median_displacement_px) + ',' +
           (p.stationary_snap ? "1" : "0") + ',' + (p.fallback ? "1" : "0") +
           ',' + sanitize(p.error) + '\n';
  }
  detail::write_file_atomic(path, out);
}

std::pair<std::vector<FrameLog>, std::vector<PairLog>> load_pair_log_csv(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kLogHeader)
    throw FormatError(path.string() + ": missing log CSV header");
  std::vector<FrameLog> frames;
  std::vector<PairLog> pairs;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    size_t start = 0;
    for (size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == ',') {
        cells.push_back(line.substr(start, i - start));
        start = i + 1;
      }
    }
    if (cells.size() != 16)
      throw FormatError(path.string() + ": bad log row '" + line + "'");
    if (cells[0] == "frame") {
      FrameLog f;
      f.frame_id = std::stoll(cells[1]);
      f.point_detections = std::stoi(cells[3]);
      f.line_detections = std::stoi(cells[4]);
      f.lpoint_detections = std::stoi(cells[5]);
      frames.push_back(f);
    } else if (cells[0] == "pair") {
      PairLog p;
      p.frame_a = std::stoll(cells[1]);
      p.frame_b = std::stoll(cells[2]);
      p.point_matches = std::stoi(cells[6]);
      p.lpoint_matches = std::stoi(cells[7]);
      p.line_matches = std::stoi(cells[8]);
      p.correspondences = std::stoi(cells[9]);
      p.inliers = std::stoi(cells[10]);
      p.residual_rms = std::stod(cells[11]);
      p.median_displacement_px = std::stod(cells[12]);
      p.stationary_snap = cells[13] == "1";
      p.fallback = cells[14] == "1";
      p.error = cells[15];
      pairs.push_back(p);
    } else {
      throw FormatError(path.string() + ": unknown log row kind '" + cells[0] +
                        "'");
    }
  }
  return {frames, pairs};
}

void write_svg_plot(const std::filesystem::path& path,
                    const std::string& title, const std::string& x_label,
                    const std::string& y_label,
                    std::span<const PlotSeries> series) {
  constexpr int kWidth = 760, kHeight = 520;
  constexpr int kMarginL = 70, kMarginR = 160, kMarginT = 50, kMarginB = 55;
  double x_min = 0, x_max = 1, y_min = 0, y_max = 1;
  bool first = true;
  for (const PlotSeries& s : series)
    for (const Vec2& p : s.points) {
      if (first) {
        x_min = x_max = p.x();
        y_min = y_max = p.y();
        first = false;
      }
      x_min = std::min(x_min, p.x());
      x_max = std::max(x_max, p.x());
      y_min = std::min(y_min, p.y());
      y_max = std::max(y_max, p.y());
    }
  if (x_max - x_min < 1e-12) x_max = x_min + 1.0;
  if (y_max - y_min < 1e-12) y_max = y_min + 1.0;
  const double sx = (kWidth - kMarginL - kMarginR) / (x_max - x_min);
  const double sy = (kHeight - kMarginT - kMarginB) / (y_max - y_min);
  auto px = [&](double x) { return kMarginL + (x - x_min) * sx; };
  auto py = [&](double y) { return kHeight - kMarginB - (y - y_min) * sy; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
      << "\" height=\"" << kHeight << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" "
         "font-size=\"16\" font-family=\"sans-serif\">"
      << title << "</text>\n";
  // axes
  svg << "<line x1=\"" << kMarginL << "\" y1=\"" << kHeight - kMarginB
      << "\" x2=\"" << kWidth - kMarginR << "\" y2=\"" << kHeight - kMarginB
      << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << kMarginL << "\" y1=\"" << kMarginT << "\" x2=\""
      << kMarginL << "\" y2=\"" << kHeight - kMarginB
      << "\" stroke=\"black\"/>\n";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3g", x_min);
  svg << "<text x=\"" << kMarginL << "\" y=\"" << kHeight - kMarginB + 18
      << "\" font-size=\"11\" font-family=\"sans-serif\">" << buf
      << "</text>\n";
  std::snprintf(buf, sizeof(buf), "%.3g", x_max);
  svg << "<text x=\"" << kWidth - kMarginR << "\" y=\""
      << kHeight - kMarginB + 18
      << "\" text-anchor=\"end\" font-size=\"11\" "
         "font-family=\"sans-serif\">"
      << buf << "</text>\n";
  std::snprintf(buf, sizeof(buf), "%.3g", y_min);
  svg << "<text x=\"" << kMarginL - 6 << "\" y=\"" << kHeight - kMarginB
      << "\" text-anchor=\"end\" font-size=\"11\" "
         "font-family=\"sans-serif\">"
      << buf << "</text>\n";
  std::snprintf(buf, sizeof(buf), "%.3g", y_max);
  svg << "<text x=\"" << kMarginL - 6 << "\" y=\"" << kMarginT + 4
      << "\" text-anchor=\"end\" font-size=\"11\" "
         "font-family=\"sans-serif\">"
      << buf << "</text>\n";
  svg << "<text x=\"" << (kWidth - kMarginR + kMarginL) / 2 << "\" y=\""
      << kHeight - 14
      << "\" text-anchor=\"middle\" font-size=\"12\" "
         "font-family=\"sans-serif\">"
      << x_label << "</text>\n";
  svg << "<text x=\"18\" y=\"" << kHeight / 2
      << "\" font-size=\"12\" font-family=\"sans-serif\" "
         "transform=\"rotate(-90 18 "
      << kHeight / 2 << ")\" text-anchor=\"middle\">" << y_label
      << "</text>\n";

  int legend_y = kMarginT + 10;
  for (const PlotSeries& s : series) {
    svg << "<polyline fill=\"none\" stroke=\"" << s.color
        << "\" stroke-width=\"1.5\" points=\"";
    for (const Vec2& p : s.points)
      svg << px(p.x()) << ',' << py(p.y()) << ' ';
    svg << "\"/>\n";
    svg << "<line x1=\"" << kWidth - kMarginR + 14 << "\" y1=\"" << legend_y
        << "\" x2=\"" << kWidth - kMarginR + 40 << "\" y2=\"" << legend_y
        << "\" stroke=\"" << s.color << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << kWidth - kMarginR + 46 << "\" y=\"" << legend_y + 4
        << "\" font-size=\"12\" font-family=\"sans-serif\">" << s.label
        << "</text>\n";
    legend_y += 20;
  }
  svg << "</svg>\n";
  detail::write_file_atomic(path, svg.str());
}

std::vector<Vec2> trajectory_xz(const Trajectory& traj) {
  std::vector<Vec2> out;
  for (const TrajectoryEntry& e : traj.entries)
    out.emplace_back(e.pose.translation().x(), e.pose.translation().z());
  return out;
}

}  // namespace plvo
