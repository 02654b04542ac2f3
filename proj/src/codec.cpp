#include "plvo/codec.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace plvo {

namespace detail {

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

void write_file_atomic(const std::filesystem::path& path,
                       const std::string& contents) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(contents.data(),
              static_cast<std::streamsize>(contents.size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

}  // namespace detail

namespace {

using nlohmann::json;

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Whitespace tokenizer over one line, with line-number context for errors.
class LineTokens {
 public:
  LineTokens(const std::string& line, int line_no, std::string section)
      : s_(line), pos_(0), line_no_(line_no), section_(std::move(section)) {}

  bool done() {
    skip_ws();
    return pos_ >= s_.size();
  }

  std::string word() {
    skip_ws();
    size_t start = pos_;
    while (pos_ < s_.size() && !std::isspace(static_cast<unsigned char>(s_[pos_])))
      ++pos_;
    if (start == pos_) fail("unexpected end of record");
    return s_.substr(start, pos_ - start);
  }

  double number() {
    const std::string w = word();
    char* end = nullptr;
    const double x = std::strtod(w.c_str(), &end);
    if (end != w.c_str() + w.size()) fail("bad number '" + w + "'");
    return x;
  }

  std::int64_t integer() {
    const std::string w = word();
    char* end = nullptr;
    const long long x = std::strtoll(w.c_str(), &end, 10);
    if (end != w.c_str() + w.size()) fail("bad integer '" + w + "'");
    return x;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError("line " + std::to_string(line_no_) + " (" + section_ +
                      "): " + what);
  }

 private:
  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_])))
      ++pos_;
  }
  const std::string& s_;
  size_t pos_;
  int line_no_;
  std::string section_;
};

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  size_t start = 0;
  while (start <= text.size()) {
    size_t nl = text.find('\n', start);
    if (nl == std::string::npos) {
      if (start < text.size()) lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

void append_keypoint(std::string& out, const Keypoint& kp) {
  out += ' ';
  out += detail::format_double(kp.u());
  out += ' ';
  out += detail::format_double(kp.v());
  out += ' ';
  out += detail::format_double(kp.confidence());
  for (int i = 0; i < kp.dim(); ++i) {
    out += ' ';
    out += detail::format_double(kp.descriptor()[i]);
  }
}

Keypoint parse_keypoint(LineTokens& t, int dim) {
  const double u = t.number();
  const double v = t.number();
  const double c = t.number();
  VecX d(dim);
  for (int i = 0; i < dim; ++i) d[i] = t.number();
  return Keypoint(u, v, c, std::move(d));
}

}  // namespace

void save_features(const FrameFeatures& frame,
                   const std::filesystem::path& path) {
  frame.validate();
  int dim = 0;
  if (!frame.ppoints.empty()) dim = frame.ppoints.front().dim();
  else if (!frame.lpoints.empty()) dim = frame.lpoints.front().dim();
  for (const auto& kp : frame.ppoints)
    if (kp.dim() != dim) throw Error("save_features: mixed descriptor dims");
  for (const auto& kp : frame.lpoints)
    if (kp.dim() != dim) throw Error("save_features: mixed descriptor dims");

  json header;
  header["format"] = kFeatureFormatVersion;
  header["frame_id"] = frame.frame_id;
  header["width"] = frame.width;
  header["height"] = frame.height;
  header["descriptor_dim"] = dim;
  header["ppoints"] = frame.ppoints.size();
  header["lpoints"] = frame.lpoints.size();
  header["lines"] = frame.lines.size();
  header["depth_kind"] =
      frame.depth_kind == DepthKind::Depth ? "depth" : "disparity";
  header["has_ppoint_depth"] = frame.ppoint_depth.has_value();
  header["has_line_depth"] = frame.line_endpoint_depth.has_value();
  header["has_gt_points"] = frame.gt_point_ids.has_value();
  header["has_gt_lpoints"] = frame.gt_lpoint_ids.has_value();
  header["has_gt_lines"] = frame.gt_line_ids.has_value();

  std::string out = header.dump();
  out += '\n';
  for (size_t i = 0; i < frame.ppoints.size(); ++i) {
    out += 'P';
    append_keypoint(out, frame.ppoints[i]);
    if (frame.ppoint_depth)
      out += ' ' + detail::format_double((*frame.ppoint_depth)[i]);
    if (frame.gt_point_ids)
      out += ' ' + std::to_string((*frame.gt_point_ids)[i]);
    out += '\n';
  }
  for (size_t i = 0; i < frame.lpoints.size(); ++i) {
    out += 'Q';
    append_keypoint(out, frame.lpoints[i]);
    if (frame.gt_lpoint_ids)
      out += ' ' + std::to_string((*frame.gt_lpoint_ids)[i]);
    out += '\n';
  }
  for (size_t i = 0; i < frame.lines.size(); ++i) {
    const LineSegment& line = frame.lines[i];
    out += "L " + std::to_string(line.id);
    out += ' ' + detail::format_double(line.a.x());
    out += ' ' + detail::format_double(line.a.y());
    out += ' ' + detail::format_double(line.b.x());
    out += ' ' + detail::format_double(line.b.y());
    out += ' ' + std::to_string(line.lpoint_indices.size());
    for (int idx : line.lpoint_indices) out += ' ' + std::to_string(idx);
    if (frame.line_endpoint_depth) {
      out += ' ' + detail::format_double((*frame.line_endpoint_depth)[i].first);
      out += ' ' + detail::format_double((*frame.line_endpoint_depth)[i].second);
    }
    if (frame.gt_line_ids) out += ' ' + std::to_string((*frame.gt_line_ids)[i]);
    out += '\n';
  }
  detail::write_file_atomic(path, out);
}

FrameFeatures load_features(const std::filesystem::path& path) {
  const std::vector<std::string> lines = split_lines(read_file(path));
  if (lines.empty()) throw FormatError(path.string() + ": missing header");
  json header;
  try {
    header = json::parse(lines[0]);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": bad header: " + e.what());
  }
  const std::string format = header.value("format", "");
  if (format != kFeatureFormatVersion)
    throw VersionMismatch(path.string() + ": format '" + format +
                          "', expected '" + kFeatureFormatVersion + "'");

  FrameFeatures frame;
  frame.frame_id = header.at("frame_id").get<std::int64_t>();
  frame.width = header.at("width").get<int>();
  frame.height = header.at("height").get<int>();
  const int dim = header.at("descriptor_dim").get<int>();
  const size_t n_p = header.at("ppoints").get<size_t>();
  const size_t n_q = header.at("lpoints").get<size_t>();
  const size_t n_l = header.at("lines").get<size_t>();
  frame.depth_kind = header.value("depth_kind", "depth") == "disparity"
                         ? DepthKind::Disparity
                         : DepthKind::Depth;
  const bool has_pd = header.value("has_ppoint_depth", false);
  const bool has_ld = header.value("has_line_depth", false);
  const bool has_gp = header.value("has_gt_points", false);
  const bool has_gq = header.value("has_gt_lpoints", false);
  const bool has_gl = header.value("has_gt_lines", false);
  if (has_pd) frame.ppoint_depth.emplace();
  if (has_ld) frame.line_endpoint_depth.emplace();
  if (has_gp) frame.gt_point_ids.emplace();
  if (has_gq) frame.gt_lpoint_ids.emplace();
  if (has_gl) frame.gt_line_ids.emplace();

  size_t row = 1;
  auto next_line = [&](const char* section) -> const std::string& {
    while (row < lines.size() && lines[row].empty()) ++row;
    if (row >= lines.size())
      throw FormatError(path.string() + ": truncated file, missing " +
                        std::string(section) + " record");
    return lines[row++];
  };

  for (size_t i = 0; i < n_p; ++i) {
    LineTokens t(next_line("ppoints"), static_cast<int>(row), "ppoints");
    if (t.word() != "P") t.fail("expected 'P' record");
    frame.ppoints.push_back(parse_keypoint(t, dim));
    if (has_pd) frame.ppoint_depth->push_back(t.number());
    if (has_gp) frame.gt_point_ids->push_back(t.integer());
    if (!t.done()) t.fail("trailing data");
  }
  for (size_t i = 0; i < n_q; ++i) {
    LineTokens t(next_line("lpoints"), static_cast<int>(row), "lpoints");
    if (t.word() != "Q") t.fail("expected 'Q' record");
    frame.lpoints.push_back(parse_keypoint(t, dim));
    if (has_gq) frame.gt_lpoint_ids->push_back(t.integer());
    if (!t.done()) t.fail("trailing data");
  }
  for (size_t i = 0; i < n_l; ++i) {
    LineTokens t(next_line("lines"), static_cast<int>(row), "lines");
    if (t.word() != "L") t.fail("expected 'L' record");
    const int id = static_cast<int>(t.integer());
    const double ax = t.number(), ay = t.number();
    const double bx = t.number(), by = t.number();
    const int k = static_cast<int>(t.integer());
    if (k < 0) t.fail("negative L-point count");
    std::vector<int> idx(static_cast<size_t>(k));
    for (int j = 0; j < k; ++j) idx[j] = static_cast<int>(t.integer());
    frame.lines.emplace_back(id, Vec2(ax, ay), Vec2(bx, by), std::move(idx));
    if (has_ld) {
      const double da = t.number();
      const double db = t.number();
      frame.line_endpoint_depth->emplace_back(da, db);
    }
    if (has_gl) frame.gt_line_ids->push_back(t.integer());
    if (!t.done()) t.fail("trailing data");
  }
  frame.validate();
  return frame;
}

void save_mask(const MaskImage& mask, const std::filesystem::path& path) {
  if (mask.width <= 0 || mask.height <= 0 ||
      mask.keep.size() != static_cast<size_t>(mask.width) * mask.height)
    throw Error("save_mask: inconsistent mask dimensions");
  std::string out = "P5\n" + std::to_string(mask.width) + " " +
                    std::to_string(mask.height) + "\n255\n";
  out.reserve(out.size() + mask.keep.size());
  for (std::uint8_t k : mask.keep)
    out.push_back(static_cast<char>(k ? 255 : 0));
  detail::write_file_atomic(path, out);
}

MaskImage load_mask(const std::filesystem::path& path) {
  const std::string data = read_file(path);
  // P5 header: magic, width, height, maxval, single whitespace, then raster.
  size_t pos = 0;
  auto token = [&]() -> std::string {
    while (pos < data.size() &&
           std::isspace(static_cast<unsigned char>(data[pos]))) {
      ++pos;
    }
    if (pos < data.size() && data[pos] == '#') {  // comment line
      while (pos < data.size() && data[pos] != '\n') ++pos;
      while (pos < data.size() &&
             std::isspace(static_cast<unsigned char>(data[pos])))
        ++pos;
    }
    size_t start = pos;
    while (pos < data.size() &&
           !std::isspace(static_cast<unsigned char>(data[pos])))
      ++pos;
    if (start == pos) throw FormatError(path.string() + ": truncated PGM header");
    return data.substr(start, pos - start);
  };
  if (token() != "P5")
    throw FormatError(path.string() + ": not a binary PGM (P5)");
  MaskImage mask;
  mask.width = std::stoi(token());
  mask.height = std::stoi(token());
  const int maxval = std::stoi(token());
  if (mask.width <= 0 || mask.height <= 0 || maxval <= 0 || maxval > 255)
    throw FormatError(path.string() + ": bad PGM dimensions");
  ++pos;  // single whitespace after maxval
  const size_t need = static_cast<size_t>(mask.width) * mask.height;
  if (data.size() - pos < need)
    throw FormatError(path.string() + ": truncated PGM raster");
  mask.keep.resize(need);
  for (size_t i = 0; i < need; ++i)
    mask.keep[i] = data[pos + i] != 0 ? 1 : 0;
  return mask;
}

namespace {

bool mask_keeps(const MaskImage& mask, double u, double v) {
  int iu = static_cast<int>(std::floor(u));
  int iv = static_cast<int>(std::floor(v));
  iu = std::min(std::max(iu, 0), mask.width - 1);
  iv = std::min(std::max(iv, 0), mask.height - 1);
  return mask.at(iu, iv);
}

}  // namespace

FrameFeatures apply_mask(const FrameFeatures& frame, const MaskImage& mask) {
  if (mask.width != frame.width || mask.height != frame.height)
    throw DimensionMismatch("apply_mask: mask " + std::to_string(mask.width) +
                            "x" + std::to_string(mask.height) + " vs frame " +
                            std::to_string(frame.width) + "x" +
                            std::to_string(frame.height));
  FrameFeatures out;
  out.frame_id = frame.frame_id;
  out.width = frame.width;
  out.height = frame.height;
  out.depth_kind = frame.depth_kind;
  if (frame.ppoint_depth) out.ppoint_depth.emplace();
  if (frame.line_endpoint_depth) out.line_endpoint_depth.emplace();
  if (frame.gt_point_ids) out.gt_point_ids.emplace();
  if (frame.gt_lpoint_ids) out.gt_lpoint_ids.emplace();
  if (frame.gt_line_ids) out.gt_line_ids.emplace();

  for (size_t i = 0; i < frame.ppoints.size(); ++i) {
    const Keypoint& kp = frame.ppoints[i];
    if (!mask_keeps(mask, kp.u(), kp.v())) continue;
    out.ppoints.push_back(kp);
    if (frame.ppoint_depth) out.ppoint_depth->push_back((*frame.ppoint_depth)[i]);
    if (frame.gt_point_ids)
      out.gt_point_ids->push_back((*frame.gt_point_ids)[i]);
  }
  std::vector<int> lpoint_remap(frame.lpoints.size(), -1);
  for (size_t i = 0; i < frame.lpoints.size(); ++i) {
    const Keypoint& kp = frame.lpoints[i];
    if (!mask_keeps(mask, kp.u(), kp.v())) continue;
    lpoint_remap[i] = static_cast<int>(out.lpoints.size());
    out.lpoints.push_back(kp);
    if (frame.gt_lpoint_ids)
      out.gt_lpoint_ids->push_back((*frame.gt_lpoint_ids)[i]);
  }
  for (size_t i = 0; i < frame.lines.size(); ++i) {
    const LineSegment& line = frame.lines[i];
    std::vector<int> surviving;
    for (int idx : line.lpoint_indices)
      if (lpoint_remap[idx] >= 0) surviving.push_back(lpoint_remap[idx]);
    if (surviving.size() < 2) continue;
    out.lines.emplace_back(line.id, line.a, line.b, std::move(surviving));
    if (frame.line_endpoint_depth)
      out.line_endpoint_depth->push_back((*frame.line_endpoint_depth)[i]);
    if (frame.gt_line_ids) out.gt_line_ids->push_back((*frame.gt_line_ids)[i]);
  }
  return out;
}

void save_trajectory_csv(std::span<const TrajectoryEntry> entries,
                         const std::filesystem::path& path) {
  std::string out = "frame_id,tx,ty,tz,qx,qy,qz,qw\n";
  for (const TrajectoryEntry& e : entries) {
    const Eigen::Quaterniond q = e.pose.quaternion();
    const Vec3& t = e.pose.translation();
    out += std::to_string(e.frame_id);
    for (double x : {t.x(), t.y(), t.z(), q.x(), q.y(), q.z(), q.w()}) {
      out += ',';
      out += detail::format_double(x);
    }
    out += '\n';
  }
  detail::write_file_atomic(path, out);
}

std::vector<TrajectoryEntry> load_trajectory_csv(
    const std::filesystem::path& path) {
  const std::vector<std::string> lines = split_lines(read_file(path));
  if (lines.empty() || lines[0] != "frame_id,tx,ty,tz,qx,qy,qz,qw")
    throw FormatError(path.string() + ": missing trajectory CSV header");
  std::vector<TrajectoryEntry> entries;
  for (size_t row = 1; row < lines.size(); ++row) {
    if (lines[row].empty()) continue;
    std::string line = lines[row];
    for (char& c : line)
      if (c == ',') c = ' ';
    LineTokens t(line, static_cast<int>(row + 1), "trajectory");
    TrajectoryEntry e;
    e.frame_id = t.integer();
    const double tx = t.number(), ty = t.number(), tz = t.number();
    const double qx = t.number(), qy = t.number(), qz = t.number();
    const double qw = t.number();
    e.pose = SE3Pose::from_quaternion(Eigen::Quaterniond(qw, qx, qy, qz),
                                      Vec3(tx, ty, tz));
    entries.push_back(std::move(e));
  }
  return entries;
}

void save_match_csv(std::span<const MatchRecord> records,
                    const std::filesystem::path& path) {
  std::string out = "frame_a,frame_b,kind,idx_a,idx_b,score\n";
  for (const MatchRecord& r : records) {
    out += std::to_string(r.frame_a) + ',' + std::to_string(r.frame_b) + ',' +
           r.kind + ',' + std::to_string(r.idx_a) + ',' +
           std::to_string(r.idx_b) + ',' + detail::format_double(r.score);
    out += '\n';
  }
  detail::write_file_atomic(path, out);
}

std::vector<MatchRecord> load_match_csv(const std::filesystem::path& path) {
  const std::vector<std::string> lines = split_lines(read_file(path));
  if (lines.empty() || lines[0] != "frame_a,frame_b,kind,idx_a,idx_b,score")
    throw FormatError(path.string() + ": missing match CSV header");
  std::vector<MatchRecord> records;
  for (size_t row = 1; row < lines.size(); ++row) {
    if (lines[row].empty()) continue;
    std::string line = lines[row];
    for (char& c : line)
      if (c == ',') c = ' ';
    LineTokens t(line, static_cast<int>(row + 1), "matches");
    MatchRecord r;
    r.frame_a = t.integer();
    r.frame_b = t.integer();
    r.kind = t.word();
    if (r.kind != "point" && r.kind != "line")
      t.fail("kind must be 'point' or 'line'");
    r.idx_a = static_cast<int>(t.integer());
    r.idx_b = static_cast<int>(t.integer());
    r.score = t.number();
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<MatchRecord> to_match_records(std::int64_t frame_a,
                                          std::int64_t frame_b,
                                          const MatchSet& points,
                                          std::span<const LineMatch> lines) {
  std::vector<MatchRecord> records;
  records.reserve(points.pairs.size() + lines.size());
  for (const auto& p : points.pairs)
    records.push_back({frame_a, frame_b, "point", p.idx_a, p.idx_b, p.score});
  for (const LineMatch& lm : lines)
    records.push_back(
        {frame_a, frame_b, "line", lm.line_id_a, lm.line_id_b, lm.score});
  return records;
}

}  // namespace plvo
