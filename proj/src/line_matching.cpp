#include "plvo/line_matching.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace plvo {

std::vector<Vec2> sample_line_points(const Vec2& a, const Vec2& b,
                                     double spacing, int min_samples) {
  if (!(spacing > 0.0)) throw Error("sample_line_points: spacing <= 0");
  if (min_samples < 2) throw Error("sample_line_points: min_samples < 2");
  const double length = (b - a).norm();
  if (length < 1e-12)
    throw DegenerateLine("sample_line_points: endpoints coincide");
  const int count = std::max(
      min_samples, static_cast<int>(std::floor(length / spacing)) + 1);
  std::vector<Vec2> samples;
  samples.reserve(static_cast<size_t>(count));
  for (int k = 0; k < count; ++k) {
    const double t = static_cast<double>(k) / (count - 1);
    samples.push_back(a + t * (b - a));
  }
  return samples;
}

namespace {

struct Tally {
  // votes per candidate line id, ordered map for deterministic iteration
  std::map<int, int> votes;
  int total = 0;

  // Returns (line id, support) of an untied plurality, or (0, 0).
  std::pair<int, int> plurality() const {
    int best_id = 0, best = 0;
    bool tied = false;
    for (const auto& [id, count] : votes) {
      if (count > best) {
        best = count;
        best_id = id;
        tied = false;
      } else if (count == best && best > 0) {
        tied = true;
      }
    }
    if (tied || best == 0) return {0, 0};
    return {best_id, best};
  }
};

}  // namespace

std::vector<LineMatch> vote_line_matches(const MatchSet& lpoint_matches,
                                         std::span<const LineSegment> lines_a,
                                         std::span<const LineSegment> lines_b,
                                         double majority, int min_support) {
  // L-point index -> owning line id (first line listing it wins).
  auto owner_map = [](std::span<const LineSegment> lines) {
    std::map<int, int> owner;
    for (const LineSegment& line : lines)
      for (int idx : line.lpoint_indices) owner.emplace(idx, line.id);
    return owner;
  };
  const std::map<int, int> owner_a = owner_map(lines_a);
  const std::map<int, int> owner_b = owner_map(lines_b);

  std::map<int, Tally> tally_a;  // line id in A -> votes over B lines
  std::map<int, Tally> tally_b;  // line id in B -> votes over A lines
  for (const auto& pair : lpoint_matches.pairs) {
    const auto ita = owner_a.find(pair.idx_a);
    const auto itb = owner_b.find(pair.idx_b);
    if (ita != owner_a.end()) {
      Tally& t = tally_a[ita->second];
      t.total += 1;
      if (itb != owner_b.end()) t.votes[itb->second] += 1;
    }
    if (itb != owner_b.end()) {
      Tally& t = tally_b[itb->second];
      t.total += 1;
      if (ita != owner_a.end()) t.votes[ita->second] += 1;
    }
  }

  std::vector<LineMatch> matches;
  for (const auto& [id_a, tally] : tally_a) {
    const auto [id_b, support] = tally.plurality();
    if (id_b == 0) continue;
    if (support < min_support) continue;
    if (!(support > majority * tally.total)) continue;
    const auto itb = tally_b.find(id_b);
    if (itb == tally_b.end()) continue;
    if (itb->second.plurality().first != id_a) continue;
    LineMatch lm;
    lm.line_id_a = id_a;
    lm.line_id_b = id_b;
    lm.support = support;
    lm.total = tally.total;
    lm.score = static_cast<double>(support) / tally.total;
    matches.push_back(lm);
  }
  return matches;
}

}  // namespace plvo
