#pragma once

#include <cstdint>
#include <vector>

namespace plvo {

/// One-to-one feature pairing between two images plus the leftovers.
/// Every feature index of either image appears exactly once, either in
/// `pairs` or in its unmatched list.
struct MatchSet {
  struct Pair {
    int idx_a;
    int idx_b;
    double score;
  };
  std::vector<Pair> pairs;
  std::vector<int> unmatched_a;
  std::vector<int> unmatched_b;
};

/// A line pairing accepted by the majority vote over matched L-points.
struct LineMatch {
  int line_id_a = 0;
  int line_id_b = 0;
  int support = 0;  // votes for line_id_b
  int total = 0;    // matched L-points on line a
  double score = 0.0;  // support / total
};

/// Ground-truth correspondence labels for a frame pair.
struct GroundTruth {
  std::vector<std::pair<int, int>> point_pairs;   // P-point index pairs
  std::vector<std::pair<int, int>> lpoint_pairs;  // L-point index pairs
  std::vector<std::pair<int, int>> line_pairs;    // line-ID pairs
  std::vector<int> unmatched_points_a, unmatched_points_b;
  std::vector<int> unmatched_lpoints_a, unmatched_lpoints_b;
};

}  // namespace plvo
