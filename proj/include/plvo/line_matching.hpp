#pragma once

#include <span>
#include <vector>

#include "plvo/match_types.hpp"
#include "plvo/types.hpp"

namespace plvo {

/// Uniformly spaced sample positions along a segment, endpoints included.
/// Count = max(min_samples, floor(length/spacing) + 1).
/// Throws DegenerateLine when the endpoints coincide.
std::vector<Vec2> sample_line_points(const Vec2& a, const Vec2& b,
                                     double spacing, int min_samples);

/// Majority vote over matched L-points. For each line in A the line of B
/// owning the plurality of its matched L-points is the candidate; the pair
/// is accepted iff support > majority * (matched L-points of the line),
/// support >= min_support, the plurality is untied, and B's reciprocal
/// plurality points back at A.
std::vector<LineMatch> vote_line_matches(const MatchSet& lpoint_matches,
                                         std::span<const LineSegment> lines_a,
                                         std::span<const LineSegment> lines_b,
                                         double majority = 0.5,
                                         int min_support = 2);

}  // namespace plvo
