#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "plvo/encoder.hpp"
#include "plvo/match_types.hpp"
#include "plvo/synthetic.hpp"
#include "plvo/types.hpp"

namespace plvo {

/// S_ij = exp(h_a_i E h_b_j^T / temperature), logits clamped to +-30 before
/// exponentiation. Throws NonPositiveTemperature, DimensionMismatch.
MatX affinity(const MatX& ha, const MatX& hb, const MatX& metric,
              double temperature);

/// Appends a dustbin row and column filled with z to log(S).
MatX augment_dustbin(const MatX& s, double z);

/// a = [1,...,1, N], b = [1,...,1, M]: unit mass per feature, each dustbin
/// absorbs up to the other side's count.
std::pair<VecX, VecX> default_marginals(int m, int n);

struct SinkhornResult {
  MatX assignment;  // (M+1) x (N+1), nonnegative
  int iterations = 0;
  double violation = 0.0;  // max marginal violation at exit
  bool converged = false;
};

/// Log-domain Sinkhorn on raw log-scores. Alternates row and column
/// normalization against log a / log b until the max marginal violation
/// drops below tol or max_iters is reached (reported, not an error).
/// Throws MarginalSumMismatch when |sum(a) - sum(b)| > 1e-9.
SinkhornResult sinkhorn(const MatX& log_scores, const VecX& a, const VecX& b,
                        int max_iters = 100, double tol = 1e-6);

/// Mutual-max extraction over the non-dustbin block: (i, j) is a pair iff
/// P_ij is the strict maximum of row i and of column j and >= threshold.
MatchSet extract_matches(const MatX& assignment, double score_threshold);

/// -sum log P over ground-truth pairs and dustbin slots of unmatched
/// features; entries clamped below at 1e-12. The assignment must be the
/// dustbin-augmented (M+1) x (N+1) matrix.
double nll_loss(const MatX& assignment,
                std::span<const std::pair<int, int>> pairs,
                std::span<const int> unmatched_a,
                std::span<const int> unmatched_b);

/// Unrolled log-domain Sinkhorn on the tape; returns the log-assignment
/// node. Marginals must be strictly positive. tol == 0 runs exactly
/// `iters` iterations (useful for finite-difference checks).
ad::NodeId sinkhorn_log_on_tape(ad::Tape& tape, ad::NodeId aug_logits,
                                const VecX& a, const VecX& b, int iters,
                                double tol = 0.0);

struct MatchConfig {
  int sinkhorn_max_iters = 100;
  double sinkhorn_tol = 1e-6;
  double score_threshold = 0.2;
  double line_majority = 0.5;
  int line_min_support = 2;
  bool ablate_position_mlp = false;
};

struct SinkhornInfo {
  int iterations = 0;
  double violation = 0.0;
  bool converged = true;
};

/// Full matcher forward for one feature set pair (encode -> attend ->
/// matching descriptors -> affinity logits -> dustbin -> Sinkhorn ->
/// mutual-max extraction).
MatchSet match_features(std::span<const Keypoint> features_a, int width_a,
                        int height_a, std::span<const Keypoint> features_b,
                        int width_b, int height_b, const EncoderWeights& w,
                        const MatchConfig& config = {},
                        SinkhornInfo* info = nullptr);

struct PairMatchResult {
  MatchSet points;
  MatchSet lpoints;
  std::vector<LineMatch> lines;
  SinkhornInfo point_info;
  SinkhornInfo lpoint_info;
};

/// Matches P-points and L-points of two frames and aggregates line matches
/// by majority vote.
PairMatchResult match_pair(const FrameFeatures& a, const FrameFeatures& b,
                           const MatcherWeights& weights,
                           const MatchConfig& config = {});

struct OptimizerConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Owns the weights and Adam state; one step = forward + NLL + backward +
/// Adam on a labeled frame pair.
class MatcherTrainer {
 public:
  MatcherTrainer(MatcherWeights initial, OptimizerConfig optimizer = {},
                 int sinkhorn_iters = 30);

  /// Returns the summed NLL of the trained networks on this pair.
  double step(const FrameFeatures& a, const FrameFeatures& b,
              const GroundTruth& gt, bool train_points = true,
              bool train_lines = true);

  /// Loss only, no update.
  double evaluate(const FrameFeatures& a, const FrameFeatures& b,
                  const GroundTruth& gt, bool points = true,
                  bool lines = true) const;

  const MatcherWeights& weights() const { return weights_; }
  MatcherWeights& weights() { return weights_; }

 private:
  MatcherWeights weights_;
  OptimizerConfig optimizer_;
  int sinkhorn_iters_;
  ad::AdamState state_point_, state_line_;
};

struct TrainConfig {
  int steps = 2000;
  std::uint64_t seed = 7;
  int dim = 32;
  int layers = 4;
  std::vector<int> hidden = {32, 64, 32};
  OptimizerConfig optimizer;
  int sinkhorn_iters = 30;

  WorldConfig world;
  TrajectoryConfig trajectory{TrajectoryKind::Straight, 40, 0.35};
  DegradationProfile profile = builtin_profile("daytime");
  /// When set, the descriptor noise of each generated pair is drawn
  /// uniformly from [mixture_sigma_lo, mixture_sigma_hi] instead of the
  /// profile constant, for robustness across conditions.
  bool noise_mixture = false;
  double mixture_sigma_lo = 0.02;
  double mixture_sigma_hi = 0.30;
  int n_worlds = 6;
  /// Fraction of training worlds built in repetitive-structure mode.
  double repetitive_fraction = 0.0;
  bool train_points = true;
  bool train_lines = true;
  int min_features = 6;  // resample pairs with fewer covisible features
};

struct TrainResult {
  MatcherWeights weights;
  std::vector<double> loss_log;  // one entry per step
};

/// Synthetic-data training loop: render frame pairs, forward, NLL,
/// backward, Adam. Deterministic for a fixed config.
TrainResult train_matcher(const TrainConfig& config);

}  // namespace plvo
