#include "plvo/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "plvo/line_matching.hpp"
#include "plvo/tensor_eigen.hpp"

namespace plvo {

namespace {
constexpr double kLogitClamp = 30.0;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}  // namespace

MatX affinity(const MatX& ha, const MatX& hb, const MatX& metric,
              double temperature) {
  if (!(temperature > 0.0))
    throw NonPositiveTemperature("affinity: temperature " +
                                 std::to_string(temperature));
  if (ha.cols() != metric.rows() || metric.cols() != hb.cols())
    throw DimensionMismatch("affinity: " + std::to_string(ha.cols()) + " / " +
                            std::to_string(metric.rows()) + "x" +
                            std::to_string(metric.cols()) + " / " +
                            std::to_string(hb.cols()));
  MatX logits = (ha * metric * hb.transpose()) / temperature;
  return logits.unaryExpr([](double x) {
    return std::exp(std::clamp(x, -kLogitClamp, kLogitClamp));
  });
}

MatX augment_dustbin(const MatX& s, double z) {
  MatX out(s.rows() + 1, s.cols() + 1);
  for (Eigen::Index i = 0; i < s.rows(); ++i)
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
      if (!(s(i, j) > 0.0))
        throw Error("augment_dustbin: non-positive affinity entry");
      out(i, j) = std::log(s(i, j));
    }
  out.row(s.rows()).setConstant(z);
  out.col(s.cols()).setConstant(z);
  return out;
}

std::pair<VecX, VecX> default_marginals(int m, int n) {
  if (m < 0 || n < 0) throw Error("default_marginals: negative size");
  VecX a = VecX::Ones(m + 1);
  VecX b = VecX::Ones(n + 1);
  a[m] = static_cast<double>(n);
  b[n] = static_cast<double>(m);
  return {a, b};
}

SinkhornResult sinkhorn(const MatX& log_scores, const VecX& a, const VecX& b,
                        int max_iters, double tol) {
  const int m = static_cast<int>(log_scores.rows());
  const int n = static_cast<int>(log_scores.cols());
  if (a.size() != m || b.size() != n)
    throw DimensionMismatch("sinkhorn: marginals " + std::to_string(a.size()) +
                            "/" + std::to_string(b.size()) + " vs scores " +
                            std::to_string(m) + "x" + std::to_string(n));
  for (double x : a)
    if (x < 0.0 || !std::isfinite(x)) throw Error("sinkhorn: bad marginal a");
  for (double x : b)
    if (x < 0.0 || !std::isfinite(x)) throw Error("sinkhorn: bad marginal b");
  const double sum_a = ad::detail::perm_sum(a.data(), m);
  const double sum_b = ad::detail::perm_sum(b.data(), n);
  if (std::abs(sum_a - sum_b) > 1e-9)
    throw MarginalSumMismatch("sinkhorn: sum(a)=" + std::to_string(sum_a) +
                              " vs sum(b)=" + std::to_string(sum_b));
  if (!(tol > 0.0)) throw Error("sinkhorn: tol must be positive");

  VecX log_a(m), log_b(n);
  for (int i = 0; i < m; ++i) log_a[i] = a[i] > 0.0 ? std::log(a[i]) : kNegInf;
  for (int j = 0; j < n; ++j) log_b[j] = b[j] > 0.0 ? std::log(b[j]) : kNegInf;

  VecX u = VecX::Zero(m), v = VecX::Zero(n);
  // Row-major copy so logsumexp can walk rows contiguously.
  std::vector<double> c(static_cast<size_t>(m) * n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) c[static_cast<size_t>(i) * n + j] = log_scores(i, j);

  SinkhornResult result;
  result.assignment = MatX::Zero(m, n);
  std::vector<double> shifted(std::max(m, n));
  auto materialize = [&]() {
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        const double e = c[static_cast<size_t>(i) * n + j] + u[i] + v[j];
        result.assignment(i, j) = std::isfinite(e) ? std::exp(e)
                                  : (e > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
      }
  };
  auto violation = [&]() {
    double worst = 0.0;
    std::vector<double>& row = shifted;
    for (int i = 0; i < m; ++i) {
      row.resize(n);
      for (int j = 0; j < n; ++j) row[j] = result.assignment(i, j);
      worst = std::max(worst, std::abs(ad::detail::perm_sum(row.data(), n) - a[i]));
    }
    for (int j = 0; j < n; ++j) {
      row.resize(m);
      for (int i = 0; i < m; ++i) row[i] = result.assignment(i, j);
      worst = std::max(worst, std::abs(ad::detail::perm_sum(row.data(), m) - b[j]));
    }
    return worst;
  };

  std::vector<double> tmp(std::max(m, n));
  for (int it = 1; it <= max_iters; ++it) {
    for (int i = 0; i < m; ++i) {
      tmp.resize(n);
      for (int j = 0; j < n; ++j) tmp[j] = c[static_cast<size_t>(i) * n + j] + v[j];
      const double lse = ad::detail::logsumexp(tmp.data(), n, 1);
      u[i] = std::isfinite(log_a[i]) ? log_a[i] - lse : kNegInf;
    }
    for (int j = 0; j < n; ++j) {
      tmp.resize(m);
      for (int i = 0; i < m; ++i) tmp[i] = c[static_cast<size_t>(i) * n + j] + u[i];
      const double lse = ad::detail::logsumexp(tmp.data(), m, 1);
      v[j] = std::isfinite(log_b[j]) ? log_b[j] - lse : kNegInf;
    }
    materialize();
    result.iterations = it;
    result.violation = violation();
    if (result.violation < tol) {
      result.converged = true;
      break;
    }
  }
  if (max_iters <= 0) materialize();
  return result;
}

MatchSet extract_matches(const MatX& assignment, double score_threshold) {
  const int m = static_cast<int>(assignment.rows()) - 1;
  const int n = static_cast<int>(assignment.cols()) - 1;
  if (m < 0 || n < 0) throw DimensionMismatch("extract_matches: empty matrix");
  MatchSet out;
  // Strict row/column argmaxes over the non-dustbin block; ties yield none.
  std::vector<int> row_best(std::max(m, 0), -1), col_best(std::max(n, 0), -1);
  for (int i = 0; i < m; ++i) {
    int best = -1;
    bool tie = false;
    for (int j = 0; j < n; ++j) {
      if (best < 0 || assignment(i, j) > assignment(i, best)) {
        best = j;
        tie = false;
      } else if (assignment(i, j) == assignment(i, best)) {
        tie = true;
      }
    }
    row_best[i] = (best >= 0 && !tie) ? best : -1;
  }
  for (int j = 0; j < n; ++j) {
    int best = -1;
    bool tie = false;
    for (int i = 0; i < m; ++i) {
      if (best < 0 || assignment(i, j) > assignment(best, j)) {
        best = i;
        tie = false;
      } else if (assignment(i, j) == assignment(best, j)) {
        tie = true;
      }
    }
    col_best[j] = (best >= 0 && !tie) ? best : -1;
  }
  std::vector<bool> matched_a(std::max(m, 0), false), matched_b(std::max(n, 0), false);
  for (int i = 0; i < m; ++i) {
    const int j = row_best[i];
    if (j < 0 || col_best[j] != i) continue;
    if (assignment(i, j) < score_threshold) continue;
    out.pairs.push_back({i, j, assignment(i, j)});
    matched_a[i] = true;
    matched_b[j] = true;
  }
  for (int i = 0; i < m; ++i)
    if (!matched_a[i]) out.unmatched_a.push_back(i);
  for (int j = 0; j < n; ++j)
    if (!matched_b[j]) out.unmatched_b.push_back(j);
  return out;
}

double nll_loss(const MatX& assignment,
                std::span<const std::pair<int, int>> pairs,
                std::span<const int> unmatched_a,
                std::span<const int> unmatched_b) {
  const int rows = static_cast<int>(assignment.rows());
  const int cols = static_cast<int>(assignment.cols());
  const int m = rows - 1, n = cols - 1;
  auto entry = [&](int i, int j) {
    if (i < 0 || i >= rows || j < 0 || j >= cols)
      throw IndexOutOfRange("nll_loss: (" + std::to_string(i) + "," +
                            std::to_string(j) + ") of " + std::to_string(rows) +
                            "x" + std::to_string(cols));
    return std::log(std::max(assignment(i, j), 1e-12));
  };
  std::vector<double> terms;
  for (const auto& [i, j] : pairs) terms.push_back(entry(i, j));
  for (int i : unmatched_a) terms.push_back(entry(i, n));
  for (int j : unmatched_b) terms.push_back(entry(m, j));
  return -ad::detail::perm_sum(terms.data(), static_cast<int>(terms.size()));
}

ad::NodeId sinkhorn_log_on_tape(ad::Tape& tape, ad::NodeId aug_logits,
                                const VecX& a, const VecX& b, int iters,
                                double tol) {
  // Copy: node storage reallocates as the loop records operations.
  const ad::Tensor c = tape.value(aug_logits);
  const int m = c.rows, n = c.cols;
  if (a.size() != m || b.size() != n)
    throw DimensionMismatch("sinkhorn_log_on_tape: marginal sizes");
  ad::Tensor log_a(m, 1), log_b(1, n);
  for (int i = 0; i < m; ++i) {
    if (!(a[i] > 0.0))
      throw Error("sinkhorn_log_on_tape: marginals must be positive");
    log_a.at(i, 0) = std::log(a[i]);
  }
  for (int j = 0; j < n; ++j) {
    if (!(b[j] > 0.0))
      throw Error("sinkhorn_log_on_tape: marginals must be positive");
    log_b.at(0, j) = std::log(b[j]);
  }
  const ad::NodeId la = tape.constant(log_a);
  const ad::NodeId lb = tape.constant(log_b);
  ad::NodeId u = tape.constant(ad::Tensor::zeros(m, 1));
  ad::NodeId v = tape.constant(ad::Tensor::zeros(1, n));
  auto current_violation = [&]() {
    const ad::Tensor& uv = tape.value(u);
    const ad::Tensor& vv = tape.value(v);
    double worst = 0.0;
    std::vector<double> buf(std::max(m, n));
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j)
        buf[j] = std::exp(c.at(i, j) + uv.at(i, 0) + vv.at(0, j));
      worst = std::max(worst,
                       std::abs(ad::detail::perm_sum(buf.data(), n) - a[i]));
    }
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < m; ++i)
        buf[i] = std::exp(c.at(i, j) + uv.at(i, 0) + vv.at(0, j));
      worst = std::max(worst,
                       std::abs(ad::detail::perm_sum(buf.data(), m) - b[j]));
    }
    return worst;
  };
  for (int it = 0; it < iters; ++it) {
    u = tape.sub(la, tape.logsumexp_rows(tape.add_rowwise(aug_logits, v)));
    v = tape.sub(lb, tape.logsumexp_cols(tape.add_colwise(aug_logits, u)));
    // The violation check costs a full pass; probe it sparsely.
    if (tol > 0.0 && (it % 5 == 4 || it + 1 == iters) &&
        current_violation() < tol)
      break;
  }
  return tape.add_rowwise(tape.add_colwise(aug_logits, u), v);
}

namespace {

struct ForwardNodes {
  ad::NodeId aug_logits = -1;
  int count_a = 0;
  int count_b = 0;
};

ForwardNodes matcher_forward(ad::Tape& tape, const EncoderLeaves& leaves,
                             std::span<const Keypoint> fa, int wa, int ha,
                             std::span<const Keypoint> fb, int wb, int hb,
                             bool ablate_positions) {
  const FeatureArrays arrays_a = make_feature_arrays(fa, wa, ha);
  const FeatureArrays arrays_b = make_feature_arrays(fb, wb, hb);
  const ad::NodeId ya = encode_on_tape(tape, leaves, arrays_a, ablate_positions);
  const ad::NodeId yb = encode_on_tape(tape, leaves, arrays_b, ablate_positions);
  const auto [xa, xb] = attend_on_tape(tape, leaves, ya, yb);
  const ad::NodeId hma = matching_descriptors_on_tape(tape, leaves, xa);
  const ad::NodeId hmb = matching_descriptors_on_tape(tape, leaves, xb);
  const ad::NodeId logits = affinity_logits_on_tape(tape, leaves, hma, hmb);
  ForwardNodes out;
  out.aug_logits = augment_dustbin_on_tape(tape, leaves, logits);
  out.count_a = arrays_a.count;
  out.count_b = arrays_b.count;
  return out;
}

MatchSet all_unmatched(int na, int nb) {
  MatchSet out;
  for (int i = 0; i < na; ++i) out.unmatched_a.push_back(i);
  for (int j = 0; j < nb; ++j) out.unmatched_b.push_back(j);
  return out;
}

}  // namespace

MatchSet match_features(std::span<const Keypoint> features_a, int width_a,
                        int height_a, std::span<const Keypoint> features_b,
                        int width_b, int height_b, const EncoderWeights& w,
                        const MatchConfig& config, SinkhornInfo* info) {
  if (info) *info = SinkhornInfo{};
  if (features_a.empty() || features_b.empty())
    return all_unmatched(static_cast<int>(features_a.size()),
                         static_cast<int>(features_b.size()));
  ad::Tape tape;
  const EncoderLeaves leaves = weights_on_tape(tape, w, false);
  const ForwardNodes fwd =
      matcher_forward(tape, leaves, features_a, width_a, height_a, features_b,
                      width_b, height_b, config.ablate_position_mlp);
  const MatX aug = to_matrix(tape.value(fwd.aug_logits));
  const auto [a, b] = default_marginals(fwd.count_a, fwd.count_b);
  const SinkhornResult result =
      sinkhorn(aug, a, b, config.sinkhorn_max_iters, config.sinkhorn_tol);
  if (info) {
    info->iterations = result.iterations;
    info->violation = result.violation;
    info->converged = result.converged;
  }
  return extract_matches(result.assignment, config.score_threshold);
}

PairMatchResult match_pair(const FrameFeatures& a, const FrameFeatures& b,
                           const MatcherWeights& weights,
                           const MatchConfig& config) {
  PairMatchResult out;
  out.points = match_features(a.ppoints, a.width, a.height, b.ppoints, b.width,
                              b.height, weights.point, config, &out.point_info);
  out.lpoints =
      match_features(a.lpoints, a.width, a.height, b.lpoints, b.width,
                     b.height, weights.line, config, &out.lpoint_info);
  out.lines = vote_line_matches(out.lpoints, a.lines, b.lines,
                                config.line_majority, config.line_min_support);
  return out;
}

MatcherTrainer::MatcherTrainer(MatcherWeights initial,
                               OptimizerConfig optimizer, int sinkhorn_iters)
    : weights_(std::move(initial)), optimizer_(optimizer),
      sinkhorn_iters_(sinkhorn_iters) {}

namespace {

/// Builds forward + NLL for one network; returns -1 when the pair is
/// unusable (an empty side).
ad::NodeId network_loss(ad::Tape& tape, const EncoderLeaves& leaves,
                        std::span<const Keypoint> fa, int wa, int ha,
                        std::span<const Keypoint> fb, int wb, int hb,
                        std::span<const std::pair<int, int>> gt_pairs,
                        std::span<const int> unmatched_a,
                        std::span<const int> unmatched_b, int sinkhorn_iters) {
  if (fa.empty() || fb.empty()) return -1;
  const ForwardNodes fwd =
      matcher_forward(tape, leaves, fa, wa, ha, fb, wb, hb, false);
  const auto [a, b] = default_marginals(fwd.count_a, fwd.count_b);
  const ad::NodeId log_p =
      sinkhorn_log_on_tape(tape, fwd.aug_logits, a, b, sinkhorn_iters, 1e-6);
  std::vector<std::pair<int, int>> picks(gt_pairs.begin(), gt_pairs.end());
  for (int i : unmatched_a) picks.emplace_back(i, fwd.count_b);
  for (int j : unmatched_b) picks.emplace_back(fwd.count_a, j);
  if (picks.empty()) return -1;
  return tape.neg(tape.gather_sum(log_p, std::move(picks)));
}

}  // namespace

double MatcherTrainer::step(const FrameFeatures& a, const FrameFeatures& b,
                            const GroundTruth& gt, bool train_points,
                            bool train_lines) {
  double total = 0.0;
  if (train_points) {
    ad::Tape tape;
    const EncoderLeaves leaves = weights_on_tape(tape, weights_.point, true);
    const ad::NodeId loss = network_loss(
        tape, leaves, a.ppoints, a.width, a.height, b.ppoints, b.width,
        b.height, gt.point_pairs, gt.unmatched_points_a, gt.unmatched_points_b,
        sinkhorn_iters_);
    if (loss >= 0) {
      tape.backward(loss);
      total += tape.value(loss).v[0];
      std::vector<const ad::Tensor*> grads;
      for (ad::NodeId id : leaf_ids(leaves)) grads.push_back(&tape.grad(id));
      adam_step(weights_.point.parameters(), grads, state_point_,
                optimizer_.lr, optimizer_.beta1, optimizer_.beta2,
                optimizer_.eps);
    }
  }
  if (train_lines) {
    ad::Tape tape;
    const EncoderLeaves leaves = weights_on_tape(tape, weights_.line, true);
    const ad::NodeId loss = network_loss(
        tape, leaves, a.lpoints, a.width, a.height, b.lpoints, b.width,
        b.height, gt.lpoint_pairs, gt.unmatched_lpoints_a,
        gt.unmatched_lpoints_b, sinkhorn_iters_);
    if (loss >= 0) {
      tape.backward(loss);
      total += tape.value(loss).v[0];
      std::vector<const ad::Tensor*> grads;
      for (ad::NodeId id : leaf_ids(leaves)) grads.push_back(&tape.grad(id));
      adam_step(weights_.line.parameters(), grads, state_line_, optimizer_.lr,
                optimizer_.beta1, optimizer_.beta2, optimizer_.eps);
    }
  }
  return total;
}

double MatcherTrainer::evaluate(const FrameFeatures& a, const FrameFeatures& b,
                                const GroundTruth& gt, bool points,
                                bool lines) const {
  double total = 0.0;
  if (points) {
    ad::Tape tape;
    const EncoderLeaves leaves = weights_on_tape(tape, weights_.point, false);
    const ad::NodeId loss = network_loss(
        tape, leaves, a.ppoints, a.width, a.height, b.ppoints, b.width,
        b.height, gt.point_pairs, gt.unmatched_points_a, gt.unmatched_points_b,
        sinkhorn_iters_);
    if (loss >= 0) total += tape.value(loss).v[0];
  }
  if (lines) {
    ad::Tape tape;
    const EncoderLeaves leaves = weights_on_tape(tape, weights_.line, false);
    const ad::NodeId loss = network_loss(
        tape, leaves, a.lpoints, a.width, a.height, b.lpoints, b.width,
        b.height, gt.lpoint_pairs, gt.unmatched_lpoints_a,
        gt.unmatched_lpoints_b, sinkhorn_iters_);
    if (loss >= 0) total += tape.value(loss).v[0];
  }
  return total;
}

TrainResult train_matcher(const TrainConfig& config) {
  Rng rng(mix_seed(config.seed, 0x7EA1));
  MatcherWeights weights;
  {
    Rng init_rng(mix_seed(config.seed, 0x1217));
    weights.point = EncoderWeights::init(config.dim, config.layers,
                                         config.hidden, init_rng);
    weights.line = EncoderWeights::init(config.dim, config.layers,
                                        config.hidden, init_rng);
  }
  MatcherTrainer trainer(std::move(weights), config.optimizer,
                         config.sinkhorn_iters);

  const int n_worlds = std::max(1, config.n_worlds);
  std::vector<World> worlds;
  std::vector<std::vector<SE3Pose>> trajectories;
  const int n_repetitive = static_cast<int>(
      std::lround(config.repetitive_fraction * n_worlds));
  for (int w = 0; w < n_worlds; ++w) {
    WorldConfig wc = config.world;
    wc.descriptor_dim = config.dim;
    if (w < n_repetitive && wc.repetitive_copies == 0) {
      wc.repetitive_copies = 3;
      wc.repetitive_motif = std::max(4, wc.n_lines / 6);
    }
    worlds.push_back(generate_world(mix_seed(config.seed, 100 + w), wc));
    trajectories.push_back(make_trajectory(config.trajectory));
  }

  const CameraRig camera = default_camera();
  TrainResult result;
  for (int step = 0; step < config.steps; ++step) {
    double loss = 0.0;
    for (int attempt = 0; attempt < 20; ++attempt) {
      const int w = static_cast<int>(rng.below(worlds.size()));
      const auto& traj = trajectories[w];
      const int k = static_cast<int>(rng.below(std::max<size_t>(traj.size() - 1, 1)));
      DegradationProfile profile = config.profile;
      if (config.noise_mixture)
        profile.descriptor_noise_sigma =
            rng.uniform(config.mixture_sigma_lo, config.mixture_sigma_hi);
      const std::uint64_t frame_seed = rng.next_u64();
      const FrameFeatures fa = render_frame(worlds[w], traj[k], camera,
                                            profile, frame_seed, k);
      const FrameFeatures fb = render_frame(worlds[w], traj[k + 1], camera,
                                            profile, frame_seed ^ 0x5A5A, k + 1);
      const GroundTruth gt = ground_truth_matches(fa, fb);
      const bool points_ok =
          !config.train_points ||
          static_cast<int>(gt.point_pairs.size()) >= config.min_features;
      const bool lines_ok =
          !config.train_lines ||
          static_cast<int>(gt.lpoint_pairs.size()) >= config.min_features;
      if (!points_ok || !lines_ok) continue;
      loss = trainer.step(fa, fb, gt, config.train_points, config.train_lines);
      break;
    }
    result.loss_log.push_back(loss);
  }
  result.weights = trainer.weights();
  return result;
}

}  // namespace plvo
