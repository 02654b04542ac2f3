#include <doctest.h>

#include <set>

#include "oracles.hpp"
#include "plvo/matcher.hpp"
#include "plvo/tensor_eigen.hpp"

using namespace plvo;

TEST_CASE("affinity forced and oracle cases") {
  MatX h(1, 3);
  h << 1, 0, 0;  // unit basis
  const MatX s = affinity(h, h, MatX::Identity(3, 3), 1.0);
  CHECK(s(0, 0) == doctest::Approx(2.718282).epsilon(1e-6));

  const MatX zero_metric = affinity(h, h, MatX::Zero(3, 3), 0.7);
  CHECK(zero_metric(0, 0) == 1.0);

  Rng rng(1);
  const MatX ha = to_matrix(ad::Tensor::randn(4, 5, rng));
  const MatX hb = to_matrix(ad::Tensor::randn(3, 5, rng));
  const MatX metric = to_matrix(ad::Tensor::randn(5, 5, rng));
  const double delta = 0.35;
  const MatX s2 = affinity(ha, hb, metric, delta);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j) {
      double logit = 0.0;
      for (int p = 0; p < 5; ++p)
        for (int q = 0; q < 5; ++q)
          logit += ha(i, p) * metric(p, q) * hb(j, q);
      logit /= delta;
      CHECK(s2(i, j) ==
            doctest::Approx(std::exp(std::clamp(logit, -30.0, 30.0)))
                .epsilon(1e-9));
      CHECK(s2(i, j) > 0.0);
    }

  CHECK_THROWS_AS(affinity(ha, hb, metric, 0.0), NonPositiveTemperature);
  CHECK_THROWS_AS(affinity(ha, hb, MatX::Identity(4, 4), 1.0),
                  DimensionMismatch);
}

TEST_CASE("affinity clamps extreme logits") {
  MatX h(1, 1);
  h << 100.0;
  const MatX s = affinity(h, h, MatX::Identity(1, 1), 0.01);
  CHECK(s(0, 0) == doctest::Approx(std::exp(30.0)));
  CHECK(std::isfinite(s(0, 0)));
}

TEST_CASE("augment_dustbin forced case and shapes") {
  MatX s(1, 1);
  s << std::exp(1.0);
  const MatX aug = augment_dustbin(s, 0.0);
  REQUIRE(aug.rows() == 2);
  REQUIRE(aug.cols() == 2);
  CHECK(aug(0, 0) == doctest::Approx(1.0));
  CHECK(aug(0, 1) == 0.0);
  CHECK(aug(1, 0) == 0.0);
  CHECK(aug(1, 1) == 0.0);

  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const int m = 1 + static_cast<int>(rng.below(6));
    const int n = 1 + static_cast<int>(rng.below(6));
    const MatX random = MatX::Ones(m, n) * rng.uniform(0.1, 3.0);
    const MatX a = augment_dustbin(random, rng.normal());
    CHECK(a.rows() == m + 1);
    CHECK(a.cols() == n + 1);
  }
}

TEST_CASE("default marginals") {
  {
    const auto [a, b] = default_marginals(0, 0);
    REQUIRE(a.size() == 1);
    REQUIRE(b.size() == 1);
    CHECK(a[0] == 0.0);
    CHECK(b[0] == 0.0);
  }
  {
    const auto [a, b] = default_marginals(2, 3);
    REQUIRE(a.size() == 3);
    REQUIRE(b.size() == 4);
    CHECK(a[0] == 1.0);
    CHECK(a[1] == 1.0);
    CHECK(a[2] == 3.0);
    CHECK(b[3] == 2.0);
    CHECK(a.sum() == 5.0);
    CHECK(b.sum() == 5.0);
  }
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const int m = static_cast<int>(rng.below(30));
    const int n = static_cast<int>(rng.below(30));
    const auto [a, b] = default_marginals(m, n);
    CHECK(a.sum() == b.sum());
  }
}

TEST_CASE("sinkhorn forced assignment in the epsilon limit") {
  MatX log_scores(2, 2);
  log_scores << 5.0, -5.0, -5.0, 0.0;
  VecX a(2), b(2);
  const double eps = 1e-9;
  a << 1.0, eps;
  b << 1.0, eps;
  const SinkhornResult result = sinkhorn(log_scores, a, b, 500, 1e-10);
  CHECK(result.assignment(0, 0) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("sinkhorn uniform symmetry") {
  const MatX log_scores = MatX::Zero(4, 4);
  const VecX a = VecX::Ones(4), b = VecX::Ones(4);
  const SinkhornResult result = sinkhorn(log_scores, a, b, 100, 1e-8);
  CHECK(result.converged);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      CHECK(result.assignment(i, j) == doctest::Approx(0.25).epsilon(1e-9));
}

TEST_CASE("sinkhorn marginals are met and reported") {
  Rng rng(4);
  for (int trial = 0; trial < 25; ++trial) {
    const int m = 2 + static_cast<int>(rng.below(10));
    const int n = 2 + static_cast<int>(rng.below(10));
    MatX logits(m + 1, n + 1);
    for (int i = 0; i <= m; ++i)
      for (int j = 0; j <= n; ++j) logits(i, j) = 2.0 * rng.normal();
    const auto [a, b] = default_marginals(m, n);
    const SinkhornResult result = sinkhorn(logits, a, b, 100, 1e-6);
    CHECK(result.converged);
    CHECK(result.violation < 1e-6);
    for (int i = 0; i <= m; ++i)
      CHECK(result.assignment.row(i).sum() == doctest::Approx(a[i]).epsilon(1e-5));
    for (int j = 0; j <= n; ++j)
      CHECK(result.assignment.col(j).sum() == doctest::Approx(b[j]).epsilon(1e-5));
    for (int i = 0; i <= m; ++i)
      for (int j = 0; j <= n; ++j) CHECK(result.assignment(i, j) >= 0.0);
  }
}

TEST_CASE("sinkhorn rejects mismatched marginal sums") {
  const MatX logits = MatX::Zero(2, 2);
  VecX a(2), b(2);
  a << 1.0, 1.0;
  b << 1.0, 1.5;
  CHECK_THROWS_AS(sinkhorn(logits, a, b, 10, 1e-6), MarginalSumMismatch);
}

TEST_CASE("sinkhorn shift invariance") {
  Rng rng(5);
  MatX logits(5, 5);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) logits(i, j) = rng.normal();
  const auto [a, b] = default_marginals(4, 4);
  const double tol = 1e-8;
  const SinkhornResult base = sinkhorn(logits, a, b, 200, tol);
  const SinkhornResult shifted =
      sinkhorn(logits.array() + 3.7, a, b, 200, tol);
  CHECK((base.assignment - shifted.assignment).cwiseAbs().maxCoeff() <
        2 * tol);
}

TEST_CASE("sinkhorn permutation equivariance is exact") {
  Rng rng(6);
  const int m = 5, n = 6;
  MatX logits(m + 1, n + 1);
  for (int i = 0; i <= m; ++i)
    for (int j = 0; j <= n; ++j) logits(i, j) = rng.normal();
  const auto [a, b] = default_marginals(m, n);
  const SinkhornResult base = sinkhorn(logits, a, b, 50, 1e-6);

  // Permute the non-dustbin columns (image-B features).
  std::vector<int> perm{3, 0, 4, 1, 5, 2};
  MatX permuted(m + 1, n + 1);
  for (int j = 0; j < n; ++j) permuted.col(j) = logits.col(perm[j]);
  permuted.col(n) = logits.col(n);
  const SinkhornResult result = sinkhorn(permuted, a, b, 50, 1e-6);
  for (int i = 0; i <= m; ++i)
    for (int j = 0; j < n; ++j)
      CHECK(result.assignment(i, j) == base.assignment(i, perm[j]));
  for (int i = 0; i <= m; ++i)
    CHECK(result.assignment(i, n) == base.assignment(i, n));
}

TEST_CASE("near-zero temperature recovers the brute-force assignment") {
  // Regime where the discrete optimum is a full permutation: positive
  // scores, strongly negative dustbin, and an optimality gap well above
  // the temperature.
  Rng rng(7);
  int checked = 0;
  while (checked < 60) {
    const int n = 2 + static_cast<int>(rng.below(4));  // up to 5x5 here
    MatX raw(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) raw(i, j) = rng.uniform(0.1, 1.0);
    const auto best = oracle::best_assignment(raw);
    double best_total = 0.0;
    for (int i = 0; i < n; ++i) best_total += raw(i, best[i]);
    double second = -1e300;
    {
      std::vector<int> perm(n);
      std::iota(perm.begin(), perm.end(), 0);
      do {
        double total = 0.0;
        for (int i = 0; i < n; ++i) total += raw(i, perm[i]);
        if (total < best_total - 1e-12) second = std::max(second, total);
      } while (std::next_permutation(perm.begin(), perm.end()));
    }
    if (best_total - second < 0.05) continue;  // near-tie, resample
    ++checked;
    const double delta = 0.005;
    MatX logits(n + 1, n + 1);
    logits.setConstant(-5.0);  // dustbin never competitive
    logits.topLeftCorner(n, n) = raw / delta;
    const auto [a, b] = default_marginals(n, n);
    const SinkhornResult result = sinkhorn(logits, a, b, 500, 1e-6);
    const MatchSet matches = extract_matches(result.assignment, 0.2);
    REQUIRE(matches.pairs.size() == static_cast<size_t>(n));
    for (const auto& pr : matches.pairs) CHECK(pr.idx_b == best[pr.idx_a]);
  }
}

TEST_CASE("dustbin forbidden by -1e9 surrogate") {
  // The dustbin marginals force mass n into the dustbin row/column, but
  // with z = -1e9 none of it touches real features: it all lands in the
  // corner.
  // With a hard dustbin the duals diverge and Sinkhorn approaches the
  // zero-slack solution at O(1/iterations), so "about zero" is tested at
  // the matching tolerance.
  MatX s(2, 2);
  s << std::exp(20.0), std::exp(-20.0), std::exp(-20.0), std::exp(20.0);
  const MatX aug = augment_dustbin(s, -1e9);
  const auto [a, b] = default_marginals(2, 2);
  const SinkhornResult result = sinkhorn(aug, a, b, 2000, 1e-9);
  for (int i = 0; i < 2; ++i) {
    CHECK(result.assignment(i, 2) < 1e-3);  // real-feature dustbin entries
    CHECK(result.assignment(2, i) < 1e-3);
  }
  CHECK(result.assignment(2, 2) == doctest::Approx(2.0).epsilon(1e-3));
}

TEST_CASE("extract_matches basics") {
  // Identity-like block.
  MatX p = MatX::Zero(4, 4);
  p(0, 0) = p(1, 1) = p(2, 2) = 0.9;
  p(3, 3) = 0.1;  // dustbin corner
  const MatchSet identity_like = extract_matches(p, 0.2);
  REQUIRE(identity_like.pairs.size() == 3);
  for (const auto& pr : identity_like.pairs) CHECK(pr.idx_a == pr.idx_b);

  // All mass in dustbins.
  MatX dust = MatX::Zero(3, 3);
  dust(0, 2) = dust(1, 2) = 1.0;
  dust(2, 0) = dust(2, 1) = 1.0;
  const MatchSet none = extract_matches(dust, 0.2);
  CHECK(none.pairs.empty());
  CHECK(none.unmatched_a == std::vector<int>{0, 1});
  CHECK(none.unmatched_b == std::vector<int>{0, 1});
}

TEST_CASE("extract_matches equals brute-force mutual argmax scan") {
  Rng rng(8);
  for (int trial = 0; trial < 300; ++trial) {
    const int m = 1 + static_cast<int>(rng.below(8));
    const int n = 1 + static_cast<int>(rng.below(8));
    MatX p(m + 1, n + 1);
    for (int i = 0; i <= m; ++i)
      for (int j = 0; j <= n; ++j) p(i, j) = rng.uniform();
    const double threshold = 0.3;
    const MatchSet fast = extract_matches(p, threshold);

    std::set<std::pair<int, int>> slow;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        bool row_max = true, col_max = true;
        for (int jj = 0; jj < n; ++jj)
          if (jj != j && p(i, jj) >= p(i, j)) row_max = false;
        for (int ii = 0; ii < m; ++ii)
          if (ii != i && p(ii, j) >= p(i, j)) col_max = false;
        if (row_max && col_max && p(i, j) >= threshold) slow.insert({i, j});
      }
    CHECK(fast.pairs.size() == slow.size());
    for (const auto& pr : fast.pairs)
      CHECK(slow.count({pr.idx_a, pr.idx_b}) == 1);

    // Constraints (1) and (2): one-to-one and full coverage.
    std::set<int> seen_a(fast.unmatched_a.begin(), fast.unmatched_a.end());
    std::set<int> seen_b(fast.unmatched_b.begin(), fast.unmatched_b.end());
    for (const auto& pr : fast.pairs) {
      CHECK(seen_a.insert(pr.idx_a).second);
      CHECK(seen_b.insert(pr.idx_b).second);
    }
    CHECK(seen_a.size() == static_cast<size_t>(m));
    CHECK(seen_b.size() == static_cast<size_t>(n));
  }
}

TEST_CASE("nll_loss forced and oracle cases") {
  MatX p = MatX::Ones(3, 3);
  const std::vector<std::pair<int, int>> pairs{{0, 0}, {1, 1}};
  const std::vector<int> ua{}, ub{};
  CHECK(nll_loss(p, pairs, ua, ub) == 0.0);  // log 1 = 0

  MatX p2 = MatX::Ones(2, 2);
  p2(0, 0) = std::exp(-1.0);
  const std::vector<std::pair<int, int>> one{{0, 0}};
  CHECK(nll_loss(p2, one, {}, {}) == doctest::Approx(1.0).epsilon(1e-12));

  Rng rng(9);
  MatX p3(4, 5);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 5; ++j) p3(i, j) = rng.uniform(0.001, 1.0);
  const std::vector<std::pair<int, int>> gt{{0, 1}, {2, 0}};
  const std::vector<int> unmatched_a{1};
  const std::vector<int> unmatched_b{2, 3};
  double expected = 0.0;
  expected -= std::log(p3(0, 1));
  expected -= std::log(p3(2, 0));
  expected -= std::log(p3(1, 4));  // dustbin column
  expected -= std::log(p3(3, 2));  // dustbin row
  expected -= std::log(p3(3, 3));
  CHECK(nll_loss(p3, gt, unmatched_a, unmatched_b) ==
        doctest::Approx(expected).epsilon(1e-12));

  const std::vector<std::pair<int, int>> bad{{7, 0}};
  CHECK_THROWS_AS(nll_loss(p3, bad, {}, {}), IndexOutOfRange);

  // Zero entries are clamped, not -inf.
  MatX p4 = MatX::Zero(2, 2);
  const std::vector<std::pair<int, int>> corner{{0, 0}};
  CHECK(std::isfinite(nll_loss(p4, corner, {}, {})));
}

TEST_CASE("tape sinkhorn agrees with the fast sinkhorn") {
  Rng rng(10);
  const int m = 5, n = 4;
  MatX logits(m + 1, n + 1);
  for (int i = 0; i <= m; ++i)
    for (int j = 0; j <= n; ++j) logits(i, j) = rng.normal();
  const auto [a, b] = default_marginals(m, n);
  const SinkhornResult fast = sinkhorn(logits, a, b, 60, 1e-9);

  ad::Tape tape;
  const ad::NodeId c = tape.constant(to_tensor(logits));
  const ad::NodeId log_p = sinkhorn_log_on_tape(tape, c, a, b, 60, 1e-9);
  const MatX tape_p = to_matrix(tape.value(log_p)).array().exp();
  CHECK((tape_p - fast.assignment).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("gradient of nll through unrolled sinkhorn matches finite differences") {
  Rng rng(11);
  const int n = 3;
  MatX raw(n + 1, n + 1);
  for (int i = 0; i <= n; ++i)
    for (int j = 0; j <= n; ++j) raw(i, j) = rng.normal();
  const auto [a, b] = default_marginals(n, n);
  const std::vector<std::pair<int, int>> gt{{0, 1}, {1, 0}};
  const std::vector<std::pair<int, int>> picks{{0, 1}, {1, 0}, {2, 3}, {3, 2}};

  auto loss_of = [&](const std::vector<double>& params) {
    ad::Tensor t(n + 1, n + 1);
    t.v = params;
    ad::Tape tape;
    const ad::NodeId c = tape.input(t);
    const ad::NodeId log_p = sinkhorn_log_on_tape(tape, c, a, b, 40, 0.0);
    return tape.value(tape.neg(tape.gather_sum(log_p, picks))).v[0];
  };

  ad::Tensor t0 = to_tensor(raw);
  ad::Tape tape;
  const ad::NodeId c = tape.input(t0);
  const ad::NodeId log_p = sinkhorn_log_on_tape(tape, c, a, b, 40, 0.0);
  tape.backward(tape.neg(tape.gather_sum(log_p, picks)));
  const ad::Tensor& analytic = tape.grad(c);
  const std::vector<double> fd = oracle::finite_difference(loss_of, t0.v);
  for (size_t k = 0; k < fd.size(); ++k) {
    const double denom = std::max({std::abs(fd[k]), std::abs(analytic.v[k]), 1e-6});
    CHECK(std::abs(fd[k] - analytic.v[k]) / denom < 1e-3);
  }
}

TEST_CASE("match_features permutation equivariance of assignments") {
  Rng rng(12);
  WorldConfig config;
  config.n_points = 40;
  config.descriptor_dim = 16;
  const World world = generate_world(91, config);
  const CameraRig camera = default_camera();
  const auto traj = make_trajectory({TrajectoryKind::Straight, 2, 0.3});
  const auto fa = render_frame(world, traj[0], camera,
                               builtin_profile("daytime"), 1, 0);
  FrameFeatures fb = render_frame(world, traj[1], camera,
                                  builtin_profile("daytime"), 2, 1);
  REQUIRE(fa.ppoints.size() > 4);

  MatcherWeights weights;
  Rng wrng(5);
  weights.point = EncoderWeights::init(16, 2, std::vector<int>{8}, wrng);
  weights.line = EncoderWeights::descriptor_only(16);

  const MatchSet base = match_features(fa.ppoints, fa.width, fa.height,
                                       fb.ppoints, fb.width, fb.height,
                                       weights.point);
  // Rotate B's features by one.
  std::vector<Keypoint> rotated(fb.ppoints.begin() + 1, fb.ppoints.end());
  rotated.push_back(fb.ppoints.front());
  const int nb = static_cast<int>(fb.ppoints.size());
  const MatchSet perm = match_features(fa.ppoints, fa.width, fa.height,
                                       rotated, fb.width, fb.height,
                                       weights.point);
  REQUIRE(perm.pairs.size() == base.pairs.size());
  std::set<std::pair<int, int>> base_set, perm_set;
  for (const auto& pr : base.pairs) base_set.insert({pr.idx_a, pr.idx_b});
  for (const auto& pr : perm.pairs)
    perm_set.insert({pr.idx_a, (pr.idx_b + 1) % nb});
  CHECK(base_set == perm_set);
}

TEST_CASE("training reduces the loss and reaches full precision/recall") {
  TrainConfig config;
  config.steps = 50;
  config.seed = 3;
  config.dim = 16;
  config.layers = 2;
  config.hidden = {16, 16};
  config.world.n_points = 60;
  config.world.n_lines = 10;
  config.train_lines = false;
  config.sinkhorn_iters = 30;
  config.n_worlds = 2;
  const TrainResult result = train_matcher(config);
  REQUIRE(result.loss_log.size() == 50);

  // Moving average (window 10) of the loss decreases over the first 50 steps.
  auto moving_average = [&](size_t start) {
    double sum = 0.0;
    for (size_t k = start; k < start + 10; ++k) sum += result.loss_log[k];
    return sum / 10.0;
  };
  CHECK(moving_average(40) < moving_average(0));

  // Zero steps: weights unchanged from initialization.
  TrainConfig zero = config;
  zero.steps = 0;
  const TrainResult untouched = train_matcher(zero);
  Rng init_rng(mix_seed(config.seed, 0x1217));
  const EncoderWeights reference = EncoderWeights::init(
      config.dim, config.layers, config.hidden, init_rng);
  const auto got = untouched.weights.point.parameters();
  const auto expected = reference.parameters();
  REQUIRE(got.size() == expected.size());
  for (size_t k = 0; k < got.size(); ++k) CHECK(got[k]->v == expected[k]->v);
  CHECK(untouched.loss_log.empty());
}

TEST_CASE("trained matcher separates noise-free pairs perfectly") {
  TrainConfig config;
  config.steps = 120;
  config.seed = 8;
  config.dim = 16;
  config.layers = 2;
  config.hidden = {16, 16};
  config.world.n_points = 50;
  config.world.n_lines = 8;
  config.train_lines = false;
  config.n_worlds = 2;
  config.profile = builtin_profile("daytime");
  const TrainResult result = train_matcher(config);

  // Held-out noise-free pairs: every GT pair must be recovered exactly.
  WorldConfig wc = config.world;
  wc.descriptor_dim = config.dim;
  const World world = generate_world(555, wc);
  const CameraRig camera = default_camera();
  const auto traj = make_trajectory({TrajectoryKind::Straight, 2, 0.3});
  const auto fa = render_frame(world, traj[0], camera,
                               builtin_profile("clean"), 70, 0);
  const auto fb = render_frame(world, traj[1], camera,
                               builtin_profile("clean"), 71, 1);
  const GroundTruth gt = ground_truth_matches(fa, fb);
  const MatchSet matches =
      match_features(fa.ppoints, fa.width, fa.height, fb.ppoints, fb.width,
                     fb.height, result.weights.point);
  std::set<std::pair<int, int>> predicted;
  for (const auto& pr : matches.pairs) predicted.insert({pr.idx_a, pr.idx_b});
  std::set<std::pair<int, int>> truth(gt.point_pairs.begin(),
                                      gt.point_pairs.end());
  CHECK(predicted == truth);
}
