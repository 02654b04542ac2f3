"""Smoke tests for the python module against the C++ core."""

import numpy as np
import pytest

import plvo


def test_sinkhorn_marginals():
    rng = np.random.default_rng(3)
    m, n = 6, 8
    logits = rng.normal(size=(m + 1, n + 1)) * 2.0
    a, b = plvo.default_marginals(m, n)
    assert a.sum() == pytest.approx(b.sum())
    result = plvo.sinkhorn(logits, a, b, max_iters=100, tol=1e-6)
    assert result["converged"]
    assert result["violation"] < 1e-6
    p = result["assignment"]
    assert p.shape == (m + 1, n + 1)
    assert np.allclose(p.sum(axis=1), a, atol=1e-5)
    assert np.allclose(p.sum(axis=0), b, atol=1e-5)
    assert (p >= 0).all()


def test_extract_matches_one_to_one():
    rng = np.random.default_rng(5)
    p = rng.uniform(size=(7, 9))
    result = plvo.extract_matches(p, score_threshold=0.3)
    seen_a = set(result["unmatched_a"])
    seen_b = set(result["unmatched_b"])
    for i, j, score in result["pairs"]:
        assert score >= 0.3
        assert i not in seen_a
        assert j not in seen_b
        seen_a.add(i)
        seen_b.add(j)
    assert seen_a == set(range(6))
    assert seen_b == set(range(8))


def test_affinity_and_dustbin():
    h = np.eye(3)
    s = plvo.affinity(h, h, np.eye(3), 1.0)
    assert s[0, 0] == pytest.approx(np.exp(1.0))
    assert s[0, 1] == pytest.approx(1.0)
    aug = plvo.augment_dustbin(s, 0.5)
    assert aug.shape == (4, 4)
    assert aug[3, 3] == 0.5
    assert aug[0, 0] == pytest.approx(1.0)


def test_sample_line_points():
    samples = plvo.sample_line_points(
        np.array([0.0, 0.0]), np.array([10.0, 0.0]), spacing=5.0
    )
    assert samples.shape == (3, 2)
    assert samples[1] == pytest.approx([5.0, 0.0])
    with pytest.raises(plvo.PlvoError):
        plvo.sample_line_points(np.zeros(2), np.zeros(2), spacing=1.0)


def test_triangulate():
    point = plvo.triangulate_from_disparity(
        fx=500.0, fy=500.0, cx=0.0, cy=0.0, baseline=0.5, u=0.0, v=0.0,
        disparity=5.0
    )
    assert point == pytest.approx([0.0, 0.0, 50.0])


def test_match_and_track_workflow(tmp_path):
    files = plvo.synth_sequence(
        tmp_path / "seq", frames=4, seed=11, n_points=80, n_lines=12,
        profile="clean"
    )
    assert len(files) == 4

    matches = plvo.match_files(files[0], files[1])
    gt = plvo.ground_truth_pairs(files[0], files[1])
    predicted = {(i, j) for i, j, _ in matches["points"]["pairs"]}
    truth = set(map(tuple, gt["point_pairs"]))
    # Noise-free pairs: predictions are exactly the labeled pairs.
    assert predicted == truth
    assert len(matches["lines"]) > 0

    result = plvo.track_files(files, weights="identity", seed=1)
    positions = result["positions"]
    assert positions.shape == (4, 3)
    # straight run at 0.35 m/frame along +z
    assert positions[-1, 2] == pytest.approx(3 * 0.35, abs=1e-6)
    assert result["point_matches"] > 0

    report = plvo.ape_from_csv(
        tmp_path / "seq" / "gt_trajectory.csv",
        tmp_path / "seq" / "gt_trajectory.csv",
        align=False,
    )
    assert report["rmse"] == 0.0
