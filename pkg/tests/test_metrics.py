import itertools
import math
from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linear_sum_assignment

from drivegen.metrics import (DistanceMatrix, ProtocolError, baseline_split_eval, coverage_score,
                              dtw, evaluate_sets, format_tables, hungarian, hungarian_truncated,
                              matched_curve_csv, matching_score, pairwise_matrix, split_halves,
                              stats_csv)
from drivegen.nn import stream
from drivegen.trajectory import Dataset, ScenarioLabel, SynthParams, Trajectory, synth_dataset


def dtw_reference(a, b):
    """Memoized textbook recursion, independent of the DP kernel."""
    a, b = np.asarray(a, float), np.asarray(b, float)

    @lru_cache(maxsize=None)
    def rec(i, j):
        dx, dy = a[i] - b[j]
        cost = math.sqrt(dx * dx + dy * dy)  # hypot rounds differently in the last ulp
        if i == 0 and j == 0:
            return cost
        options = []
        if i > 0:
            options.append(rec(i - 1, j))
        if j > 0:
            options.append(rec(i, j - 1))
        if i > 0 and j > 0:
            options.append(rec(i - 1, j - 1))
        return cost + min(options)

    return rec(len(a) - 1, len(b) - 1)


def brute_force_assignment(d):
    n = d.shape[0]
    return min(sum(d[i, p[i]] for i in range(n)) for p in itertools.permutations(range(n)))


def _line(lon):
    lon = np.asarray(lon, float)
    return np.column_stack([np.zeros_like(lon), lon])


def test_dtw_hand_case():
    assert dtw(_line([1, 2, 3]), _line([1, 3])) == 1.0


def test_dtw_matches_memoized_recursion_exactly():
    rng = np.random.default_rng(0)
    for _ in range(100):
        a = rng.normal(size=(rng.integers(1, 9), 2))
        b = rng.normal(size=(rng.integers(1, 9), 2))
        assert dtw(a, b) == dtw_reference(a, b)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_dtw_identity_and_symmetry(n, m, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(n, 2)), rng.normal(size=(m, 2))
    assert dtw(a, a) == 0.0
    assert dtw(a, b) == dtw(b, a)
    assert dtw(a, b) >= 0.0


def test_dtw_empty_rejected():
    with pytest.raises(ValueError):
        dtw(np.zeros((0, 2)), np.zeros((3, 2)))


def test_pairwise_matches_looped_dtw():
    gs = synth_dataset({ScenarioLabel.CutIn: 5}, SynthParams(), 1)
    rs = synth_dataset({ScenarioLabel.DriveByLeft: 4}, SynthParams(), 2)
    dm = pairwise_matrix(gs, rs)
    assert dm.shape == (5, 4)
    for i, g in enumerate(gs):
        for j, r in enumerate(rs):
            assert dm.d[i, j] == dtw(g, r)
    same = pairwise_matrix(gs, gs)
    assert np.all(np.diag(same.d) == 0)


def test_pairwise_single_identical():
    t = Trajectory("a", np.ones((30, 2)))
    assert pairwise_matrix(Dataset((t,)), Dataset((t,))).d.tolist() == [[0.0]]


def test_matching_hand_cases():
    assert matching_score([[1, 2], [3, 0]]) == 0.5
    assert matching_score([[1, 2], [0.5, 2], [0.1, 2]]) == pytest.approx(1.6 / 3, abs=1e-12)


def test_coverage_hand_cases():
    assert coverage_score([[1, 2], [3, 0]]) == 1.0
    assert coverage_score([[1, 2], [0.5, 2], [0.1, 2]]) == 0.5
    assert coverage_score([[1, 1]]) == 0.5  # tie goes to the lowest column


def test_identical_sets_give_zero_matching_full_coverage():
    ds = synth_dataset({ScenarioLabel.CutIn: 8}, SynthParams(), 3)
    dm = pairwise_matrix(ds, ds)
    assert matching_score(dm) == 0.0
    assert coverage_score(dm) == 1.0


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_matching_column_permutation_invariant_and_coverage_bounds(m, n, seed):
    rng = np.random.default_rng(seed)
    d = rng.uniform(size=(m, n))
    assert matching_score(d) == matching_score(d[:, rng.permutation(n)])
    assert 0.0 < coverage_score(d) <= 1.0


def test_hungarian_three_by_three_example():
    pairs, total = hungarian([[1, 2, 3], [2, 4, 6], [3, 6, 9]])
    assert total == 10
    assert sorted(pairs) == [(0, 2), (1, 1), (2, 0)]


def test_hungarian_zero_diagonal():
    d = np.ones((5, 5)) - np.eye(5)
    pairs, total = hungarian(d)
    assert total == 0 and pairs == [(i, i) for i in range(5)]


def test_hungarian_equals_brute_force():
    rng = np.random.default_rng(4)
    for _ in range(60):
        n = int(rng.integers(1, 8))
        d = rng.uniform(0, 10, size=(n, n))
        assert hungarian(d)[1] == pytest.approx(brute_force_assignment(d), abs=1e-9)
    for _ in range(20):  # integer costs have many ties
        d = rng.integers(0, 3, size=(6, 6)).astype(float)
        assert hungarian(d)[1] == brute_force_assignment(d)


def test_hungarian_matches_scipy_on_larger_matrices():
    rng = np.random.default_rng(5)
    d = rng.uniform(size=(60, 60))
    r, c = linear_sum_assignment(d)
    assert hungarian(d)[1] == pytest.approx(d[r, c].sum(), rel=1e-12)


def test_hungarian_is_a_permutation():
    d = np.random.default_rng(6).uniform(size=(9, 9))
    pairs, total = hungarian(d)
    assert sorted(i for i, _ in pairs) == list(range(9))
    assert sorted(j for _, j in pairs) == list(range(9))
    assert total == pytest.approx(sum(d[i, j] for i, j in pairs))


def test_hungarian_non_square():
    d = np.random.default_rng(7).uniform(size=(3, 5))
    with pytest.raises(ProtocolError):
        hungarian(d)
    pairs, _ = hungarian(d, rng=np.random.default_rng(0))
    assert len(pairs) == 3 and len({j for _, j in pairs}) == 3


def test_truncated_hungarian_cases():
    assert hungarian_truncated([1, 2, 3, 100], 0.75) == 2.0
    assert hungarian_truncated([3, 1, 2], 1.0) == 2.0
    with pytest.raises(ValueError):
        hungarian_truncated([], 0.75)
    with pytest.raises(ValueError):
        hungarian_truncated([1.0], 0.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1e3), min_size=1, max_size=30), st.floats(0.01, 1.0))
def test_truncated_never_exceeds_full_mean(vals, frac):
    assert hungarian_truncated(vals, frac) <= np.mean(vals) + 1e-9


def test_distance_matrix_validation():
    with pytest.raises(ValueError):
        DistanceMatrix.from_array([[-1.0]])
    dm = DistanceMatrix.from_array(np.arange(6.0).reshape(2, 3))
    assert dm.select(cols=[2, 0]).d.tolist() == [[2.0, 0.0], [5.0, 3.0]]


@pytest.fixture(scope="module")
def small_sets():
    rs = synth_dataset({ScenarioLabel.CutIn: 40}, SynthParams(), 8)
    gs = synth_dataset({ScenarioLabel.CutIn: 80}, SynthParams(), 9)
    return gs, rs


def test_evaluate_sets_protocol(small_sets):
    gs, rs = small_sets
    stats = evaluate_sets(gs, rs, runs=3, n=10, seed=1)
    assert len(stats.runs) == 3
    for r in stats.runs:
        assert (r.m, r.n) == (40, 10)
        assert len(r.matched) == 10
        assert r.hungarian_truncated <= r.hungarian_mean
    for s in stats.summary.values():
        assert s["min"] <= s["avg"] <= s["max"]
    again = evaluate_sets(gs, rs, runs=3, n=10, seed=1)
    assert stats_csv([stats]) == stats_csv([again])


def test_single_run_min_max_avg_equal(small_sets):
    gs, rs = small_sets
    s = evaluate_sets(gs, rs, runs=1, n=5).summary
    for v in s.values():
        assert v["min"] == v["max"] == v["avg"]


def test_evaluate_sets_too_small(small_sets):
    gs, rs = small_sets
    with pytest.raises(ProtocolError):
        evaluate_sets(gs, rs, n=30)


def test_split_halves_disjoint():
    rs = synth_dataset({ScenarioLabel.CutIn: 21}, SynthParams(), 10)
    for seed in range(5):
        a, b = split_halves(rs, stream(seed, "s"))
        assert len(a) == len(b) == 10
        assert not set(a.ids) & set(b.ids)


def test_baseline_split_eval_shape(small_sets):
    _, rs = small_sets
    stats = baseline_split_eval(rs, runs=5, seed=2)
    assert stats.label == "Real Set (Baseline)"
    assert len(stats.runs) == 5
    assert all(r.n == 5 and r.m == 20 for r in stats.runs)
    cov = stats.summary["coverage"]["avg"]
    assert 0 < cov <= 1 and stats.summary["matching"]["avg"] > 0
    with pytest.raises(ProtocolError):
        baseline_split_eval(Dataset(rs.trajectories[:6]))


def test_report_outputs(small_sets):
    gs, rs = small_sets
    stats = [baseline_split_eval(rs, runs=2), evaluate_sets(gs, rs, runs=2, n=5, label="GAN")]
    lines = stats_csv(stats).splitlines()
    assert len(lines) == 1 + 4 + 6  # header, raw runs, min/max/avg per set
    text = format_tables(stats)
    assert "Real Set (Baseline)" in text and "GAN" in text and "Hungarian (75%)" in text
    assert matched_curve_csv(stats).count("\n") == 1 + 2 * 5 + 2 * 5
