import math

import numpy as np
import pytest

from drivegen.analysis import (ClusterLabels, TsneConfig, balance_classes, cluster_consistency,
                               conditional_affinities, dbscan, outlier_probabilities, pca_fit,
                               pca_fit_transform, svd_transform, sweep_dbscan, top_outliers,
                               tsne_embed)


def naive_dbscan(pts, eps, min_neighbors):
    """Textbook DBSCAN with explicit O(n^2) distances and the same visiting order."""
    n = len(pts)
    d = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
    nbrs = [list(np.flatnonzero(d[i] <= eps)) for i in range(n)]
    core = [len(nb) >= min_neighbors for nb in nbrs]
    labels = [-1] * n
    c = 0
    for i in range(n):
        if labels[i] != -1 or not core[i]:
            continue
        labels[i] = c
        frontier = [i]
        while frontier:
            j = frontier.pop(0)
            if not core[j]:
                continue
            for k in nbrs[j]:
                if labels[k] == -1:
                    labels[k] = c
                    frontier.append(k)
        c += 1
    return np.array(labels)


def same_partition(a, b):
    a, b = np.asarray(a), np.asarray(b)
    if not np.array_equal(a == -1, b == -1):
        return False
    mapping = {}
    for x, y in zip(a, b):
        if mapping.setdefault(x, y) != y:
            return False
    return len(set(mapping.values())) == len(mapping)


# -- PCA / SVD ---------------------------------------------------------------------------


def test_pca_axis_aligned_data():
    rng = np.random.default_rng(0)
    x = np.column_stack([rng.normal(0, 3, 500), rng.normal(0, 1, 500)])
    fit = pca_fit(x)
    np.testing.assert_allclose(np.abs(fit.components[0]), [1, 0], atol=0.05)


def test_pca_rank_one_explains_everything():
    t = np.linspace(-1, 1, 50)[:, None]
    x = t @ np.array([[1.0, 2.0, -1.0]])
    _, ratios = pca_fit_transform(x, 1)
    assert abs(ratios[0] - 1.0) < 1e-9


def test_pca_full_reconstruction_and_eigen_oracle():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(40, 10)) @ rng.normal(size=(10, 10))
    fit = pca_fit(x)
    np.testing.assert_allclose(fit.reconstruct(fit.transform(x, 10)), x, atol=1e-8)
    vals = np.sort(np.linalg.eigvalsh(np.cov(x.T, bias=True)))[::-1]
    np.testing.assert_allclose(fit.explained_ratio, vals / vals.sum(), atol=1e-12)
    _, ratios = pca_fit_transform(x, 3)
    assert sum(ratios) <= 1 and ratios == sorted(ratios, reverse=True)


def test_pca_rejects_bad_k():
    x = np.zeros((5, 3))
    with pytest.raises(ValueError):
        pca_fit_transform(x, 3)
    with pytest.raises(ValueError):
        pca_fit_transform(np.zeros((2, 4)), 2)


def test_svd_matches_pca_on_centered_data():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(30, 5))
    x -= x.mean(axis=0)
    a = svd_transform(x, 2).points
    b = pca_fit_transform(x, 2)[0].points
    np.testing.assert_allclose(np.abs(a), np.abs(b), atol=1e-10)
    assert np.all(svd_transform(np.zeros((6, 3)), 2).points == 0)
    sv = svd_transform(rng.normal(size=(10, 4)), 3).params["singular_values"]
    assert sv == sorted(sv, reverse=True)


# -- t-SNE ---------------------------------------------------------------------------------


def test_affinity_entropy_matches_perplexity():
    x = np.random.default_rng(3).normal(size=(60, 4))
    p, ent = conditional_affinities(x, 10.0)
    np.testing.assert_allclose(ent, math.log(10.0), atol=1e-4)
    np.testing.assert_allclose(p.sum(axis=1), 1.0)
    assert np.all(np.diag(p) == 0)


def test_tsne_duplicate_pair_are_mutual_nearest():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(200, 5))
    x[7] = x[3]
    y = tsne_embed(x, TsneConfig(perplexity=20, iters=600)).points
    d = np.linalg.norm(y[:, None] - y[None], axis=-1)
    np.fill_diagonal(d, np.inf)
    assert d[3].argmin() == 7 and d[7].argmin() == 3


def test_tsne_kl_nonincreasing_after_exaggeration():
    rng = np.random.default_rng(5)
    x = np.concatenate([rng.normal(0, 1, (40, 6)), rng.normal(6, 1, (40, 6))])
    trace = []
    cfg = TsneConfig(perplexity=10, iters=600)
    tsne_embed(x, cfg, trace=trace)
    tail = np.array(trace[cfg.exaggeration_iters:])
    assert np.all(tail[50:] <= tail[:-50] + 1e-6)


def test_tsne_deterministic_and_rejects_large_perplexity():
    x = np.random.default_rng(6).normal(size=(40, 3))
    cfg = TsneConfig(perplexity=5, iters=100, seed=3)
    assert tsne_embed(x, cfg).points.tobytes() == tsne_embed(x, cfg).points.tobytes()
    with pytest.raises(ValueError):
        tsne_embed(x, TsneConfig(perplexity=15))


# -- DBSCAN ---------------------------------------------------------------------------------


def test_dbscan_two_blobs():
    rng = np.random.default_rng(7)
    x = np.concatenate([rng.normal(0, 0.1, (30, 2)), rng.normal(5, 0.1, (30, 2))])
    cl = dbscan(x, 1.0, 4)
    assert cl.n_clusters == 2 and cl.n_noise == 0
    assert len(set(cl.labels[:30])) == 1 and len(set(cl.labels[30:])) == 1


def test_dbscan_all_noise_when_min_neighbors_exceeds_size():
    x = np.random.default_rng(8).uniform(size=(20, 2))
    cl = dbscan(x, 0.5, 21)
    assert cl.n_clusters == 0 and cl.n_noise == 20


def test_dbscan_matches_naive_reference():
    rng = np.random.default_rng(9)
    for trial in range(20):
        centers = rng.uniform(-5, 5, size=(4, 2))
        x = np.concatenate([c + rng.normal(0, 0.6, (50, 2)) for c in centers])
        eps = rng.uniform(0.2, 1.0)
        mn = int(rng.integers(2, 8))
        assert same_partition(dbscan(x, eps, mn).labels, naive_dbscan(x, eps, mn))


def test_dbscan_core_points_permutation_invariant():
    rng = np.random.default_rng(10)
    x = rng.normal(size=(120, 2))
    perm = rng.permutation(120)
    eps, mn = 0.4, 5
    a = dbscan(x, eps, mn).labels
    b = np.empty(120, int)
    b[perm] = dbscan(x[perm], eps, mn).labels
    core = np.array([(np.linalg.norm(x - p, axis=1) <= eps).sum() >= mn for p in x])
    assert same_partition(a[core], b[core])


def test_dbscan_rejects_bad_params():
    with pytest.raises(ValueError):
        dbscan(np.zeros((3, 2)), 0.0, 2)


# -- consistency -----------------------------------------------------------------------------


def test_consistency_cases():
    truth = ["a"] * 4 + ["b"] * 4 + ["c"] * 4
    c = cluster_consistency(np.array([0] * 4 + [1] * 4 + [2] * 4), truth)
    assert c.purity == 1.0 and c.refinement
    # Five clusters each inside one class.
    c = cluster_consistency(np.array([0, 0, 1, 1, 2, 2, 2, 3, 4, 4, 4, 4]), truth)
    assert c.purity == 1.0 and c.refinement
    # One cluster straddles a and b; noise ignored.
    c = cluster_consistency(np.array([0, 0, 0, 0, 0, 0, 1, 1, 2, 2, -1, -1]), truth)
    assert not c.refinement
    assert c.purity == pytest.approx(8 / 10)
    assert c.table.sum() == 10


def test_sweep_puts_refining_settings_first():
    rng = np.random.default_rng(11)
    x = np.concatenate([rng.normal(0, 0.2, (20, 2)), rng.normal(4, 0.2, (20, 2))])
    rows = sweep_dbscan(x, ["a"] * 20 + ["b"] * 20, [0.5, 10.0], [3])
    assert rows[0]["refinement"] and rows[0]["eps"] == 0.5
    assert not rows[-1]["refinement"]


def test_balance_classes_to_median():
    labels = ["a"] * 10 + ["b"] * 4 + ["c"] * 6
    idx = balance_classes(list(range(20)), labels, np.random.default_rng(0))
    picked = [labels[i] for i in idx]
    assert picked.count("a") == picked.count("b") == picked.count("c") == 6


# -- outliers -------------------------------------------------------------------------------------


def test_outlier_probability_closed_forms():
    s = outlier_probabilities([("a", 0.0), ("b", math.log(2)), ("c", 2 * math.log(2))])
    assert [x.id for x in s] == ["c", "b", "a"]
    np.testing.assert_allclose([x.prob for x in s], [1.0, 0.5, 0.25], atol=1e-12)
    assert outlier_probabilities([("x", 3.0)])[0].prob == 1.0
    assert all(x.prob == 1.0 for x in outlier_probabilities([(k, 1.0) for k in "abc"]))


def test_outlier_probabilities_in_unit_interval():
    losses = np.random.default_rng(12).exponential(size=100)
    probs = [s.prob for s in outlier_probabilities(zip(range(100), losses))]
    assert all(0 < p <= 1 for p in probs) and probs == sorted(probs, reverse=True)
    assert probs[0] == 1.0


def test_outlier_probabilities_reject_bad_losses():
    with pytest.raises(ValueError):
        outlier_probabilities([])
    with pytest.raises(ValueError):
        outlier_probabilities([("a", -1.0)])


def test_top_outliers_k_zero():
    assert top_outliers(None, None, 0) == []
