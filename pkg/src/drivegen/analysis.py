"""Exploratory analysis of autoencoder latents.

Dimensionality reduction (PCA, SVD, exact t-SNE), density clustering,
agreement of clusters with rule labels, and reconstruction-loss outlier
probabilities.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .nn.rng import stream


@dataclass
class Embedding:
    points: np.ndarray  # [n, k]
    method: str
    params: dict = field(default_factory=dict)
    ids: tuple[str, ...] | None = None

    def __post_init__(self):
        if not np.isfinite(self.points).all():
            raise FloatingPointError(f"{self.method} embedding has non-finite coordinates")

    def __len__(self):
        return self.points.shape[0]


@dataclass
class PcaFit:
    mean: np.ndarray
    components: np.ndarray  # [d, d], rows sorted by decreasing variance
    variance: np.ndarray  # per-component variance, descending
    explained_ratio: np.ndarray

    def transform(self, x, k: int) -> np.ndarray:
        return (np.asarray(x) - self.mean) @ self.components[:k].T

    def reconstruct(self, z: np.ndarray) -> np.ndarray:
        k = z.shape[1]
        return z @ self.components[:k] + self.mean


def _check_k(x: np.ndarray, k: int) -> None:
    n, d = x.shape
    if k < 1 or k >= d:
        raise ValueError(f"number of components must satisfy 1 <= k < {d}, got {k}")
    if n <= k:
        raise ValueError(f"need more samples ({n}) than components ({k})")


def pca_fit(x) -> PcaFit:
    x = np.asarray(x, dtype=np.float64)
    mean = x.mean(axis=0)
    cov = np.cov(x - mean, rowvar=False, bias=True).reshape(x.shape[1], x.shape[1])
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1]
    vals = np.clip(vals[order], 0.0, None)
    total = vals.sum()
    ratio = vals / total if total > 0 else np.zeros_like(vals)
    return PcaFit(mean, vecs[:, order].T, vals, ratio)


def pca_fit_transform(x, k: int = 2, ids=None) -> tuple[Embedding, list[float]]:
    """Project onto the top ``k`` covariance eigenvectors.

    Returns the embedding and the explained-variance fraction of each kept
    component (descending; sums to at most 1).
    """
    x = np.asarray(x, dtype=np.float64)
    _check_k(x, k)
    fit = pca_fit(x)
    emb = Embedding(fit.transform(x, k), "PCA", {"k": k}, ids)
    return emb, fit.explained_ratio[:k].tolist()


def svd_transform(x, k: int = 2, ids=None) -> Embedding:
    """Projection onto the top ``k`` right singular vectors of the uncentered data."""
    x = np.asarray(x, dtype=np.float64)
    _check_k(x, k)
    _, s, vt = np.linalg.svd(x, full_matrices=False)
    return Embedding(x @ vt[:k].T, "SVD", {"k": k, "singular_values": s[:k].tolist()}, ids)


# -- t-SNE -----------------------------------------------------------------------------


@dataclass
class TsneConfig:
    perplexity: float = 30.0
    iters: int = 1000
    lr: float = 200.0
    early_exaggeration: float = 12.0
    exaggeration_iters: int = 250
    seed: int = 0


def _sq_dists(x: np.ndarray) -> np.ndarray:
    sq = np.sum(x * x, axis=1)
    d = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.fill_diagonal(d, 0.0)
    return np.maximum(d, 0.0)


def conditional_affinities(x, perplexity: float, tol: float = 1e-4, max_steps: int = 200):
    """Row-stochastic Gaussian affinities with per-point precision found by bisection.

    Each row's Shannon entropy (nats) matches ``log(perplexity)`` within ``tol``.
    Returns ``(P_conditional, entropies)``.
    """
    d = _sq_dists(np.asarray(x, dtype=np.float64))
    n = d.shape[0]
    target = math.log(perplexity)
    p = np.zeros((n, n))
    ent = np.zeros(n)
    for i in range(n):
        di = np.delete(d[i], i)
        di = di - di.min()  # shift-invariant; keeps exp() in range
        beta, lo, hi = 1.0, 0.0, np.inf
        for _ in range(max_steps):
            w = np.exp(-di * beta)
            sw = w.sum()
            h = math.log(sw) + beta * float(di @ w) / sw
            if abs(h - target) < tol:
                break
            if h > target:
                lo = beta
                beta = beta * 2.0 if hi == np.inf else 0.5 * (beta + hi)
            else:
                hi = beta
                beta = 0.5 * (beta + lo)
        row = w / sw
        ent[i] = h
        p[i, np.arange(n) != i] = row
    return p, ent


def _kl(p: np.ndarray, q: np.ndarray) -> float:
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def tsne_embed(x, cfg: TsneConfig | None = None, ids=None, trace: list | None = None) -> Embedding:
    """Exact O(n^2) t-SNE to two dimensions.

    Gradient descent on KL(P || Q) with momentum 0.5 during early
    exaggeration and 0.8 afterwards, plus the usual per-coordinate adaptive
    gains.  If ``trace`` is given, the KL divergence (unexaggerated P) is
    appended after every iteration.
    """
    cfg = cfg or TsneConfig()
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if 3.0 * cfg.perplexity >= n:
        raise ValueError(f"perplexity {cfg.perplexity} too large for {n} points (need 3*perplexity < n)")
    pc, _ = conditional_affinities(x, cfg.perplexity)
    p = (pc + pc.T) / (2.0 * n)
    p = np.maximum(p, 1e-12)
    np.fill_diagonal(p, 0.0)

    rng = stream(cfg.seed, "tsne")
    y = rng.normal(0.0, 1e-4, size=(n, 2))
    vel = np.zeros_like(y)
    gains = np.ones_like(y)
    for it in range(cfg.iters):
        exaggerating = it < cfg.exaggeration_iters
        pe = p * cfg.early_exaggeration if exaggerating else p
        num = 1.0 / (1.0 + _sq_dists(y))
        np.fill_diagonal(num, 0.0)
        q = np.maximum(num / num.sum(), 1e-12)
        w = (pe - q) * num
        grad = 4.0 * (w.sum(axis=1)[:, None] * y - w @ y)
        momentum = 0.5 if exaggerating else 0.8
        same = np.sign(grad) == np.sign(vel)
        gains = np.where(same, gains * 0.8, gains + 0.2)
        gains = np.maximum(gains, 0.01)
        vel = momentum * vel - cfg.lr * gains * grad
        y = y + vel
        y = y - y.mean(axis=0)
        if trace is not None:
            num = 1.0 / (1.0 + _sq_dists(y))
            np.fill_diagonal(num, 0.0)
            trace.append(_kl(p, np.maximum(num / num.sum(), 1e-12)))
    params = {"perplexity": cfg.perplexity, "iters": cfg.iters, "lr": cfg.lr,
              "early_exaggeration": cfg.early_exaggeration,
              "exaggeration_iters": cfg.exaggeration_iters, "seed": cfg.seed}
    return Embedding(y, "TSNE", params, ids)


# -- DBSCAN ------------------------------------------------------------------------------

NOISE = -1


@dataclass
class ClusterLabels:
    labels: np.ndarray
    eps: float
    min_neighbors: int

    @property
    def n_clusters(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size and self.labels.max() >= 0 else 0

    @property
    def n_noise(self) -> int:
        return int(np.sum(self.labels == NOISE))


def dbscan(e, eps: float, min_neighbors: int) -> ClusterLabels:
    """Density clustering with Euclidean neighbourhoods of radius ``eps``.

    A point is core when its closed ``eps``-ball (itself included) holds at
    least ``min_neighbors`` points.  Clusters are grown breadth-first from
    the lowest-index unassigned core point; a border point joins the first
    cluster that reaches it, everything else is noise (-1).
    """
    if eps <= 0 or min_neighbors < 1:
        raise ValueError("need eps > 0 and min_neighbors >= 1")
    pts = np.asarray(e.points if isinstance(e, Embedding) else e, dtype=np.float64)
    n = pts.shape[0]
    labels = np.full(n, NOISE, dtype=int)
    if n == 0:
        return ClusterLabels(labels, eps, min_neighbors)
    nbrs = cKDTree(pts).query_ball_point(pts, r=eps)
    core = np.array([len(nb) >= min_neighbors for nb in nbrs])
    cluster = 0
    for i in range(n):
        if labels[i] != NOISE or not core[i]:
            continue
        labels[i] = cluster
        queue = deque([i])
        while queue:
            j = queue.popleft()
            if not core[j]:
                continue
            for k in nbrs[j]:
                if labels[k] == NOISE:
                    labels[k] = cluster
                    queue.append(k)
        cluster += 1
    return ClusterLabels(labels, eps, min_neighbors)


@dataclass
class Consistency:
    purity: float
    refinement: bool
    table: np.ndarray  # [n_clusters, n_classes], noise excluded
    classes: list


def cluster_consistency(pred: ClusterLabels | np.ndarray, truth) -> Consistency:
    """Purity of predicted clusters against truth labels, noise excluded.

    ``refinement`` holds when every predicted cluster falls inside a single
    truth class.
    """
    labels = np.asarray(pred.labels if isinstance(pred, ClusterLabels) else pred)
    truth = list(truth)
    if len(truth) != labels.size:
        raise ValueError(f"{labels.size} cluster labels but {len(truth)} truth labels")
    classes = sorted(set(truth), key=lambda c: getattr(c, "value", c))
    col = {c: k for k, c in enumerate(classes)}
    n_clusters = int(labels.max()) + 1 if labels.size and labels.max() >= 0 else 0
    table = np.zeros((n_clusters, len(classes)), dtype=int)
    for lab, t in zip(labels, truth):
        if lab != NOISE:
            table[lab, col[t]] += 1
    kept = int(table.sum())
    if kept == 0:
        return Consistency(0.0, False, table, classes)
    purity = float(table.max(axis=1).sum() / kept)
    refinement = bool(np.all((table > 0).sum(axis=1) == 1))
    return Consistency(purity, refinement, table, classes)


def sweep_dbscan(e, truth, eps_values, min_neighbors_values):
    """Grid over DBSCAN parameters; one row per setting, best (refining, purest) first."""
    rows = []
    for eps in eps_values:
        for mn in min_neighbors_values:
            cl = dbscan(e, eps, mn)
            cons = cluster_consistency(cl, truth)
            rows.append({"eps": float(eps), "min_neighbors": int(mn),
                         "n_clusters": cl.n_clusters, "n_noise": cl.n_noise,
                         "purity": cons.purity, "refinement": cons.refinement,
                         "labels": cl})
    rows.sort(key=lambda r: (not r["refinement"], -r["purity"], r["n_noise"], r["eps"],
                             r["min_neighbors"]))
    return rows


def balance_classes(items: list, labels: list, rng: np.random.Generator):
    """Resample every class to the median class size.

    Smaller classes are drawn with replacement, larger ones subsampled
    without.  Returns the selected indices into ``items``, grouped by class.
    """
    groups: dict = {}
    for k, lab in enumerate(labels):
        groups.setdefault(lab, []).append(k)
    target = int(np.median([len(v) for v in groups.values()]))
    picked = []
    for lab in sorted(groups, key=lambda c: getattr(c, "value", c)):
        idx = np.array(groups[lab])
        if len(idx) >= target:
            picked.extend(np.sort(rng.choice(idx, target, replace=False)).tolist())
        else:
            extra = rng.choice(idx, target - len(idx), replace=True)
            picked.extend(idx.tolist() + extra.tolist())
    return picked


# -- outliers ----------------------------------------------------------------------------


@dataclass(frozen=True)
class OutlierScore:
    id: str
    loss: float
    prob: float


def outlier_probabilities(losses) -> list[OutlierScore]:
    """``prob = exp(loss - max_loss)``, sorted by descending probability."""
    losses = list(losses)
    if not losses:
        raise ValueError("no losses given")
    vals = np.array([float(v) for _, v in losses])
    if np.any(vals < 0) or not np.isfinite(vals).all():
        raise ValueError("losses must be finite and non-negative")
    probs = np.exp(vals - vals.max())
    order = sorted(range(len(losses)), key=lambda k: (-probs[k], k))
    return [OutlierScore(str(losses[k][0]), float(vals[k]), float(probs[k])) for k in order]


def top_outliers(ds, ae, k: int):
    """Score every trajectory of a normalized dataset by reconstruction loss; keep the top ``k``."""
    from .autoencoder import reconstruction_losses

    if k <= 0:
        return []
    losses = reconstruction_losses(ae, ds)
    scores = outlier_probabilities(zip(ds.ids, losses))
    by_id = {t.id: t for t in ds}
    return [(by_id[s.id], s) for s in scores[:k]]
