"""Set-level comparison of trajectory collections.

DTW distances between generated (GS, M rows) and real (RS, N columns)
trajectories feed three measures: matching (mean nearest-real distance),
coverage (fraction of real samples that are somebody's nearest neighbour)
and a one-to-one Hungarian assignment, optionally averaged over only the
best-matched fraction of pairs.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .nn.rng import stream
from .trajectory import Dataset, Trajectory


# The bundled TBB is too old for numba; prefer OpenMP to skip the probe warning.
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]


class ProtocolError(ValueError):
    """Sets too small (or mis-shaped) for the requested evaluation protocol."""


# -- DTW -----------------------------------------------------------------------------


@numba.njit(cache=True)
def _dtw_kernel(a, b):
    n, m = a.shape[0], b.shape[0]
    prev = np.full(m + 1, np.inf)
    cur = np.empty(m + 1)
    prev[0] = 0.0
    for i in range(1, n + 1):
        cur[0] = np.inf
        ax, ay = a[i - 1, 0], a[i - 1, 1]
        for j in range(1, m + 1):
            dx = ax - b[j - 1, 0]
            dy = ay - b[j - 1, 1]
            cost = math.sqrt(dx * dx + dy * dy)
            best = prev[j - 1]
            if prev[j] < best:
                best = prev[j]
            if cur[j - 1] < best:
                best = cur[j - 1]
            cur[j] = cost + best
        prev, cur = cur, prev
    return prev[m]


@numba.njit(cache=True, parallel=True)
def _pairwise_kernel(flat_a, off_a, flat_b, off_b):
    na, nb = off_a.shape[0] - 1, off_b.shape[0] - 1
    out = np.empty((na, nb))
    for k in numba.prange(na * nb):
        i, j = k // nb, k % nb
        out[i, j] = _dtw_kernel(flat_a[off_a[i]:off_a[i + 1]], flat_b[off_b[j]:off_b[j + 1]])
    return out


def _points(t) -> np.ndarray:
    pts = t.points if isinstance(t, Trajectory) else t
    return np.ascontiguousarray(pts, dtype=np.float64).reshape(-1, 2)


def dtw(a, b) -> float:
    """Full-window DTW path cost with Euclidean local cost (no normalization)."""
    pa, pb = _points(a), _points(b)
    if len(pa) == 0 or len(pb) == 0:
        raise ValueError("dtw of an empty sequence")
    return float(_dtw_kernel(pa, pb))


@dataclass(frozen=True)
class DistanceMatrix:
    rows: tuple[str, ...]
    cols: tuple[str, ...]
    d: np.ndarray

    def __post_init__(self):
        if self.d.shape != (len(self.rows), len(self.cols)):
            raise ValueError("distance matrix shape does not match ids")
        if len(set(self.rows)) != len(self.rows) or len(set(self.cols)) != len(self.cols):
            raise ValueError("duplicate ids in distance matrix")
        if not (np.isfinite(self.d).all() and (self.d >= 0).all()):
            raise ValueError("distances must be finite and non-negative")

    @classmethod
    def from_array(cls, d) -> "DistanceMatrix":
        d = np.asarray(d, dtype=np.float64)
        return cls(tuple(f"g{i}" for i in range(d.shape[0])),
                   tuple(f"r{j}" for j in range(d.shape[1])), d)

    @property
    def shape(self):
        return self.d.shape

    def select(self, rows=None, cols=None) -> "DistanceMatrix":
        rows = np.arange(self.d.shape[0]) if rows is None else np.asarray(rows)
        cols = np.arange(self.d.shape[1]) if cols is None else np.asarray(cols)
        return DistanceMatrix(tuple(self.rows[i] for i in rows), tuple(self.cols[j] for j in cols),
                              self.d[np.ix_(rows, cols)])


def _pack(ds) -> tuple[np.ndarray, np.ndarray]:
    arrs = [_points(t) for t in ds]
    off = np.zeros(len(arrs) + 1, dtype=np.int64)
    off[1:] = np.cumsum([len(a) for a in arrs])
    return np.concatenate(arrs, axis=0), off


def pairwise_matrix(gs: Dataset, rs: Dataset) -> DistanceMatrix:
    """``d[i, j] = dtw(gs[i], rs[j])``; cells are computed independently in parallel."""
    if len(gs) == 0 or len(rs) == 0:
        raise ValueError("pairwise_matrix needs two non-empty sets")
    fa, oa = _pack(gs)
    fb, ob = _pack(rs)
    return DistanceMatrix(tuple(gs.ids), tuple(rs.ids), _pairwise_kernel(fa, oa, fb, ob))


# -- matching / coverage -------------------------------------------------------------


def _arr(dm) -> np.ndarray:
    return dm.d if isinstance(dm, DistanceMatrix) else np.asarray(dm, dtype=np.float64)


def matching_score(dm) -> float:
    d = _arr(dm)
    return float(d.min(axis=1).sum() / d.shape[0])


def coverage_score(dm) -> float:
    d = _arr(dm)
    # np.argmin returns the first (lowest-index) minimum.
    return len(set(np.argmin(d, axis=1).tolist())) / d.shape[1]


# -- Hungarian ---------------------------------------------------------------------


def _assign(cost: np.ndarray) -> np.ndarray:
    """Shortest-augmenting-path assignment with dual potentials, O(n^2 m).

    ``cost`` is ``n x m`` with ``n <= m``; returns the column for each row.
    """
    n, m = cost.shape
    inf = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    match = np.zeros(m + 1, dtype=np.int64)  # match[j] = row (1-based) owning column j
    way = np.zeros(m + 1, dtype=np.int64)
    for i in range(1, n + 1):
        match[0] = i
        j0 = 0
        minv = np.full(m + 1, inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = match[j0]
            free = ~used[1:]
            red = cost[i0 - 1] - u[i0] - v[1:]
            better = free & (red < minv[1:])
            minv[1:][better] = red[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], inf)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            u[match[used]] += delta
            v[used] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if match[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            match[j0] = match[j1]
            j0 = j1
    cols = np.empty(n, dtype=np.int64)
    for j in range(1, m + 1):
        if match[j]:
            cols[match[j] - 1] = j - 1
    return cols


def hungarian(dm, rng: np.random.Generator | None = None):
    """Optimal one-to-one assignment minimizing the summed distance.

    Non-square matrices are rejected unless ``rng`` is given, in which case
    the larger side is uniformly subsampled down to the smaller size.
    Returns ``(assignment, total)`` with ``assignment`` a list of ``(i, j)``
    index pairs into the (possibly subsampled) input matrix.
    """
    d = _arr(dm)
    n, m = d.shape
    rows, cols = np.arange(n), np.arange(m)
    if n != m:
        if rng is None:
            raise ProtocolError(f"hungarian needs a square matrix, got {n}x{m}")
        if n > m:
            rows = np.sort(rng.choice(n, m, replace=False))
        else:
            cols = np.sort(rng.choice(m, n, replace=False))
        d = d[np.ix_(rows, cols)]
    if d.shape[0] == 0:
        return [], 0.0
    pick = _assign(d)
    pairs = [(int(rows[i]), int(cols[pick[i]])) for i in range(len(pick))]
    total = float(sum(d[i, pick[i]] for i in range(len(pick))))
    return pairs, total


def hungarian_truncated(matched, fraction: float = 0.75) -> float:
    """Mean of the smallest ``ceil(fraction * K)`` matched distances."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must lie in (0, 1]")
    vals = np.sort(np.asarray(matched, dtype=np.float64))
    if vals.size == 0:
        raise ValueError("no matched distances")
    k = math.ceil(fraction * vals.size - 1e-12)
    return float(vals[:k].mean())


# -- protocol ----------------------------------------------------------------------

METRICS = ("matching", "coverage", "hungarian_total", "hungarian_mean", "hungarian_truncated")


@dataclass
class EvalReport:
    matching: float
    coverage: float
    hungarian_total: float
    hungarian_mean: float
    hungarian_truncated: float
    matched: list[float]
    m: int
    n: int
    seed: int
    run: int = 0


@dataclass
class EvalStats:
    runs: list[EvalReport]
    label: str = ""
    summary: dict[str, dict[str, float]] = field(init=False)

    def __post_init__(self):
        self.summary = {}
        for key in METRICS:
            vals = [getattr(r, key) for r in self.runs]
            self.summary[key] = {"min": float(min(vals)), "max": float(max(vals)),
                                 "avg": float(np.mean(vals))}


def _one_run(gs: Dataset, rs: Dataset, n: int, m_over_n: int, rng, seed, run,
             truncate: float) -> EvalReport:
    m = m_over_n * n
    rs_idx = np.sort(rng.choice(len(rs), n, replace=False))
    gs_idx = np.sort(rng.choice(len(gs), m, replace=False))
    dm = pairwise_matrix(gs.subset(gs_idx), rs.subset(rs_idx))
    # Hungarian on an equal-size draw from the M generated rows.
    square_rows = np.sort(rng.choice(m, n, replace=False))
    pairs, total = hungarian(dm.d[square_rows])
    matched = sorted(float(dm.d[square_rows][i, j]) for i, j in pairs)
    return EvalReport(
        matching=matching_score(dm), coverage=coverage_score(dm),
        hungarian_total=total, hungarian_mean=float(np.mean(matched)),
        hungarian_truncated=hungarian_truncated(matched, truncate),
        matched=matched, m=m, n=n, seed=seed, run=run)


def evaluate_sets(gs: Dataset, rs: Dataset, runs: int = 5, m_over_n: int = 4,
                  n: int | None = None, seed: int = 0, truncate: float = 0.75,
                  label: str = "") -> EvalStats:
    """Matching, coverage and Hungarian scores over ``runs`` random draws.

    Each run draws ``n`` real and ``M = m_over_n * n`` generated samples
    (``n`` defaults to the largest size both sets allow).
    """
    if runs < 1:
        raise ProtocolError("runs must be >= 1")
    if n is None:
        n = min(len(rs), len(gs) // m_over_n)
    if n < 1 or len(rs) < n or len(gs) < m_over_n * n:
        raise ProtocolError(f"need |RS| >= {n} and |GS| >= {m_over_n}*{n}; "
                            f"got |RS|={len(rs)}, |GS|={len(gs)}")
    reports = [_one_run(gs, rs, n, m_over_n, stream(seed, "eval", r), seed, r, truncate)
               for r in range(runs)]
    return EvalStats(reports, label)


def split_halves(rs: Dataset, rng: np.random.Generator) -> tuple[Dataset, Dataset]:
    perm = rng.permutation(len(rs))
    half = len(rs) // 2
    return rs.subset(np.sort(perm[:half])), rs.subset(np.sort(perm[half:2 * half]))


def baseline_split_eval(rs: Dataset, runs: int = 5, m_over_n: int = 4, n: int | None = None,
                        seed: int = 0, truncate: float = 0.75) -> EvalStats:
    """Real-versus-real baseline: each run splits RS into disjoint halves,
    one half standing in for the generated set."""
    half = len(rs) // 2
    if n is None:
        n = half // m_over_n
    if n < 1 or half < m_over_n * n:
        raise ProtocolError(f"baseline needs |RS| >= 2*{m_over_n}*n; got |RS|={len(rs)}, n={n}")
    reports = []
    for r in range(runs):
        rng = stream(seed, "baseline", r)
        fake, real = split_halves(rs, rng)
        reports.append(_one_run(fake, real, n, m_over_n, rng, seed, r, truncate))
    return EvalStats(reports, "Real Set (Baseline)")


# -- report output -----------------------------------------------------------------


def stats_csv(stats_list: list[EvalStats]) -> str:
    """Raw per-run rows followed by one summary row per set and statistic."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["set", "row", *METRICS, "M", "N", "seed"])
    for st in stats_list:
        for r in st.runs:
            w.writerow([st.label, f"run{r.run}", *(repr(getattr(r, k)) for k in METRICS),
                        r.m, r.n, r.seed])
    for st in stats_list:
        for agg in ("min", "max", "avg"):
            w.writerow([st.label, agg, *(repr(st.summary[k][agg]) for k in METRICS), "", "", ""])
    return buf.getvalue()


def matched_curve_csv(stats_list: list[EvalStats]) -> str:
    """Sorted matched distances per set and run (the matched-distance curve)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["set", "run", "rank", "distance"])
    for st in stats_list:
        for r in st.runs:
            for k, dist in enumerate(r.matched):
                w.writerow([st.label, r.run, k, repr(dist)])
    return buf.getvalue()


def format_tables(stats_list: list[EvalStats]) -> str:
    """Two plain-text tables: Matching/Coverage and Hungarian/Hungarian (truncated)."""
    def block(title, keys, names):
        head = f"{'Set':<22}" + "".join(f"| {n:^26}" for n in names)
        sub = f"{'':<22}" + "| {:>8}{:>9}{:>9} ".format("Min", "Max", "Avg") * len(keys)
        lines = [title, head, sub, "-" * len(sub)]
        for st in stats_list:
            cells = ""
            for k in keys:
                s = st.summary[k]
                cells += f"| {s['min']:>8.3f}{s['max']:>9.3f}{s['avg']:>9.3f} "
            lines.append(f"{st.label:<22}" + cells)
        return "\n".join(lines)

    return (block("Matching and coverage", ["matching", "coverage"], ["Matching", "Coverage"])
            + "\n\n"
            + block("Hungarian distance", ["hungarian_mean", "hungarian_truncated"],
                    ["Hungarian", "Hungarian (75%)"]) + "\n")
