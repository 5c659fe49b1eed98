"""Trajectory data model, JSONL dataset I/O, normalization and batching.

Also holds the synthetic scenario source that stands in for recorded
sensor data, and the explicit-rule labeler used to cross-check it.

Coordinates are ``(lat, lon)`` in meters relative to the ego vehicle,
positive lateral meaning left of ego, sampled at 10 Hz.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

SAMPLE_RATE_HZ = 10.0
LENGTH_RANGE = (30, 70)


class DatasetError(ValueError):
    """Malformed or invalid dataset content."""


class ScenarioLabel(enum.Enum):
    CutIn = "cutin"
    DriveByLeft = "driveby_left"
    DriveByRight = "driveby_right"
    Unknown = "unknown"


@dataclass(frozen=True, eq=False)
class Trajectory:
    id: str
    points: np.ndarray  # [n, 2] of (lat, lon)
    label: ScenarioLabel | None = None
    sample_rate_hz: float = SAMPLE_RATE_HZ

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise DatasetError(f"trajectory {self.id!r}: points must be [n, 2], got {pts.shape}")
        if not np.isfinite(pts).all():
            raise DatasetError(f"trajectory {self.id!r}: non-finite coordinate")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def lat(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def lon(self) -> np.ndarray:
        return self.points[:, 1]

    def with_points(self, points) -> "Trajectory":
        return replace(self, points=points)


@dataclass(frozen=True)
class NormStats:
    mean_lat: float
    mean_lon: float
    std_lat: float
    std_lon: float

    def __post_init__(self):
        if not (self.std_lat > 0 and self.std_lon > 0):
            raise ValueError("normalization stds must be positive")

    @property
    def mean(self) -> np.ndarray:
        return np.array([self.mean_lat, self.mean_lon])

    @property
    def std(self) -> np.ndarray:
        return np.array([self.std_lat, self.std_lon])

    def to_dict(self) -> dict:
        return {"mean_lat": self.mean_lat, "mean_lon": self.mean_lon,
                "std_lat": self.std_lat, "std_lon": self.std_lon}

    @classmethod
    def from_dict(cls, d) -> "NormStats":
        return cls(float(d["mean_lat"]), float(d["mean_lon"]),
                   float(d["std_lat"]), float(d["std_lon"]))


@dataclass(frozen=True)
class Dataset:
    trajectories: tuple[Trajectory, ...] = ()
    norm_stats: NormStats | None = None

    def __post_init__(self):
        trajs = tuple(self.trajectories)
        object.__setattr__(self, "trajectories", trajs)
        ids = [t.id for t in trajs]
        if len(set(ids)) != len(ids):
            seen, dup = set(), None
            for i in ids:
                if i in seen:
                    dup = i
                    break
                seen.add(i)
            raise DatasetError(f"duplicate trajectory id {dup!r}")

    def __len__(self) -> int:
        return len(self.trajectories)

    def __iter__(self):
        return iter(self.trajectories)

    def __getitem__(self, k):
        return self.trajectories[k]

    @property
    def ids(self) -> list[str]:
        return [t.id for t in self.trajectories]

    @property
    def lengths(self) -> np.ndarray:
        return np.array([len(t) for t in self.trajectories], dtype=int)

    def subset(self, index: Iterable[int]) -> "Dataset":
        return Dataset(tuple(self.trajectories[i] for i in index), self.norm_stats)


@dataclass(frozen=True)
class LengthBatch:
    length: int
    members: tuple[Trajectory, ...]

    def __post_init__(self):
        if not self.members:
            raise ValueError("empty length batch")
        if any(len(t) != self.length for t in self.members):
            raise ValueError("length batch member with wrong length")

    def array(self) -> np.ndarray:
        """Members stacked time-major: ``[length, batch, 2]``."""
        return np.stack([t.points for t in self.members], axis=1)


@dataclass(frozen=True)
class SynthParams:
    lane_offset_m: float = 3.5
    lon_range_m: tuple[float, float] = (10.0, 120.0)
    accel_range_mps2: tuple[float, float] = (-1.5, 1.5)
    noise_std_m: float = 0.15
    length_range: tuple[int, int] = LENGTH_RANGE
    decel_fraction: float = 0.15

    def __post_init__(self):
        for name in ("lon_range_m", "accel_range_mps2", "length_range"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ValueError(f"{name}: min must be < max")
        if self.noise_std_m < 0:
            raise ValueError("noise_std_m must be >= 0")
        if not 0.0 <= self.decel_fraction <= 1.0:
            raise ValueError("decel_fraction must lie in [0, 1]")


# -- I/O -------------------------------------------------------------------------


def validate_length(t: Trajectory, length_range=LENGTH_RANGE) -> None:
    lo, hi = length_range
    if not lo <= len(t) <= hi:
        raise DatasetError(f"trajectory {t.id!r} has {len(t)} points, outside [{lo}, {hi}]")


def _parse_record(line: str, lineno: int) -> Trajectory:
    try:
        rec = json.loads(line)
        label = rec.get("label")
        return Trajectory(id=str(rec["id"]), points=np.array(rec["points"], dtype=np.float64),
                          label=ScenarioLabel(label) if label is not None else None)
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise DatasetError(f"line {lineno}: {exc}") from exc


def load_dataset(path, length_range: tuple[int, int] | None = LENGTH_RANGE) -> Dataset:
    """Read a JSON Lines dataset.

    ``length_range=None`` disables the length check (for tests and tools
    working outside the 3-7 s window).
    """
    trajs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            t = _parse_record(line, lineno)
            if length_range is not None:
                try:
                    validate_length(t, length_range)
                except DatasetError as exc:
                    raise DatasetError(f"line {lineno}: {exc}") from None
            trajs.append(t)
    return Dataset(tuple(trajs))


def trajectory_record(t: Trajectory) -> dict:
    return {"id": t.id, "label": (t.label or ScenarioLabel.Unknown).value,
            "points": t.points.tolist()}


def save_dataset(ds: Dataset, path) -> None:
    # json uses repr() for floats, which round-trips float64 exactly.
    with open(path, "w", encoding="utf-8") as fh:
        for t in ds:
            fh.write(json.dumps(trajectory_record(t)))
            fh.write("\n")


# -- normalization ---------------------------------------------------------------


def fit_normalization(ds: Dataset) -> NormStats:
    """Population mean/std per feature over every point of every trajectory."""
    if len(ds) == 0:
        raise DatasetError("cannot fit normalization on an empty dataset")
    pts = np.concatenate([t.points for t in ds], axis=0)
    mean = pts.mean(axis=0)
    std = np.maximum(pts.std(axis=0), 1e-8)
    return NormStats(float(mean[0]), float(mean[1]), float(std[0]), float(std[1]))


def normalize(ds: Dataset, stats: NormStats) -> Dataset:
    mu, sd = stats.mean, stats.std
    return Dataset(tuple(t.with_points((t.points - mu) / sd) for t in ds), stats)


def denormalize(ds: Dataset, stats: NormStats | None = None) -> Dataset:
    stats = stats or ds.norm_stats
    if stats is None:
        raise ValueError("no normalization stats given or attached")
    mu, sd = stats.mean, stats.std
    return Dataset(tuple(t.with_points(t.points * sd + mu) for t in ds), None)


# -- batching ----------------------------------------------------------------------


def batch_by_length(ds: Dataset | Sequence[Trajectory]) -> list[LengthBatch]:
    groups: dict[int, list[Trajectory]] = {}
    for t in ds:
        groups.setdefault(len(t), []).append(t)
    return [LengthBatch(n, tuple(groups[n])) for n in sorted(groups)]


def split_batch(batch: LengthBatch, max_size: int | None) -> list[LengthBatch]:
    if max_size is None or len(batch.members) <= max_size:
        return [batch]
    m = batch.members
    return [LengthBatch(batch.length, m[k:k + max_size]) for k in range(0, len(m), max_size)]


# -- synthetic scenarios -----------------------------------------------------------

_CUTIN_STEEPNESS = 8.0
_DWELL_FRAMES = 20


def _unit_logistic(u: np.ndarray, mid: float, steep: float) -> np.ndarray:
    """Logistic rescaled to run exactly from 0 at u=0 to 1 at u=1."""
    s = 1.0 / (1.0 + np.exp(-steep * (u - mid)))
    s0 = 1.0 / (1.0 + np.exp(steep * mid))
    s1 = 1.0 / (1.0 + np.exp(-steep * (1.0 - mid)))
    return (s - s0) / (s1 - s0)


def _longitudinal(rng: np.random.Generator, n: int, lon0: float, v: float,
                  params: SynthParams) -> np.ndarray:
    tau = np.arange(n) / SAMPLE_RATE_HZ
    a = rng.uniform(*params.accel_range_mps2)
    return lon0 + v * tau + 0.5 * a * tau ** 2


def synth_scenario(kind: ScenarioLabel, params: SynthParams, rng: np.random.Generator,
                   id: str = "synth") -> Trajectory:
    """Draw one synthetic scenario trajectory of the given kind.

    Cut-ins start in the left lane, follow a logistic lateral transition
    into the ego lane that completes at least 2 s (20 frames) before the end,
    and stay ahead of ego.  Drive-bys keep to one adjacent lane.
    """
    lo_n, hi_n = params.length_range
    n = int(rng.integers(lo_n, hi_n + 1))
    off = params.lane_offset_m
    lon_lo, lon_hi = params.lon_range_m
    t = np.arange(n, dtype=np.float64)

    if kind is ScenarioLabel.CutIn:
        # Window opens at lateral-motion onset and closes once the vehicle has
        # held the ego lane for the dwell time, so the lane change fills
        # everything before the dwell.
        done = n - 1 - _DWELL_FRAMES
        u = np.clip(t / done, 0.0, 1.0)
        lat = off * (1.0 - _unit_logistic(u, 0.5, _CUTIN_STEEPNESS))
        lat[t >= done] = 0.0
        # Gap biased toward 20-60 m, as in recorded cut-ins.
        lon0 = lon_lo + (lon_hi - lon_lo) * rng.beta(2.0, 5.0)
        sign = -1.0 if rng.random() < params.decel_fraction else 1.0
        v = sign * rng.uniform(0.5, 4.0)
        lon = _longitudinal(rng, n, lon0, v, params)
        # Keep the vehicle in front of ego.
        floor = 5.0
        if lon.min() < floor:
            lon = lon + (floor - lon.min())
    elif kind in (ScenarioLabel.DriveByLeft, ScenarioLabel.DriveByRight):
        side = 1.0 if kind is ScenarioLabel.DriveByLeft else -1.0
        amp = rng.uniform(0.0, 0.4)
        phase = rng.uniform(0.0, 2 * np.pi)
        period = rng.uniform(30.0, 90.0)
        lat = side * off + amp * np.sin(2 * np.pi * t / period + phase)
        if side > 0:
            # Faster vehicle passing on the left.
            lon0 = rng.uniform(lon_lo - 30.0, lon_lo + 30.0)
            v = rng.uniform(2.0, 8.0)
        else:
            # Slower vehicle on the right being overtaken by ego.
            lon0 = rng.uniform(lon_lo + 10.0, lon_lo + 70.0)
            v = -rng.uniform(2.0, 8.0)
        lon = _longitudinal(rng, n, lon0, v, params)
    else:
        raise ValueError(f"cannot synthesize scenario kind {kind}")

    pts = np.column_stack([lat, lon])
    if params.noise_std_m > 0:
        pts = pts + rng.normal(0.0, params.noise_std_m, size=pts.shape)
    return Trajectory(id=id, points=pts, label=kind)


def synth_dataset(counts: dict[ScenarioLabel, int], params: SynthParams, seed: int) -> Dataset:
    """Draw ``counts[kind]`` trajectories per kind with per-trajectory seeded streams."""
    from .nn.rng import stream

    trajs = []
    for kind, count in counts.items():
        for k in range(count):
            rng = stream(seed, "synth", kind.value, k)
            trajs.append(synth_scenario(kind, params, rng, id=f"{kind.value}-{k:05d}"))
    return Dataset(tuple(trajs))


# -- rule labeler ------------------------------------------------------------------


def rule_label(t: Trajectory, lane_width_m: float = 3.5, dwell_s: float = 2.0) -> ScenarioLabel:
    half = lane_width_m / 2.0
    dwell = int(round(dwell_s * t.sample_rate_hz))
    lat = t.lat
    if lat[0] >= half and abs(lat[-1]) <= half and np.all(np.abs(lat[-dwell:]) <= half):
        return ScenarioLabel.CutIn
    if np.all(lat > half):
        return ScenarioLabel.DriveByLeft
    if np.all(lat < -half):
        return ScenarioLabel.DriveByRight
    return ScenarioLabel.Unknown
