"""Deterministic SVG plots.

Every plot is plain text built from fixed-precision coordinates, so the same
input always produces the same bytes.  Only data series are drawn as
``<path>``/``<circle>`` elements; frame and ticks use ``<line>`` and
``<text>``, which keeps element counts easy to check.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 640, 480
MARGIN = (60, 20, 20, 50)  # left, right, top, bottom
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2",
           "#7f7f7f", "#bcbd22", "#17becf")
NOISE_COLOR = "#999999"


class PlotKind(enum.Enum):
    TrajectoryLines = "lines"
    ScatterEmbedding = "scatter"
    MatchedDistanceCurve = "matched"
    LossCurve = "loss"


@dataclass
class PlotSpec:
    kind: PlotKind
    input_path: str
    output_path: str
    xlabel: str = ""
    ylabel: str = ""
    title: str = ""


def _fmt(v: float) -> str:
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    span = hi - lo
    raw = span / n
    mag = 10.0 ** np.floor(np.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    start = np.ceil(lo / step) * step
    ticks = []
    v = start
    while v <= hi + 1e-9 * span:
        ticks.append(float(round(v / step) * step))
        v += step
    return ticks


class _Axes:
    def __init__(self, xs, ys, xlabel="", ylabel="", title=""):
        xs = np.asarray(xs, dtype=float).ravel()
        ys = np.asarray(ys, dtype=float).ravel()
        self.x0, self.x1 = self._range(xs)
        self.y0, self.y1 = self._range(ys)
        self.xlabel, self.ylabel, self.title = xlabel, ylabel, title
        left, right, top, bottom = MARGIN
        self.px0, self.px1 = left, WIDTH - right
        self.py0, self.py1 = HEIGHT - bottom, top

    @staticmethod
    def _range(v):
        v = v[np.isfinite(v)]
        if v.size == 0:
            return 0.0, 1.0
        lo, hi = float(v.min()), float(v.max())
        if hi - lo < 1e-12:
            lo, hi = lo - 0.5, hi + 0.5
        pad = 0.05 * (hi - lo)
        return lo - pad, hi + pad

    def px(self, x):
        return self.px0 + (np.asarray(x, float) - self.x0) / (self.x1 - self.x0) * (self.px1 - self.px0)

    def py(self, y):
        return self.py0 + (np.asarray(y, float) - self.y0) / (self.y1 - self.y0) * (self.py1 - self.py0)

    def frame(self) -> list[str]:
        out = [f'<rect x="{self.px0}" y="{self.py1}" width="{self.px1 - self.px0}" '
               f'height="{self.py0 - self.py1}" fill="none" stroke="#000"/>']
        for t in _nice_ticks(self.x0, self.x1):
            x = _fmt(self.px(t))
            out.append(f'<line x1="{x}" y1="{self.py0}" x2="{x}" y2="{self.py0 + 5}" stroke="#000"/>')
            out.append(f'<text x="{x}" y="{self.py0 + 18}" text-anchor="middle">{_tick(t)}</text>')
        for t in _nice_ticks(self.y0, self.y1):
            y = _fmt(self.py(t))
            out.append(f'<line x1="{self.px0 - 5}" y1="{y}" x2="{self.px0}" y2="{y}" stroke="#000"/>')
            out.append(f'<text x="{self.px0 - 8}" y="{y}" text-anchor="end" '
                       f'dominant-baseline="middle">{_tick(t)}</text>')
        cx = (self.px0 + self.px1) // 2
        cy = (self.py0 + self.py1) // 2
        if self.xlabel:
            out.append(f'<text x="{cx}" y="{HEIGHT - 10}" text-anchor="middle">'
                       f'{escape(self.xlabel)}</text>')
        if self.ylabel:
            out.append(f'<text x="15" y="{cy}" text-anchor="middle" '
                       f'transform="rotate(-90 15 {cy})">{escape(self.ylabel)}</text>')
        if self.title:
            out.append(f'<text x="{cx}" y="14" text-anchor="middle">{escape(self.title)}</text>')
        return out


def _tick(v: float) -> str:
    return f"{v:g}"


def _document(body: list[str]) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">')
    return "\n".join(['<?xml version="1.0" encoding="UTF-8"?>', head,
                      f'<rect width="{WIDTH}" height="{HEIGHT}" fill="#fff"/>', *body, "</svg>"]) + "\n"


def _polyline(ax: _Axes, x, y) -> str:
    xs, ys = ax.px(x), ax.py(y)
    pts = " L".join(f"{_fmt(a)} {_fmt(b)}" for a, b in zip(xs, ys))
    return f"M{pts}"


def _legend(names: list[str], colors: list[str], ax: _Axes) -> list[str]:
    out = []
    for k, (name, color) in enumerate(zip(names, colors)):
        y = ax.py1 + 12 + 14 * k
        out.append(f'<rect x="{ax.px1 - 120}" y="{y - 8}" width="10" height="10" fill="{color}"/>')
        out.append(f'<text x="{ax.px1 - 105}" y="{y + 1}">{escape(str(name))}</text>')
    return out


def trajectory_lines(trajs, xlabel="lateral [m]", ylabel="longitudinal [m]", title="",
                     colors=None) -> str:
    """One path per trajectory, lateral on x and longitudinal on y."""
    pts = [np.asarray(t.points if hasattr(t, "points") else t, dtype=float) for t in trajs]
    allp = np.concatenate(pts) if pts else np.zeros((0, 2))
    ax = _Axes(allp[:, 0], allp[:, 1], xlabel, ylabel, title)
    body = ax.frame()
    for k, p in enumerate(pts):
        color = colors[k] if colors is not None else PALETTE[k % len(PALETTE)]
        body.append(f'<path class="traj" d="{_polyline(ax, p[:, 0], p[:, 1])}" fill="none" '
                    f'stroke="{color}" stroke-width="1" stroke-opacity="0.7"/>')
    return _document(body)


def scatter_embedding(points, labels=None, xlabel="dim 1", ylabel="dim 2", title="") -> str:
    """Scatter of 2-d points coloured by label; label -1 (noise) is grey."""
    p = np.asarray(points, dtype=float).reshape(-1, 2)
    labels = list(labels) if labels is not None else [0] * len(p)
    ax = _Axes(p[:, 0], p[:, 1], xlabel, ylabel, title)
    body = ax.frame()
    names = sorted({str(v) for v in labels}, key=_label_key)
    color_of = {}
    k = 0
    for name in names:
        if name == "-1":
            color_of[name] = NOISE_COLOR
        else:
            color_of[name] = PALETTE[k % len(PALETTE)]
            k += 1
    xs, ys = ax.px(p[:, 0]), ax.py(p[:, 1])
    for x, y, lab in zip(xs, ys, labels):
        body.append(f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="2.5" fill="{color_of[str(lab)]}"/>')
    if len(names) > 1:
        body += _legend(names, [color_of[n] for n in names], ax)
    return _document(body)


def _label_key(s: str):
    try:
        return (0, float(s), "")
    except ValueError:
        return (1, 0.0, s)


def series_plot(series: dict[str, tuple], xlabel="", ylabel="", title="") -> str:
    """Line plot of named ``(x, y)`` series in insertion order."""
    xs = [np.asarray(v[0], float) for v in series.values()]
    ys = [np.asarray(v[1], float) for v in series.values()]
    ax = _Axes(np.concatenate(xs) if xs else [], np.concatenate(ys) if ys else [],
               xlabel, ylabel, title)
    body = ax.frame()
    colors = [PALETTE[k % len(PALETTE)] for k in range(len(series))]
    for x, y, c in zip(xs, ys, colors):
        keep = np.isfinite(y)
        if keep.sum() == 0:
            continue
        body.append(f'<path class="series" d="{_polyline(ax, x[keep], y[keep])}" fill="none" '
                    f'stroke="{c}" stroke-width="1.5"/>')
    if series:
        body += _legend(list(series), colors, ax)
    return _document(body)


def matched_distance_curve(curves: dict[str, np.ndarray], title="") -> str:
    """Sorted matched DTW distances per set, plotted against rank."""
    series = {}
    for name, d in curves.items():
        d = np.sort(np.asarray(d, float))
        series[name] = (np.arange(1, len(d) + 1), d)
    return series_plot(series, "matched pair (sorted)", "DTW distance", title)


def loss_curve(series: dict[str, tuple], title="") -> str:
    return series_plot(series, "iteration", "loss", title)
