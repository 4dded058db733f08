"""Front-path detection, velocity fits and decomposition summaries."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import Decomposition, FramePath, SnapshotField, WeightMask, lowrank_frames
from .lowrank import pod_baseline
from .shift import ShiftConfig, Transport

__all__ = [
    "FrontDetector",
    "FrontDetectionError",
    "detect_front_positions",
    "detect_front_path",
    "fit_velocity",
    "DecompositionSummary",
    "report",
]


class FrontDetectionError(ValueError):
    """Detection failed; ``columns`` lists the offending time indices."""

    def __init__(self, message: str, columns: Sequence[int] = ()):
        super().__init__(message)
        self.columns = list(columns)


@dataclass(frozen=True)
class FrontDetector:
    """How to locate a front in every time column.

    Parameters
    ----------
    mode : {"threshold", "peak"}
    level : float
        Threshold value (threshold mode only).
    direction : {"rising", "falling"}
        Sign of the crossing in increasing ``x`` (threshold mode only).
    search_window : tuple or array, optional
        Row index range ``(lo, hi)`` (inclusive, exclusive) on the field's
        grid, either one pair for all columns or an ``(n, 2)`` array.
    """

    mode: str = "threshold"
    level: float = 0.5
    direction: str = "rising"
    search_window: object = None

    def __post_init__(self):
        if self.mode not in ("threshold", "peak"):
            raise ValueError(f"unknown detector mode {self.mode!r}")
        if self.direction not in ("rising", "falling"):
            raise ValueError(f"unknown crossing direction {self.direction!r}")
        if self.mode == "threshold" and not np.isfinite(self.level):
            raise ValueError("threshold level must be finite")

    def windows(self, rows: int, n: int) -> np.ndarray:
        if self.search_window is None:
            return np.tile([0, rows], (n, 1))
        w = np.asarray(self.search_window, dtype=int)
        if w.shape == (2,):
            w = np.tile(w, (n, 1))
        if w.shape != (n, 2):
            raise ValueError(f"search window must be a pair or have shape ({n}, 2), got {w.shape}")
        return np.clip(w, 0, rows)


def _crossing(col, x, level, rising):
    s = col - level
    if not rising:
        s = -s
    # sign change from below to at-or-above between neighbours
    idx = np.flatnonzero((s[:-1] < 0) & (s[1:] >= 0))
    if idx.size == 0:
        return None, 0
    i = idx[0]
    frac = s[i] / (s[i] - s[i + 1])
    return x[i] + frac * (x[i + 1] - x[i]), idx.size


def _peak(col, lo, hi, periodic, dx, x):
    seg = col[lo:hi]
    if seg.size < 3 and not periodic:
        return None, 0
    j = int(np.argmax(seg))
    top = seg[j]
    span = np.ptp(seg)
    if span == 0:
        return None, 0
    ties = np.flatnonzero(seg >= top - 1e-12 * max(abs(top), span))
    if ties.size > 1 and np.any(np.diff(ties) > 1):
        return None, 2
    i = lo + j
    m = col.shape[0]
    if periodic:
        fm, fp = col[(i - 1) % m], col[(i + 1) % m]
    else:
        if i == 0 or i == m - 1:
            return None, 0
        fm, fp = col[i - 1], col[i + 1]
    f0 = col[i]
    if not (f0 >= fm and f0 >= fp and (f0 > fm or f0 > fp)):
        return None, 0
    curv = fm - 2.0 * f0 + fp
    offset = 0.5 * (fm - fp) / curv if curv < 0 else 0.0
    return x[i] + offset * dx, 1


def detect_front_positions(q: SnapshotField, det: FrontDetector) -> np.ndarray:
    """Sub-grid position of the front in every time column (physical ``x``).

    Threshold mode interpolates linearly between the two samples enclosing
    the crossing; peak mode fits a parabola through the maximum and its
    neighbours.

    Raises
    ------
    FrontDetectionError
        If some column has no crossing or peak, or several crossings and no
        search window was given.
    """
    values = np.asarray(q.values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise FrontDetectionError("field contains NaN or Inf")
    grid = q.grid
    rows, n = values.shape
    wins = det.windows(rows, n)
    x = grid.x
    missing, ambiguous = [], []
    pos = np.empty(n)
    for j in range(n):
        lo, hi = wins[j]
        col = values[:, j]
        if det.mode == "threshold":
            p, count = _crossing(col[lo:hi], x[lo:hi], det.level, det.direction == "rising")
            if count > 1 and det.search_window is None:
                ambiguous.append(j)
                continue
        else:
            p, count = _peak(col, lo, hi, grid.periodic and det.search_window is None, grid.dx, x)
            if count > 1:
                ambiguous.append(j)
                continue
        if p is None:
            missing.append(j)
            continue
        pos[j] = p
    if missing:
        what = "crossing of level %g" % det.level if det.mode == "threshold" else "peak"
        raise FrontDetectionError(f"no {what} in column(s) {_fmt(missing)}", missing)
    if ambiguous:
        raise FrontDetectionError(
            f"ambiguous front in column(s) {_fmt(ambiguous)}; give a search window", ambiguous)
    if grid.periodic:
        pos = np.unwrap(pos, period=grid.L)
    return pos


def _fmt(cols, limit=8):
    head = ", ".join(str(c) for c in cols[:limit])
    return head + (f", ... ({len(cols)} total)" if len(cols) > limit else "")


def detect_front_path(q: SnapshotField, det: FrontDetector, label: str = "detected") -> FramePath:
    """Front path relative to its position at the first time step."""
    pos = detect_front_positions(q, det)
    return FramePath(pos - pos[0], label)


def fit_velocity(path: FramePath, t) -> float:
    """Least-squares slope of ``path.shifts`` against the times ``t``."""
    t = np.asarray(t, dtype=float)
    slope, _ = np.polyfit(t, np.asarray(path.shifts, dtype=float), 1)
    return float(slope)


@dataclass
class DecompositionSummary:
    """Diagnostics of a decomposition.

    ``rel_error`` is the relative Frobenius error of the low-rank
    reconstruction on the original domain; ``pod_error`` the error of a lab
    frame POD with ``total_rank`` modes.  ``lab_views[k]`` is frame ``k``
    (rank truncated) moved to the lab frame.
    """

    rel_error: float
    spectra: list
    lab_views: list
    pod_error: float
    total_rank: int
    constraint_violation: float

    @property
    def pod_ratio(self) -> float:
        """How many times smaller the decomposition error is than the POD error."""
        return self.pod_error / self.rel_error if self.rel_error > 0 else float("inf")

    def as_dict(self) -> dict:
        return {
            "rel_error": self.rel_error,
            "pod_error": self.pod_error,
            "total_rank": self.total_rank,
            "constraint_violation": self.constraint_violation,
            "spectra": [s.tolist() for s in self.spectra],
        }


def report(d: Decomposition, q: SnapshotField, weights: WeightMask | None = None,
           cfg: ShiftConfig | None = None, transport: Transport | None = None) -> DecompositionSummary:
    """Summarize a decomposition of ``q`` (both on the same extended grid)."""
    weights = weights or WeightMask.for_grid(q.grid)
    tr = transport or Transport(d.grid, d.paths, cfg)
    low = lowrank_frames(d)
    views = [tr.forward(k, f) for k, f in enumerate(low)]
    approx = np.zeros_like(q.values)
    for v in views:
        approx += v
    ref = np.linalg.norm(weights.apply(q.values))
    err = np.linalg.norm(weights.apply(q.values - approx))
    rel = float(err / ref) if ref > 0 else 0.0
    spectra = [np.linalg.svd(f, compute_uv=False) for f in d.frames]
    data = q.omega_values
    total = min(sum(d.ranks), min(data.shape))
    _, pod_err = pod_baseline(data, total)
    viol = float(np.linalg.norm(weights.apply(q.values - tr.combine(d.frames))))
    return DecompositionSummary(rel, spectra, views, pod_err, total, viol)
