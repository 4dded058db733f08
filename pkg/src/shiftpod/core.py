"""Snapshot fields, frame sets, domain extension and the reconstruction constraint.

A field sampled on ``m`` points in space and ``n`` time steps is stored as an
``m x n`` matrix (rows are space, columns are time).  For non-periodic data
the spatial axis is padded by ``ext_left`` and ``ext_right`` cells so that
every shift maps known or extension values into the original domain.  The
original data always lives in the rows ``ext_left : ext_left + m`` and the
weight mask marks exactly these rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from .shift import ShiftConfig, Transport

__all__ = [
    "GridSpec",
    "SnapshotField",
    "FramePath",
    "Decomposition",
    "WeightMask",
    "ObjectiveReport",
    "extend_domain",
    "initial_guess",
    "reconstruct",
    "residual",
    "project_constraint",
    "enforce_constraint",
    "constraint_violation",
]

_CEIL_SLACK = 1e-9


@dataclass(frozen=True)
class GridSpec:
    """Uniform space-time grid; ``x_i = i dx`` and ``t_j = j dt``."""

    m: int
    n: int
    dx: float = 1.0
    dt: float = 1.0
    L: float | None = None
    periodic: bool = False
    ext_left: int = 0
    ext_right: int = 0

    def __post_init__(self):
        if self.m < 2 or self.n < 2:
            raise ValueError(f"grid needs m, n >= 2, got m={self.m}, n={self.n}")
        if not (self.dx > 0 and self.dt > 0):
            raise ValueError("dx and dt must be positive")
        if self.L is None:
            object.__setattr__(self, "L", self.m * self.dx)
        if self.periodic and not math.isclose(self.L, self.m * self.dx, rel_tol=1e-12):
            raise ValueError("periodic grid requires L = m * dx")
        if self.ext_left < 0 or self.ext_right < 0:
            raise ValueError("extension sizes must be non-negative")
        if self.periodic and (self.ext_left or self.ext_right):
            raise ValueError("periodic grids are never extended")

    @property
    def rows(self) -> int:
        """Spatial size including the extension."""
        return self.m + self.ext_left + self.ext_right

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.n)

    @property
    def omega(self) -> slice:
        """Row slice of the original domain inside the extended grid."""
        return slice(self.ext_left, self.ext_left + self.m)

    @property
    def x(self) -> np.ndarray:
        """Spatial coordinates of all (extended) rows."""
        return (np.arange(self.rows) - self.ext_left) * self.dx

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.n) * self.dt

    def base(self) -> "GridSpec":
        return replace(self, ext_left=0, ext_right=0)

    def to_dict(self) -> dict:
        return {
            "m": self.m, "n": self.n, "dx": self.dx, "dt": self.dt, "L": self.L,
            "periodic": self.periodic, "ext_left": self.ext_left, "ext_right": self.ext_right,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        return cls(**{k: d[k] for k in ("m", "n", "dx", "dt", "L", "periodic", "ext_left", "ext_right") if k in d})


@dataclass(frozen=True)
class SnapshotField:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise ValueError(f"values of shape {values.shape} do not match grid {self.grid.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("snapshot field contains NaN or Inf")
        object.__setattr__(self, "values", values)

    @property
    def omega_values(self) -> np.ndarray:
        """The block of values on the original domain."""
        return self.values[self.grid.omega]


@dataclass(frozen=True)
class FramePath:
    """Per time step shift ``Delta(t_j)`` of one co-moving frame (length units)."""

    shifts: np.ndarray
    label: str = ""

    def __post_init__(self):
        shifts = np.asarray(self.shifts, dtype=float).ravel()
        if not np.all(np.isfinite(shifts)):
            raise ValueError(f"path {self.label!r} has non-finite shifts")
        object.__setattr__(self, "shifts", shifts)

    @classmethod
    def constant_velocity(cls, c: float, grid: GridSpec, label: str = "") -> "FramePath":
        return cls(c * grid.t, label or f"c={c:g}")

    @classmethod
    def zero(cls, grid: GridSpec, label: str = "lab") -> "FramePath":
        return cls(np.zeros(grid.n), label)


@dataclass
class Decomposition:
    """Frame fields ``q^k`` on a shared (extended) grid with paths and target ranks."""

    grid: GridSpec
    frames: list
    paths: list
    ranks: list = field(default_factory=list)

    def __post_init__(self):
        K = len(self.frames)
        if K < 1:
            raise ValueError("a decomposition needs at least one frame")
        self.frames = [np.array(f, dtype=float) for f in self.frames]
        for k, f in enumerate(self.frames):
            if f.shape != self.grid.shape:
                raise ValueError(f"frame {k} has shape {f.shape}, expected {self.grid.shape}")
        if len(self.paths) != K:
            raise ValueError(f"{K} frames but {len(self.paths)} paths")
        if not self.ranks:
            self.ranks = [1] * K
        self.ranks = [int(r) for r in self.ranks]
        if len(self.ranks) != K:
            raise ValueError(f"{K} frames but {len(self.ranks)} ranks")
        dmax = min(self.grid.shape)
        for k, r in enumerate(self.ranks):
            if not 1 <= r <= dmax:
                raise ValueError(f"rank r_{k} = {r} outside [1, {dmax}]")

    @property
    def K(self) -> int:
        return len(self.frames)

    def with_frames(self, frames) -> "Decomposition":
        return Decomposition(self.grid, frames, self.paths, self.ranks)

    def with_ranks(self, ranks) -> "Decomposition":
        return Decomposition(self.grid, self.frames, self.paths, list(ranks))


@dataclass(frozen=True)
class WeightMask:
    """Indicator of the original domain on the extended spatial axis."""

    w: np.ndarray

    @classmethod
    def for_grid(cls, grid: GridSpec) -> "WeightMask":
        w = np.zeros(grid.rows)
        w[grid.omega] = 1.0
        return cls(w)

    def apply(self, a: np.ndarray) -> np.ndarray:
        return self.w[:, None] * a


@dataclass
class ObjectiveReport:
    total: float
    per_frame: list
    leading_singular_values: list
    frobenius_norms: list
    constraint_violation: float | None = None
    residual_norm: float | None = None
    penalty: float = 0.0
    svd_count: int = 0


def _ceil(v: float) -> int:
    return int(math.ceil(v - _CEIL_SLACK)) if v > 0 else 0


def extend_domain(q: SnapshotField, paths: Sequence[FramePath], fill="edge", order: int = 2) -> SnapshotField:
    """Pad the spatial axis so every frame is defined wherever the lab frame needs it.

    A frame moved by ``+Delta`` is read at ``x - Delta``; positive shifts
    therefore require cells left of the domain and negative shifts cells to
    the right.  The stencil of an order ``p`` interpolation adds ``p/2 - 1``
    cells on each extended side.

    Parameters
    ----------
    fill : "edge" or float
        ``"edge"`` repeats the boundary value of each time column, a number
        fills the extension with that constant.
    """
    grid = q.grid
    if grid.ext_left or grid.ext_right:
        raise ValueError("field is already extended")
    shifts = [np.asarray(p.shifts, dtype=float) for p in paths]
    for p in shifts:
        if not np.all(np.isfinite(p)):
            raise ValueError("non-finite shifts")
    if grid.periodic or not shifts:
        return q
    pad = order // 2 - 1
    right_most = max(float(np.max(p)) for p in shifts)
    left_most = max(float(np.max(-p)) for p in shifts)
    ext_left = _ceil(right_most / grid.dx)
    ext_right = _ceil(left_most / grid.dx)
    ext_left += pad if ext_left else 0
    ext_right += pad if ext_right else 0
    new_grid = replace(grid, ext_left=ext_left, ext_right=ext_right)
    if isinstance(fill, str):
        if fill != "edge":
            raise ValueError(f"unknown fill policy {fill!r}")
        values = np.pad(q.values, ((ext_left, ext_right), (0, 0)), mode="edge")
    else:
        values = np.pad(q.values, ((ext_left, ext_right), (0, 0)), mode="constant", constant_values=float(fill))
    return SnapshotField(new_grid, values)


def _transport(grid, paths, cfg, transport):
    if transport is not None:
        return transport
    return Transport(grid, paths, cfg)


def initial_guess(q: SnapshotField, paths: Sequence[FramePath], weights: WeightMask | None = None,
                  ranks=None, cfg: ShiftConfig | None = None, transport: Transport | None = None) -> Decomposition:
    """Distribute the data equally over all co-moving frames."""
    tr = _transport(q.grid, paths, cfg, transport)
    K = tr.K
    frames = [tr.backward(k, q.values) / K for k in range(K)]
    return Decomposition(q.grid, frames, list(paths), list(ranks) if ranks else [1] * K)


def lowrank_frames(d: Decomposition) -> list:
    from .lowrank import truncate

    return [truncate(f, r) for f, r in zip(d.frames, d.ranks)]


def reconstruct(d: Decomposition, mode: str = "full", cfg: ShiftConfig | None = None,
                transport: Transport | None = None) -> SnapshotField:
    """Lab-frame sum of all frames, optionally after rank truncation of each frame."""
    tr = _transport(d.grid, d.paths, cfg, transport)
    if mode == "full":
        frames = d.frames
    elif mode == "lowrank":
        frames = lowrank_frames(d)
    else:
        raise ValueError(f"unknown reconstruction mode {mode!r}")
    return SnapshotField(d.grid, tr.combine(frames))


def _check_grid(q: SnapshotField, d: Decomposition):
    if q.grid.shape != d.grid.shape or q.grid.ext_left != d.grid.ext_left:
        raise ValueError(f"grid mismatch: data {q.grid.shape} vs decomposition {d.grid.shape}")


def residual(q: SnapshotField, d: Decomposition, weights: WeightMask, cfg: ShiftConfig | None = None,
             transport: Transport | None = None) -> SnapshotField:
    """Masked difference between the data and the low-rank multi-frame reconstruction."""
    _check_grid(q, d)
    approx = reconstruct(d, "lowrank", cfg, transport).values
    return SnapshotField(d.grid, weights.apply(q.values - approx))


def constraint_violation(q: SnapshotField, d: Decomposition, weights: WeightMask,
                         cfg: ShiftConfig | None = None, transport: Transport | None = None) -> float:
    """Frobenius norm of ``w * (q - sum_k T^{Delta_k} q^k)``."""
    _check_grid(q, d)
    tr = _transport(d.grid, d.paths, cfg, transport)
    return float(np.linalg.norm(weights.apply(q.values - tr.combine(d.frames))))


def project_constraint(bar_frames, q: SnapshotField, paths: Sequence[FramePath], weights: WeightMask,
                       cfg: ShiftConfig | None = None, transport: Transport | None = None,
                       ranks=None) -> Decomposition:
    """Map unconstrained auxiliary fields onto fields satisfying the weighted constraint.

    The lab-frame defect on the original domain is shared equally by all
    frames.  In exact shift mode one application satisfies the constraint to
    round-off; with interpolation see :func:`enforce_constraint`.
    """
    bar_frames = [np.asarray(getattr(f, "values", f), dtype=float) for f in bar_frames]
    if len(bar_frames) == 0:
        raise ValueError("project_constraint needs at least one frame")
    tr = _transport(q.grid, paths, cfg, transport)
    K = tr.K
    if len(bar_frames) != K:
        raise ValueError(f"{len(bar_frames)} frames but {K} paths")
    defect = weights.apply(q.values - tr.combine(bar_frames))
    frames = [bar_frames[k] + tr.backward(k, defect) / K for k in range(K)]
    return Decomposition(q.grid, frames, list(paths), list(ranks) if ranks else [1] * K)


def enforce_constraint(d: Decomposition, q: SnapshotField, weights: WeightMask, tol: float,
                       cfg: ShiftConfig | None = None, transport: Transport | None = None,
                       max_iter: int = 500) -> Decomposition:
    """Smallest Frobenius-norm change of the frames that removes the constraint defect.

    Needed in interpolated mode, where ``T^{-Delta}`` only approximates the
    inverse of ``T^Delta`` and :func:`project_constraint` leaves an
    interpolation-sized defect.  With ``A = sum_k T_k`` restricted to the
    weighted rows, the correction is ``A^T lam`` where ``A A^T lam`` equals the
    defect; the system is solved by conjugate gradients to absolute residual
    ``tol``.
    """
    tr = _transport(d.grid, d.paths, cfg, transport)
    defect = weights.apply(q.values - tr.combine(d.frames))
    if np.linalg.norm(defect) <= tol:
        return d
    shape = d.grid.shape

    def normal(v):
        lam = weights.apply(v.reshape(shape))
        total = sum(tr.forward(k, tr.forward_adjoint(k, lam)) for k in range(tr.K))
        return weights.apply(total).ravel()

    size = defect.size
    op = LinearOperator((size, size), matvec=normal, dtype=float)
    lam, _ = cg(op, defect.ravel(), rtol=0.0, atol=tol, maxiter=max_iter)
    lam = weights.apply(lam.reshape(shape))
    frames = [f + tr.forward_adjoint(k, lam) for k, f in enumerate(d.frames)]
    return d.with_frames(frames)
