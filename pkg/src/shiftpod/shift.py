"""Transport operator between co-moving frames and the lab frame.

``T^Delta`` moves the content of each time column by ``+Delta(t_j)``, i.e. the
output at ``x`` is the input evaluated at ``x - Delta(t_j)``.  A frame field
holding a stationary profile ``r(x)`` is mapped by a constant-velocity path
``Delta(t) = c t`` onto the travelling wave ``r(x - c t)``.  The inverse
direction (lab frame to co-moving frame) is the same operator with the sign
of the path flipped.

Values between grid points are obtained by Lagrange interpolation on a fixed
stencil of ``order`` neighbouring points.  In ``exact`` mode every shift must
be an integer number of cells and the operator is a pure circular permutation
of each column, hence orthogonal.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

if TYPE_CHECKING:
    from .core import FramePath, GridSpec, SnapshotField

__all__ = [
    "ShiftConfig",
    "ShiftError",
    "Shifter",
    "Transport",
    "lagrange_weights",
    "shift_apply",
    "shift_roundtrip_error",
]

# fractional parts closer than this to an integer are snapped
_SNAP = 1e-9


class ShiftError(ValueError):
    """Raised for shifts that cannot be applied under the given configuration."""


@dataclass(frozen=True)
class ShiftConfig:
    """Interpolation settings of the transport operator.

    Parameters
    ----------
    order : int
        Number of stencil points ``p`` (even, at least 2).  ``p = 2`` is
        linear interpolation between the neighbouring points.
    mode : {"interpolated", "exact"}
        ``exact`` requires integer cell shifts and permutes indices
        circularly over the (extended) grid.
    edge_policy : {"replicate", "constant"}
        What a stencil reads past the ends of a non-periodic grid.
    edge_value : float
        Value used by the ``constant`` edge policy.
    """

    order: int = 2
    mode: str = "interpolated"
    edge_policy: str = "replicate"
    edge_value: float = 0.0

    def __post_init__(self):
        if self.order < 2 or self.order % 2:
            raise ValueError(f"order must be even and >= 2, got {self.order}")
        if self.mode not in ("interpolated", "exact"):
            raise ValueError(f"unknown shift mode {self.mode!r}")
        if self.edge_policy not in ("replicate", "constant"):
            raise ValueError(f"unknown edge policy {self.edge_policy!r}")

    @property
    def exact(self) -> bool:
        return self.mode == "exact"


def lagrange_weights(frac, order: int) -> np.ndarray:
    """Lagrange weights for evaluating at ``frac`` in ``[0, 1)``.

    The nodes sit at integer offsets ``-order/2 + 1, ..., order/2``.  Returns
    an array of shape ``(order,) + frac.shape``.
    """
    frac = np.asarray(frac, dtype=float)
    nodes = np.arange(-order // 2 + 1, order // 2 + 1)
    w = np.ones((order,) + frac.shape)
    for a, xa in enumerate(nodes):
        for xb in nodes:
            if xb != xa:
                w[a] *= (frac - xb) / (xa - xb)
    return w


class Shifter:
    """Precomputed gather stencil for one path and one direction.

    ``Shifter(grid, shifts, sign, cfg)(a)`` applies ``T^{sign * shifts}`` to
    the array ``a`` whose last two axes are (rows, time).  Leading axes are
    treated as a batch.
    """

    def __init__(self, grid: "GridSpec", shifts, sign: int, cfg: ShiftConfig):
        shifts = np.asarray(shifts, dtype=float)
        if shifts.shape != (grid.n,):
            raise ShiftError(f"path has length {shifts.shape}, expected ({grid.n},)")
        if not np.all(np.isfinite(shifts)):
            raise ShiftError("non-finite shift in path")
        if sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        self.rows = grid.rows
        self.n = grid.n
        self.cfg = cfg

        # source position of output row i is i - s_j (in cells)
        s = sign * shifts / grid.dx
        y = -s
        base = np.floor(y)
        frac = y - base
        up = frac > 1.0 - _SNAP
        base[up] += 1.0
        frac[up] = 0.0
        frac[frac < _SNAP] = 0.0
        base = base.astype(np.int64)

        rows = np.arange(self.rows)[:, None]
        circular = grid.periodic or cfg.exact
        if cfg.exact:
            bad = np.flatnonzero(frac != 0.0)
            if bad.size:
                j = int(bad[0])
                raise ShiftError(
                    f"exact shift mode needs integer cell shifts; column {j} "
                    f"has shift {shifts[j]!r} = {s[j]:.6g} cells"
                )
        self.identity = bool(np.all(frac == 0.0) and np.all(base == 0))

        if np.all(frac == 0.0):
            offsets = np.zeros(1, dtype=np.int64)
            weights = np.ones((1, self.n))
        else:
            offsets = np.arange(-cfg.order // 2 + 1, cfg.order // 2 + 1)
            weights = lagrange_weights(frac, cfg.order)
        idx = rows[None, :, :] + base[None, None, :] + offsets[:, None, None]
        valid = None
        if circular:
            idx = np.mod(idx, self.rows)
        elif cfg.edge_policy == "replicate":
            idx = np.clip(idx, 0, self.rows - 1)
        else:
            valid = (idx >= 0) & (idx < self.rows)
            idx = np.clip(idx, 0, self.rows - 1)
        # flat row-major positions so that one take() gathers a whole stencil layer
        self._flat = (idx * self.n + np.arange(self.n)[None, None, :]).reshape(idx.shape[0], -1)
        self._weights = weights
        self._valid = valid
        self._unit = offsets.size == 1 and valid is None

    def __call__(self, a: np.ndarray) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        if a.shape[-2:] != (self.rows, self.n):
            raise ShiftError(f"array of shape {a.shape[-2:]} does not match grid ({self.rows}, {self.n})")
        if self.identity:
            return a.copy()
        flat = a.reshape(a.shape[:-2] + (-1,))
        if self._unit:
            return np.take(flat, self._flat[0], axis=-1).reshape(a.shape)
        out = np.zeros(a.shape)
        for o in range(self._flat.shape[0]):
            gathered = np.take(flat, self._flat[o], axis=-1).reshape(a.shape)
            if self._valid is not None:
                gathered = np.where(self._valid[o], gathered, self.cfg.edge_value)
            out += self._weights[o] * gathered
        return out

    def adjoint(self, b: np.ndarray) -> np.ndarray:
        """Transpose of the operator for a single ``(rows, n)`` array (scatter-add)."""
        b = np.asarray(b, dtype=float)
        if b.shape != (self.rows, self.n):
            raise ShiftError(f"array of shape {b.shape} does not match grid ({self.rows}, {self.n})")
        if self.identity:
            return b.copy()
        size = self.rows * self.n
        out = np.zeros(size)
        for o in range(self._flat.shape[0]):
            contrib = self._weights[o] * b
            if self._valid is not None:
                contrib = np.where(self._valid[o], contrib, 0.0)
            out += np.bincount(self._flat[o], weights=contrib.ravel(), minlength=size)
        return out.reshape(self.rows, self.n)


class Transport:
    """Forward (frame to lab) and backward (lab to frame) shifts for K frames."""

    def __init__(self, grid: "GridSpec", paths: Sequence["FramePath"], cfg: ShiftConfig | None = None):
        if len(paths) == 0:
            raise ShiftError("at least one frame path is required")
        self.grid = grid
        self.paths = list(paths)
        self.cfg = cfg or ShiftConfig()
        self.forward_ops = [Shifter(grid, p.shifts, +1, self.cfg) for p in self.paths]
        self.backward_ops = [Shifter(grid, p.shifts, -1, self.cfg) for p in self.paths]

    @property
    def K(self) -> int:
        return len(self.paths)

    def forward(self, k: int, a: np.ndarray) -> np.ndarray:
        return self.forward_ops[k](a)

    def backward(self, k: int, a: np.ndarray) -> np.ndarray:
        return self.backward_ops[k](a)

    def forward_adjoint(self, k: int, a: np.ndarray) -> np.ndarray:
        return self.forward_ops[k].adjoint(a)

    def combine(self, frames) -> np.ndarray:
        """Lab-frame sum of all frames, accumulated in frame order."""
        total = self.forward(0, frames[0])
        for k in range(1, self.K):
            total = total + self.forward(k, frames[k])
        return total


def shift_apply(f: "SnapshotField", path: "FramePath", sign: int = 1, cfg: ShiftConfig | None = None) -> "SnapshotField":
    """Apply ``T^{sign * Delta}`` to a snapshot field."""
    from .core import SnapshotField

    if not np.all(np.isfinite(f.values)):
        raise ShiftError("input field contains NaN or Inf")
    op = Shifter(f.grid, path.shifts, sign, cfg or ShiftConfig())
    return SnapshotField(f.grid, op(f.values))


def shift_roundtrip_error(f: "SnapshotField", path: "FramePath", cfg: ShiftConfig | None = None) -> float:
    """Relative Frobenius error of ``T^{-Delta} T^{Delta} f`` against ``f``."""
    cfg = cfg or ShiftConfig()
    there = shift_apply(f, path, +1, cfg)
    back = shift_apply(there, path, -1, cfg)
    norm = np.linalg.norm(f.values)
    if norm == 0.0:
        return 0.0
    return float(np.linalg.norm(back.values - f.values) / norm)
