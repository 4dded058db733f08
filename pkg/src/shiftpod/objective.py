"""Singular-value objectives, their per-frame gradients and the constraint redistribution.

Four objectives are available, all sums of per-frame terms:

``J2``
    ``1 - sum_{l<=r} s_l^2 / n^2`` per frame, with ``n`` the Frobenius norm.
``barJ2``
    ``n^2 - sum_{l<=r} s_l^2``, the energy not captured by ``r`` modes.
``J1``
    nuclear norm (sum of all singular values).
``J12``
    ``sum_{l<=r} s_l + sqrt(d - r) * sqrt(barJ2)``, an upper estimate of the
    nuclear norm that only needs the leading ``r`` singular values.

An optional penalty ``eps * sum_k ||q^k||_F^2`` (or the unsquared norm)
suppresses redundant frames.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import Decomposition, ObjectiveReport, SnapshotField, WeightMask
from .lowrank import DENSE_LIMIT, FULL_SPECTRUM_CAP, SVDTriple, svd_full, svd_truncated
from .shift import ShiftConfig, Transport

__all__ = [
    "KINDS",
    "ObjectiveKind",
    "ObjectiveError",
    "FrameState",
    "Objective",
    "evaluate",
    "grad_frame",
    "redistribute",
    "assemble_gradient",
    "objective_scale",
]

log = logging.getLogger(__name__)

KINDS = ("J2", "barJ2", "J1", "J12")


class ObjectiveError(ValueError):
    pass


@dataclass(frozen=True)
class ObjectiveKind:
    """Which objective to use and how to regularize it.

    The per-frame target ranks live on the :class:`Decomposition`.
    ``zero_singular_tol`` is relative to the leading singular value and
    decides which singular vectors enter the J1 sub-gradient.
    ``penalty_form`` selects ``eps * sum ||q^k||_F^2`` (``"squared"``) or
    ``eps * sum ||q^k||_F`` (``"norm"``); only the latter drives an unneeded
    frame all the way to zero.
    """

    kind: str = "J2"
    penalty_epsilon: float = 0.0
    penalty_form: str = "squared"
    zero_singular_tol: float = 1e-10
    spectrum_cap: int = FULL_SPECTRUM_CAP

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown objective {self.kind!r}; expected one of {KINDS}")
        if self.penalty_epsilon < 0:
            raise ValueError("penalty_epsilon must be >= 0")
        if self.penalty_form not in ("squared", "norm"):
            raise ValueError(f"unknown penalty form {self.penalty_form!r}")
        if self.kind == "J1" and not self.zero_singular_tol > 0:
            raise ValueError("J1 needs a positive zero_singular_tol")


@dataclass
class FrameState:
    """SVD of one frame plus the derived quantities the objectives need.

    ``complete`` tells whether ``svd`` holds the whole spectrum or only the
    leading values (enough for every objective except J1).
    """

    svd: SVDTriple
    norm2: float
    rank: int
    complete: bool = True

    @property
    def S(self) -> np.ndarray:
        return self.svd.S

    @property
    def tail2(self) -> float:
        """Energy beyond the first ``rank`` modes."""
        if self.complete:
            # summed from the spectrum to avoid cancellation
            return float(np.sum(self.svd.S[self.rank:] ** 2))
        return max(self.norm2 - float(np.sum(self.svd.S[: self.rank] ** 2)), 0.0)

    def lowrank(self) -> np.ndarray:
        r = self.rank
        return (self.svd.U[:, :r] * self.svd.S[:r]) @ self.svd.V[:, :r].T


def objective_scale(kind: str, qnorm: float) -> float:
    """Natural magnitude of an objective for data of Frobenius norm ``qnorm``."""
    if kind == "J2":
        return 1.0
    if kind == "barJ2":
        return qnorm ** 2
    return qnorm


def frame_state(frame: np.ndarray, rank: int, cap: int = FULL_SPECTRUM_CAP, full: bool = False) -> FrameState:
    """SVD state of a frame.

    Small frames (and ``full=True``) get the whole spectrum; large frames
    only the leading ``rank + 1`` triples.
    """
    norm2 = float(np.sum(frame * frame))
    d = min(frame.shape)
    if full or d <= DENSE_LIMIT or rank + 1 >= d:
        return FrameState(svd_full(frame, cap), norm2, rank)
    return FrameState(svd_truncated(frame, rank + 1), norm2, rank, complete=False)


def frame_value(st: FrameState, kind: str, index: int = 0) -> float:
    r = st.rank
    if kind == "J2":
        if st.norm2 == 0.0:
            raise ObjectiveError(f"J2 is undefined for the all-zero frame {index}")
        return st.tail2 / st.norm2
    if kind == "barJ2":
        return st.tail2
    if kind == "J1":
        return float(np.sum(st.S))
    d = min(st.svd.U.shape[0], st.svd.V.shape[0])
    return float(np.sum(st.S[:r]) + np.sqrt(d - r) * np.sqrt(st.tail2))


def frame_gradient(frame: np.ndarray, st: FrameState, kind: str, zero_tol: float = 1e-10,
                   index: int = 0) -> np.ndarray:
    r = st.rank
    U, S, V = st.svd.U, st.svd.S, st.svd.V
    if kind in ("J2", "barJ2"):
        R = frame - st.lowrank()
        if kind == "barJ2":
            return 2.0 * R
        n2 = st.norm2
        if n2 == 0.0:
            raise ObjectiveError(f"J2 gradient is undefined for the all-zero frame {index}")
        # residual form of the J2 derivative: 2 R / n^2 - 2 (n^2 - sum s^2) q / n^4
        return 2.0 * R / n2 - 2.0 * st.tail2 * frame / (n2 * n2)
    if kind == "J1":
        if S.size == 0 or S[0] == 0.0:
            return np.zeros_like(frame)
        keep = S > zero_tol * S[0]
        return U[:, keep] @ V[:, keep].T
    # J12
    g = U[:, :r] @ V[:, :r].T
    tail = np.sqrt(st.tail2)
    if tail > 0.0:
        d = min(frame.shape)
        g = g + np.sqrt(d - r) * (frame - st.lowrank()) / tail
    return g


def _penalty(frames, kind: ObjectiveKind) -> float:
    eps = kind.penalty_epsilon
    if eps == 0.0:
        return 0.0
    norms2 = [float(np.sum(f * f)) for f in frames]
    if kind.penalty_form == "squared":
        return eps * sum(norms2)
    return eps * sum(np.sqrt(v) for v in norms2)


def _penalty_grad(frame: np.ndarray, kind: ObjectiveKind) -> np.ndarray | None:
    eps = kind.penalty_epsilon
    if eps == 0.0:
        return None
    if kind.penalty_form == "squared":
        return 2.0 * eps * frame
    n = np.linalg.norm(frame)
    return eps * frame / n if n > 0 else np.zeros_like(frame)


def _warn_degenerate(states):
    for k, st in enumerate(states):
        S, r = st.S, st.rank
        if r < S.size and S[0] > 0 and abs(S[r - 1] - S[r]) < 1e-8 * S[0]:
            log.warning("frame %d: singular values %d and %d coincide (%.3g); gradient is not unique",
                        k, r, r + 1, S[r])


def _as_kind(kind) -> ObjectiveKind:
    return kind if isinstance(kind, ObjectiveKind) else ObjectiveKind(kind)


def grad_frame(frame, kind, r: int, zero_tol: float | None = None) -> np.ndarray:
    """Gradient of one frame's term with respect to that frame's entries (no constraint)."""
    kind = _as_kind(kind)
    frame = np.asarray(getattr(frame, "values", frame), dtype=float)
    st = frame_state(frame, r, kind.spectrum_cap, kind.kind == "J1")
    tol = kind.zero_singular_tol if zero_tol is None else zero_tol
    return frame_gradient(frame, st, kind.kind, tol)


def redistribute(grads: Sequence[np.ndarray], weights: WeightMask, transport: Transport) -> list:
    """Share the lab-frame sum of the gradients equally so that it vanishes on the domain.

    ``g_k - (1/K) T^{-Delta_k}[ w * sum_k' T^{Delta_k'} g_k' ]``.  Adding any
    combination of the results to a decomposition leaves the weighted
    reconstruction unchanged (exactly in exact shift mode).
    """
    K = transport.K
    if len(grads) != K:
        raise ValueError(f"{len(grads)} gradients for {K} frames")
    lab = weights.apply(transport.combine(grads))
    return [grads[k] - transport.backward(k, lab) / K for k in range(K)]


class Objective:
    """Objective bound to data, mask and transport; the optimizer's work horse."""

    def __init__(self, q: SnapshotField, weights: WeightMask, kind, transport: Transport):
        self.q = q
        self.weights = weights
        self.kind = _as_kind(kind)
        self.transport = transport
        self.qnorm = float(np.linalg.norm(weights.apply(q.values)))

    @property
    def scale(self) -> float:
        return objective_scale(self.kind.kind, self.qnorm)

    def states(self, frames, ranks) -> list:
        full = self.kind.kind == "J1"
        return [frame_state(f, r, self.kind.spectrum_cap, full) for f, r in zip(frames, ranks)]

    def value(self, frames, states) -> float:
        terms = [frame_value(st, self.kind.kind, k) for k, st in enumerate(states)]
        return float(sum(terms)) + _penalty(frames, self.kind)

    def raw_gradients(self, frames, states) -> list:
        out = []
        for k, (f, st) in enumerate(zip(frames, states)):
            g = frame_gradient(f, st, self.kind.kind, self.kind.zero_singular_tol, k)
            pg = _penalty_grad(f, self.kind)
            out.append(g if pg is None else g + pg)
        return out

    def gradient(self, frames, states) -> list:
        return redistribute(self.raw_gradients(frames, states), self.weights, self.transport)

    def predicted_value(self, frames, states, direction, step: float) -> float:
        """Objective at ``frames + step * direction`` from first-order singular values.

        Norms are exact; singular values use ``s + step * diag(U^T D V)``.
        """
        kind = self.kind.kind
        total = 0.0
        new_norm2 = []
        for f, st, D in zip(frames, states, direction):
            r = st.rank
            s = np.abs(st.S + step * np.einsum("il,ij,jl->l", st.svd.U, D, st.svd.V))
            n2 = float(st.norm2 + 2.0 * step * np.sum(f * D) + step * step * np.sum(D * D))
            new_norm2.append(n2)
            head2 = float(np.sum(s[:r] ** 2))
            tail2 = max(n2 - head2, 0.0)
            if kind == "J2":
                total += tail2 / n2 if n2 > 0 else 1.0
            elif kind == "barJ2":
                total += tail2
            elif kind == "J1":
                total += float(np.sum(s))
            else:
                d = min(f.shape)
                total += float(np.sum(s[:r]) + np.sqrt(d - r) * np.sqrt(tail2))
        eps = self.kind.penalty_epsilon
        if eps:
            if self.kind.penalty_form == "squared":
                total += eps * sum(new_norm2)
            else:
                total += eps * sum(np.sqrt(max(v, 0.0)) for v in new_norm2)
        return total

    def report(self, frames, states, ranks, paths, grid) -> ObjectiveReport:
        kind = self.kind.kind
        terms = [frame_value(st, kind, k) for k, st in enumerate(states)]
        pen = _penalty(frames, self.kind)
        lab = self.transport.combine(frames)
        approx = self.transport.combine([st.lowrank() for st in states])
        return ObjectiveReport(
            total=float(sum(terms)) + pen,
            per_frame=terms,
            leading_singular_values=[st.S[: st.rank].copy() for st in states],
            frobenius_norms=[float(np.sqrt(st.norm2)) for st in states],
            constraint_violation=float(np.linalg.norm(self.weights.apply(self.q.values - lab))),
            residual_norm=float(np.linalg.norm(self.weights.apply(self.q.values - approx))),
            penalty=pen,
            svd_count=len(states),
        )


def evaluate(d: Decomposition, kind, q: SnapshotField | None = None, weights: WeightMask | None = None,
             cfg: ShiftConfig | None = None, transport: Transport | None = None) -> ObjectiveReport:
    """Evaluate an objective on a decomposition.

    Without ``q`` the constraint violation and residual norm are left as
    ``None``.
    """
    kind = _as_kind(kind)
    states = [frame_state(f, r, kind.spectrum_cap, kind.kind == "J1") for f, r in zip(d.frames, d.ranks)]
    _warn_degenerate(states)
    terms = [frame_value(st, kind.kind, k) for k, st in enumerate(states)]
    pen = _penalty(d.frames, kind)
    rep = ObjectiveReport(
        total=float(sum(terms)) + pen,
        per_frame=terms,
        leading_singular_values=[st.S[: st.rank].copy() for st in states],
        frobenius_norms=[float(np.sqrt(st.norm2)) for st in states],
        penalty=pen,
        svd_count=len(states),
    )
    if q is not None:
        weights = weights or WeightMask.for_grid(q.grid)
        tr = transport or Transport(d.grid, d.paths, cfg)
        obj = Objective(q, weights, kind, tr)
        full = obj.report(d.frames, states, d.ranks, d.paths, d.grid)
        rep.constraint_violation = full.constraint_violation
        rep.residual_norm = full.residual_norm
    return rep


def assemble_gradient(d: Decomposition, q: SnapshotField, weights: WeightMask, kind,
                      cfg: ShiftConfig | None = None, transport: Transport | None = None) -> list:
    """Per-frame gradients (penalty included) after constraint redistribution."""
    tr = transport or Transport(d.grid, d.paths, cfg)
    obj = Objective(q, weights, kind, tr)
    states = obj.states(d.frames, d.ranks)
    return obj.gradient(d.frames, states)
