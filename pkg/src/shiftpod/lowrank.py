"""SVD services: truncated decompositions, first-order singular value updates, POD."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import svds

__all__ = [
    "SVDTriple",
    "svd_full",
    "svd_truncated",
    "truncate",
    "singular_value_update",
    "pod_baseline",
    "FULL_SPECTRUM_CAP",
    "DENSE_LIMIT",
]

FULL_SPECTRUM_CAP = 2048
# below this smaller dimension a dense SVD is as cheap as an iterative one
DENSE_LIMIT = 200


@dataclass
class SVDTriple:
    U: np.ndarray
    S: np.ndarray
    V: np.ndarray
    frobenius_norm: float = float("nan")

    @property
    def rank(self) -> int:
        return self.S.shape[0]

    def matrix(self) -> np.ndarray:
        return (self.U * self.S) @ self.V.T

    def head(self, r: int) -> "SVDTriple":
        return SVDTriple(self.U[:, :r], self.S[:r], self.V[:, :r], self.frobenius_norm)


def _fix_signs(U, V):
    # largest-magnitude entry of every left singular vector is made positive
    pivot = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[pivot, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs, V * signs


def _check(A):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ValueError("expected a matrix")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix contains NaN or Inf")
    return A


def svd_full(A, cap: int = FULL_SPECTRUM_CAP) -> SVDTriple:
    """Thin SVD with all ``min(rows, cols)`` singular triples."""
    A = _check(A)
    if max(A.shape) > cap:
        raise ValueError(f"full spectrum of a {A.shape} matrix exceeds the size cap {cap}")
    U, S, Vt = np.linalg.svd(A, full_matrices=False)
    U, V = _fix_signs(U, Vt.T)
    return SVDTriple(U, S, V, float(np.linalg.norm(A)))


def svd_truncated(A, r: int, dense_limit: int = DENSE_LIMIT) -> SVDTriple:
    """Leading ``r`` singular triples; the Frobenius norm is taken from the entries.

    Matrices whose smaller dimension exceeds ``dense_limit`` (and ``r`` well
    below it) use Lanczos iterations with a fixed start vector, so repeated
    calls give identical results.
    """
    A = _check(A)
    d = min(A.shape)
    if not 1 <= r <= d:
        raise ValueError(f"rank {r} outside [1, {d}]")
    if d <= dense_limit or 4 * r >= d:
        U, S, Vt = np.linalg.svd(A, full_matrices=False)
        U, S, V = U[:, :r], S[:r].copy(), Vt[:r].T
    else:
        v0 = np.ones(d) / np.sqrt(d)
        U, S, Vt = svds(A, k=r, v0=v0, tol=0, solver="arpack")
        order = np.argsort(S)[::-1]
        U, S, V = U[:, order], S[order], Vt[order].T
    U, V = _fix_signs(U, V)
    return SVDTriple(U, S, V, float(np.linalg.norm(A)))


def truncate(A, r: int) -> np.ndarray:
    """Best rank-``r`` approximation of ``A``."""
    return svd_truncated(A, r).matrix()


def singular_value_update(t: SVDTriple, dA) -> np.ndarray:
    """First-order change ``diag(U^T dA V)`` of the singular values under ``A -> A + dA``."""
    dA = np.asarray(dA, dtype=float)
    if dA.shape != (t.U.shape[0], t.V.shape[0]):
        raise ValueError(f"perturbation of shape {dA.shape} does not match ({t.U.shape[0]}, {t.V.shape[0]})")
    return np.einsum("il,ij,jl->l", t.U, dA, t.V)


def pod_baseline(q, r: int):
    """Rank-``r`` POD of the lab-frame data.

    Returns the approximation (same type as ``q``) and its relative
    Frobenius error.
    """
    values = getattr(q, "values", q)
    values = np.asarray(values, dtype=float)
    approx = truncate(values, r)
    norm = np.linalg.norm(values)
    err = float(np.linalg.norm(values - approx) / norm) if norm > 0 else 0.0
    if hasattr(q, "grid"):
        from .core import SnapshotField

        approx = SnapshotField(q.grid, approx)
    return approx, err
