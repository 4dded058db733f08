import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from shiftpod.lowrank import pod_baseline, singular_value_update, svd_full, svd_truncated, truncate


def low_rank_matrix(rng, m, n, r, decay=0.5):
    U, _ = np.linalg.qr(rng.standard_normal((m, r)))
    V, _ = np.linalg.qr(rng.standard_normal((n, r)))
    return (U * decay ** np.arange(r)) @ V.T


def test_svd_full_reconstructs_and_orders():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((12, 7))
    t = svd_full(A)
    np.testing.assert_allclose(t.matrix(), A, atol=1e-13)
    assert np.all(np.diff(t.S) <= 0)
    np.testing.assert_allclose(t.U.T @ t.U, np.eye(7), atol=1e-13)
    assert np.isclose(t.frobenius_norm, np.linalg.norm(A))
    with pytest.raises(ValueError):
        svd_full(np.zeros((3000, 2)), cap=2048)


def test_truncated_iterative_path_matches_dense():
    # matrices above the dense limit go through Lanczos; compare with LAPACK
    rng = np.random.default_rng(1)
    A = low_rank_matrix(rng, 400, 250, 8) + 1e-3 * rng.standard_normal((400, 250))
    t = svd_truncated(A, 3)
    U, S, Vt = np.linalg.svd(A, full_matrices=False)
    np.testing.assert_allclose(t.S, S[:3], rtol=1e-10)
    np.testing.assert_allclose(t.matrix(), (U[:, :3] * S[:3]) @ Vt[:3], atol=1e-9)
    again = svd_truncated(A, 3)
    np.testing.assert_array_equal(t.U, again.U)


def test_sign_convention():
    rng = np.random.default_rng(2)
    A = rng.standard_normal((9, 6))
    t = svd_truncated(A, 4)
    pivots = t.U[np.argmax(np.abs(t.U), axis=0), np.arange(4)]
    assert np.all(pivots > 0)
    t2 = svd_truncated(-A, 4)
    np.testing.assert_allclose(t2.U, t.U, atol=1e-12)
    np.testing.assert_allclose(t2.V, -t.V, atol=1e-12)


@given(st.integers(1, 6), st.integers(0, 10 ** 6))
def test_eckart_young_error(r, seed):
    # [DERIVED] ||A - A_r||_F^2 = sum of the discarded squared singular values
    A = np.random.default_rng(seed).standard_normal((10, 7))
    S = np.linalg.svd(A, compute_uv=False)
    err = np.linalg.norm(A - truncate(A, r))
    assert np.isclose(err, np.sqrt(np.sum(S[r:] ** 2)), rtol=1e-10, atol=1e-12)


@given(st.integers(0, 10 ** 6))
def test_singular_value_update_first_order(seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((8, 5))
    dA = rng.standard_normal((8, 5))
    t = svd_full(A)
    if np.min(np.diff(-t.S)) < 1e-3:
        return
    h = 1e-6
    fd = (np.linalg.svd(A + h * dA, compute_uv=False) - np.linalg.svd(A - h * dA, compute_uv=False)) / (2 * h)
    np.testing.assert_allclose(singular_value_update(t, dA), fd, rtol=1e-5, atol=1e-7)


def test_pod_of_identity():
    # [PAPER] rank-r POD of the d x d identity leaves sqrt((d - r) / d)
    d = 20
    for r in (1, 5, 19):
        _, err = pod_baseline(np.eye(d), r)
        assert abs(err - np.sqrt((d - r) / d)) < 1e-12


def test_pod_of_zero_and_bad_input():
    _, err = pod_baseline(np.zeros((4, 3)), 1)
    assert err == 0.0
    with pytest.raises(ValueError):
        truncate(np.ones((3, 3)), 4)
    with pytest.raises(ValueError):
        svd_full(np.array([[np.nan]]))
