import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from opbound import numkernel as nk
from opbound.errors import IllFormed, NotHermitian

seeds = st.integers(min_value=0, max_value=2**32 - 1)


@pytest.mark.parametrize("a, expected", [
    (np.diag([2.0, 1.0]), [1.0, 2.0]),
    (np.array([[0, 1], [1, 0]]), [-1.0, 1.0]),
    (np.zeros((3, 3)), [0.0, 0.0, 0.0]),
])
def test_herm_eig_examples(a, expected):
    e = nk.herm_eig(a)
    np.testing.assert_allclose(e.eigenvalues, expected, atol=1e-12)


def test_herm_eig_rejects_non_hermitian():
    with pytest.raises(NotHermitian):
        nk.herm_eig(np.array([[0, 1], [0, 0]]))


@given(seeds, st.integers(1, 6))
@settings(max_examples=40, deadline=None)
def test_herm_eig_invariants(seed, n):
    rng = np.random.default_rng(seed)
    a = nk.random_hermitian(rng, n)
    e = nk.herm_eig(a)
    assert np.all(np.diff(e.eigenvalues) >= 0)
    assert nk.fro(a - e.reconstruct()) <= 1e-10 * (1 + nk.fro(a))
    u = e.eigenvectors
    assert nk.fro(nk.adjoint(u) @ u - np.eye(n)) <= 1e-10


@given(seeds, st.integers(1, 5))
@settings(max_examples=30, deadline=None)
def test_min_shift_distance_is_half_spread(seed, n):
    rng = np.random.default_rng(seed)
    a = nk.random_hermitian(rng, n)
    lam = nk.herm_eig(a).eigenvalues
    res = minimize_scalar(lambda t: nk.op_norm(a - t * np.eye(n)), bounds=(lam[0], lam[-1] + 1e-12),
                          method="bounded", options={"xatol": 1e-12})
    assert res.fun == pytest.approx((lam[-1] - lam[0]) / 2, abs=1e-8)


@pytest.mark.parametrize("a, sigma", [
    (np.eye(2), [1, 1]),
    (np.array([[0, 2], [0, 0]]), [2, 0]),
])
def test_svd_examples(a, sigma):
    u, s, v = nk.svd(a)
    np.testing.assert_allclose(s, sigma, atol=1e-14)


def test_svd_matches_gram_eigenvalues(rng):
    a = nk.random_cmat(rng, 3, 2)
    _, s, _ = nk.svd(a)
    lam = nk.herm_eig(nk.adjoint(a) @ a).eigenvalues[::-1]
    np.testing.assert_allclose(s, np.sqrt(np.clip(lam, 0, None)), atol=1e-12)


@given(seeds, st.integers(1, 4), st.integers(1, 4))
@settings(max_examples=30, deadline=None)
def test_svd_reconstructs(seed, n, m):
    rng = np.random.default_rng(seed)
    a = nk.random_cmat(rng, n, m)
    u, s, v = nk.svd(a)
    sig = np.zeros((n, m))
    sig[:len(s), :len(s)] = np.diag(s)
    assert nk.fro(a - u @ sig @ nk.adjoint(v)) <= 1e-10 * (1 + nk.fro(a))


def test_kron_examples():
    np.testing.assert_array_equal(nk.kron(np.eye(2), np.eye(3)), np.eye(6))
    np.testing.assert_array_equal(nk.kron(nk.unit(2, 0, 0), nk.unit(2, 0, 0)), nk.unit(4, 0, 0))


@pytest.mark.parametrize("seed", range(100))
def test_kron_mixed_product_and_norm(seed):
    rng = np.random.default_rng(seed)
    a, b = nk.random_cmat(rng, 2, 3), nk.random_cmat(rng, 3, 2)
    c, d = nk.random_cmat(rng, 3, 2), nk.random_cmat(rng, 2, 2)
    lhs = nk.kron(a, b) @ nk.kron(c, d)
    assert nk.fro(lhs - nk.kron(a @ c, b @ d)) <= 1e-12 * (1 + nk.fro(lhs))
    s_ab = nk.svd(nk.kron(a, b))[1][0]
    assert s_ab == pytest.approx(nk.svd(a)[1][0] * nk.svd(b)[1][0], rel=1e-12)


@pytest.mark.parametrize("a, expected", [(np.eye(3), 1.0), (np.zeros((2, 2)), 0.0), (np.diag([3.0, 4.0]), 4.0)])
def test_op_norm(a, expected):
    assert nk.op_norm(a) == pytest.approx(expected)


def test_adjoint_involution(rng):
    a = nk.random_cmat(rng, 3, 4)
    assert np.array_equal(nk.adjoint(nk.adjoint(a)), a)


def test_span_closure_examples():
    b = nk.span_closure([nk.unit(2, 0, 1)], "triple")
    assert len(b) == 1
    b = nk.span_closure([np.eye(2)], "product")
    assert len(b) == 1 and nk.in_span(np.eye(2), b) < 1e-12
    b = nk.span_closure([nk.unit(2, 0, 0), nk.unit(2, 0, 1)], "triple")
    assert len(b) == 2


@given(seeds, st.integers(1, 3), st.integers(1, 3), st.integers(1, 2))
@settings(max_examples=25, deadline=None)
def test_span_closure_closed_orthonormal_idempotent(seed, p, q, k):
    rng = np.random.default_rng(seed)
    mats = [nk.random_cmat(rng, p, q) * (rng.random() < 0.7) for _ in range(k)]
    mats = [m for m in mats if nk.fro(m) > 0] or [nk.unit(p, 0, 0, q)]
    b = nk.span_closure(mats, "triple")
    gram = nk.adjoint(nk.mats_to_columns(b)) @ nk.mats_to_columns(b)
    assert nk.fro(gram - np.eye(len(b))) < 1e-9
    for x in b:
        for y in b:
            for z in b:
                assert nk.in_span(x @ nk.adjoint(y) @ z, b) < 1e-9
    assert len(nk.span_closure(b, "triple")) == len(b)


def test_span_closure_rejects_bad_input():
    with pytest.raises(IllFormed):
        nk.span_closure([np.eye(2)], "quaternary")
    with pytest.raises(IllFormed):
        nk.span_closure([np.ones((2, 3))], "product")


@given(seeds, st.integers(1, 5))
@settings(max_examples=30, deadline=None)
def test_hvec_is_isometric_and_inverts(seed, n):
    rng = np.random.default_rng(seed)
    w, x = nk.random_hermitian(rng, n), nk.random_hermitian(rng, n)
    assert np.trace(w @ x).real == pytest.approx(nk.hvec(w) @ nk.hvec(x), abs=1e-10)
    assert nk.fro(nk.hmat(nk.hvec(x), n) - x) < 1e-12


def test_cmat_json_roundtrip(rng):
    a = nk.random_cmat(rng, 2, 3)
    assert np.array_equal(nk.cmat_from_json(nk.cmat_to_json(a)), a)
    with pytest.raises(IllFormed):
        nk.cmat_from_json({"rows": 2, "cols": 2, "data": [[1, 0]]})
