from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from opbound import rkhs
from opbound.errors import IllFormed, OutsideDisc

ONE = rkhs.poly([1])
Z = rkhs.poly([0, 1])


@pytest.mark.parametrize("s, t", [(0, 1), (1, 0), (-1, 1), (2, -1), (1, 1)])
def test_monomial_norm_ratio_exact(s, t):
    n = np.arange(10_001)
    got = rkhs.monomial_norm_sq(n, t) / rkhs.monomial_norm_sq(n, s)
    # exact rational oracle at a spread of degrees
    for k in list(range(20)) + [999, 4096, 10_000]:
        exact = Fraction(k + 1) ** (s - t)
        assert abs(Fraction(got[k]) - exact) <= 4 * np.finfo(float).eps * exact


def test_hs_weights():
    np.testing.assert_array_equal(rkhs.HsSpec(1.0, 3).weights(), [1, 1 / 2, 1 / 3, 1 / 4])


def test_mult_matrix_identity_and_inclusion():
    np.testing.assert_array_equal(rkhs.mult_matrix(ONE, 0.5, 0.5, 4), np.eye(5))
    d = rkhs.mult_matrix(ONE, 0, 1, 4)
    np.testing.assert_allclose(d, np.diag((np.arange(5) + 1.0) ** -0.5), rtol=1e-15)


def test_mult_matrix_shift():
    a = rkhs.mult_matrix(Z, 0, 0, 3)
    assert a.shape == (5, 4)
    np.testing.assert_array_equal(a, np.eye(5, 4, k=-1))


def test_mult_matrix_entries():
    phi = rkhs.poly([2, -1j, 0.5])
    s, t = 0.7, -0.3
    a = rkhs.mult_matrix(phi, s, t, 6)
    for j in range(a.shape[0]):
        for i in range(a.shape[1]):
            k = j - i
            c = phi.coefficients[k] if 0 <= k <= 2 else 0
            assert a[j, i] == pytest.approx(c * (i + 1) ** (s / 2) * (j + 1) ** (-t / 2), rel=1e-14)


@pytest.mark.parametrize("N", [0, 10, 99, 1000])
def test_mult_norm_examples(N):
    assert rkhs.mult_norm(ONE, 0, 1, N).value == pytest.approx(1.0)
    assert rkhs.mult_norm(ONE, 1, 0, N).value == pytest.approx((N + 1) ** 0.5, rel=1e-14)
    assert rkhs.mult_norm(Z, 0, 0, N).value == pytest.approx(1.0)


def test_mult_norm_reports_half():
    r = rkhs.mult_norm(ONE, 1, 0, 100)
    assert r.half_value == pytest.approx(51 ** 0.5)


@pytest.mark.parametrize("coeffs, s, t", [([1, 1], 0, 0), ([1, -2, 0.5j], 0.5, 1), ([0, 0, 3], -1, 0),
                                          ([1, 1], 1, 0)])
def test_mult_norm_monotone_in_N(coeffs, s, t):
    phi = rkhs.poly(coeffs)
    vals = [rkhs.mult_norm(phi, s, t, N).value for N in range(0, 60, 3)]
    assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))


def test_general_multiplier_norm_against_dense_svd():
    # 1 + z on the Hardy space has norm 2 = sup |1 + z|; truncations approach it from below
    vals = [rkhs.mult_norm(rkhs.poly([1, 1]), 0, 0, N).value for N in (10, 100, 400)]
    assert vals[0] < vals[1] < vals[2] < 2
    assert vals[2] > 1.999


@given(st.lists(st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False), min_size=1,
                max_size=3),
       st.lists(st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False), min_size=1,
                max_size=3),
       st.sampled_from([-1.0, 0.0, 0.5, 1.0]), st.sampled_from([-0.5, 0.0, 1.0]),
       st.sampled_from([0.0, 0.5, 2.0]))
@settings(max_examples=40, deadline=None)
def test_composition_telescopes(a, b, s, t, u):
    phi, psi = rkhs.poly(a), rkhs.poly(b)
    N = 12
    prod = rkhs.mult_matrix(phi * psi, s, u, N)
    comp = rkhs.mult_matrix(psi, t, u, N + phi.degree) @ rkhs.mult_matrix(phi, s, t, N)
    keep = N - (phi * psi).degree + 1
    rows = min(prod.shape[0], comp.shape[0])
    diff = prod[:rows, :keep] - comp[:rows, :keep]
    scale = 1 + np.abs(prod).max()
    assert np.abs(diff).max() <= 1e-12 * scale


def test_trend_examples():
    m = np.arange(65)
    np.testing.assert_allclose(rkhs.compactness_trend(ONE, 0, 1, 64), (m + 1.0) ** -0.5, rtol=1e-14)
    np.testing.assert_allclose(rkhs.compactness_trend(ONE, 0.3, 0.3, 64), 1.0)
    np.testing.assert_allclose(rkhs.compactness_trend(Z, 0, 0, 64), 1.0)


def test_trend_of_non_monomial_is_nonincreasing():
    tr = rkhs.compactness_trend(rkhs.poly([1, 0.5]), 0, 1, 80)
    assert np.all(np.diff(tr) <= 1e-12)


def test_fit_exponent():
    # the divergent direction has a flat tail: the largest weight sits at the far end
    assert rkhs.fit_exponent(rkhs.compactness_trend(ONE, 1, 0, 512)).exponent == pytest.approx(0, abs=1e-9)
    assert rkhs.fit_exponent(rkhs.compactness_trend(ONE, 0, 1, 512)).exponent == pytest.approx(-0.5, abs=0.05)


@pytest.mark.parametrize("t", [-1.0, 0.0, 0.5, 1.0, 2.0])
def test_kernel_at_origin_is_one(t, rng):
    for _ in range(5):
        w = 0.99 * rng.random() * np.exp(2j * np.pi * rng.random())
        for N in (0, 5, 50):
            k = rkhs.kernel_eval(t, 0, w, N)
            assert k.value == 1 and k.tail_bound == 0


def test_kernel_geometric_series():
    for N in (5, 20, 60):
        k = rkhs.kernel_eval(0, 0.5, 0.5, N)
        err = abs(k.value - 4 / 3)
        assert err <= k.tail_bound * (1 + 1e-12) + 4e-16
        if N < 40:
            # the bound is not wildly loose
            assert k.tail_bound <= 10 * err


@pytest.mark.parametrize("s", [-1.5, 0.0, 1.0, 2.5])
def test_tail_bound_dominates_long_sum(s):
    z, w, N = 0.8, 0.9j, 30
    u = z * np.conj(w)
    n = np.arange(N + 1, 4000)
    tail = np.sum((n + 1.0) ** s * u ** n)
    assert abs(tail) <= rkhs.kernel_eval(s, z, w, N).tail_bound


def test_kernel_single_term():
    assert rkhs.kernel_eval(0, 0.9, 0, 10).value == 1


def test_kernel_outside_disc():
    with pytest.raises(OutsideDisc):
        rkhs.kernel_eval(0, 1.0, 0, 3)
    with pytest.raises(OutsideDisc):
        rkhs.kernel_irreducible(1, [0, 1.2j])


def test_kernel_irreducible_examples(rng):
    assert rkhs.kernel_irreducible(1, [0, 0.3, -0.5j, 0.9])
    pts = list(0.9 * rng.random(10) * np.exp(2j * np.pi * rng.random(10)))
    assert rkhs.kernel_irreducible(-1, pts)
    with pytest.raises(IllFormed):
        rkhs.kernel_irreducible(1, [0.1, 0.1])


def test_graph_connected_synthetic():
    K = np.array([[1, 0.5, 0, 0], [0.5, 1, 0, 0], [0, 0, 1, 0.2], [0, 0, 0.2, 1]])
    assert not rkhs.graph_connected(K)
    K[1, 2] = K[2, 1] = 1e-3
    assert rkhs.graph_connected(K)


@pytest.mark.parametrize("s", [-1, 0, 1])
@pytest.mark.parametrize("t", [-1, 0, 1])
def test_conditions_grid(s, t):
    r = rkhs.mult_boundary_conditions(s, t)
    assert r.has_constant and r.poly_dense_proxy and r.irreducible_proxy
    assert r.all_true == (s < t)
    assert bool(r.notes) == (s < t)


def test_poly_validation():
    with pytest.raises(IllFormed):
        rkhs.poly([])
    assert rkhs.poly([1, 2, 0, 0]).degree == 1
