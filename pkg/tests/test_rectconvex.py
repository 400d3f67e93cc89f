import numpy as np
import pytest

from opbound import cpmaps as cp
from opbound import numkernel as nk
from opbound import opspace as osp
from opbound import rectconvex as rc
from opbound.errors import IllFormed, PreconditionError, ShapeMismatch

from oracles import hull_instance, pair_norm

DISC = rc.finite_hull([np.ones((1, 1, 1))])


def scalar(z):
    return np.array([[[z]]], dtype=complex)


@pytest.mark.parametrize("z, verdict", [
    (1.0, cp.Verdict.YES), (0.5, cp.Verdict.YES), (1j, cp.Verdict.YES), (0.6 - 0.8j, cp.Verdict.YES),
    (2.0, cp.Verdict.NO), (1.01, cp.Verdict.NO),
])
def test_disc_membership(z, verdict):
    # oracle: the level-(1,1) hull of {1} is {sum a_i conj(b_i)} with unit a, b, i.e. the closed disc
    assert (abs(z) <= 1) == (verdict == cp.Verdict.YES)
    assert rc.hull_member(DISC, scalar(z)).verdict == verdict


def test_disc_boundary_band():
    assert rc.hull_member(DISC, scalar(1.0000001)).verdict != cp.Verdict.YES


@pytest.mark.parametrize("seed", range(4))
def test_generator_and_conjugates_are_members(seed):
    rng = np.random.default_rng(seed)
    gens, inside, outside, _ = hull_instance(rng, d=2, n=1, m=2)
    K = rc.finite_hull(gens)
    w = gens[0]
    assert rc.hull_member(K, w).verdict == cp.Verdict.YES
    u, v = nk.random_unitary(rng, w.shape[1]), nk.random_unitary(rng, w.shape[2])
    assert rc.hull_member(K, rc.conjugate(w, u, v)).verdict == cp.Verdict.YES
    assert rc.hull_member(K, inside).verdict == cp.Verdict.YES
    assert rc.hull_member(K, outside).verdict == cp.Verdict.NO


@pytest.mark.parametrize("seed", range(3))
def test_membership_invariant_under_unitary_conjugation(seed):
    rng = np.random.default_rng(seed)
    gens, inside, outside, _ = hull_instance(rng, d=2, n=2, m=1)
    K = rc.finite_hull(gens)
    u, v = nk.random_unitary(rng, 2), nk.random_unitary(rng, 1)
    for x in (inside, outside):
        assert rc.hull_member(K, x).verdict == rc.hull_member(K, rc.conjugate(x, u, v)).verdict


def test_direct_sum_of_members(rng):
    gens, inside, _, _ = hull_instance(rng, d=2, n=1, m=1)
    K = rc.finite_hull(gens)
    assert rc.hull_member(K, rc.direct_sum(inside, gens[1])).verdict == cp.Verdict.YES


def test_witness_blocks_reproduce_point(rng):
    gens, inside, _, _ = hull_instance(rng, d=2, n=1, m=1, J=2)
    K = rc.finite_hull(gens)
    res = rc.hull_member(K, inside)
    total = np.zeros((1, 1), complex)
    for lam, g in zip(res.maps(), K.generators):
        u = np.zeros((g.n + g.m, g.n + g.m), complex)
        u[:g.n, g.n:] = g.coords[0]
        total += lam(u)[:1, 1:]
    assert abs(total[0, 0] - inside[0, 0, 0]) < 1e-6


def test_shape_checks():
    with pytest.raises(ShapeMismatch):
        rc.hull_member(DISC, np.zeros((2, 1, 1)))
    with pytest.raises(IllFormed):
        rc.finite_hull([])
    with pytest.raises(IllFormed):
        rc.rectset_from_json({"variant": "cone"})


def test_rectset_json_roundtrip(rng):
    gens, *_ = hull_instance(rng)
    K = rc.finite_hull(gens)
    K2 = rc.rectset_from_json(K.to_json())
    assert all(np.array_equal(a.coords, b.coords) for a, b in zip(K.generators, K2.generators))
    X = osp.full_space(1, 2)
    assert isinstance(rc.rectset_from_json(rc.DualBall(X).to_json()), rc.DualBall)


def test_dualball_member():
    X = osp.full_space(2, 1)
    B = rc.DualBall(X)
    assert rc.dualball_member(B, osp.identity_map(X)).verdict == cp.Verdict.YES
    assert rc.dualball_member(B, osp.identity_map(X).scaled(1.5)).verdict == cp.Verdict.NO


def test_polar_member_examples(rng):
    assert rc.polar_member(DISC, np.zeros((1, 1, 1)))
    assert rc.polar_member(DISC, scalar(1.0))
    assert not rc.polar_member(DISC, scalar(1.5))
    gens, *_ = hull_instance(rng, d=3)
    K = rc.finite_hull(gens)
    f = nk.random_cmat(rng, 6, 2).reshape(3, 2, 2)
    f = f / max(pair_norm(g, f) for g in gens)
    assert rc.polar_member(K, f)
    assert not rc.polar_member(K, 1.001 * f)


def test_separate_disc():
    s = rc.separate(DISC, scalar(2.0))
    assert s.found and s.pairing_norm == pytest.approx(2.0, abs=1e-6)
    assert abs(s.phi[0, 0, 0]) == pytest.approx(1.0, abs=1e-6)


def test_separate_coordinate_hull():
    K = rc.finite_hull([np.array([1, 0.0]).reshape(2, 1, 1), np.array([0, 1.0]).reshape(2, 1, 1)])
    v0 = np.array([1.5, 0]).reshape(2, 1, 1)
    assert rc.hull_member(K, v0).verdict == cp.Verdict.NO
    s = rc.separate(K, v0)
    assert s.found and s.pairing_norm >= 1.5 - 1e-6
    assert rc.polar_member(K, s.phi)


def test_separate_rejects_member():
    with pytest.raises(PreconditionError):
        rc.separate(DISC, scalar(0.5))


@pytest.mark.parametrize("seed", range(4))
def test_separate_is_sound_on_members(seed):
    rng = np.random.default_rng(seed)
    gens, inside, _, _ = hull_instance(rng, d=2, n=1, m=2)
    s = rc.separate(rc.finite_hull(gens), inside, restarts=2, check=False)
    assert not s.found
    if s.phi is not None:
        assert pair_norm(inside, s.phi) <= 1 + 1e-6


@pytest.mark.parametrize("seed", range(4))
def test_separate_certificates_verify(seed):
    rng = np.random.default_rng(seed)
    gens, _, outside, _ = hull_instance(rng, d=2, n=2, m=1)
    s = rc.separate(rc.finite_hull(gens), outside, restarts=10)
    assert s.found
    assert pair_norm(outside, s.phi) >= 1 + 1e-6
    assert max(pair_norm(g, s.phi) for g in gens) <= 1 + 1e-9


@pytest.mark.parametrize("c", [3 - 4j, 0.5, -2.0])
def test_km_scalar(c):
    e = rc.km_norm_estimate(osp.full_space(1, 1), scalar(c))
    assert e.lower == pytest.approx(abs(c), abs=1e-4) and e.upper == pytest.approx(abs(c))


def test_km_zero():
    e = rc.km_norm_estimate(osp.full_space(1, 2), np.zeros((2, 1, 1)))
    assert (e.lower, e.upper) == (0.0, 0.0)


def test_km_row_space_basis_element():
    x = np.zeros((2, 1, 1), complex)
    x[0] = 1
    e = rc.km_norm_estimate(osp.full_space(1, 2), x)
    assert e.lower == pytest.approx(1.0, abs=1e-4) and e.upper == pytest.approx(1.0)
    assert e.extreme_points


def test_km_lower_never_exceeds_upper(rng):
    X = osp.subspace([nk.random_cmat(rng, 2, 2) for _ in range(2)])
    x = nk.random_cmat(rng, 2, 1).reshape(2, 1, 1)
    e = rc.km_norm_estimate(X, x, samples=20)
    assert e.lower <= e.upper * (1 + 1e-6)
