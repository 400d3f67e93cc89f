import copy

import numpy as np
import pytest

from opbound import boundary as bd
from opbound import certificates as certs
from opbound import cpmaps as cp
from opbound import numkernel as nk
from opbound import opspace as osp
from opbound import rectconvex as rc
from opbound.errors import IllFormed

from conftest import diag_tro
from oracles import hull_instance

C = osp.full_space(1, 1)


def corner(t, X):
    u = np.zeros((X.p + X.q, X.p + X.q), complex)
    u[:X.p, X.p:] = t
    return u


def farkas_cert():
    r = cp.is_cc(osp.identity_map(C).scaled(2.0))
    assert r.verdict == cp.Verdict.NO
    return certs.farkas(r.extension.problem, r.certificate.y)


def cp_split_cert():
    phi = osp.identity_map(C).scaled(0.5)
    pr = bd.is_rect_extreme(phi)
    return certs.cp_split(phi, pr.spec.layout, *pr.witness_chois)


def extension_pair_cert():
    phi = osp.matrix_map(osp.subspace([np.eye(2)]), [np.eye(1)])
    u = bd.uep_check(phi, diag_tro())
    lay = u.spec.layout
    vals = [[lay.apply(c, corner(t, phi.domain))[:1, 1:] for t in u.complement] for c in u.choi_pair]
    k = int(np.argmax([nk.op_norm(a - b) for a, b in zip(*vals)]))
    return certs.extension_pair(phi, lay, *u.choi_pair, u.complement[k], list(diag_tro().basis))


def non_triple_cert():
    phi = osp.identity_map(C).scaled(0.5)
    u = bd.uep_check(phi)
    one = np.eye(1)
    return certs.non_triple_extension(phi, u.spec.layout, u.choi, (one, one, one))


def intertwiner_cert():
    phi = osp.identity_map(osp.subspace([np.eye(2)]))
    bc = bd.boundary_certify(phi)
    w = bc.intertwiner
    P, Q = w[:4].reshape(2, 2), w[4:].reshape(2, 2)
    return certs.intertwiner(phi, bc.uep.spec.layout, bc.uep.choi, P, Q)


def polar_cert():
    gens, _, _, f = hull_instance(np.random.default_rng(0))
    return certs.polar_violation(gens[0], 1.5 * f / rc.polar_norms(rc.finite_hull(gens), f)[0])


BUILDERS = [farkas_cert, cp_split_cert, extension_pair_cert, non_triple_cert, intertwiner_cert, polar_cert]


@pytest.mark.parametrize("build", BUILDERS, ids=lambda b: b.__name__)
def test_certificate_verifies(build):
    cert = build()
    rep = certs.verify(cert)
    assert rep["ok"], rep
    assert rep["type"] == cert["type"]


def scale_matrix(obj, c):
    m = nk.cmat_from_json(obj)
    return nk.cmat_to_json(c * m)


def tamper(cert):
    t = copy.deepcopy(cert)
    kind = t["type"]
    if kind == "farkas":
        t["y"] = [-v for v in t["y"]]
    elif kind == "cp_split":
        # Psi on the segment: split the total extension evenly
        total = nk.cmat_from_json(t["choi1"]) + nk.cmat_from_json(t["choi2"])
        t["choi1"] = t["choi2"] = nk.cmat_to_json(total / 2)
    elif kind == "extension_pair":
        t["choi2"] = t["choi1"]
    elif kind == "non_triple_extension":
        t["choi"] = scale_matrix(t["choi"], -1.0)
    elif kind == "intertwiner":
        P = nk.cmat_from_json(t["P"])
        t["P"] = nk.cmat_to_json(np.eye(P.shape[0]))
        t["Q"] = nk.cmat_to_json(np.eye(P.shape[0]))
    elif kind == "polar_violation":
        t["f"] = [scale_matrix(m, 0.5) for m in t["f"]]
    return t


@pytest.mark.parametrize("build", BUILDERS, ids=lambda b: b.__name__)
def test_tampered_certificate_fails(build):
    assert not certs.verify(tamper(build()))["ok"]


def test_extension_pair_probe_outside_tro():
    cert = extension_pair_cert()
    cert["probe"] = nk.cmat_to_json(nk.unit(2, 0, 1))
    assert not certs.verify(cert)["ok"]


def test_extension_pair_needs_tro_field():
    cert = extension_pair_cert()
    del cert["tro"]
    # without the ambient TRO the probe is outside the TRO generated by span{I}
    assert not certs.verify(cert)["ok"]


def test_supplied_tro_must_be_a_tro():
    cert = extension_pair_cert()
    cert["tro"] = [nk.cmat_to_json(np.eye(2)), nk.cmat_to_json(nk.unit(2, 0, 1))]
    with pytest.raises(IllFormed):
        certs.verify(cert)


@pytest.mark.parametrize("kind, mats", [
    ("compression", {"x": np.diag([1.0, -2.0]), "a": np.array([[1.0, 0.5], [0.0, 2.0]])}),
    ("direct_sum", {"x": np.diag([1.0, -2.0]), "y": np.eye(1) * 3}),
    ("properness", {"x": np.diag([1.0, -2.0])}),
])
def test_honest_gauge_data_is_not_a_violation(kind, mats):
    assert not certs.verify(certs.gauge_violation(kind, mats))["ok"]


def test_verify_rejects_unknown():
    with pytest.raises(IllFormed):
        certs.verify({"type": "nope"})
    with pytest.raises(IllFormed):
        certs.verify({"type": "farkas"})
    with pytest.raises(IllFormed):
        certs.verify(certs.gauge_violation("other", {"x": np.eye(1)}))
