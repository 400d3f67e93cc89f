"""Serializable certificates for negative verdicts and their independent checks.

Builders take library results; ``verify`` re-checks a certificate document with
dense linear algebra from :mod:`numkernel` only (no conic solves).
"""
from __future__ import annotations

import numpy as np

from . import numkernel as nk
from .errors import IllFormed

PSD_TOL = 1e-7
EQ_TOL = 1e-6
SEP_TOL = 1e-7
TRIPLE_TOL = 1e-8


def _mats(obj) -> list[np.ndarray]:
    return [nk.cmat_from_json(m) for m in obj]


def _json_mats(mats) -> list[dict]:
    return [nk.cmat_to_json(m) for m in mats]


# ---------------------------------------------------------------------------
# Builders

def farkas(problem, y) -> dict:
    p = problem.to_json()
    p.pop("c", None)
    p.pop("c_free", None)
    return {"type": "farkas", "problem": p, "y": np.asarray(y, float).tolist()}


def _layout_json(layout) -> dict:
    return {"N": int(layout.N), "M": int(layout.M), "idx": [int(i) for i in layout.idx]}


def _phi_json(phi) -> dict:
    X = phi.domain
    return {"p": X.p, "q": X.q, "basis": _json_mats(X.basis), "n": phi.n, "m": phi.m,
            "values": _json_mats(phi.values)}


def cp_split(phi, layout, c1, c2) -> dict:
    """Phi's Paulsen map written as Psi + (Phi - Psi) with Psi off the segment."""
    return {"type": "cp_split", "map": _phi_json(phi), "layout": _layout_json(layout),
            "choi1": nk.cmat_to_json(c1), "choi2": nk.cmat_to_json(c2)}


def extension_pair(phi, layout, c1, c2, probe, tro=None) -> dict:
    """Two CP extensions of S(phi) that differ on the corner of ``probe`` in the TRO.

    ``tro`` (a basis) names an ambient TRO other than the one X generates."""
    out = {"type": "extension_pair", "map": _phi_json(phi), "layout": _layout_json(layout),
           "choi1": nk.cmat_to_json(c1), "choi2": nk.cmat_to_json(c2), "probe": nk.cmat_to_json(probe)}
    if tro is not None:
        out["tro"] = _json_mats(tro)
    return out


def non_triple_extension(phi, layout, c, triple, tro=None) -> dict:
    out = {"type": "non_triple_extension", "map": _phi_json(phi), "layout": _layout_json(layout),
           "choi": nk.cmat_to_json(c), "triple": _json_mats(triple)}
    if tro is not None:
        out["tro"] = _json_mats(tro)
    return out


def intertwiner(phi, layout, c, P, Q, tro=None) -> dict:
    out = {"type": "intertwiner", "map": _phi_json(phi), "layout": _layout_json(layout),
           "choi": nk.cmat_to_json(c), "P": nk.cmat_to_json(P), "Q": nk.cmat_to_json(Q)}
    if tro is not None:
        out["tro"] = _json_mats(tro)
    return out


def polar_violation(generator, values) -> dict:
    return {"type": "polar_violation", "generator": _json_mats(generator), "f": _json_mats(values)}


def gauge_violation(kind: str, mats: dict) -> dict:
    return {"type": "gauge_violation", "kind": kind, **{k: nk.cmat_to_json(v) for k, v in mats.items()}}


# ---------------------------------------------------------------------------
# Checks (numkernel only)

def _apply(c_sub: np.ndarray, idx, N: int, M: int, a: np.ndarray) -> np.ndarray:
    c = np.zeros((N * M, N * M), dtype=complex)
    c[np.ix_(idx, idx)] = c_sub
    return np.einsum("ij,ikjl->kl", nk.cmat(a), c.reshape(N, M, N, M))


def _psd_ok(c: np.ndarray) -> tuple[bool, float]:
    lam = nk.lambda_min(c) / max(1.0, nk.op_norm(c))
    return lam >= -PSD_TOL, float(lam)


def _paulsen_data(mp: dict):
    p, q, n, m = int(mp["p"]), int(mp["q"]), int(mp["n"]), int(mp["m"])
    basis, values = _mats(mp["basis"]), _mats(mp["values"])
    if len(basis) != len(values):
        raise IllFormed("basis and values differ in length")
    e_top = nk.direct_sum(np.eye(p), np.zeros((q, q)))
    e_bot = nk.direct_sum(np.zeros((p, p)), np.eye(q))
    f_top = nk.direct_sum(np.eye(n), np.zeros((m, m)))
    f_bot = nk.direct_sum(np.zeros((n, n)), np.eye(m))
    inputs, targets = [e_top, e_bot], [f_top, f_bot]
    for b, v in zip(basis, values):
        inputs.append(_corner(b, p, q))
        targets.append(_corner(v, n, m))
    return (p, q, n, m), basis, inputs, targets


def _corner(x, p, q):
    u = np.zeros((p + q, p + q), dtype=complex)
    u[:p, p:] = x
    return u


def _extension_ok(cert: dict, c: np.ndarray) -> tuple[bool, dict]:
    (p, q, n, m), basis, inputs, targets = _paulsen_data(cert["map"])
    lay = cert["layout"]
    N, M, idx = int(lay["N"]), int(lay["M"]), np.asarray(lay["idx"], int)
    if (N, M) != (p + q, n + m):
        raise IllFormed("layout does not match the map")
    psd, lam = _psd_ok(c)
    res = max(nk.op_norm(_apply(c, idx, N, M, s) - t) for s, t in zip(inputs, targets))
    return psd and res <= EQ_TOL, {"lambda_min": lam, "constraint_residual": float(res)}


def _theta(cert: dict, c: np.ndarray):
    mp = cert["map"]
    p, q, n = int(mp["p"]), int(mp["q"]), int(mp["n"])
    lay = cert["layout"]
    N, M, idx = int(lay["N"]), int(lay["M"]), np.asarray(lay["idx"], int)
    return lambda t: _apply(c, idx, N, M, _corner(t, p, q))[:n, n:]


def _tro_basis(cert: dict) -> list[np.ndarray]:
    """The ambient TRO: the one X generates, or a supplied one checked to be a
    TRO containing X."""
    X = _mats(cert["map"]["basis"])
    if "tro" not in cert:
        return nk.span_closure(X, "triple")
    given = nk.orthonormal_basis(_mats(cert["tro"]))
    closed = nk.span_closure(given, "triple")
    if len(closed) != len(given) or not all(_in_tro(x, given) for x in X):
        raise IllFormed("supplied TRO is not a TRO containing X")
    return given


def _in_tro(x, T) -> bool:
    return nk.in_span(x, T) <= 1e-8 * (1.0 + nk.fro(x))


def _verify_farkas(cert: dict) -> dict:
    p = cert["problem"]
    sizes = [int(n) for n in p["sizes"]]
    b = np.asarray(p["b"], float)
    y = np.asarray(cert["y"], float)
    if y.shape != b.shape:
        raise IllFormed("y and b differ in length")
    by = float(b @ y)
    if not by < 0:
        return {"ok": False, "b_dot_y": by}
    y = y / -by
    lams = []
    for a, n in zip(p["A"], sizes):
        w = nk.hmat(np.asarray(a, float).reshape(len(b), n * n).T @ y, n)
        lams.append(nk.lambda_min(w) / max(1.0, nk.fro(w)))
    free = 0.0
    if int(p.get("n_free", 0)):
        free = float(np.linalg.norm(np.asarray(p["A_free"], float).T @ y))
    lam = min(lams) if lams else 0.0
    ok = lam >= -PSD_TOL and free <= PSD_TOL * (1 + np.linalg.norm(y))
    return {"ok": bool(ok), "lambda_min": float(lam), "free_residual": free}


def _verify_cp_split(cert: dict) -> dict:
    c1, c2 = nk.cmat_from_json(cert["choi1"]), nk.cmat_from_json(cert["choi2"])
    _, _, inputs, targets = _paulsen_data(cert["map"])
    ok_sum, info = _extension_ok(cert, c1 + c2)
    psd1, lam1 = _psd_ok(c1)
    psd2, lam2 = _psd_ok(c2)
    lay = cert["layout"]
    N, M, idx = int(lay["N"]), int(lay["M"]), np.asarray(lay["idx"], int)
    psi = np.concatenate([_apply(c1, idx, N, M, s).reshape(-1) for s in inputs])
    tgt = np.concatenate([t.reshape(-1) for t in targets])
    psi_r = np.concatenate([psi.real, psi.imag])
    t_r = np.concatenate([tgt.real, tgt.imag])
    t_r = t_r / np.linalg.norm(t_r)
    dist = float(np.linalg.norm(psi_r - t_r * (t_r @ psi_r)))
    ok = ok_sum and psd1 and psd2 and dist > SEP_TOL
    return {"ok": bool(ok), "distance_from_segment": dist, "lambda_min": min(lam1, lam2), **info}


def _verify_extension_pair(cert: dict) -> dict:
    c1, c2 = nk.cmat_from_json(cert["choi1"]), nk.cmat_from_json(cert["choi2"])
    ok1, i1 = _extension_ok(cert, c1)
    ok2, i2 = _extension_ok(cert, c2)
    probe = nk.cmat_from_json(cert["probe"])
    in_t = _in_tro(probe, _tro_basis(cert))
    gap = nk.op_norm(_theta(cert, c1)(probe) - _theta(cert, c2)(probe))
    ok = ok1 and ok2 and in_t and gap > 1e-6
    return {"ok": bool(ok), "difference": float(gap), "probe_in_tro": bool(in_t),
            "constraint_residual": max(i1["constraint_residual"], i2["constraint_residual"])}


def _verify_non_triple(cert: dict) -> dict:
    c = nk.cmat_from_json(cert["choi"])
    ok_ext, info = _extension_ok(cert, c)
    x, y, z = _mats(cert["triple"])
    T = _tro_basis(cert)
    in_t = all(_in_tro(a, T) for a in (x, y, z))
    th = _theta(cert, c)
    res = nk.op_norm(th(x @ nk.adjoint(y) @ z) - th(x) @ nk.adjoint(th(y)) @ th(z))
    ok = ok_ext and in_t and res > TRIPLE_TOL
    return {"ok": bool(ok), "triple_residual": float(res), "in_tro": bool(in_t), **info}


def _verify_intertwiner(cert: dict) -> dict:
    c = nk.cmat_from_json(cert["choi"])
    ok_ext, info = _extension_ok(cert, c)
    P, Q = nk.cmat_from_json(cert["P"]), nk.cmat_from_json(cert["Q"])
    th = _theta(cert, c)
    T = _tro_basis(cert)
    res = 0.0
    for t in T:
        v = th(t)
        res = max(res, nk.op_norm(Q @ v - v @ P), nk.op_norm(P @ nk.adjoint(v) - nk.adjoint(v) @ Q))
    # distance of (P, Q) from the scalar pairs, relative to its size
    pair = np.concatenate([P.reshape(-1), Q.reshape(-1)])
    ident = np.concatenate([np.eye(P.shape[0]).reshape(-1), np.eye(Q.shape[0]).reshape(-1)])
    ident = ident / np.linalg.norm(ident)
    nonscalar = float(np.linalg.norm(pair - ident * np.vdot(ident, pair)) / max(np.linalg.norm(pair), 1e-300))
    ok = ok_ext and res <= 1e-7 * (1 + np.linalg.norm(pair)) and nonscalar > 1e-3
    return {"ok": bool(ok), "intertwining_residual": float(res), "nonscalar": nonscalar, **info}


def _verify_polar(cert: dict) -> dict:
    g, f = np.stack(_mats(cert["generator"])), np.stack(_mats(cert["f"]))
    if g.shape[0] != f.shape[0]:
        raise IllFormed("coordinate dimensions differ")
    d, n, m = g.shape
    _, r, s = f.shape
    norm = nk.op_norm(np.einsum("cij,cab->iajb", g, f).reshape(n * r, m * s))
    return {"ok": bool(norm > 1.0 + 1e-9), "pairing_norm": float(norm)}


def _nu(x) -> float:
    return max(float(nk.eigvalsh(x)[-1]), 0.0)


def _verify_gauge(cert: dict) -> dict:
    kind = cert["kind"]
    x = nk.cmat_from_json(cert["x"])
    if kind == "compression":
        a = nk.cmat_from_json(cert["a"])
        lhs, rhs = _nu(nk.adjoint(a) @ x @ a), nk.op_norm(a) ** 2 * _nu(x)
        return {"ok": bool(lhs > rhs * (1 + 1e-10) + 1e-12), "lhs": lhs, "rhs": rhs}
    if kind == "direct_sum":
        y = nk.cmat_from_json(cert["y"])
        lhs, rhs = _nu(nk.direct_sum(x, y)), max(_nu(x), _nu(y))
        return {"ok": bool(lhs != rhs), "lhs": lhs, "rhs": rhs}
    if kind == "properness":
        lhs, rhs = max(_nu(x), _nu(-x)), nk.op_norm(x)
        return {"ok": bool(abs(lhs - rhs) > 1e-10 * (1 + rhs)), "lhs": lhs, "rhs": rhs}
    raise IllFormed(f"unknown gauge violation kind {kind!r}")


VERIFIERS = {
    "farkas": _verify_farkas,
    "cp_split": _verify_cp_split,
    "extension_pair": _verify_extension_pair,
    "non_triple_extension": _verify_non_triple,
    "intertwiner": _verify_intertwiner,
    "polar_violation": _verify_polar,
    "gauge_violation": _verify_gauge,
}


def verify(cert: dict) -> dict:
    """Re-check a certificate document; returns a report with an ``ok`` flag."""
    try:
        kind = cert["type"]
        fn = VERIFIERS[kind]
    except (KeyError, TypeError) as exc:
        raise IllFormed(f"unknown or missing certificate type: {exc}") from exc
    try:
        out = fn(cert)
    except (KeyError, TypeError, ValueError) as exc:
        raise IllFormed(f"malformed {kind} certificate: {exc}") from exc
    out["type"] = kind
    return out
