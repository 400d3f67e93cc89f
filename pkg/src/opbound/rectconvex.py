"""Rectangular matrix convex sets: finite hulls, the CC dual ball, polars,
separation and a Krein-Milman style norm estimate.

Elements of M_{n,m}(V) with V = C^d are stored as coordinate stacks of shape
(d, n, m).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import boundary as bd
from . import cpmaps as cp
from . import numkernel as nk
from . import opspace as osp
from . import sdp
from .errors import (Degenerate, IllFormed, OpBoundError, PreconditionError, SamplerExhausted,
                     ShapeMismatch)

POLAR_TOL = 1e-9
SEPARATION_GAP = 1e-6
BOX_RADIUS = 1e3


# ---------------------------------------------------------------------------
# Sets

@dataclass(frozen=True)
class Generator:
    coords: np.ndarray          # (d, n, m)

    @property
    def n(self) -> int:
        return int(self.coords.shape[1])

    @property
    def m(self) -> int:
        return int(self.coords.shape[2])

    def to_json(self) -> dict:
        return {"n": self.n, "m": self.m, "coords": [nk.cmat_to_json(c) for c in self.coords]}


@dataclass(frozen=True)
class FiniteHull:
    d: int
    generators: tuple

    def to_json(self) -> dict:
        return {"variant": "hull", "d": self.d, "generators": [g.to_json() for g in self.generators]}


@dataclass(frozen=True)
class DualBall:
    space: osp.OpSubspace

    def to_json(self) -> dict:
        return {"variant": "dualball", "space": self.space.to_json()}


RectSet = FiniteHull | DualBall


def finite_hull(generators) -> FiniteHull:
    """Hull of generators given as coordinate stacks (d, n_j, m_j)."""
    gens = tuple(Generator(osp.as_coords(g)) for g in generators)
    if not gens:
        raise IllFormed("a hull needs at least one generator")
    d = gens[0].coords.shape[0]
    if any(g.coords.shape[0] != d for g in gens):
        raise ShapeMismatch("generators have different coordinate dimensions")
    return FiniteHull(d, gens)


def rectset_from_json(obj) -> RectSet:
    try:
        variant = obj["variant"]
        if variant == "dualball":
            return DualBall(osp.subspace_from_json(obj["space"]))
        if variant != "hull":
            raise IllFormed(f"unknown RectSet variant {variant!r}")
        gens = []
        for g in obj["generators"]:
            cs = [nk.cmat_from_json(c) for c in g["coords"]]
            if any(c.shape != (int(g["n"]), int(g["m"])) for c in cs):
                raise ShapeMismatch("generator coordinate shape does not match n, m")
            gens.append(np.stack(cs))
        hull = finite_hull(gens)
        if "d" in obj and int(obj["d"]) != hull.d:
            raise ShapeMismatch(f"declared d={obj['d']} but generators have d={hull.d}")
        return hull
    except (KeyError, TypeError) as exc:
        raise IllFormed(f"bad RectSet JSON: {exc}") from exc


def direct_sum(v1, v2) -> np.ndarray:
    a, b = osp.as_coords(v1), osp.as_coords(v2)
    if a.shape[0] != b.shape[0]:
        raise ShapeMismatch("coordinate dimensions differ")
    return np.stack([nk.direct_sum(x, y) for x, y in zip(a, b)])


def conjugate(v, u: np.ndarray, w: np.ndarray) -> np.ndarray:
    """u* v w applied coordinatewise."""
    return np.stack([nk.adjoint(u) @ x @ w for x in osp.as_coords(v)])


# ---------------------------------------------------------------------------
# Hull membership

def _corner_embed(w: np.ndarray) -> np.ndarray:
    n, m = w.shape
    u = np.zeros((n + m, n + m), dtype=complex)
    u[:n, n:] = w
    return u


@dataclass
class HullResult:
    verdict: cp.Verdict
    margin: float
    extension: cp.ExtensionResult
    layouts: list = field(default_factory=list)

    @property
    def blocks(self):
        return self.extension.blocks

    def maps(self):
        """Callables a -> Lambda_j(a) for the witness blocks."""
        if not self.blocks:
            return []
        return [(lambda a, lay=lay, c=c: lay.apply(c, a)) for lay, c in zip(self.layouts, self.blocks)]


def hull_system(K: FiniteHull, v) -> tuple[cp.MarginSystem, list]:
    v = osp.as_coords(v)
    if v.shape[0] != K.d:
        raise ShapeMismatch(f"element has d={v.shape[0]}, hull has d={K.d}")
    _, n, m = v.shape
    J = len(K.generators)
    f_top = nk.direct_sum(np.eye(n), np.zeros((m, m)))
    f_bot = nk.direct_sum(np.zeros((n, n)), np.eye(m))
    targets = [f_top, f_bot] + [_corner_embed(x) for x in v]
    tgt = np.concatenate([cp.cvec(t) for t in targets])
    A, refs, layouts = [], [], []
    ref_rhs = np.zeros_like(tgt)
    for g in K.generators:
        g_in = [0] * g.n + [1] * g.m
        layout = cp.ChoiLayout.graded(g_in, [0] * n + [1] * m)
        e_top = nk.direct_sum(np.eye(g.n), np.zeros((g.m, g.m)))
        e_bot = nk.direct_sum(np.zeros((g.n, g.n)), np.eye(g.m))
        inputs = [e_top, e_bot] + [_corner_embed(x) for x in g.coords]
        rows = []
        for k, s in enumerate(inputs):
            r = layout.value_rows(s)
            if k >= 2:
                # only the top-right corner of the image is constrained
                mask = np.zeros((n + m, n + m), dtype=bool)
                mask[:n, n:] = True
                r = r * np.concatenate([mask.reshape(-1), mask.reshape(-1)])[:, None]
            rows.append(r)
        A.append(np.concatenate(rows, axis=0))
        ref = cp._depolarizing(layout, g_in, [0] * n + [1] * m) / J
        refs.append(ref)
        layouts.append(layout)
        ref_rhs = ref_rhs + A[-1] @ sdp.hvec(ref)
    keep = (np.abs(np.concatenate(A, axis=1)).sum(axis=1) > 0) | (np.abs(tgt) > 0) | (np.abs(ref_rhs) > 0)
    system = cp.MarginSystem([lay.size for lay in layouts], [a[keep] for a in A], tgt[keep],
                             ref_rhs[keep], refs)
    return system, layouts


def hull_member(K: FiniteHull, v, tol: float = sdp.DEFAULT_TOL) -> HullResult:
    """Is v in the rectangular convex hull of the generators of K?"""
    system, layouts = hull_system(K, v)
    res = cp.solve_margin(system, cap=2.0, tol=tol)
    return HullResult(res.verdict, res.margin, res, layouts)


def dualball_member(K: DualBall, phi: osp.MatrixMap, tol: float = sdp.DEFAULT_TOL) -> cp.CCResult:
    if phi.domain != K.space:
        raise ShapeMismatch("map domain differs from the dual ball's space")
    return cp.is_cc(phi, tol)


# ---------------------------------------------------------------------------
# Polar and separation

def _values(f) -> np.ndarray:
    if isinstance(f, osp.MatrixMap):
        return np.stack(f.values)
    return osp.as_coords(f)


def polar_norms(S: FiniteHull, f) -> list[float]:
    vals = _values(f)
    if vals.shape[0] != S.d:
        raise ShapeMismatch(f"map has d={vals.shape[0]}, set has d={S.d}")
    return [nk.op_norm(osp.pairing(g.coords, vals)) for g in S.generators]


def polar_member(S: FiniteHull, f, tol: float = POLAR_TOL) -> bool:
    """f lies in the rectangular polar iff every generator pairs to norm <= 1."""
    return max(polar_norms(S, f)) <= 1.0 + tol


def _entry_rows(N: int, i0: int, j0: int, h: int, w: int) -> np.ndarray:
    """Complex rows selecting Y[i0:i0+h, j0:j0+w] (row-major) from row-major vec(Y)."""
    R = np.zeros((h * w, N * N), dtype=complex)
    for a in range(h):
        for b in range(w):
            R[a * w + b, (i0 + a) * N + (j0 + b)] = 1.0
    return R


def _pairing_rows(wc: np.ndarray, r: int, s: int):
    """Real coefficients: vec(sum_c w^(c) (x) F_c) in terms of [Re F; Im F].

    Returns (Re part, Im part), each of shape (n r * m s, 2 d r s).
    """
    d, n, m = wc.shape
    rs = r * s
    re = np.zeros((n * r * m * s, 2 * d * rs))
    im = np.zeros_like(re)
    for c in range(d):
        for i in range(n):
            for j in range(m):
                z = wc[c, i, j]
                if z == 0:
                    continue
                for a in range(r):
                    for b in range(s):
                        row = (i * r + a) * (m * s) + (j * s + b)
                        col = c * rs + a * s + b
                        re[row, col] += z.real
                        re[row, d * rs + col] -= z.imag
                        im[row, col] += z.imag
                        im[row, d * rs + col] += z.real
    return re, im


def polar_lmi_problem(S: FiniteHull, r: int, s: int, objective: np.ndarray | None = None,
                      radius: float = BOX_RADIUS, tol: float = sdp.DEFAULT_TOL) -> sdp.SdpProblem:
    """{F : [[I, <<w_j,F>>],[*, I]] >= 0 for all j, ||[F_1 ... F_d]|| <= radius}.

    Free variables are [Re F; Im F] with F of shape (d, r, s).
    """
    d = S.d
    nf = 2 * d * r * s
    sizes, rows_by_block, free_rows, rhs = [], [], [], []

    def add_block(N, pieces):
        # pieces: list of (R_complex on vec(Y), target_complex, free_re, free_im)
        k = len(sizes)
        sizes.append(N)
        for R, t, fre, fim in pieces:
            re, im = sdp.real_rows(R, N)
            for part, tt, ff in ((re, t.real, fre), (im, t.imag, fim)):
                rows_by_block.append((k, part))
                free_rows.append(ff if ff is not None else np.zeros((part.shape[0], nf)))
                rhs.append(np.asarray(tt, float).reshape(-1))

    for g in S.generators:
        h, w = g.n * r, g.m * s
        N = h + w
        pr, pi = _pairing_rows(g.coords, r, s)
        add_block(N, [
            (_entry_rows(N, 0, 0, h, h), np.eye(h, dtype=complex).reshape(-1), None, None),
            (_entry_rows(N, h, h, w, w), np.eye(w, dtype=complex).reshape(-1), None, None),
            (_entry_rows(N, 0, h, h, w), np.zeros(h * w, dtype=complex), -pr, -pi),
        ])
    # norm box on the row [F_1 ... F_d] in M_{r, d s}
    ds = d * s
    N = r + ds
    box_re = np.zeros((r * ds, nf))
    box_im = np.zeros((r * ds, nf))
    for c in range(d):
        for a in range(r):
            for b in range(s):
                row = a * ds + c * s + b
                col = c * r * s + a * s + b
                box_re[row, col] = 1.0
                box_im[row, d * r * s + col] = 1.0
    add_block(N, [
        (_entry_rows(N, 0, 0, r, r), radius * np.eye(r, dtype=complex).reshape(-1), None, None),
        (_entry_rows(N, r, r, ds, ds), radius * np.eye(ds, dtype=complex).reshape(-1), None, None),
        (_entry_rows(N, 0, r, r, ds), np.zeros(r * ds, dtype=complex), -box_re, -box_im),
    ])
    total = sum(p.shape[0] for _, p in rows_by_block)
    A = [np.zeros((total, n * n)) for n in sizes]
    off = 0
    for k, part in rows_by_block:
        A[k][off:off + part.shape[0]] = part
        off += part.shape[0]
    A_free = np.concatenate(free_rows, axis=0)
    b = np.concatenate(rhs)
    c = None if objective is None else [np.zeros(n * n) for n in sizes]
    return sdp.SdpProblem(sizes, A, b, nf, A_free, c, objective, tol=tol)


def _objective(v0: np.ndarray, xi: np.ndarray, eta: np.ndarray, r: int, s: int) -> np.ndarray:
    """Coefficients of Re xi* <<v0, F>> eta on [Re F; Im F]."""
    d, n, m = v0.shape
    X = xi.reshape(n, r).conj()
    E = eta.reshape(m, s)
    g = np.einsum("ia,cij,jb->cab", X, v0, E).reshape(-1)
    return np.concatenate([g.real, -g.imag])


@dataclass
class SeparationResult:
    found: bool
    phi: np.ndarray | None = None       # (d, n, m) values of the separating map
    pairing_norm: float = 0.0
    polar_norm: float = float("nan")
    restarts: int = 0

    def to_json(self) -> dict:
        out = {"found": self.found, "pairing_norm": self.pairing_norm, "polar_norm": self.polar_norm,
               "restarts": self.restarts}
        if self.phi is not None:
            out["phi"] = [nk.cmat_to_json(x) for x in self.phi]
        return out


def separate(K: FiniteHull, v0, restarts: int = 8, sweeps: int = 12, seed: int = 0,
             tol: float = sdp.DEFAULT_TOL, check: bool = True) -> SeparationResult:
    """Look for phi in the polar of K with ||<<v0, phi>>|| > 1.

    Alternates a linear SDP step over the polar at level (n, m) with a top
    singular pair update. Failing to find one proves nothing.
    """
    v0 = osp.as_coords(v0)
    if v0.shape[0] != K.d:
        raise ShapeMismatch(f"element has d={v0.shape[0]}, hull has d={K.d}")
    if check and hull_member(K, v0, tol).verdict == cp.Verdict.YES:
        raise PreconditionError("v0 lies in the hull; nothing to separate")
    d, n, m = v0.shape
    r, s = n, m
    rng = np.random.default_rng(seed)
    best = SeparationResult(False)
    for k in range(restarts):
        xi = nk.random_cmat(rng, n * r, 1).reshape(-1)
        eta = nk.random_cmat(rng, m * s, 1).reshape(-1)
        xi, eta = xi / np.linalg.norm(xi), eta / np.linalg.norm(eta)
        last = -np.inf
        F = None
        for _ in range(sweeps):
            out = sdp.maximize_linear(polar_lmi_problem(K, r, s, _objective(v0, xi, eta, r, s), tol=tol))
            if out.status != sdp.Status.FEASIBLE:
                break
            z = out.free
            half = d * r * s
            F = (z[:half] + 1j * z[half:]).reshape(d, r, s)
            P = osp.pairing(v0, F)
            u, sv, wv = nk.svd(P)
            xi, eta = u[:, 0], wv[:, 0]
            if sv[0] <= last * (1 + 1e-9):
                break
            last = sv[0]
        if F is None:
            continue
        scale = max(polar_norms(K, F))
        if scale > 0:
            F = F / scale      # push onto the boundary of the polar
        val = nk.op_norm(osp.pairing(v0, F))
        if val > best.pairing_norm:
            best = SeparationResult(False, F, val, max(polar_norms(K, F)), k + 1)
        if val >= 1.0 + SEPARATION_GAP:
            best.found = True
            best.restarts = k + 1
            return best
    best.restarts = restarts
    return best


# ---------------------------------------------------------------------------
# Krein-Milman norm estimate

@dataclass
class KmEstimate:
    lower: float
    upper: float
    extreme_points: list = field(default_factory=list)   # MatrixMaps certified extreme
    candidates: int = 0


def _exposed_candidate(X: osp.OpSubspace, x: np.ndarray, r: int, s: int, rng, sweeps: int = 4,
                       jitter: float = 1e-3, tol: float = sdp.DEFAULT_TOL) -> osp.MatrixMap | None:
    """A CC map X -> M_{r,s} maximizing a (perturbed) pairing functional."""
    p, q = X.p, X.q
    layout = cp.paulsen_grading(p, q, r, s)
    e_top = nk.direct_sum(np.eye(p), np.zeros((q, q)))
    e_bot = nk.direct_sum(np.zeros((p, p)), np.eye(q))
    f_top = nk.direct_sum(np.eye(r), np.zeros((s, s)))
    f_bot = nk.direct_sum(np.zeros((r, r)), np.eye(s))
    A = np.concatenate([layout.value_rows(e_top), layout.value_rows(e_bot)], axis=0)
    b = np.concatenate([cp.cvec(f_top), cp.cvec(f_bot)])
    keep = np.linalg.norm(A, axis=1) > 0
    A, b = A[keep], b[keep]
    # complex rows of phi(b_c)[a, b'] on vec(C_sub)
    corner = []
    for bc in X.basis:
        R = layout.complex_rows(_corner_embed(bc)).reshape(r + s, r + s, -1)[:r, r:]
        corner.append(R.reshape(r * s, -1))
    corner = np.stack(corner)                                  # (d, r s, size^2)
    d = X.dim
    G = nk.random_cmat(rng, d * r * s, 1).reshape(d, r * s)
    xi = nk.random_cmat(rng, x.shape[1] * r, 1).reshape(-1)
    eta = nk.random_cmat(rng, x.shape[2] * s, 1).reshape(-1)
    phi = None
    for k in range(sweeps):
        # the perturbation keeps the optimum unique; it shrinks as the ascent settles
        g = np.einsum("ia,cij,jb->cab", xi.reshape(-1, r).conj(), x, eta.reshape(-1, s)).reshape(d, r * s)
        g = g / max(np.abs(g).max(), 1e-300) + jitter * 1e-2 ** k * G
        row = np.einsum("ck,ckv->v", g, corner)
        c_obj, _ = sdp.real_rows(row[None, :], layout.size)
        prob = sdp.SdpProblem([layout.size], [A], b, c=[c_obj[0]], tol=tol)
        out = sdp.maximize_linear(prob)
        if out.status != sdp.Status.FEASIBLE:
            return phi
        C = out.primal[0]
        vals = [layout.apply(C, _corner_embed(bc))[:r, r:] for bc in X.basis]
        phi = osp.MatrixMap(X, r, s, tuple(vals))
        u, _, wv = nk.svd(osp.pairing(x, phi))
        xi, eta = u[:, 0], wv[:, 0]
    return phi


def _random_candidate(X: osp.OpSubspace, r: int, s: int, rng) -> osp.MatrixMap:
    vals = tuple(nk.random_cmat(rng, r, s) for _ in range(X.dim))
    return osp.MatrixMap(X, r, s, vals)


def km_norm_estimate(X: osp.OpSubspace, x, samples: int = 200, seed: int = 0,
                     tol: float = sdp.DEFAULT_TOL) -> KmEstimate:
    """Bracket ||x|| for x in M_{n,m}(X) from below by pairings with certified
    rectangular extreme points and from above by the realized norm."""
    x = osp.as_coords(x)
    if x.shape[0] != X.dim:
        raise ShapeMismatch(f"x has d={x.shape[0]}, space has dim {X.dim}")
    upper = nk.op_norm(osp.realize(x, X))
    if upper == 0.0:
        return KmEstimate(0.0, 0.0)
    _, n, m = x.shape
    levels = [(r, s) for r in range(1, n + 1) for s in range(1, m + 1)]
    rng = np.random.default_rng(seed)
    est = KmEstimate(-np.inf, upper)
    for k in range(samples):
        # each level gets both kinds of candidate
        r, s = levels[(k // 2) % len(levels)]
        est.candidates += 1
        # alternate exposed points of the ball with scaled random maps
        phi = _exposed_candidate(X, x, r, s, rng, tol=tol) if k % 2 == 0 else _random_candidate(X, r, s, rng)
        if phi is None or all(nk.op_norm(v) == 0 for v in phi.values):
            continue
        try:
            cb = cp.cb_norm(phi, tol).value
            phi = phi.scaled(1.0 / cb)
            if not osp.is_nondegenerate(phi):
                continue
            verdict = bd.is_rect_extreme(phi, tol, check=False).verdict
        except (Degenerate, OpBoundError):
            continue
        if verdict != bd.Purity.PURE:
            continue
        est.extreme_points.append(phi)
        est.lower = max(est.lower, nk.op_norm(osp.pairing(x, phi)))
        if est.lower >= upper * (1 - 1e-9):
            break
    if not est.extreme_points:
        raise SamplerExhausted(f"no certified extreme point among {est.candidates} candidates")
    return est
