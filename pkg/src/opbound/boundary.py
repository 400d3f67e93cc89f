"""Purity, dilations, unique extensions and boundary representations."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import cpmaps as cp
from . import numkernel as nk
from . import opspace as osp
from . import sdp
from .errors import (Degenerate, ExtensionInfeasible, GradingSplitFailure, IllFormed,
                     PreconditionError)

PURE_NO = 1e-6
PURE_YES = 1e-7
UEP_WIDTH = 1e-6
TRIPLE_TOL = 1e-8
STINESPRING_CUTOFF = 1e-8


class Purity(str, enum.Enum):
    PURE = "Pure"
    NOT_PURE = "NotPure"
    INDETERMINATE = "Indeterminate"


# ---------------------------------------------------------------------------
# Order-interval probing

@dataclass
class PurityResult:
    verdict: Purity
    max_excursion: float
    excursions: list
    witness: list | None = None          # values of Psi on the spec inputs
    witness_distance: float | None = None
    spec: cp.ExtensionSpec | None = None
    witness_chois: tuple | None = None   # (C1, C2) on the layout, summing to an extension of Phi

    @property
    def is_pure(self) -> bool:
        return self.verdict == Purity.PURE


def _value_matrix(spec: cp.ExtensionSpec) -> np.ndarray:
    """L with cvec(values of Phi_C on inputs) = L @ hvec(C)."""
    return np.concatenate([spec.layout.value_rows(s) for s in spec.inputs], axis=0)


def _probe_directions(L: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Orthonormal real directions spanning range(L) minus the line through target."""
    u, s, _ = np.linalg.svd(L, full_matrices=False)
    if not s.size or s[0] == 0:
        return np.zeros((L.shape[0], 0))
    rng_basis = u[:, s > 1e-10 * s[0]]
    t = target / max(np.linalg.norm(target), 1e-300)
    proj = rng_basis - np.outer(t, t @ rng_basis)
    u2, s2, _ = np.linalg.svd(proj, full_matrices=False)
    return u2[:, s2 > 1e-8]


def purity_from_spec(spec: cp.ExtensionSpec, tol: float = sdp.DEFAULT_TOL) -> PurityResult:
    """Probe the order interval {Psi : 0 <= Psi <= Phi in the CP order on S}.

    Both summands live on the minimal face of the extension problem, so the
    probe runs there; on that face the joint problem is strictly feasible.
    """
    face = spec.face(tol)
    r = face.rank
    L = _value_matrix(spec) @ face.K
    target = np.concatenate([cp.cvec(v) for v in spec.targets])
    dirs = _probe_directions(L, target)
    base = sdp.SdpProblem([r, r], [face.A, face.A], face.b, tol=tol)
    exc = []
    best = (-np.inf, None, None)
    for k in range(dirs.shape[1]):
        obj = L.T @ dirs[:, k]
        out = sdp.maximize_linear(base.with_objective([obj, np.zeros(r * r)]))
        if out.status != sdp.Status.FEASIBLE:
            exc.append(float("nan"))
            continue
        val = float(out.objective_value)
        exc.append(val)
        if val > best[0]:
            best = (val, out.primal[0], out.primal[1])
    finite = [e for e in exc if np.isfinite(e)]
    worst = max(finite, default=0.0)
    res = PurityResult(Purity.PURE, worst, exc, spec=spec)
    if worst > PURE_NO:
        res.verdict = Purity.NOT_PURE
        x1 = best[1]
        c1 = face.lift(x1)
        res.witness = [spec.layout.apply(c1, s) for s in spec.inputs]
        res.witness_chois = (c1, face.lift(best[2]))
        psi = L @ sdp.hvec(x1)
        t = target / np.linalg.norm(target)
        res.witness_distance = float(np.linalg.norm(psi - t * (t @ psi)))
    elif worst > PURE_YES or len(finite) < len(exc):
        res.verdict = Purity.INDETERMINATE
    return res


def is_pure_ucp(phi: osp.MatrixMap, unital: bool = True, tol: float = sdp.DEFAULT_TOL,
                layout: cp.ChoiLayout | None = None) -> PurityResult:
    """Purity of a (U)CP-extendable map on an operator system S inside M_N."""
    ext = cp.ucp_extension_exists(phi, unital=unital, tol=tol, layout=layout)
    if ext.verdict != cp.Verdict.YES:
        raise PreconditionError(f"map is not CP-extendable (verdict {ext.verdict.value})")
    S = phi.domain
    lay = layout or cp.ChoiLayout.full(S.p, phi.n)
    inputs, targets = list(S.basis), list(phi.values)
    spec = cp.ExtensionSpec(lay, inputs, targets, np.eye(lay.size) / S.p,
                            [lay.apply(np.eye(lay.size) / S.p, s) for s in inputs])
    return purity_from_spec(spec, tol)


def is_rect_extreme(phi: osp.MatrixMap, tol: float = sdp.DEFAULT_TOL, check: bool = True) -> PurityResult:
    """Rectangular extreme point test: purity of S(phi) with the graded Choi layout."""
    if check:
        if not osp.is_nondegenerate(phi):
            raise Degenerate("map is degenerate")
        cc = cp.is_cc(phi, tol)
        if cc.verdict != cp.Verdict.YES:
            raise PreconditionError(f"map is not completely contractive (verdict {cc.verdict.value})")
    return purity_from_spec(cp.paulsen_spec(phi), tol)


# ---------------------------------------------------------------------------
# Dilations

@dataclass
class DilationResult:
    theta: osp.MatrixMap
    v: np.ndarray
    w: np.ndarray
    minimal: bool
    compression_residual: float
    triple_residual: float
    rank: int
    span_defects: tuple = (0.0, 0.0)

    def defects(self) -> float:
        """max over basis(T) of ||q theta(x) (1-p)|| and ||(1-q) theta(x) p||."""
        qk = self.w @ nk.adjoint(self.w)
        ph = self.v @ nk.adjoint(self.v)
        one_k = np.eye(qk.shape[0])
        one_h = np.eye(ph.shape[0])
        worst = 0.0
        for t in self.theta.values:
            worst = max(worst, nk.op_norm(qk @ t @ (one_h - ph)), nk.op_norm((one_k - qk) @ t @ ph))
        return worst

    def is_trivial(self, tol: float = 1e-7) -> bool:
        return self.defects() <= tol

    def to_json(self) -> dict:
        return {"theta": self.theta.to_json(), "v": nk.cmat_to_json(self.v), "w": nk.cmat_to_json(self.w),
                "minimal": self.minimal, "compression_residual": self.compression_residual,
                "triple_residual": self.triple_residual, "rank": self.rank,
                "defects": self.defects()}


def _extension_choi(phi: osp.MatrixMap, tol: float) -> tuple[cp.ChoiLayout, np.ndarray]:
    """Interior-point solution of the Paulsen extension problem (zero objective)."""
    spec = cp.paulsen_spec(phi)
    face = spec.face(tol)
    out = sdp.solve(sdp.SdpProblem([face.rank], [face.A], face.b, tol=tol))
    if out.status == sdp.Status.FEASIBLE:
        c = face.lift(out.primal[0])
        if spec.residual(c) <= cp.EXT_RESIDUAL:
            return spec.layout, c
    res = cp.solve_margin(spec, tol=tol, need_certificate=False)
    if res.verdict == cp.Verdict.YES:
        return spec.layout, res.choi
    raise ExtensionInfeasible(f"no completely contractive extension (margin {res.margin:.3g})")


def _span(vectors: list, dim: int) -> np.ndarray:
    if not vectors:
        return np.zeros((dim, 0), dtype=complex)
    return nk.range_basis(np.concatenate(vectors, axis=1), 1e-9)


def triple_dilation(phi: osp.MatrixMap, minimal: bool = True, tol: float = sdp.DEFAULT_TOL) -> DilationResult:
    """Dilate a rectangular operator state on a TRO to a triple morphism."""
    T = phi.domain
    if osp.tro_generate(T).dim != T.dim:
        raise PreconditionError("domain is not a TRO")
    if not osp.is_nondegenerate(phi):
        raise Degenerate("map is degenerate")
    p, q, n, m = T.p, T.q, phi.n, phi.m
    layout, c_sub = _extension_choi(phi, tol)
    ks = cp.kraus_from_choi(layout.embed(c_sub), p + q, n + m, STINESPRING_CUTOFF)
    r = len(ks)
    split = max(max(nk.op_norm(k[:p, n:]), nk.op_norm(k[p:, :n])) for k in ks)
    if split > 1e-6:
        raise GradingSplitFailure(f"Kraus operators mix grades by {split:.3g}")
    w = np.stack([k[:p, :n] for k in ks], axis=1).reshape(p * r, n)
    v = np.stack([k[p:, n:] for k in ks], axis=1).reshape(q * r, m)
    w, v = nk.polar_isometry(w), nk.polar_isometry(v)
    eye_r = np.eye(r)
    thetas = [np.kron(b, eye_r) for b in T.basis]

    span_defects = (0.0, 0.0)
    if minimal:
        K = _span([w], p * r)
        H = _span([v], q * r)
        for _ in range(4 * (p + q) * r + 4):
            K2 = _span([K] + [t @ H for t in thetas], p * r)
            H2 = _span([H] + [nk.adjoint(t) @ K2 for t in thetas], q * r)
            if K2.shape[1] == K.shape[1] and H2.shape[1] == H.shape[1]:
                break
            K, H = K2, H2
        # the spans named in the definition of a minimal dilation
        Kd = _span([t @ nk.adjoint(s) @ w for t in thetas for s in thetas] + [t @ v for t in thetas], p * r)
        Hd = _span([nk.adjoint(t) @ s @ v for t in thetas for s in thetas] + [nk.adjoint(t) @ w for t in thetas],
                   q * r)
        span_defects = (float(K.shape[1] - Kd.shape[1]), float(H.shape[1] - Hd.shape[1]))
        thetas = [nk.adjoint(K) @ t @ H for t in thetas]
        w = nk.adjoint(K) @ w
        v = nk.adjoint(H) @ v
        w, v = nk.polar_isometry(w), nk.polar_isometry(v)
    theta = osp.MatrixMap(T, thetas[0].shape[0], thetas[0].shape[1], tuple(thetas))
    comp = max(nk.op_norm(nk.adjoint(w) @ t @ v - val) for t, val in zip(thetas, phi.values))
    trip = osp.triple_residual(theta)
    is_min = minimal and span_defects == (0.0, 0.0)
    return DilationResult(theta, v, w, is_min, comp, trip, r, span_defects)


# ---------------------------------------------------------------------------
# Unique extension property

@dataclass
class UepResult:
    unique: bool
    extension: osp.MatrixMap
    triple_residual: float
    widths: list
    generates: bool
    extension_pair: tuple | None = None   # two extensions differing along the widest direction
    choi: np.ndarray | None = None        # Choi matrix (Paulsen layout) behind ``extension``
    choi_pair: tuple | None = None
    spec: cp.ExtensionSpec | None = None
    complement: list | None = None

    @property
    def uep(self) -> bool:
        return self.unique and self.triple_residual <= TRIPLE_TOL

    @property
    def affine_dimension(self) -> int:
        return int(sum(1 for w in self.widths if w > UEP_WIDTH))


def _complement_basis(X: osp.OpSubspace, T: osp.OpSubspace) -> list:
    """Orthonormal basis of T minus X (both bases orthonormal, so an absolute cutoff)."""
    qx = X.columns()
    full = nk.orthonormalize(T.columns(), existing=qx, scale=1.0)
    return nk.columns_to_mats(full[:, qx.shape[1]:], (T.p, T.q))


def _extension_on(T: osp.OpSubspace, X: osp.OpSubspace, phi: osp.MatrixMap, comp: list, comp_vals: list):
    def f(x):
        out = phi(x) if X.dim else np.zeros((phi.n, phi.m), dtype=complex)
        for c, val in zip(comp, comp_vals):
            out = out + np.vdot(c, x) * val
        return out
    return osp.map_from_function(T, f, phi.n, phi.m)


def uep_check(phi: osp.MatrixMap, T: osp.OpSubspace | None = None, tol: float = sdp.DEFAULT_TOL,
              check: bool = True) -> UepResult:
    """Probe the set of completely contractive extensions of phi to T."""
    X = phi.domain
    generated = osp.tro_generate(X)
    if T is None:
        T = generated
        generates = True
    else:
        if T.shape != X.shape or any(not T.contains(b) for b in X.basis):
            raise IllFormed("X is not contained in T")
        if osp.tro_generate(T).dim != T.dim:
            raise IllFormed("T is not a TRO")
        generates = generated.dim == T.dim
    if check:
        cc = cp.is_cc(phi, tol)
        if cc.verdict != cp.Verdict.YES:
            raise PreconditionError(f"map is not completely contractive (verdict {cc.verdict.value})")
    spec = cp.paulsen_spec(phi)
    comp = _complement_basis(X, T)
    n, m = phi.n, phi.m
    p, q = X.p, X.q
    face = spec.face(tol)
    base = sdp.SdpProblem([face.rank], [face.A], face.b, tol=tol)
    centre = sdp.solve(base)
    if centre.status != sdp.Status.FEASIBLE:
        raise ExtensionInfeasible(f"extension solve ended with {centre.solver_status}")
    c0 = face.lift(centre.primal[0])

    def ups(c):
        u = np.zeros((p + q, p + q), dtype=complex)
        u[:p, p:] = c
        return u

    def comp_values(csub):
        return [spec.layout.apply(csub, ups(c))[:n, n:] for c in comp]

    widths = []
    pair = None
    if comp:
        sel = np.zeros(((n + m), (n + m)), dtype=bool)
        sel[:n, n:] = True
        rows = []
        for c in comp:
            re, im = spec.layout.real_rows(ups(c))
            rows.append(re[sel.reshape(-1)])
            rows.append(im[sel.reshape(-1)])
        L = np.concatenate(rows, axis=0) @ face.K
        u, s, _ = np.linalg.svd(L, full_matrices=False)
        dirs = u[:, s > 1e-10 * s[0]] if s.size and s[0] > 0 else np.zeros((L.shape[0], 0))
        best = -1.0
        for k in range(dirs.shape[1]):
            obj = L.T @ dirs[:, k]
            hi = sdp.maximize_linear(base.with_objective([obj]))
            lo = sdp.maximize_linear(base.with_objective([-obj]))
            if hi.status != sdp.Status.FEASIBLE or lo.status != sdp.Status.FEASIBLE:
                widths.append(float("inf"))
                continue
            wdt = float(hi.objective_value + lo.objective_value)
            widths.append(wdt)
            if wdt > best:
                best = wdt
                pair = (face.lift(hi.primal[0]), face.lift(lo.primal[0]))
    unique = all(w <= UEP_WIDTH for w in widths)
    ext = _extension_on(T, X, phi, comp, comp_values(c0))
    res = UepResult(unique, ext, osp.triple_residual(ext), widths, generates, choi=c0, spec=spec,
                    complement=comp)
    if not unique and pair is not None:
        res.extension_pair = tuple(_extension_on(T, X, phi, comp, comp_values(c)) for c in pair)
        res.choi_pair = pair
    return res


# ---------------------------------------------------------------------------
# Irreducibility and boundary certificates

def intertwiner_space(theta: osp.MatrixMap, cutoff: float = 1e-9) -> np.ndarray:
    """Null space of (P, Q) -> (Q t - t P, P t* - t* Q) over t in theta(basis).

    Columns are vec(P) (m*m entries) followed by vec(Q) (n*n entries)."""
    n, m = theta.n, theta.m
    blocks = []
    for t in theta.values:
        t = nk.cmat(t)
        # row-major vec: vec(A X B) = (A kron B^T) vec(X)
        eq1 = np.concatenate([-np.kron(t, np.eye(m)), np.kron(np.eye(n), t.T)], axis=1)
        eq2 = np.concatenate([np.kron(np.eye(m), np.conj(t)), -np.kron(nk.adjoint(t), np.eye(n))], axis=1)
        blocks += [eq1, eq2]
    return nk.null_space(np.concatenate(blocks, axis=0), cutoff)


def irreducibility_dimension(theta: osp.MatrixMap) -> int:
    if not osp.is_nondegenerate(theta):
        raise Degenerate("representation is degenerate")
    return int(intertwiner_space(theta).shape[1])


class BoundaryStatus(str, enum.Enum):
    BOUNDARY = "Boundary"
    NOT_BOUNDARY = "NotBoundary"
    INDETERMINATE = "Indeterminate"


@dataclass
class BoundaryCertificate:
    status: BoundaryStatus
    extension: osp.MatrixMap
    uep_dimension: int
    intertwiner_dimension: int
    triple_residual: float
    reasons: list = field(default_factory=list)
    uep: UepResult | None = None
    intertwiner: np.ndarray | None = None

    def to_json(self) -> dict:
        return {"status": self.status.value, "uep_dimension": self.uep_dimension,
                "intertwiner_dimension": self.intertwiner_dimension,
                "triple_residual": self.triple_residual, "reasons": list(self.reasons),
                "extension": self.extension.to_json()}


def boundary_certify(phi: osp.MatrixMap, T: osp.OpSubspace | None = None,
                     tol: float = sdp.DEFAULT_TOL) -> BoundaryCertificate:
    if not osp.is_nondegenerate(phi):
        raise Degenerate("map is degenerate")
    u = uep_check(phi, T, tol)
    ext = u.extension
    nulls = intertwiner_space(ext)
    dim = int(nulls.shape[1])
    reasons = []
    if not u.unique:
        reasons.append("extension not unique")
    if u.triple_residual > TRIPLE_TOL:
        reasons.append("extension is not a triple morphism")
    if dim != 1:
        reasons.append("reducible")
    status = BoundaryStatus.BOUNDARY if not reasons else BoundaryStatus.NOT_BOUNDARY
    if status == BoundaryStatus.NOT_BOUNDARY and u.unique and 0 < max(u.widths, default=0) <= UEP_WIDTH \
            and u.triple_residual <= 10 * TRIPLE_TOL and dim == 1:
        status = BoundaryStatus.INDETERMINATE
    witness = None
    if dim != 1 and dim > 0:
        # a non-scalar intertwiner: project out the identity pair
        n, m = ext.n, ext.m
        ident = np.concatenate([np.eye(m).reshape(-1), np.eye(n).reshape(-1)])
        ident = ident / np.linalg.norm(ident)
        resid = nulls - np.outer(ident, np.conj(ident) @ nulls)
        k = int(np.argmax(np.linalg.norm(resid, axis=0)))
        witness = resid[:, k] / np.linalg.norm(resid[:, k])
    return BoundaryCertificate(status, ext, u.affine_dimension, dim, u.triple_residual, reasons, u, witness)


@dataclass
class EnvelopeResult:
    certified: bool
    envelope: osp.OpSubspace
    certificate: BoundaryCertificate


def triple_envelope_certify(X: osp.OpSubspace, tol: float = sdp.DEFAULT_TOL) -> EnvelopeResult:
    if X.dim == 0:
        raise Degenerate("zero space has no envelope")
    cert = boundary_certify(osp.identity_map(X), None, tol)
    T = osp.tro_generate(X)
    return EnvelopeResult(cert.status == BoundaryStatus.BOUNDARY, T, cert)
