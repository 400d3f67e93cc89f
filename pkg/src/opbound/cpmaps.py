"""Choi calculus, completely positive extensions, complete contractivity, cb-norms.

Choi convention: C = sum_ij E_ij (x) Phi(E_ij), so that
Phi(a)_{kl} = sum_ij a_ij C[(i,k),(j,l)] with index (i,k) -> i*M + k.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import numkernel as nk
from . import opspace as osp
from . import sdp
from .errors import NotFullAlgebra, PreconditionError, ShapeMismatch, ZeroMap

YES_GAP = 1e-7
NO_GAP = 5e-6
EXT_RESIDUAL = 5e-7


class Verdict(str, enum.Enum):
    YES = "Yes"
    NO = "No"
    INDETERMINATE = "Indeterminate"


# ---------------------------------------------------------------------------
# Choi matrices

@dataclass(frozen=True)
class ChoiMatrix:
    N: int
    M: int
    matrix: np.ndarray

    def apply(self, a) -> np.ndarray:
        return choi_apply(self.matrix, a, self.N, self.M)

    @property
    def lambda_min(self) -> float:
        return nk.lambda_min(self.matrix)

    def is_cp(self, tol: float = 1e-9) -> bool:
        return self.lambda_min >= -tol * max(1.0, nk.op_norm(self.matrix))

    def kraus(self, cutoff: float = 1e-8) -> list[np.ndarray]:
        return kraus_from_choi(self.matrix, self.N, self.M, cutoff)


def choi_apply(c: np.ndarray, a, N: int, M: int) -> np.ndarray:
    t = np.asarray(c).reshape(N, M, N, M)
    return np.einsum("ij,ikjl->kl", nk.cmat(a), t)


def choi_from_function(f, N: int, M: int | None = None) -> np.ndarray:
    blocks = [[nk.cmat(f(nk.unit(N, i, j))) for j in range(N)] for i in range(N)]
    if M is None:
        M = blocks[0][0].shape[0]
    c = np.zeros((N * M, N * M), dtype=complex)
    for i in range(N):
        for j in range(N):
            c[i * M:(i + 1) * M, j * M:(j + 1) * M] = blocks[i][j]
    return c


def choi_of(phi: osp.MatrixMap) -> ChoiMatrix:
    """Choi matrix of a map defined on the full algebra M_N."""
    d = phi.domain
    if d.p != d.q or d.dim != d.p * d.p:
        raise NotFullAlgebra(f"domain has dimension {d.dim}, need {d.p * d.p}")
    if phi.n != phi.m:
        raise ShapeMismatch("Choi matrices need square targets")
    return ChoiMatrix(d.p, phi.n, choi_from_function(phi, d.p, phi.n))


def kraus_from_choi(c: np.ndarray, N: int, M: int, cutoff: float = 1e-8) -> list[np.ndarray]:
    """K_k (N x M) with Phi(a) = sum_k K_k* a K_k."""
    w, u = np.linalg.eigh((c + nk.adjoint(c)) / 2)
    top = max(w[-1], 0.0) if w.size else 0.0
    out = []
    for lam, vec in zip(w[::-1], u[:, ::-1].T):
        if lam <= cutoff * top or lam <= 0:
            break
        out.append(np.conj(np.sqrt(lam) * vec).reshape(N, M))
    return out


def map_from_kraus(ks: Sequence[np.ndarray]):
    def f(a):
        a = nk.cmat(a)
        return sum(nk.adjoint(k) @ a @ k for k in ks)
    return f


def choi_from_kraus(ks: Sequence[np.ndarray]) -> np.ndarray:
    vs = [np.conj(k).reshape(-1) for k in ks]
    return sum(np.outer(v, np.conj(v)) for v in vs)


# ---------------------------------------------------------------------------
# Choi layouts: the index set of Choi coordinates kept as variables

@dataclass(frozen=True)
class ChoiLayout:
    """Sub-index set of the Choi matrix of maps M_N -> M_M.

    With a grading (g_in on C^N, g_out on C^M) only indices (i,k) with
    g_in[i] == g_out[k] are kept; this is forced when the map sends each
    grade projection to the matching output projection.
    """
    N: int
    M: int
    idx: np.ndarray

    @property
    def size(self) -> int:
        return int(self.idx.shape[0])

    @classmethod
    def full(cls, N: int, M: int) -> "ChoiLayout":
        return cls(N, M, np.arange(N * M))

    @classmethod
    def graded(cls, g_in: Sequence[int], g_out: Sequence[int]) -> "ChoiLayout":
        N, M = len(g_in), len(g_out)
        idx = [i * M + k for i in range(N) for k in range(M) if g_in[i] == g_out[k]]
        return cls(N, M, np.asarray(idx, dtype=int))

    def embed(self, c_sub: np.ndarray) -> np.ndarray:
        c = np.zeros((self.N * self.M, self.N * self.M), dtype=complex)
        c[np.ix_(self.idx, self.idx)] = c_sub
        return c

    def restrict(self, c: np.ndarray) -> np.ndarray:
        return np.asarray(c)[np.ix_(self.idx, self.idx)]

    def apply(self, c_sub: np.ndarray, a) -> np.ndarray:
        return choi_apply(self.embed(c_sub), a, self.N, self.M)

    def complex_rows(self, a) -> np.ndarray:
        """R with vec(Phi(a)) = R @ vec(C_sub) (row-major vecs)."""
        a = nk.cmat(a)
        ii, kk = np.divmod(self.idx, self.M)
        d = self.size
        R = np.zeros((self.M * self.M, d * d), dtype=complex)
        rows = (kk[:, None] * self.M + kk[None, :]).reshape(-1)
        vals = a[ii[:, None], ii[None, :]].reshape(-1)
        R[rows, np.arange(d * d)] = vals
        return R

    def real_rows(self, a) -> tuple[np.ndarray, np.ndarray]:
        """Rows on hvec(C_sub) for Re vec(Phi(a)) and Im vec(Phi(a))."""
        return sdp.real_rows(self.complex_rows(a), self.size)

    def value_rows(self, a) -> np.ndarray:
        """Stacked [Re; Im] rows."""
        re, im = self.real_rows(a)
        return np.concatenate([re, im], axis=0)


def paulsen_grading(p: int, q: int, n: int, m: int) -> ChoiLayout:
    return ChoiLayout.graded([0] * p + [1] * q, [0] * n + [1] * m)


def cvec(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x).reshape(-1)
    return np.concatenate([x.real, x.imag])


# ---------------------------------------------------------------------------
# Extension problems

@dataclass
class ExtensionSpec:
    """Find C >= 0 on ``layout`` with Phi_C(s_k) = targets_k for all k.

    ``reference`` is a Choi matrix (on the layout) that is positive definite and
    satisfies the constraints with targets ``reference_values``; the margin
    problem maximizes t with Phi_C(s_k) = (1-t) ref_k + t target_k.
    """
    layout: ChoiLayout
    inputs: list
    targets: list
    reference: np.ndarray
    reference_values: list

    def rows(self):
        A = np.concatenate([self.layout.value_rows(s) for s in self.inputs], axis=0)
        tgt = np.concatenate([cvec(v) for v in self.targets])
        ref = np.concatenate([cvec(v) for v in self.reference_values])
        keep = np.linalg.norm(A, axis=1) > 0
        # zero rows must have zero target; otherwise keep them to expose infeasibility
        keep |= np.abs(tgt) > 0
        keep |= np.abs(ref) > 0
        return A[keep], tgt[keep], ref[keep]

    def system(self) -> "MarginSystem":
        A, tgt, ref = self.rows()
        return MarginSystem([self.layout.size], [A], tgt, ref, [self.reference])

    def feasibility_problem(self, tol: float = sdp.DEFAULT_TOL, max_iter: int = 200) -> sdp.SdpProblem:
        return self.system().feasibility_problem(tol, max_iter)

    def margin_problem(self, cap: float = 2.0, tol: float = sdp.DEFAULT_TOL, max_iter: int = 200) -> sdp.SdpProblem:
        return self.system().margin_problem(cap, tol, max_iter)

    def face(self, tol: float = sdp.DEFAULT_TOL) -> Face:
        """Facial reduction from an interior (zero objective) solution."""
        A, tgt, _ = self.rows()
        d = self.layout.size
        out = sdp.solve(self.feasibility_problem(tol))
        V = np.eye(d, dtype=complex)
        if out.status == sdp.Status.FEASIBLE:
            V = spectral_face(out.primal[0])
        if V.shape[1] == d:
            V = np.eye(d, dtype=complex)
        K = face_map(V) if V.shape[1] < d else np.eye(d * d)
        AV = A @ K
        z, *_ = np.linalg.lstsq(AV, tgt, rcond=None)
        b = AV @ z
        res = float(np.linalg.norm(b - tgt))
        if res > 1e-7 * (1 + np.linalg.norm(tgt)):
            V, K, AV, b, res = np.eye(d, dtype=complex), np.eye(d * d), A, tgt, 0.0
        return Face(V, K, AV, b, res)

    def residual(self, c_sub: np.ndarray) -> float:
        return max((nk.op_norm(self.layout.apply(c_sub, s) - v) for s, v in zip(self.inputs, self.targets)),
                   default=0.0)


@dataclass
class Face:
    """Restriction C = V X V* of an extension problem to the face spanned by V.

    ``K`` maps hvec(X) to hvec(V X V*); ``A``/``b`` are the restricted
    constraints with ``b`` projected onto range(A) (``residual`` records the
    size of that projection).
    """
    V: np.ndarray
    K: np.ndarray
    A: np.ndarray
    b: np.ndarray
    residual: float

    @property
    def rank(self) -> int:
        return int(self.V.shape[1])

    def lift(self, x: np.ndarray) -> np.ndarray:
        return self.V @ x @ nk.adjoint(self.V)


def face_map(V: np.ndarray) -> np.ndarray:
    d, r = V.shape
    cols = []
    for k in range(r * r):
        e = np.zeros(r * r)
        e[k] = 1.0
        cols.append(sdp.hvec(V @ sdp.hmat(e, r) @ nk.adjoint(V)))
    return np.stack(cols, axis=1)


def spectral_face(c: np.ndarray, floor: float = 1e-6, min_ratio: float = 1e3) -> np.ndarray:
    """Range of the eigenvectors above the largest spectral gap that falls
    below ``floor * lambda_max``; the full space when no clear gap exists."""
    w, u = np.linalg.eigh((c + nk.adjoint(c)) / 2)
    w, u = w[::-1], u[:, ::-1]
    top = w[0]
    if top <= 0:
        return u
    best, cut = min_ratio, len(w)
    for i in range(len(w) - 1):
        lo = max(w[i + 1], 1e-14 * top)
        if lo < floor * top and w[i] / lo >= best:
            best, cut = w[i] / lo, i + 1
    return u[:, :cut]


@dataclass
class MarginSystem:
    """Blocks X_b >= 0 with sum_b A_b hvec(X_b) = target.

    ``reference`` blocks are positive definite and solve the system with right
    hand side ``ref_rhs``; the margin problem maximizes t subject to
    sum_b A_b hvec(X_b) = (1 - t) ref_rhs + t target, 0 <= t <= cap.
    """
    sizes: list
    A: list
    target: np.ndarray
    ref_rhs: np.ndarray
    reference: list

    def feasibility_problem(self, tol: float = sdp.DEFAULT_TOL, max_iter: int = 200) -> sdp.SdpProblem:
        return sdp.SdpProblem(list(self.sizes), list(self.A), self.target, tol=tol, max_iter=max_iter)

    def margin_problem(self, cap: float = 2.0, tol: float = sdp.DEFAULT_TOL, max_iter: int = 200) -> sdp.SdpProblem:
        m = self.target.shape[0]
        A = [np.concatenate([a, np.zeros((1, a.shape[1]))], axis=0) for a in self.A]
        A_t = np.concatenate([-(self.target - self.ref_rhs)[:, None], np.ones((1, 1))], axis=0)
        A_s = np.concatenate([np.zeros((m, 1)), np.ones((1, 1))], axis=0)
        b = np.concatenate([self.ref_rhs, [cap]])
        c = [np.zeros(n * n) for n in self.sizes] + [np.ones(1), np.zeros(1)]
        return sdp.SdpProblem(list(self.sizes) + [1, 1], A + [A_t, A_s], b, c=c, tol=tol, max_iter=max_iter)

    def residual(self, blocks) -> float:
        lhs = sum(a @ sdp.hvec(x) for a, x in zip(self.A, blocks))
        return float(np.max(np.abs(lhs - self.target))) if self.target.size else 0.0


@dataclass
class ExtensionResult:
    verdict: Verdict
    margin: float
    blocks: list | None = None              # witness blocks (Choi matrices on their layouts)
    layout: ChoiLayout | None = None
    residual: float | None = None
    certificate: sdp.Certificate | None = None
    problem: sdp.SdpProblem | None = None    # the t = 1 feasibility problem the certificate refers to
    outcome: sdp.SdpOutcome | None = None
    notes: list = field(default_factory=list)

    @property
    def choi(self) -> np.ndarray | None:
        return None if not self.blocks else self.blocks[0]

    @property
    def full_choi(self) -> np.ndarray | None:
        return None if self.choi is None else self.layout.embed(self.choi)


def solve_margin(system, cap: float = 2.0, tol: float = sdp.DEFAULT_TOL,
                 need_certificate: bool = True, max_iter: int = 200,
                 layout: ChoiLayout | None = None) -> ExtensionResult:
    """Decide feasibility of ``system`` at t = 1 by maximizing the margin t."""
    if isinstance(system, ExtensionSpec):
        layout = system.layout
        system = system.system()
    k = len(system.sizes)
    out = sdp.solve(system.margin_problem(cap, tol, max_iter))
    fp = system.feasibility_problem(tol, max_iter)
    res = ExtensionResult(Verdict.INDETERMINATE, float("nan"), layout=layout, outcome=out)
    if out.status == sdp.Status.INFEASIBLE:
        # only possible when the reference itself violates the linear constraints
        fo = sdp.solve(fp)
        res.verdict = Verdict.NO if fo.status == sdp.Status.INFEASIBLE else Verdict.INDETERMINATE
        res.margin, res.certificate, res.problem, res.outcome = 0.0, fo.certificate, fp, fo
        res.notes.append("margin problem infeasible")
        return res
    if out.status != sdp.Status.FEASIBLE:
        res.notes.append(f"margin solve status {out.solver_status}")
        return res
    t = float(out.primal[k][0, 0].real)
    res.margin = t
    if t >= 1.0 - YES_GAP:
        if t >= 1.0:
            blocks = [x / t + (1.0 - 1.0 / t) * r for x, r in zip(out.primal[:k], system.reference)]
        else:
            fo = sdp.solve(fp)
            blocks = fo.primal[:k] if fo.status == sdp.Status.FEASIBLE else out.primal[:k]
        res.verdict = Verdict.YES
        res.blocks = list(blocks)
        res.residual = system.residual(blocks)
        if min(nk.lambda_min(x) for x in blocks) < -1e-7 or res.residual > EXT_RESIDUAL:
            res.verdict = Verdict.INDETERMINATE
            res.notes.append("witness failed residual check")
        return res
    if t <= 1.0 - NO_GAP:
        if not need_certificate:
            res.verdict = Verdict.NO
            return res
        fo = sdp.solve(fp)
        res.problem, res.outcome = fp, fo
        if fo.status == sdp.Status.INFEASIBLE and fo.certificate is not None:
            res.verdict = Verdict.NO
            res.certificate = fo.certificate
        else:
            res.notes.append(f"no certificate at t=1 (status {fo.solver_status})")
        return res
    res.notes.append("margin inside the indeterminate band")
    return res


# ---------------------------------------------------------------------------
# Public operations

def _depolarizing(layout: ChoiLayout, g_in=None, g_out=None) -> np.ndarray:
    """Positive definite reference Choi matrix on the layout (unital when graded)."""
    if g_in is None:
        return np.eye(layout.size, dtype=complex) / layout.N
    ii, _ = np.divmod(layout.idx, layout.M)
    counts = {g: sum(1 for x in g_in if x == g) for g in set(g_in)}
    return np.diag([1.0 / counts[g_in[i]] for i in ii]).astype(complex)


def ucp_extension_exists(psi: osp.MatrixMap, unital: bool = True, tol: float = sdp.DEFAULT_TOL,
                         layout: ChoiLayout | None = None) -> ExtensionResult:
    """Is there a CP (UCP if ``unital``) map on M_N agreeing with psi on S?"""
    S = psi.domain
    if S.p != S.q or psi.n != psi.m:
        raise ShapeMismatch("operator systems live in square matrices")
    N, M = S.p, psi.n
    inputs = list(S.basis)
    targets = list(psi.values)
    if unital:
        if not S.contains(np.eye(N)):
            raise PreconditionError("unital extension requested but I is not in S")
        inputs.append(np.eye(N))
        targets.append(np.eye(M))
    layout = layout or ChoiLayout.full(N, M)
    ref = np.eye(layout.size, dtype=complex) / N
    spec = ExtensionSpec(layout, inputs, targets, ref, [layout.apply(ref, s) for s in inputs])
    return solve_margin(spec, cap=2.0, tol=tol)


def paulsen_spec(phi: osp.MatrixMap, t_scale: float = 1.0) -> ExtensionSpec:
    """Extension data for S(t phi) with the graded Choi layout."""
    x = phi.domain
    p, q, n, m = x.p, x.q, phi.n, phi.m
    layout = paulsen_grading(p, q, n, m)
    g_in, g_out = [0] * p + [1] * q, [0] * n + [1] * m
    ref = _depolarizing(layout, g_in, g_out)
    e_top = nk.direct_sum(np.eye(p), np.zeros((q, q)))
    e_bot = nk.direct_sum(np.zeros((p, p)), np.eye(q))
    f_top = nk.direct_sum(np.eye(n), np.zeros((m, m)))
    f_bot = nk.direct_sum(np.zeros((n, n)), np.eye(m))
    inputs, targets = [e_top, e_bot], [f_top, f_bot]
    for b, v in zip(x.basis, phi.values):
        u = np.zeros((p + q, p + q), dtype=complex)
        u[:p, p:] = b
        w = np.zeros((n + m, n + m), dtype=complex)
        w[:n, n:] = t_scale * v
        inputs.append(u)
        targets.append(w)
    return ExtensionSpec(layout, inputs, targets, ref, [layout.apply(ref, s) for s in inputs])


def corner(phi_full: np.ndarray, n: int) -> np.ndarray:
    return phi_full[:n, n:]


@dataclass
class CCResult:
    verdict: Verdict
    margin: float
    extension: ExtensionResult

    @property
    def certificate(self):
        return self.extension.certificate


def is_cc(phi: osp.MatrixMap, tol: float = sdp.DEFAULT_TOL) -> CCResult:
    """Complete contractivity via UCP-extendability of the Paulsen map."""
    if phi.domain.dim == 0:
        raise PreconditionError("empty domain")
    spec = paulsen_spec(phi)
    res = solve_margin(spec, cap=2.0, tol=tol)
    return CCResult(res.verdict, res.margin, res)


def norm_lower_bound(phi: osp.MatrixMap) -> float:
    return max(nk.op_norm(v) / nk.op_norm(b) for b, v in zip(phi.domain.basis, phi.values))


def norm_upper_bound(phi: osp.MatrixMap) -> float:
    """sum_k ||phi(b_k)|| * ||dual functional b_k||; the coordinate functionals
    of an orthonormal basis have norm <= sqrt(rank) in the trace dual."""
    x = phi.domain
    r = min(x.p, x.q)
    return float(sum(nk.op_norm(v) for v in phi.values)) * np.sqrt(r)


@dataclass
class CbNormResult:
    value: float
    lower: float
    upper: float
    margin: float
    choi: np.ndarray | None = None


def cb_norm(phi: osp.MatrixMap, tol: float = sdp.DEFAULT_TOL) -> CbNormResult:
    """||phi||_cb = 1 / t* where t* = sup{t : S(t phi) is UCP-extendable}."""
    if phi.domain.dim == 0 or all(nk.op_norm(v) == 0 for v in phi.values):
        raise ZeroMap("cb-norm of the zero map is not defined here")
    lo, hi = norm_lower_bound(phi), norm_upper_bound(phi)
    spec = paulsen_spec(phi)
    cap = 2.0 / lo
    out = sdp.solve(spec.margin_problem(cap=cap, tol=tol))
    if out.status != sdp.Status.FEASIBLE:
        raise sdp.NumericalBreakdown(f"cb-norm margin solve ended with {out.solver_status}")
    t = float(out.primal[1][0, 0].real)
    value = 1.0 / t
    return CbNormResult(value, lo, hi, t, out.primal[0])


def extension_map(res: ExtensionResult):
    """Callable a -> Phi(a) for a feasible extension result."""
    layout, c = res.layout, res.choi
    return lambda a: layout.apply(c, a)
