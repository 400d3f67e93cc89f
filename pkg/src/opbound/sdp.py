"""Small dense SDPs over Hermitian PSD blocks.

A problem has Hermitian blocks X_1..X_k (sizes n_b), optional real free
variables f, and real equality constraints

    sum_b tr(W_{i,b} X_b) + a_i . f = b_i

Each block is parametrized by real coordinates in an orthonormal Hermitian
basis (``hvec``), so constraint rows are real. The PSD condition is imposed on
the realification [[Re X, -Im X], [Im X, Re X]]. The conic solve is delegated
to Clarabel, a homogeneous-embedding interior point method that returns either
a primal-dual pair or an infeasibility certificate.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from . import numkernel as nk
from .numkernel import hmat, hvec
from .errors import IllFormed, NumericalBreakdown, SizeExceeded

DEFAULT_TOL = 1e-7
MAX_PSD_DIM = 600
_MAX_ITER_OVERRIDE: int | None = None
SQRT2 = np.sqrt(2.0)


class Status(str, enum.Enum):
    FEASIBLE = "Feasible"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    MAXITER = "MaxIter"


# ---------------------------------------------------------------------------
# Hermitian coordinates

@lru_cache(maxsize=64)
def vec_from_hvec(n: int) -> np.ndarray:
    """Complex matrix B with vec(X) = B @ hvec(X) (row-major vec)."""
    b = np.zeros((n * n, n * n), dtype=complex)
    for k in range(n * n):
        e = np.zeros(n * n)
        e[k] = 1.0
        b[:, k] = hmat(e, n).reshape(-1)
    b.setflags(write=False)
    return b


def real_rows(r: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Split complex functionals X -> r . vec(X) into Re/Im rows on hvec(X)."""
    m = np.atleast_2d(r) @ vec_from_hvec(n)
    return m.real, m.imag


@lru_cache(maxsize=64)
def _psd_embedding(n: int) -> sp.csc_matrix:
    """Sparse map hvec(X) -> svec(realify(X)) in Clarabel's triangle format
    (upper triangle, column-major, off-diagonals scaled by sqrt 2)."""
    big = 2 * n
    iu, ju = np.triu_indices(big)
    order = np.lexsort((iu, ju))
    iu, ju = iu[order], ju[order]
    scale = np.where(iu == ju, 1.0, SQRT2)
    cols = []
    for k in range(n * n):
        e = np.zeros(n * n)
        e[k] = 1.0
        x = hmat(e, n)
        blk = np.block([[x.real, -x.imag], [x.imag, x.real]])
        cols.append(scale * blk[iu, ju])
    return sp.csc_matrix(np.stack(cols, axis=1))


# ---------------------------------------------------------------------------
# Problem / outcome

@dataclass
class SdpProblem:
    """Equality-constrained SDP in Hermitian coordinates.

    ``A[b]`` has one row per constraint and ``n_b**2`` columns (hvec coords of
    block b); ``A_free`` has ``n_free`` columns. ``c``/``c_free`` is the
    objective to maximize (None for a pure feasibility problem).
    """
    sizes: list[int]
    A: list[np.ndarray]
    b: np.ndarray
    n_free: int = 0
    A_free: np.ndarray | None = None
    c: list[np.ndarray] | None = None
    c_free: np.ndarray | None = None
    tol: float = DEFAULT_TOL
    max_iter: int = 200
    names: list[str] | None = None

    @property
    def n_con(self) -> int:
        return int(np.asarray(self.b).shape[0])

    def validate(self):
        if len(self.A) != len(self.sizes):
            raise IllFormed("one coefficient matrix per block required")
        m = self.n_con
        for a, n in zip(self.A, self.sizes):
            if n < 1 or a.shape != (m, n * n):
                raise IllFormed(f"block coefficient shape {a.shape} != {(m, n * n)}")
        if self.n_free and (self.A_free is None or self.A_free.shape != (m, self.n_free)):
            raise IllFormed("free-variable coefficients missing or misshapen")
        if self.c is not None and len(self.c) != len(self.sizes):
            raise IllFormed("objective must give one vector per block")
        if not (self.tol > 0 and self.max_iter > 0):
            raise IllFormed("tolerance and iteration cap must be positive")
        if sum(self.sizes) > MAX_PSD_DIM:
            raise SizeExceeded(f"total PSD dimension {sum(self.sizes)} > {MAX_PSD_DIM}")

    def dense_A(self) -> np.ndarray:
        parts = list(self.A)
        if self.n_free:
            parts.append(self.A_free)
        return np.concatenate(parts, axis=1) if parts else np.zeros((self.n_con, 0))

    def dense_c(self) -> np.ndarray:
        nv = sum(n * n for n in self.sizes) + self.n_free
        if self.c is None:
            return np.zeros(nv)
        parts = [np.asarray(v, dtype=float) for v in self.c]
        if self.n_free:
            parts.append(np.zeros(self.n_free) if self.c_free is None else np.asarray(self.c_free, float))
        return np.concatenate(parts)

    def with_objective(self, c: list[np.ndarray], c_free=None) -> "SdpProblem":
        return SdpProblem(self.sizes, self.A, self.b, self.n_free, self.A_free, c, c_free,
                          self.tol, self.max_iter, self.names)

    def scaled_targets(self, factor: float) -> "SdpProblem":
        return SdpProblem(self.sizes, self.A, factor * np.asarray(self.b), self.n_free, self.A_free,
                          self.c, self.c_free, self.tol, self.max_iter, self.names)

    def split(self, x: np.ndarray):
        blocks, off = [], 0
        for n in self.sizes:
            blocks.append(hmat(x[off:off + n * n], n))
            off += n * n
        return blocks, x[off:]

    def to_json(self) -> dict:
        out = {"sizes": list(map(int, self.sizes)),
               "A": [np.asarray(a).tolist() for a in self.A],
               "b": np.asarray(self.b, float).tolist(),
               "n_free": int(self.n_free), "tol": self.tol, "max_iter": int(self.max_iter)}
        if self.n_free:
            out["A_free"] = np.asarray(self.A_free).tolist()
        if self.c is not None:
            out["c"] = [np.asarray(v).tolist() for v in self.c]
            if self.n_free and self.c_free is not None:
                out["c_free"] = np.asarray(self.c_free).tolist()
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "SdpProblem":
        try:
            sizes = [int(n) for n in obj["sizes"]]
            b = np.asarray(obj["b"], dtype=float).reshape(-1)
            m = b.shape[0]
            A = [np.asarray(a, dtype=float).reshape(m, n * n) for a, n in zip(obj["A"], sizes)]
            n_free = int(obj.get("n_free", 0))
            A_free = np.asarray(obj["A_free"], dtype=float).reshape(m, n_free) if n_free else None
            c = [np.asarray(v, dtype=float) for v in obj["c"]] if "c" in obj else None
            c_free = np.asarray(obj["c_free"], dtype=float) if "c_free" in obj else None
            p = cls(sizes, A, b, n_free, A_free, c, c_free, float(obj.get("tol", DEFAULT_TOL)),
                    int(obj.get("max_iter", 200)))
        except (KeyError, TypeError, ValueError) as exc:
            raise IllFormed(f"bad SdpProblem JSON: {exc}") from exc
        p.validate()
        return p


class ProblemBuilder:
    """Incremental construction of an :class:`SdpProblem`."""

    def __init__(self, tol: float = DEFAULT_TOL, max_iter: int = 200):
        self.sizes: list[int] = []
        self.names: list[str] = []
        self.n_free = 0
        self._rows: list[tuple[dict[int, np.ndarray], dict[int, float], float]] = []
        self.tol = tol
        self.max_iter = max_iter
        self._obj: dict[int, np.ndarray] = {}
        self._obj_free: dict[int, float] = {}

    def block(self, n: int, name: str = "") -> int:
        self.sizes.append(int(n))
        self.names.append(name or f"X{len(self.sizes) - 1}")
        return len(self.sizes) - 1

    def free(self, k: int = 1) -> list[int]:
        start = self.n_free
        self.n_free += k
        return list(range(start, start + k))

    def add_row(self, coeffs: dict[int, np.ndarray], target: float, free: dict[int, float] | None = None):
        """Add sum_b hvec-row_b . hvec(X_b) + sum free = target."""
        self._rows.append(({k: np.asarray(v, float) for k, v in coeffs.items()}, dict(free or {}), float(target)))

    def add_hermitian(self, coeffs: dict[int, np.ndarray], target: float, free: dict[int, float] | None = None,
                      tol: float = 1e-12):
        """Add sum_b tr(W_b X_b) = target for Hermitian W_b."""
        rows = {}
        for k, w in coeffs.items():
            w = nk.cmat(w)
            if nk.herm_defect(w) > tol * (1 + nk.fro(w)):
                raise IllFormed("constraint coefficient is not conjugate-symmetric")
            rows[k] = hvec(w)
        self.add_row(rows, target, free)

    def add_complex(self, coeffs: dict[int, np.ndarray], target: complex, free_re=None, free_im=None):
        """Add the complex equation sum_b r_b . vec(X_b) = target as two real rows."""
        re_rows, im_rows = {}, {}
        for k, r in coeffs.items():
            re, im = real_rows(r, self.sizes[k])
            re_rows[k], im_rows[k] = re[0], im[0]
        self.add_row(re_rows, complex(target).real, free_re)
        self.add_row(im_rows, complex(target).imag, free_im)

    def add_rows_matrix(self, k: int, mat: np.ndarray, targets: np.ndarray, free_mat: dict[int, np.ndarray] | None = None):
        """Vectorized: rows of ``mat`` act on hvec(X_k)."""
        for i in range(mat.shape[0]):
            free = {j: float(col[i]) for j, col in (free_mat or {}).items() if col[i] != 0.0}
            self.add_row({k: mat[i]}, float(targets[i]), free)

    def objective(self, coeffs: dict[int, np.ndarray], free: dict[int, float] | None = None):
        self._obj = {k: np.asarray(v, float) for k, v in coeffs.items()}
        self._obj_free = dict(free or {})

    def build(self) -> SdpProblem:
        m = len(self._rows)
        A = [np.zeros((m, n * n)) for n in self.sizes]
        A_free = np.zeros((m, self.n_free)) if self.n_free else None
        b = np.zeros(m)
        for i, (coeffs, free, target) in enumerate(self._rows):
            for k, v in coeffs.items():
                A[k][i] += v
            for j, val in free.items():
                A_free[i, j] += val
            b[i] = target
        c = None
        c_free = None
        if self._obj or self._obj_free:
            c = [self._obj.get(k, np.zeros(n * n)) for k, n in enumerate(self.sizes)]
            if self.n_free:
                c_free = np.zeros(self.n_free)
                for j, val in self._obj_free.items():
                    c_free[j] = val
        p = SdpProblem(list(self.sizes), A, b, self.n_free, A_free, c, c_free, self.tol, self.max_iter,
                       list(self.names))
        p.validate()
        return p


@dataclass
class Certificate:
    """Farkas witness: y with A_free^T y = 0, b.y = -1 and sum_i y_i W_i PSD."""
    y: np.ndarray
    lambda_min: float
    free_residual: float

    def to_json(self) -> dict:
        return {"y": self.y.tolist(), "lambda_min": self.lambda_min, "free_residual": self.free_residual}


@dataclass
class SdpOutcome:
    status: Status
    primal: list[np.ndarray] = field(default_factory=list)
    free: np.ndarray = field(default_factory=lambda: np.zeros(0))
    dual: np.ndarray = field(default_factory=lambda: np.zeros(0))
    objective_value: float | None = None
    dual_bound: float | None = None
    residual: float = np.inf
    min_eig: float = -np.inf
    certificate: Certificate | None = None
    iterations: int = 0
    solver_status: str = ""


# ---------------------------------------------------------------------------
# Solving

def _reduce_rows(A: np.ndarray, b: np.ndarray, cutoff: float = 1e-11):
    """Orthogonal row compression: A_r = U_r^T A has full row rank."""
    if A.shape[0] == 0:
        return np.zeros((0, A.shape[1])), np.zeros(0), np.zeros((0, 0)), np.zeros(0)
    u, s, _ = np.linalg.svd(A, full_matrices=False)
    rank = int(np.sum(s > cutoff * max(s[0], 1e-300))) if s.size and s[0] > 0 else 0
    ur = u[:, :rank]
    res = b - ur @ (ur.T @ b)
    return ur.T @ A, ur.T @ b, ur, res


def certificate_from_dual(p: SdpProblem, y: np.ndarray) -> Certificate | None:
    """Normalize and evaluate a candidate Farkas vector."""
    by = float(np.dot(p.b, y))
    if not by < 0:
        return None
    y = y / (-by)
    free_res = float(np.linalg.norm(p.A_free.T @ y)) if p.n_free else 0.0
    lam = min((nk.lambda_min(hmat(a.T @ y, n)) / max(1.0, nk.fro(hmat(a.T @ y, n)))
               for a, n in zip(p.A, p.sizes)), default=0.0)
    return Certificate(y, float(lam), free_res)


def certificate_ok(p: SdpProblem, cert: Certificate, tol: float | None = None) -> bool:
    tol = p.tol if tol is None else tol
    return cert.lambda_min >= -tol and cert.free_residual <= tol * (1 + np.linalg.norm(cert.y))


def _residuals(p: SdpProblem, x: np.ndarray):
    A = p.dense_A()
    r = float(np.linalg.norm(A @ x - p.b)) / (1.0 + float(np.linalg.norm(p.b)))
    blocks, _ = p.split(x)
    mins = [nk.lambda_min(X) for X in blocks]
    return r, (min(mins) if mins else 0.0)


def _clarabel_solve(A_eq, b_eq, q, sizes, n_free, max_iter, tol):
    import clarabel

    nb = sum(n * n for n in sizes)
    cone_blocks = []
    col = 0
    for n in sizes:
        e = _psd_embedding(n)
        pad_l = sp.csc_matrix((e.shape[0], col))
        pad_r = sp.csc_matrix((e.shape[0], nb - col - n * n + n_free))
        cone_blocks.append(sp.hstack([pad_l, -e, pad_r]))
        col += n * n
    A = sp.vstack([sp.csc_matrix(A_eq)] + cone_blocks).tocsc()
    b = np.concatenate([b_eq, np.zeros(A.shape[0] - A_eq.shape[0])])
    cones = []
    if A_eq.shape[0]:
        cones.append(clarabel.ZeroConeT(A_eq.shape[0]))
    cones += [clarabel.PSDTriangleConeT(2 * n) for n in sizes]
    P = sp.csc_matrix((A.shape[1], A.shape[1]))
    gap = min(1e-10, tol * 1e-3)
    best, best_score, sol, failure = None, np.inf, None, None
    for variant in _LADDER:
        st = clarabel.DefaultSettings()
        st.verbose = False
        st.max_iter = int(max_iter)
        st.max_threads = 1
        st.chordal_decomposition_enable = False
        st.presolve_enable = False
        st.tol_gap_abs = st.tol_gap_rel = st.tol_feas = gap
        st.tol_infeas_abs = st.tol_infeas_rel = gap
        st.tol_ktratio = 1e-8
        for key, val in variant.items():
            setattr(st, key, val)
        try:
            sol = clarabel.DefaultSolver(P, np.asarray(q, float), A, b, cones, st).solve()
        except BaseException as exc:  # rust panics surface as BaseException
            if isinstance(exc, (KeyboardInterrupt, SystemExit)):
                raise
            failure = exc
            continue
        status = str(sol.status)
        if status in _FINAL:
            return sol
        if status.startswith("Almost"):
            score = _score(sol)
            if score < best_score:
                best, best_score = sol, score
        elif best is None and status not in _RETRY:
            best, best_score = sol, np.inf
    if best is not None:
        return best
    if sol is None:
        raise NumericalBreakdown(f"every solver variant failed: {failure}")
    return sol


def _score(sol) -> float:
    pobj, dobj = float(sol.obj_val), float(sol.obj_val_dual)
    gap = abs(pobj - dobj) / (1.0 + abs(pobj))
    return gap + float(sol.r_prim) + float(sol.r_dual) if np.isfinite(gap) else np.inf


# Fixed retry schedule: stronger static regularization copes best with the
# degenerate (non-Slater) faces that unique extensions produce. Variants run
# in order, so results stay deterministic.
_LADDER = (
    {"static_regularization_constant": 1e-7},
    {"equilibrate_enable": False},
    {"static_regularization_constant": 1e-7, "equilibrate_enable": False},
    {},
    {"static_regularization_constant": 1e-6},
)
_FINAL = {"Solved", "PrimalInfeasible", "DualInfeasible"}
_RETRY = {"NumericalError", "InsufficientProgress"}


def set_max_iter(n: int | None):
    """Process-wide iteration cap overriding the per-problem value (None restores)."""
    global _MAX_ITER_OVERRIDE
    if n is not None and n < 1:
        raise IllFormed("iteration cap must be positive")
    _MAX_ITER_OVERRIDE = n


def solve(p: SdpProblem) -> SdpOutcome:
    """Solve (or decide feasibility of) an SDP; see module docstring."""
    p.validate()
    A = p.dense_A()
    nv = A.shape[1]
    Ar, br, ur, res = _reduce_rows(A, np.asarray(p.b, float))
    if np.linalg.norm(res) > 1e-9 * (1.0 + np.linalg.norm(p.b)):
        # affine constraints alone are inconsistent: linear Farkas vector
        y = -res / float(np.dot(res, res))
        cert = certificate_from_dual(p, y)
        return SdpOutcome(Status.INFEASIBLE, certificate=cert, dual=y, solver_status="linear")
    maximize = p.c is not None
    c = p.dense_c()
    q = -c if maximize else np.zeros(nv)
    try:
        sol = _clarabel_solve(Ar, br, q, p.sizes, p.n_free, _MAX_ITER_OVERRIDE or p.max_iter, p.tol)
    except Exception as exc:  # solver-internal factorization failures
        raise NumericalBreakdown(f"conic solver failed: {exc}") from exc
    status = str(sol.status)
    x = np.asarray(sol.x, dtype=float)
    z = np.asarray(sol.z, dtype=float)
    y = ur @ z[:Ar.shape[0]] if Ar.shape[0] else np.zeros(p.n_con)
    iters = int(sol.iterations)

    if "PrimalInfeasible" in status:
        cert = certificate_from_dual(p, y)
        if cert is not None and certificate_ok(p, cert, max(p.tol, 1e-6)):
            return SdpOutcome(Status.INFEASIBLE, dual=cert.y, certificate=cert, iterations=iters,
                              solver_status=status)
        return SdpOutcome(Status.MAXITER, dual=y, iterations=iters, solver_status=status)
    if "DualInfeasible" in status:
        return SdpOutcome(Status.UNBOUNDED, iterations=iters, solver_status=status)
    if not np.all(np.isfinite(x)) or x.shape[0] != nv:
        if "NumericalError" in status:
            raise NumericalBreakdown(f"solver status {status} after {iters} iterations")
        return SdpOutcome(Status.MAXITER, iterations=iters, solver_status=status)

    r, lam = _residuals(p, x)
    blocks, free = p.split(x)
    out = SdpOutcome(Status.MAXITER, primal=blocks, free=free, dual=y, residual=r, min_eig=lam,
                     iterations=iters, solver_status=status)
    if maximize:
        out.objective_value = float(c @ x)
        out.dual_bound = float(np.dot(p.b, y))
    if r <= p.tol and lam >= -p.tol:
        out.status = Status.FEASIBLE
    return out


def maximize_linear(p: SdpProblem) -> SdpOutcome:
    if p.c is None:
        raise IllFormed("maximize_linear needs an objective")
    return solve(p)


def verify_certificate(p: SdpProblem, y: Sequence[float], tol: float = 1e-7) -> dict:
    """Independent re-check of a Farkas vector using only dense eigenvalues.

    For any feasible point, sum_i y_i (row_i . x) = b.y. If b.y < 0, the free
    part vanishes and every sum_i y_i W_i is PSD, this is impossible.
    """
    y = np.asarray(y, dtype=float)
    by = float(np.dot(p.b, y))
    if not by < 0:
        return {"ok": False, "b_dot_y": by, "reason": "b.y must be negative"}
    y = y / (-by)
    lam_rel = []
    for a, n in zip(p.A, p.sizes):
        w = hmat(a.T @ y, n)
        lam_rel.append(nk.lambda_min(w) / max(1.0, nk.fro(w)))
    free_res = float(np.linalg.norm(p.A_free.T @ y)) if p.n_free else 0.0
    lam = min(lam_rel) if lam_rel else 0.0
    ok = lam >= -tol and free_res <= tol * (1 + np.linalg.norm(y))
    return {"ok": bool(ok), "b_dot_y": -1.0, "lambda_min": lam, "free_residual": free_res}


def dump(p: SdpProblem) -> str:
    return json.dumps(p.to_json())


def load(text: str) -> SdpProblem:
    return SdpProblem.from_json(json.loads(text))
