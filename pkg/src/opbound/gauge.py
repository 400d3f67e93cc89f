"""Canonical matrix gauge on selfadjoint matrix spaces, unitization and the
Choi-Effros product on the range of an idempotent UCP map."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from . import cpmaps as cp
from . import numkernel as nk
from . import opspace as osp
from .errors import IllFormed, NotHermitian, NotIdempotent, NotUCP, OutsideRange, ShapeMismatch

HERM_TOL = 1e-9
SA_TOL = 1e-10
IDEMPOTENT_TOL = 1e-9


def nu(x) -> float:
    """nu(x) = ||x_+|| = max(lambda_max(x), 0)."""
    x = nk.cmat(x)
    if x.shape[0] != x.shape[1] or nk.herm_defect(x) > HERM_TOL * (1.0 + nk.fro(x)):
        raise NotHermitian(f"Hermitian defect {nk.herm_defect(x):.3g}")
    if x.size == 0:
        return 0.0
    return max(float(nk.herm_eig(x, HERM_TOL).eigenvalues[-1]), 0.0)


def is_selfadjoint_space(X: osp.OpSubspace, tol: float = SA_TOL) -> bool:
    if X.p != X.q:
        return False
    return all(X.distance(nk.adjoint(b)) <= tol for b in X.basis)


@dataclass(frozen=True)
class GaugedSpace:
    space: osp.OpSubspace

    def __post_init__(self):
        if not is_selfadjoint_space(self.space):
            raise IllFormed("space is not closed under the adjoint")

    def nu(self, x) -> float:
        return nu(x)

    def hermitian_basis(self) -> list[np.ndarray]:
        """A Hermitian spanning set (real and imaginary parts of the basis)."""
        mats = []
        for b in self.space.basis:
            mats += [(b + nk.adjoint(b)) / 2, (b - nk.adjoint(b)) / 2j]
        # orthonormalize over the reals so the result stays Hermitian
        cols = nk.mats_to_columns(mats)
        q = scipy.linalg.orth(np.concatenate([cols.real, cols.imag]), rcond=nk.RANK_CUTOFF)
        d = cols.shape[0]
        p = self.space.p
        return [(q[:d, k] + 1j * q[d:, k]).reshape(p, p) for k in range(q.shape[1])]

    def random_element(self, rng: np.random.Generator, k: int = 1) -> np.ndarray:
        """Random Hermitian element of M_k(X) (as a kp x kp matrix)."""
        hb = self.hermitian_basis()
        p = self.space.p
        out = np.zeros((k * p, k * p), dtype=complex)
        for i in range(k):
            for j in range(i, k):
                blk = sum((rng.standard_normal() + (1j * rng.standard_normal() if i != j else 0)) * h
                          for h in hb)
                out[i * p:(i + 1) * p, j * p:(j + 1) * p] = blk
                if i != j:
                    out[j * p:(j + 1) * p, i * p:(i + 1) * p] = nk.adjoint(blk)
        return out


@dataclass(frozen=True)
class Unitization:
    space: osp.OpSubspace
    already_unital: bool


def unitize(X: osp.OpSubspace) -> Unitization:
    """span{X, I}; returns X unchanged (flagged) when I is already in X."""
    if X.p != X.q:
        raise ShapeMismatch("unitization needs square matrices")
    eye = np.eye(X.p, dtype=complex)
    if X.contains(eye):
        return Unitization(X, True)
    return Unitization(osp.subspace(list(X.basis) + [eye], X.p, X.q, X.kind), False)


# ---------------------------------------------------------------------------
# Gauge axiom probes

@dataclass
class AxiomReport:
    compression_violations: int
    direct_sum_violations: int
    properness_violations: int
    probes: int
    first_violation: tuple | None = None   # (kind, {name: matrix})

    @property
    def ok(self) -> bool:
        return not (self.compression_violations or self.direct_sum_violations or self.properness_violations)


def check_axioms(G: GaugedSpace, probes: int = 200, seed: int = 0, tol: float = 1e-10) -> AxiomReport:
    """nu(a* x a) <= ||a||^2 nu(x), nu(x (+) y) = max(nu(x), nu(y)),
    max(nu(x), nu(-x)) = ||x|| on random probes."""
    rng = np.random.default_rng(seed)
    p = G.space.p
    comp = dsum = proper = 0
    first = None
    for _ in range(probes):
        k, l = rng.integers(1, 3, size=2)
        x = G.random_element(rng, int(k))
        y = G.random_element(rng, int(l))
        a = nk.random_cmat(rng, int(k) * p, int(l) * p)
        lhs = nu(nk.adjoint(a) @ x @ a)
        if lhs > nk.op_norm(a) ** 2 * nu(x) + tol * (1 + lhs):
            comp += 1
            first = first or ("compression", {"x": x, "a": a})
        if nu(nk.direct_sum(x, y)) != max(nu(x), nu(y)):
            dsum += 1
            first = first or ("direct_sum", {"x": x, "y": y})
        if abs(max(nu(x), nu(-x)) - nk.op_norm(x)) > tol * (1 + nk.op_norm(x)):
            proper += 1
            first = first or ("properness", {"x": x})
    return AxiomReport(comp, dsum, proper, probes, first)


def _positive_element(G: GaugedSpace, rng) -> np.ndarray:
    """A PSD element of X when I is in X, else a PSD matrix of the ambient algebra."""
    d = G.random_element(rng)
    eye = np.eye(len(d))
    if G.space.contains(eye):
        return d - min(nk.lambda_min(d), 0.0) * eye
    return d @ d


def order_normality_probe(G: GaugedSpace, probes: int = 100, seed: int = 0, tol: float = 1e-10) -> int:
    """Count violations of x <= y <= z => ||y|| <= max(||x||, ||z||)."""
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(probes):
        y = G.random_element(rng)
        x, z = y - _positive_element(G, rng), y + _positive_element(G, rng)
        if nk.op_norm(y) > max(nk.op_norm(x), nk.op_norm(z)) + tol:
            bad += 1
    return bad


# ---------------------------------------------------------------------------
# Choi-Effros product

@dataclass
class IdempotentUCP:
    """An idempotent UCP map on M_N with an orthonormal basis of its range."""
    N: int
    apply: Callable[[np.ndarray], np.ndarray]
    range_basis: list

    def __call__(self, a) -> np.ndarray:
        return self.apply(nk.cmat(a))

    def in_range(self, x, tol: float = IDEMPOTENT_TOL) -> bool:
        return nk.in_span(x, self.range_basis) <= tol * (1.0 + nk.fro(x))


def _as_function(phi, N: int | None):
    if isinstance(phi, osp.MatrixMap):
        if phi.domain.p != phi.domain.q or phi.domain.dim != phi.domain.p ** 2:
            raise ShapeMismatch("map must be defined on a full matrix algebra")
        return phi, phi.domain.p
    if isinstance(phi, cp.ChoiMatrix):
        return phi.apply, phi.N
    if callable(phi):
        if N is None:
            raise IllFormed("matrix size N required for a callable map")
        return phi, N
    raise IllFormed("unsupported map representation")


def idempotent_ucp(phi, N: int | None = None, tol: float = IDEMPOTENT_TOL) -> IdempotentUCP:
    f, N = _as_function(phi, N)
    C = cp.choi_from_function(f, N)
    if nk.lambda_min(C) < -tol * max(1.0, nk.op_norm(C)):
        raise NotUCP(f"Choi matrix has eigenvalue {nk.lambda_min(C):.3g}")
    if nk.fro(f(np.eye(N, dtype=complex)) - np.eye(N)) > tol:
        raise NotUCP("map is not unital")
    units = [nk.unit(N, i, j) for i in range(N) for j in range(N)]
    L = np.stack([nk.cmat(f(e)).reshape(-1) for e in units], axis=1)
    if nk.fro(L @ L - L) > tol * (1.0 + nk.fro(L)):
        raise NotIdempotent(f"||Phi o Phi - Phi|| = {nk.fro(L @ L - L):.3g}")
    fixed = nk.null_space(L - np.eye(N * N))
    return IdempotentUCP(N, f, nk.columns_to_mats(fixed, (N, N)))


def choi_effros_product(phi, x, y, N: int | None = None) -> np.ndarray:
    """x o y = Phi(xy) for x, y in the range of an idempotent UCP map."""
    E = phi if isinstance(phi, IdempotentUCP) else idempotent_ucp(phi, N)
    x, y = nk.cmat(x), nk.cmat(y)
    for v in (x, y):
        if not E.in_range(v):
            raise OutsideRange(f"distance {nk.in_span(v, E.range_basis):.3g} from the range")
    return E(x @ y)


@dataclass
class CEResiduals:
    associativity: float
    unit: float
    cstar: float
    module: float


def ce_residuals(E: IdempotentUCP, samples: int = 20, seed: int = 0) -> CEResiduals:
    """Product laws of (range Phi, o) on basis triples and random elements."""
    rng = np.random.default_rng(seed)
    B = E.range_basis
    prod = lambda a, b: E(a @ b)
    assoc = max(nk.fro(prod(prod(a, b), c) - prod(a, prod(b, c))) for a in B for b in B for c in B)
    e = E(np.eye(E.N, dtype=complex))
    unit = max(max(nk.fro(prod(e, b) - b), nk.fro(prod(b, e) - b)) for b in B)
    cstar = 0.0
    module = 0.0
    for _ in range(samples):
        x = sum(complex(rng.standard_normal(), rng.standard_normal()) * b for b in B)
        cstar = max(cstar, abs(nk.op_norm(prod(nk.adjoint(x), x)) - nk.op_norm(x) ** 2))
        a = nk.random_cmat(rng, E.N)
        module = max(module, nk.fro(E(E(a) @ x) - E(a @ x)))
    return CEResiduals(float(assoc), float(unit), float(cstar), float(module))


def diagonal_expectation(N: int) -> Callable[[np.ndarray], np.ndarray]:
    return lambda a: np.diag(np.diag(nk.cmat(a)))
