"""Concrete operator spaces, TROs, Paulsen systems and matrix pairings."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import numkernel as nk
from .errors import DegenerateOverlap, IllFormed, ShapeMismatch

PLAIN, TRO, CSTAR = "plain", "tro", "cstar"


@dataclass(frozen=True)
class OpSubspace:
    """X inside M_{p,q} with a Frobenius-orthonormal basis.

    ``coords`` maps the user basis to the stored one: user_k = sum_j coords[k, j] basis_j.
    """
    p: int
    q: int
    basis: tuple
    kind: str = PLAIN
    coords: np.ndarray | None = field(default=None, compare=False)

    @property
    def dim(self) -> int:
        return len(self.basis)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.p, self.q)

    def columns(self) -> np.ndarray:
        if not self.basis:
            return np.zeros((self.p * self.q, 0), dtype=complex)
        return nk.mats_to_columns(self.basis)

    def coordinates(self, x) -> np.ndarray:
        """Coefficients of x in the orthonormal basis (orthogonal projection)."""
        return nk.adjoint(self.columns()) @ nk.cmat(x).reshape(-1)

    def element(self, coeffs) -> np.ndarray:
        coeffs = np.asarray(coeffs, dtype=complex)
        return (self.columns() @ coeffs).reshape(self.p, self.q)

    def distance(self, x) -> float:
        return nk.in_span(x, list(self.basis))

    def contains(self, x, tol: float = 1e-9) -> bool:
        return self.distance(x) <= tol * (1.0 + nk.fro(x))

    def to_json(self) -> dict:
        return {"p": self.p, "q": self.q, "basis": [nk.cmat_to_json(b) for b in self.basis],
                "kind": self.kind}


def subspace(mats: Sequence, p: int | None = None, q: int | None = None, kind: str = PLAIN) -> OpSubspace:
    """Orthonormalize a user basis and keep the change of basis."""
    mats = [nk.cmat(m) for m in mats]
    if not mats:
        if p is None or q is None:
            raise IllFormed("shape required for the zero space")
        return OpSubspace(p, q, (), kind, np.zeros((0, 0), dtype=complex))
    shape = mats[0].shape
    if any(m.shape != shape for m in mats):
        raise ShapeMismatch("basis matrices differ in shape")
    if (p, q) != (None, None) and (p, q) != shape:
        raise ShapeMismatch(f"declared shape {(p, q)} but basis has {shape}")
    basis = nk.orthonormal_basis(mats)
    q_cols = nk.mats_to_columns(basis)
    coords = (nk.adjoint(q_cols) @ nk.mats_to_columns(mats)).T
    return OpSubspace(shape[0], shape[1], tuple(basis), kind, coords)


def full_space(p: int, q: int) -> OpSubspace:
    return OpSubspace(p, q, tuple(nk.unit(p, i, j, q) for i in range(p) for j in range(q)), TRO,
                      np.eye(p * q, dtype=complex))


def subspace_from_json(obj) -> OpSubspace:
    try:
        p, q = int(obj["p"]), int(obj["q"])
        mats = [nk.cmat_from_json(b) for b in obj["basis"]]
        kind = obj.get("kind", PLAIN)
    except (KeyError, TypeError, ValueError) as exc:
        raise IllFormed(f"bad OpSubspace JSON: {exc}") from exc
    if kind not in (PLAIN, TRO, CSTAR):
        raise IllFormed(f"unknown kind {kind!r}")
    return subspace(mats, p, q, PLAIN) if kind == PLAIN else _checked_kind(subspace(mats, p, q), kind)


def _checked_kind(x: OpSubspace, kind: str) -> OpSubspace:
    closed = tro_generate(x) if kind == TRO else _cstar_generate(list(x.basis))
    if closed.dim != x.dim:
        raise IllFormed(f"basis is not closed as a {kind}")
    return OpSubspace(x.p, x.q, x.basis, kind, x.coords)


@dataclass(frozen=True)
class MatrixMap:
    """Linear map X -> M_{n,m} stored by its values on the orthonormal basis of X."""
    domain: OpSubspace
    n: int
    m: int
    values: tuple

    def __post_init__(self):
        if len(self.values) != self.domain.dim:
            raise ShapeMismatch(f"{len(self.values)} values for a {self.domain.dim}-dim domain")
        for v in self.values:
            if np.shape(v) != (self.n, self.m):
                raise ShapeMismatch(f"value of shape {np.shape(v)} != {(self.n, self.m)}")

    def __call__(self, x) -> np.ndarray:
        c = self.domain.coordinates(x)
        out = np.zeros((self.n, self.m), dtype=complex)
        for ck, v in zip(c, self.values):
            out += ck * v
        return out

    def scaled(self, t: complex) -> "MatrixMap":
        return MatrixMap(self.domain, self.n, self.m, tuple(t * v for v in self.values))

    def user_values(self) -> list[np.ndarray]:
        """Values on the user-supplied basis."""
        if self.domain.coords is None:
            return list(self.values)
        return [sum(c * v for c, v in zip(row, self.values)) for row in self.domain.coords]

    def value_vector(self) -> np.ndarray:
        return np.concatenate([v.reshape(-1) for v in self.values]) if self.values else np.zeros(0, complex)

    def to_json(self) -> dict:
        return {"n": self.n, "m": self.m, "values": [nk.cmat_to_json(v) for v in self.user_values()]}


def matrix_map(domain: OpSubspace, values_on_user_basis: Sequence, n: int | None = None,
               m: int | None = None) -> MatrixMap:
    """Build a map from its values on the user basis that defined ``domain``."""
    vals = [nk.cmat(v) for v in values_on_user_basis]
    if vals:
        n, m = vals[0].shape
    if n is None or m is None:
        raise IllFormed("target shape needed")
    if domain.coords is None:
        coords = np.eye(domain.dim, dtype=complex)
    else:
        coords = domain.coords
    if coords.shape[0] != len(vals):
        raise ShapeMismatch(f"{len(vals)} values for {coords.shape[0]} user basis elements")
    # user_k = sum_j coords[k, j] b_j, so values on b solve coords @ V = U
    if domain.dim:
        stacked = np.stack([v.reshape(-1) for v in vals]) if vals else np.zeros((0, n * m))
        sol, *_ = np.linalg.lstsq(coords, stacked, rcond=None)
        if np.linalg.norm(coords @ sol - stacked) > 1e-9 * (1 + np.linalg.norm(stacked)):
            raise IllFormed("values are inconsistent with linear dependencies in the basis")
        values = tuple(sol[j].reshape(n, m) for j in range(domain.dim))
    else:
        values = ()
    return MatrixMap(domain, n, m, values)


def map_from_function(domain: OpSubspace, f, n: int | None = None, m: int | None = None) -> MatrixMap:
    vals = [nk.cmat(f(b)) for b in domain.basis]
    if vals:
        n, m = vals[0].shape
    return MatrixMap(domain, n, m, tuple(vals))


def identity_map(x: OpSubspace) -> MatrixMap:
    return MatrixMap(x, x.p, x.q, tuple(nk.cmat(b).copy() for b in x.basis))


def map_from_json(domain: OpSubspace, obj) -> MatrixMap:
    try:
        n, m = int(obj["n"]), int(obj["m"])
        vals = [nk.cmat_from_json(v) for v in obj["values"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise IllFormed(f"bad MatrixMap JSON: {exc}") from exc
    return matrix_map(domain, vals, n, m)


def is_nondegenerate(phi: MatrixMap, cutoff: float = 1e-9) -> bool:
    """Joint column span of the values is C^n and joint row span is C^m."""
    if not phi.values:
        return False
    cols = np.concatenate(phi.values, axis=1)
    rows = np.concatenate(phi.values, axis=0)
    return (nk.range_basis(cols, cutoff).shape[1] == phi.n
            and nk.range_basis(nk.adjoint(rows), cutoff).shape[1] == phi.m)


# ---------------------------------------------------------------------------
# TROs and linking algebras

def tro_generate(x: OpSubspace) -> OpSubspace:
    """Smallest TRO containing X."""
    if x.dim == 0:
        return OpSubspace(x.p, x.q, (), TRO, np.zeros((0, 0), dtype=complex))
    basis = nk.span_closure(list(x.basis), "triple")
    return OpSubspace(x.p, x.q, tuple(basis), TRO, None)


def _cstar_generate(mats: list) -> OpSubspace:
    basis = nk.span_closure(mats, "product", adjoint_closed=True) if mats else []
    n = nk.cmat(mats[0]).shape[0] if mats else 0
    return OpSubspace(n, n, tuple(basis), CSTAR, None)


def is_unital(a: OpSubspace, tol: float = 1e-9) -> bool:
    return a.p == a.q and a.contains(np.eye(a.p), tol)


def linking_blocks(t: OpSubspace) -> tuple[OpSubspace, OpSubspace]:
    """The corners TT* (p x p) and T*T (q x q) of the linking algebra."""
    if t.kind != TRO:
        t2 = tro_generate(t)
        if t2.dim != t.dim:
            raise IllFormed("input is not a TRO")
    b = list(t.basis)
    if not b:
        return (OpSubspace(t.p, t.p, (), CSTAR), OpSubspace(t.q, t.q, (), CSTAR))
    left = [x @ nk.adjoint(y) for x in b for y in b]
    right = [nk.adjoint(x) @ y for x in b for y in b]
    return _cstar_generate(left), _cstar_generate(right)


def triple_residual(theta: MatrixMap, triples=None) -> float:
    """max ||theta(x y* z) - theta(x) theta(y)* theta(z)|| over basis triples."""
    b = list(theta.domain.basis)
    worst = 0.0
    idx = triples if triples is not None else [(i, j, k) for i in range(len(b)) for j in range(len(b))
                                                for k in range(len(b))]
    for i, j, k in idx:
        lhs = theta(b[i] @ nk.adjoint(b[j]) @ b[k])
        rhs = theta.values[i] @ nk.adjoint(theta.values[j]) @ theta.values[k]
        worst = max(worst, nk.op_norm(lhs - rhs))
    return worst


# ---------------------------------------------------------------------------
# Paulsen systems

@dataclass(frozen=True)
class PaulsenSpace:
    """S(X) inside M_{p+q}. Basis order: E_top, E_bot, [[0,b_k],[0,0]], [[0,0],[b_k*,0]]."""
    x: OpSubspace
    space: OpSubspace
    raw_basis: tuple

    @property
    def top(self) -> np.ndarray:
        return self.raw_basis[0]

    @property
    def bottom(self) -> np.ndarray:
        return self.raw_basis[1]


def _paulsen_elements(x: OpSubspace):
    p, q = x.p, x.q
    n = p + q
    e_top = nk.direct_sum(np.eye(p), np.zeros((q, q)))
    e_bot = nk.direct_sum(np.zeros((p, p)), np.eye(q))
    ups, downs = [], []
    for b in x.basis:
        u = np.zeros((n, n), dtype=complex)
        u[:p, p:] = b
        ups.append(u)
        d = np.zeros((n, n), dtype=complex)
        d[p:, :p] = nk.adjoint(b)
        downs.append(d)
    return [e_top, e_bot] + ups + downs


def paulsen_space(x: OpSubspace) -> PaulsenSpace:
    raw = _paulsen_elements(x)
    cols = nk.mats_to_columns(raw)
    rank = nk.range_basis(cols).shape[1]
    if rank != 2 * x.dim + 2:
        raise DegenerateOverlap(f"Paulsen family has rank {rank}, expected {2 * x.dim + 2}")
    # raw elements are already orthogonal; normalizing keeps the stored basis orthonormal
    basis = tuple(r / nk.fro(r) for r in raw)
    return PaulsenSpace(x, OpSubspace(x.p + x.q, x.p + x.q, basis, PLAIN, None), tuple(raw))


def paulsen_values(phi: MatrixMap) -> list[np.ndarray]:
    """Values of S(phi) on the raw Paulsen elements (same order as PaulsenSpace.raw_basis)."""
    n, m = phi.n, phi.m
    N = n + m
    out = [nk.direct_sum(np.eye(n), np.zeros((m, m))), nk.direct_sum(np.zeros((n, n)), np.eye(m))]
    ups, downs = [], []
    for v in phi.values:
        u = np.zeros((N, N), dtype=complex)
        u[:n, n:] = v
        ups.append(u)
        d = np.zeros((N, N), dtype=complex)
        d[n:, :n] = nk.adjoint(v)
        downs.append(d)
    return out + ups + downs


def paulsen_map(phi: MatrixMap, ps: PaulsenSpace | None = None) -> tuple[PaulsenSpace, MatrixMap]:
    """S(phi): [[l I, x], [y*, m I]] -> [[l I, phi(x)], [phi(y)*, m I]]."""
    ps = paulsen_space(phi.domain) if ps is None else ps
    if ps.x.shape != phi.domain.shape:
        raise ShapeMismatch("Paulsen space built for a different domain")
    raw_vals = paulsen_values(phi)
    vals = tuple(v / nk.fro(r) for v, r in zip(raw_vals, ps.raw_basis))
    return ps, MatrixMap(ps.space, phi.n + phi.m, phi.n + phi.m, vals)


# ---------------------------------------------------------------------------
# Pairings

def as_coords(x) -> np.ndarray:
    """Element of M_{n,m}(C^d) as an array of shape (d, n, m)."""
    x = np.asarray(x, dtype=complex)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3:
        raise ShapeMismatch(f"expected (d, n, m) coordinates, got {x.shape}")
    return x


def pairing(x, psi) -> np.ndarray:
    """<<x, psi>> = sum_c x^(c) (x) psi(e_c), an (n r) x (m s) matrix.

    ``x`` has shape (d, n, m); ``psi`` is either a MatrixMap whose domain has
    dimension d (coordinates in its orthonormal basis) or an array (d, r, s).
    """
    x = as_coords(x)
    vals = np.asarray(psi.values if isinstance(psi, MatrixMap) else psi, dtype=complex)
    if vals.ndim == 2:
        vals = vals[None]
    if vals.shape[0] != x.shape[0]:
        raise ShapeMismatch(f"coordinate dimensions {x.shape[0]} and {vals.shape[0]} differ")
    d, n, m = x.shape
    _, r, s = vals.shape
    out = np.einsum("cij,cab->iajb", x, vals).reshape(n * r, m * s)
    return out


def realize(x_coords, space: OpSubspace) -> np.ndarray:
    """The matrix in M_{n,m}(X) ⊂ M_{np,mq} for coordinates over space's basis."""
    x = as_coords(x_coords)
    return pairing(x, np.stack(space.basis))
