"""Dense complex linear algebra kernel.

Matrices are plain 2-D ``numpy`` arrays of dtype complex128. Every routine
here is a pure function; LAPACK (through numpy) does the heavy lifting.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionBlowup, IllFormed, NoConvergence, NotHermitian

ATOL = 1e-10
RTOL = 1e-10
RANK_CUTOFF = 1e-9
SQRT2 = np.sqrt(2.0)


def cmat(a) -> np.ndarray:
    """Coerce to a 2-D complex128 array (copying only if needed)."""
    a = np.asarray(a, dtype=complex)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2:
        raise IllFormed(f"expected a matrix, got shape {a.shape}")
    return a


def adjoint(a: np.ndarray) -> np.ndarray:
    return np.conj(a).T


def fro(a) -> float:
    return float(np.linalg.norm(a))


def herm_defect(a: np.ndarray) -> float:
    return fro(a - adjoint(a))


def is_hermitian(a: np.ndarray, tol: float = ATOL) -> bool:
    return herm_defect(a) <= tol * (1.0 + fro(a))


@dataclass(frozen=True)
class HermEig:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        u = self.eigenvectors
        return (u * self.eigenvalues) @ adjoint(u)


def herm_eig(a, tol: float = ATOL) -> HermEig:
    """Eigen-decomposition of a Hermitian matrix, eigenvalues ascending."""
    a = cmat(a)
    if a.shape[0] != a.shape[1] or not is_hermitian(a, tol):
        raise NotHermitian(f"Hermitian defect {herm_defect(a):.3g}")
    try:
        w, u = np.linalg.eigh((a + adjoint(a)) / 2)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from exc
    return HermEig(w, u)


def eigvalsh(a) -> np.ndarray:
    a = cmat(a)
    return np.linalg.eigvalsh((a + adjoint(a)) / 2)


def lambda_min(a) -> float:
    return float(eigvalsh(a)[0]) if np.size(a) else 0.0


def svd(a):
    """Full SVD ``a = U diag(s) V*`` with descending singular values."""
    a = cmat(a)
    try:
        u, s, vh = np.linalg.svd(a)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from exc
    return u, s, adjoint(vh)


def kron(a, b) -> np.ndarray:
    return np.kron(cmat(a), cmat(b))


def op_norm(a) -> float:
    a = cmat(a)
    if a.size == 0:
        return 0.0
    try:
        return float(np.linalg.norm(a, 2))
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from exc


def direct_sum(*mats) -> np.ndarray:
    mats = [cmat(m) for m in mats]
    rows = sum(m.shape[0] for m in mats)
    cols = sum(m.shape[1] for m in mats)
    out = np.zeros((rows, cols), dtype=complex)
    r = c = 0
    for m in mats:
        out[r:r + m.shape[0], c:c + m.shape[1]] = m
        r += m.shape[0]
        c += m.shape[1]
    return out


def unit(n: int, i: int, j: int, m: int | None = None) -> np.ndarray:
    """Matrix unit e_ij of shape n x m (m defaults to n)."""
    e = np.zeros((n, n if m is None else m), dtype=complex)
    e[i, j] = 1.0
    return e


def psd_sqrt(a) -> np.ndarray:
    w, u = np.linalg.eigh((cmat(a) + adjoint(cmat(a))) / 2)
    return (u * np.sqrt(np.clip(w, 0, None))) @ adjoint(u)


def polar_isometry(a) -> np.ndarray:
    """Closest isometry to a (tall) matrix in Frobenius norm."""
    u, _, vh = np.linalg.svd(cmat(a), full_matrices=False)
    return u @ vh


def null_space(a, cutoff: float = RANK_CUTOFF) -> np.ndarray:
    """Orthonormal basis (columns) of ker(a) with relative singular cutoff."""
    a = cmat(a)
    n = a.shape[1]
    if a.shape[0] == 0:
        return np.eye(n, dtype=complex)
    _, s, vh = np.linalg.svd(a)
    smax = s[0] if s.size else 0.0
    rank = int(np.sum(s > cutoff * max(smax, 1e-300))) if smax > 0 else 0
    return adjoint(vh[rank:])


def range_basis(a, cutoff: float = RANK_CUTOFF) -> np.ndarray:
    """Orthonormal basis (columns) of the column space of a."""
    a = cmat(a)
    if a.size == 0:
        return np.zeros((a.shape[0], 0), dtype=complex)
    u, s, _ = np.linalg.svd(a, full_matrices=False)
    if not s.size or s[0] == 0:
        return np.zeros((a.shape[0], 0), dtype=complex)
    return u[:, s > cutoff * s[0]]


def orthonormalize(vectors: np.ndarray, existing: np.ndarray | None = None,
                   cutoff: float = RANK_CUTOFF, scale: float | None = None) -> np.ndarray:
    """Extend an orthonormal column set by the new directions in ``vectors``.

    Candidates are projected off ``existing`` twice (re-orthogonalization),
    then the residual block is compressed by SVD. Directions whose singular
    value is below ``cutoff * scale`` are dropped; ``scale`` defaults to the
    largest candidate norm.
    """
    vectors = np.asarray(vectors, dtype=complex)
    dim = vectors.shape[0]
    if existing is None:
        existing = np.zeros((dim, 0), dtype=complex)
    if vectors.shape[1] == 0:
        return existing
    if scale is None:
        scale = float(np.max(np.linalg.norm(vectors, axis=0)))
    if scale == 0.0:
        return existing
    r = vectors
    for _ in range(2):
        if existing.shape[1]:
            r = r - existing @ (adjoint(existing) @ r)
    u, s, _ = np.linalg.svd(r, full_matrices=False)
    keep = s > cutoff * scale
    new = u[:, keep]
    if existing.shape[1] and new.shape[1]:
        new = new - existing @ (adjoint(existing) @ new)
        new, _ = np.linalg.qr(new)
    return np.concatenate([existing, new], axis=1)


def mats_to_columns(mats: Sequence[np.ndarray]) -> np.ndarray:
    if len(mats) == 0:
        raise IllFormed("empty matrix list")
    return np.stack([cmat(m).reshape(-1) for m in mats], axis=1)


def columns_to_mats(cols: np.ndarray, shape) -> list[np.ndarray]:
    return [cols[:, k].reshape(shape).copy() for k in range(cols.shape[1])]


def orthonormal_basis(mats: Sequence[np.ndarray], cutoff: float = RANK_CUTOFF) -> list[np.ndarray]:
    """Frobenius-orthonormal basis of span(mats)."""
    if len(mats) == 0:
        return []
    shape = cmat(mats[0]).shape
    q = orthonormalize(mats_to_columns(mats), cutoff=cutoff)
    return columns_to_mats(q, shape)


def _triple(x, y, z):
    return x @ adjoint(y) @ z


def _product(x, y):
    return x @ y


RULES: dict[str, tuple[int, Callable]] = {
    "triple": (3, _triple),
    "product": (2, _product),
}


def span_closure(mats: Sequence[np.ndarray], rule: str = "triple", adjoint_closed: bool = False,
                 cutoff: float = RANK_CUTOFF, max_rounds: int = 64) -> list[np.ndarray]:
    """Orthonormal basis of the smallest subspace containing ``mats`` and closed
    under ``rule`` ("triple": xy*z, "product": xy). With ``adjoint_closed`` the
    span is also closed under x -> x* (square matrices only)."""
    if rule not in RULES:
        raise IllFormed(f"unknown rule {rule!r}")
    if len(mats) == 0:
        return []
    arity, op = RULES[rule]
    shape = cmat(mats[0]).shape
    if any(cmat(m).shape != shape for m in mats):
        raise IllFormed("matrices of different shapes")
    if (rule == "product" or adjoint_closed) and shape[0] != shape[1]:
        raise IllFormed("product rule needs square matrices")
    ambient = shape[0] * shape[1]
    seed = list(mats) + ([adjoint(cmat(m)) for m in mats] if adjoint_closed else [])
    cols = mats_to_columns(seed)
    scale = float(np.max(np.linalg.norm(cols, axis=0)))
    if scale == 0.0:
        return []
    q = orthonormalize(cols / scale, cutoff=cutoff)
    done = 0
    for _ in range(max_rounds):
        basis = columns_to_mats(q, shape)
        k = len(basis)
        if k > ambient:
            raise DimensionBlowup(f"span dimension {k} exceeds ambient {ambient}")
        new = []
        for idx in itertools.product(range(k), repeat=arity):
            if max(idx) < done:
                continue
            new.append(op(*(basis[i] for i in idx)).reshape(-1))
            if adjoint_closed:
                new.append(adjoint(new[-1].reshape(shape)).reshape(-1))
        done = k
        if not new:
            break
        q_next = orthonormalize(np.stack(new, axis=1), existing=q, cutoff=cutoff, scale=1.0)
        if q_next.shape[1] == q.shape[1]:
            break
        q = q_next
    else:
        raise NoConvergence("span closure did not reach a fixed point")
    if q.shape[1] > ambient:
        raise DimensionBlowup(f"span dimension {q.shape[1]} exceeds ambient {ambient}")
    return columns_to_mats(q, shape)


def in_span(x: np.ndarray, basis: Sequence[np.ndarray]) -> float:
    """Frobenius distance from x to span(basis) (basis orthonormal)."""
    x = cmat(x)
    if not basis:
        return fro(x)
    q = mats_to_columns(basis)
    v = x.reshape(-1)
    return float(np.linalg.norm(v - q @ (adjoint(q) @ v)))


# Hermitian coordinates

@lru_cache(maxsize=64)
def _hvec_index(n: int):
    iu, ju = np.triu_indices(n, 1)
    return iu, ju


def hvec(x: np.ndarray) -> np.ndarray:
    """Real coordinates [diag, sqrt2*Re(upper), sqrt2*Im(upper)] of a Hermitian matrix.

    The map is an isometry from (Herm_n, Frobenius) onto R^{n^2}, and
    tr(W X) = hvec(W) . hvec(X) for Hermitian W, X.
    """
    x = np.asarray(x)
    n = x.shape[0]
    iu, ju = _hvec_index(n)
    up = x[iu, ju]
    return np.concatenate([np.real(np.diag(x)), SQRT2 * up.real, SQRT2 * up.imag])


def hmat(v: np.ndarray, n: int) -> np.ndarray:
    """Inverse of :func:`hvec`."""
    v = np.asarray(v, dtype=float)
    iu, ju = _hvec_index(n)
    k = len(iu)
    x = np.zeros((n, n), dtype=complex)
    x[np.arange(n), np.arange(n)] = v[:n]
    up = (v[n:n + k] + 1j * v[n + k:]) / SQRT2
    x[iu, ju] = up
    x[ju, iu] = np.conj(up)
    return x



def cmat_to_json(a) -> dict:
    a = cmat(a)
    flat = a.reshape(-1)
    return {"rows": int(a.shape[0]), "cols": int(a.shape[1]),
            "data": [[float(z.real), float(z.imag)] for z in flat]}


def cmat_from_json(obj) -> np.ndarray:
    try:
        rows, cols = int(obj["rows"]), int(obj["cols"])
        data = np.asarray(obj["data"], dtype=float).reshape(-1, 2) if obj["data"] else np.zeros((0, 2))
    except (KeyError, TypeError, ValueError) as exc:
        raise IllFormed(f"bad CMat JSON: {exc}") from exc
    if data.shape[0] != rows * cols:
        raise IllFormed(f"CMat expects {rows * cols} entries, got {data.shape[0]}")
    return (data[:, 0] + 1j * data[:, 1]).reshape(rows, cols)


def random_cmat(rng: np.random.Generator, n: int, m: int | None = None) -> np.ndarray:
    m = n if m is None else m
    return (rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))) / np.sqrt(2)


def random_unitary(rng: np.random.Generator, n: int) -> np.ndarray:
    q, r = np.linalg.qr(random_cmat(rng, n))
    d = np.diag(r)
    return q * (d / np.abs(d))


def random_hermitian(rng: np.random.Generator, n: int) -> np.ndarray:
    a = random_cmat(rng, n)
    return (a + adjoint(a)) / 2
