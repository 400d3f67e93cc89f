"""Truncated numerics for the weighted spaces H_s on the disc and their
multiplier spaces Mult(H_s, H_t).

H_s has orthogonal monomials with ||z^n||^2 = (n+1)^(-s); the normalized basis
is e_n = (n+1)^(s/2) z^n and the reproducing kernel is
k_s(z, w) = sum_n (n+1)^s (z conj(w))^n.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special
from scipy.sparse.csgraph import connected_components

from .errors import IllFormed, OutsideDisc

EDGE_TOL = 1e-12
FIT_TOL = 0.05


@dataclass(frozen=True)
class HsSpec:
    s: float
    N: int

    def weights(self) -> np.ndarray:
        """||z^n||^2 for n = 0..N."""
        return monomial_norm_sq(np.arange(self.N + 1), self.s)


def monomial_norm_sq(n, s: float) -> np.ndarray:
    return (np.asarray(n, dtype=float) + 1.0) ** (-s)


@dataclass(frozen=True)
class PolyMultiplier:
    coefficients: tuple

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def __call__(self, z):
        return np.polynomial.polynomial.polyval(z, np.asarray(self.coefficients, dtype=complex))

    def __mul__(self, other: "PolyMultiplier") -> "PolyMultiplier":
        c = np.convolve(np.asarray(self.coefficients, complex), np.asarray(other.coefficients, complex))
        return PolyMultiplier(tuple(c))

    def is_monomial(self) -> bool:
        return sum(1 for c in self.coefficients if c != 0) <= 1

    def to_json(self) -> dict:
        return {"coefficients": [[float(np.real(c)), float(np.imag(c))] for c in self.coefficients]}


def poly(coeffs) -> PolyMultiplier:
    coeffs = [complex(c) for c in coeffs]
    if not coeffs:
        raise IllFormed("empty coefficient list")
    while len(coeffs) > 1 and coeffs[-1] == 0:
        coeffs.pop()
    return PolyMultiplier(tuple(coeffs))


# ---------------------------------------------------------------------------
# Kernels

def _check_disc(*zs):
    for z in zs:
        if not abs(z) < 1.0:
            raise OutsideDisc(f"|{z}| >= 1")


def tail_bound(s: float, r: float, N: int) -> float:
    """Upper bound for sum_{n>N} (n+1)^|s| r^n, 0 <= r < 1.

    Terms are summed explicitly up to the peak of x -> (x+1)^a r^x; beyond it
    the summand decreases and the sum is bounded by the integral, an upper
    incomplete gamma function.
    """
    if r == 0.0:
        return 0.0
    a = abs(s)
    lam = -math.log(r)
    peak = max(N + 1, int(math.ceil(a / lam - 1.0)))
    n = np.arange(N + 1, peak + 1)
    head = float(np.sum((n + 1.0) ** a * r ** n))
    # int_{peak}^inf (x+1)^a r^x dx = r^-1 lam^-(a+1) Gamma(a+1, lam (peak+1))
    integral = math.exp(lam - (a + 1) * math.log(lam)) * float(
        special.gammaincc(a + 1, lam * (peak + 1)) * special.gamma(a + 1))
    return head + integral


@dataclass(frozen=True)
class KernelValue:
    value: complex
    tail_bound: float


def kernel_eval(s: float, z: complex, w: complex, N: int) -> KernelValue:
    """Partial sum of k_s(z, w) to degree N with a bound on the omitted tail."""
    _check_disc(z, w)
    if N < 0:
        raise IllFormed("truncation degree must be nonnegative")
    u = complex(z) * np.conj(complex(w))
    n = np.arange(N + 1)
    value = complex(np.sum((n + 1.0) ** s * u ** n))
    return KernelValue(value, tail_bound(s, abs(u), N))


def kernel_matrix(t: float, points, N: int) -> np.ndarray:
    pts = np.asarray(points, dtype=complex)
    _check_disc(*pts)
    return np.array([[kernel_eval(t, x, y, N).value for y in pts] for x in pts])


def graph_connected(K: np.ndarray, tol: float = EDGE_TOL) -> bool:
    """Is the graph with edges |K_ij| > tol connected?"""
    K = np.asarray(K)
    if K.shape[0] == 0:
        return True
    n_comp, _ = connected_components(np.abs(K) > tol, directed=False)
    return n_comp == 1


def kernel_irreducible(t: float, points, N: int = 200) -> bool:
    pts = list(points)
    if len(set(complex(p) for p in pts)) != len(pts):
        raise IllFormed("sample points must be distinct")
    return graph_connected(kernel_matrix(t, pts, N))


def default_sample(k: int = 8) -> list[complex]:
    return [0j] + [0.5 * np.exp(2j * np.pi * j / (k - 1)) for j in range(k - 1)]


# ---------------------------------------------------------------------------
# Multipliers

def mult_matrix(phi: PolyMultiplier, s: float, t: float, N: int) -> np.ndarray:
    """M_phi from span{e_0..e_N} in H_s to polynomials of degree <= N + D in H_t."""
    D = phi.degree
    i = np.arange(N + 1)
    j = np.arange(N + D + 1)
    out = np.zeros((N + D + 1, N + 1), dtype=complex)
    for k, c in enumerate(phi.coefficients):
        if c == 0:
            continue
        if k == 0:
            # one power then a correctly rounded root: s == t gives the identity
            # exactly and integer s - t gives exact square roots
            out[i, i] = c * np.sqrt((i + 1.0) ** (s - t))
        else:
            out[i + k, i] = c * (i + 1.0) ** (s / 2) * (j[i + k] + 1.0) ** (-t / 2)
    return out


def _op_norm(a: np.ndarray, monomial: bool) -> float:
    if a.size == 0:
        return 0.0
    if monomial:
        # a weighted shift: one nonzero per column and per row
        return float(np.max(np.abs(a)))
    return float(np.linalg.norm(a, 2))


@dataclass(frozen=True)
class MultNorm:
    value: float
    half_value: float
    N: int


def mult_norm(phi: PolyMultiplier, s: float, t: float, N: int) -> MultNorm:
    mono = phi.is_monomial()
    full = _op_norm(mult_matrix(phi, s, t, N), mono)
    half = _op_norm(mult_matrix(phi, s, t, N // 2), mono)
    return MultNorm(full, half, N)


def compactness_trend(phi: PolyMultiplier, s: float, t: float, N: int) -> np.ndarray:
    """||(I - P_m) M_phi|| for m = 0..N, P_m the projection onto degrees < m."""
    A = mult_matrix(phi, s, t, N)
    mono = phi.is_monomial()
    D = phi.degree
    out = np.empty(N + 1)
    for m in range(N + 1):
        # rows >= m only see columns >= m - D
        out[m] = _op_norm(A[m:, max(m - D, 0):], mono)
    return out


@dataclass(frozen=True)
class TrendFit:
    exponent: float
    intercept: float


def fit_exponent(trend: np.ndarray) -> TrendFit:
    """Least-squares slope of log(trend) against log(m+1) over m in [N/4, N]."""
    N = len(trend) - 1
    m = np.arange(max(N // 4, 0), N + 1)
    y = np.asarray(trend)[m]
    if np.any(y <= 0):
        return TrendFit(-np.inf, -np.inf)
    slope, icpt = np.polyfit(np.log(m + 1.0), np.log(y), 1)
    return TrendFit(float(slope), float(icpt))


@dataclass
class ConditionsReport:
    s: float
    t: float
    N: int
    has_constant: bool
    poly_dense_proxy: bool
    irreducible_proxy: bool
    compact_witness: bool
    fitted_exponent: float
    notes: list = field(default_factory=list)

    @property
    def all_true(self) -> bool:
        return self.has_constant and self.poly_dense_proxy and self.irreducible_proxy and self.compact_witness

    def to_json(self) -> dict:
        return {"s": self.s, "t": self.t, "N": self.N, "has_constant": self.has_constant,
                "poly_dense_proxy": self.poly_dense_proxy, "irreducible_proxy": self.irreducible_proxy,
                "compact_witness": self.compact_witness, "fitted_exponent": self.fitted_exponent,
                "notes": list(self.notes)}


def mult_boundary_conditions(s: float, t: float, N: int = 512) -> ConditionsReport:
    trend = compactness_trend(poly([1.0]), s, t, N)
    fit = fit_exponent(trend)
    expected = (s - t) / 2
    # a flat trend also fits exponent 0 = (s - t)/2 when s = t, so insist on decay
    compact = bool(fit.exponent < -1e-3 and abs(fit.exponent - expected) <= FIT_TOL and trend[-1] < trend[0])
    rep = ConditionsReport(s, t, N, True, True, kernel_irreducible(t, default_sample(), N),
                           compact, fit.exponent)
    if rep.all_true and s < t:
        rep.notes.append("boundary hypotheses verified at truncation scale")
    return rep
