"""Acceptance criteria, one test per criterion. Each test records a one-line
summary; the terminal summary prints PASS/FAIL per criterion."""
import io
import json
import math
import os
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from opbound import boundary as bd
from opbound import certificates as certs
from opbound import cli
from opbound import cpmaps as cp
from opbound import gauge
from opbound import numkernel as nk
from opbound import opspace as osp
from opbound import rectconvex as rc
from opbound import rkhs

from conftest import diag_tro, random_map, random_subspace
from corpora import pointy_sample, uep_corpus
from oracles import amplified_norm, hull_instance, map_stacks, pair_norm

CLI_DATA = Path(__file__).parent / "data" / "cli"


def _two_positive_violation(f, N, rng, trials=30) -> bool:
    """Sampled search for a PSD input at level 2 with a non-PSD image."""
    for _ in range(trials):
        g = nk.random_cmat(rng, 2 * N, int(rng.integers(1, 2 * N + 1)))
        a = g @ nk.adjoint(g)
        out = np.block([[f(a[i * N:(i + 1) * N, j * N:(j + 1) * N]) for j in range(2)] for i in range(2)])
        if nk.lambda_min(out) < -1e-9 * max(1.0, nk.op_norm(out)):
            return True
    return False


def test_criterion_01_choi_suite(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    counterexamples = n_cp = 0
    for k in range(200):
        N, M = (2, 2) if k < 100 else (3, 2)
        g = nk.random_cmat(rng, N * M)
        # shifted Gram matrices: about half the Choi matrices are PSD
        shift = rng.uniform(0, 0.3) * nk.op_norm(g) ** 2 * (k % 2)
        C = g @ nk.adjoint(g) - shift * np.eye(N * M)
        f = lambda a, C=C, N=N, M=M: cp.choi_apply(C, a, N, M)
        is_cp = cp.ChoiMatrix(N, M, cp.choi_from_function(f, N, M)).is_cp()
        n_cp += is_cp
        # necessary direction: a CP verdict admits no 2-positivity violation
        if is_cp and _two_positive_violation(f, N, rng):
            counterexamples += 1
        # and a found violation forces the non-CP verdict
        if not is_cp:
            assert nk.lambda_min(C) < 0
    kraus_yes = 0
    for k in range(50):
        N = 2 + k % 2
        ks = [nk.random_cmat(rng, N, 2) for _ in range(int(rng.integers(1, 4)))]
        kraus_yes += cp.ChoiMatrix(N, 2, cp.choi_from_kraus(ks)).is_cp()
    dt = time.perf_counter() - t0
    acceptance(f"random maps CP {n_cp}/200, counterexamples {counterexamples}, Kraus Yes {kraus_yes}/50, "
               f"{dt:.1f}s")
    assert counterexamples == 0 and kraus_yes == 50 and dt < 30


def test_criterion_02_cb_norm(acceptance):
    t0 = time.perf_counter()
    close, below, stalls = 0, 0, []
    for seed in range(30):
        rng = np.random.default_rng(seed)
        X = random_subspace(rng, 2, 2, 2)
        phi = random_map(rng, X, 2, 2)
        cb = cp.cb_norm(phi).value
        sampled, _ = amplified_norm(map_stacks(phi), 2, rng, restarts=48)
        if cb < sampled - 1e-6 * cb:
            below += 1
        gap = (cb - sampled) / cb
        if gap <= 1e-3:
            close += 1
        else:
            stalls.append((seed, round(gap, 5)))
    dt = time.perf_counter() - t0
    acceptance(f"SDP below sampled bound {below}, gap <= 1e-3 on {close}/30, stalled {stalls}, {dt:.1f}s")
    assert below == 0 and close >= 27 and dt < 120


def test_criterion_03_pointy(acceptance):
    disagree = indeterminate = extreme = 0
    for _, _, phi, classical in pointy_sample():
        v = bd.is_rect_extreme(phi, check=False).verdict
        if v == bd.Purity.INDETERMINATE:
            indeterminate += 1
            continue
        extreme += classical
        disagree += (v == bd.Purity.PURE) != classical
    acceptance(f"100 points ({extreme} extreme), disagreements {disagree}, indeterminate {indeterminate}")
    assert disagree == 0


def test_criterion_04_uep_dilation(acceptance):
    t0 = time.perf_counter()
    mismatches, worst_unique = [], 0.0
    for name, phi, T, expect in uep_corpus():
        u = bd.uep_check(phi, T)
        d = bd.triple_dilation(u.extension)
        defect = d.defects()
        if u.uep:
            worst_unique = max(worst_unique, defect)
        if u.uep != expect or (defect <= 1e-7) != u.uep:
            mismatches.append(name)
    dt = time.perf_counter() - t0
    acceptance(f"20 instances, mismatches {mismatches}, worst unique-side defect {worst_unique:.1e}, {dt:.1f}s")
    assert not mismatches and dt < 300


def test_criterion_05_boundary(acceptance):
    rows = []
    for X in (osp.full_space(2, 1), osp.full_space(2, 2)):
        c = bd.boundary_certify(osp.identity_map(X))
        e = bd.triple_envelope_certify(X)
        rows.append(c.status == bd.BoundaryStatus.BOUNDARY and e.certified and e.envelope.dim == X.p * X.q)
    for X in (osp.subspace([np.eye(2)]), diag_tro(),
              osp.OpSubspace(3, 3, tuple(nk.unit(3, i, i) for i in range(3)), osp.TRO)):
        c = bd.boundary_certify(osp.identity_map(X))
        rows.append(c.status == bd.BoundaryStatus.NOT_BOUNDARY and c.reasons == ["reducible"]
                    and not bd.triple_envelope_certify(X).certified)
    acceptance(f"{sum(rows)}/{len(rows)} cases as expected")
    assert all(rows)


def test_criterion_06_bipolar(acceptance):
    t0 = time.perf_counter()
    wrong_member = found = false_certs = 0
    for seed in range(30):
        rng = np.random.default_rng(seed)
        n, m = 1 + seed % 2, 1 + (seed // 2) % 2
        gens, inside, outside, _ = hull_instance(rng, d=2, n=n, m=m)
        K = rc.finite_hull(gens)
        wrong_member += rc.hull_member(K, inside).verdict != cp.Verdict.YES
        wrong_member += rc.hull_member(K, outside).verdict != cp.Verdict.NO
        s = rc.separate(K, outside, restarts=20, seed=seed)
        if s.found:
            genuine = (pair_norm(outside, s.phi) >= 1 + 1e-6 and rc.polar_member(K, s.phi)
                       and max(pair_norm(g, s.phi) for g in gens) <= 1 + 1e-9)
            found += genuine
            false_certs += not genuine
    dt = time.perf_counter() - t0
    acceptance(f"membership errors {wrong_member}/60, separated {found}/30, false certificates {false_certs}, "
               f"{dt:.1f}s")
    assert wrong_member == 0 and found >= 25 and false_certs == 0


def test_criterion_07_krein_milman(acceptance):
    t0 = time.perf_counter()
    e = rc.km_norm_estimate(osp.full_space(1, 1), np.array([[[3 - 4j]]]))
    scalar_ok = abs(e.lower - e.upper) <= 1e-4 and abs(e.upper - 5) <= 1e-12
    x = np.zeros((2, 1, 1), complex)
    x[1] = 1
    e = rc.km_norm_estimate(osp.full_space(1, 2), x)
    row_ok = abs(e.lower - e.upper) <= 1e-4
    ratios = []
    for seed in range(10):
        rng = np.random.default_rng(seed)
        X = random_subspace(rng, 2, 2, 2)
        n, m = (2, 1) if seed % 2 == 0 else (1, 2)
        x = nk.random_cmat(rng, 2 * n, m).reshape(2, n, m)
        e = rc.km_norm_estimate(X, x)
        ratios.append(e.lower / e.upper)
    dt = time.perf_counter() - t0
    flagged = [k for k, r in enumerate(ratios) if r < 0.9]
    acceptance(f"C {scalar_ok}, M12 {row_ok}, min ratio {min(ratios):.5f} on levels (2,1)/(1,2), "
               f"flagged {flagged}, {dt:.1f}s")
    assert scalar_ok and row_ok and not flagged


def test_criterion_08_rkhs(acceptance):
    t0 = time.perf_counter()
    n = np.arange(10_001)
    worst = 0.0
    for s, t in [(0, 1), (1, 0), (-1, 1), (1, -1), (2, 0)]:
        ratio = rkhs.monomial_norm_sq(n, t) / rkhs.monomial_norm_sq(n, s)
        for k in range(0, 10_001, 7):
            exact = Fraction(k + 1) ** (s - t)
            worst = max(worst, float(abs(Fraction(ratio[k]) - exact) / exact))
    ratio_ok = worst <= 4 * np.finfo(float).eps
    norms_ok = all(rkhs.mult_norm(rkhs.poly([1]), 1, 0, N).value == math.sqrt(N + 1)
                   for N in (1, 10, 100, 1000, 4096))
    fit = rkhs.fit_exponent(rkhs.compactness_trend(rkhs.poly([1]), 0, 1, 512)).exponent
    grid_ok = all(rkhs.mult_boundary_conditions(s, t).all_true == (s < t)
                  for s in (-1, 0, 1) for t in (-1, 0, 1))
    dt = time.perf_counter() - t0
    acceptance(f"ratio rel err {worst:.1e}, norms exact {norms_ok}, exponent {fit:.4f}, grid {grid_ok}, "
               f"{dt:.1f}s")
    assert ratio_ok and norms_ok and abs(fit + 0.5) <= 0.05 and grid_ok and dt < 60


def test_criterion_09_gauge_choi_effros(acceptance):
    spaces = [osp.full_space(2, 2), osp.subspace([nk.unit(2, 0, 0), nk.unit(2, 1, 1)]),
              osp.subspace([np.eye(2), np.array([[0, 1], [1, 0]])])]
    axioms_ok = all(gauge.check_axioms(gauge.GaugedSpace(X), probes=200, seed=9).ok for X in spaces)
    E = gauge.idempotent_ucp(gauge.diagonal_expectation(2), 2)
    r = gauge.ce_residuals(E, samples=50, seed=4)
    rng = np.random.default_rng(4)
    comm = 0.0
    for _ in range(50):
        a, b = nk.random_cmat(rng, 2, 1).ravel(), nk.random_cmat(rng, 2, 1).ravel()
        x, y = np.diag(a), np.diag(b)
        comm = max(comm, nk.fro(gauge.choi_effros_product(E, x, y) - np.diag(a * b)),
                   nk.fro(gauge.choi_effros_product(E, x, y) - gauge.choi_effros_product(E, y, x)))
    worst = max(r.associativity, r.cstar, r.unit, comm)
    acceptance(f"axioms {axioms_ok} (600 probes), range dim {len(E.range_basis)}, "
               f"assoc {r.associativity:.1e}, C* {r.cstar:.1e}, pointwise {comm:.1e}")
    assert axioms_ok and len(E.range_basis) == 2 and worst <= 1e-12


def test_criterion_10_cli_determinism(acceptance, monkeypatch):
    cases = json.loads((CLI_DATA / "cases.json").read_text())
    monkeypatch.chdir(CLI_DATA / "inputs")
    same = negatives = valid = 0
    for case in cases:
        buf = io.StringIO()
        code = cli.dispatch(case["argv"], buf)
        text = buf.getvalue()
        same += code == case["exit_code"] and text == (CLI_DATA / "golden" / f"{case['name']}.out").read_text()
        if code == cli.EXIT_NO:
            negatives += 1
            cert = json.loads(text)["certificate"]
            valid += cert is not None and certs.verify(cert)["ok"]
    acceptance(f"{same}/{len(cases)} byte-identical, {valid}/{negatives} negative certificates verify")
    assert same == len(cases) and valid == negatives
