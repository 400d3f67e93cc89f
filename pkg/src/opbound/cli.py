"""Command-line frontend: JSON in, JSON out, sysexits-style exit codes.

Exit codes: 0 affirmative, 1 negative (certificate written), 2 indeterminate,
64 usage error, 65 bad input, 70 numerical failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import re
import sys
from pathlib import Path

import numpy as np

from . import boundary as bd
from . import certificates as certs
from . import cpmaps as cp
from . import gauge
from . import numkernel as nk
from . import opspace as osp
from . import rectconvex as rc
from . import rkhs
from . import sdp
from .errors import (DimensionBlowup, IllFormed, NoConvergence, NumericalBreakdown, OpBoundError,
                     SamplerExhausted)

EXIT_YES, EXIT_NO, EXIT_INDET = 0, 1, 2
EXIT_USAGE, EXIT_DATA, EXIT_SOFTWARE = 64, 65, 70

VERSION = "0.1.0"


class UsageError(Exception):
    pass


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# Serialization

def _plain(obj):
    """Convert results to JSON-ready values; complex matrices become CMat objects."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        if obj.ndim == 2 and np.iscomplexobj(obj):
            return nk.cmat_to_json(obj)
        if np.iscomplexobj(obj):
            return [[float(z.real), float(z.imag)] for z in obj.reshape(-1)]
        return _plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def dumps(obj) -> str:
    """Deterministic JSON: sorted keys, floats with 17 significant digits,
    non-finite floats as null."""
    def enc(v, ind):
        pad = "  " * (ind + 1)
        if isinstance(v, dict):
            if not v:
                return "{}"
            items = [f"{pad}{json.dumps(k)}: {enc(v[k], ind + 1)}" for k in sorted(v)]
            return "{\n" + ",\n".join(items) + "\n" + "  " * ind + "}"
        if isinstance(v, list):
            if not v:
                return "[]"
            if all(not isinstance(x, (dict, list)) for x in v):
                return "[" + ", ".join(enc(x, ind + 1) for x in v) + "]"
            return "[\n" + ",\n".join(pad + enc(x, ind + 1) for x in v) + "\n" + "  " * ind + "]"
        if isinstance(v, bool) or v is None:
            return json.dumps(v)
        if isinstance(v, float):
            return "%.17g" % v if math.isfinite(v) else "null"
        if isinstance(v, int):
            return str(v)
        return json.dumps(v)
    return enc(_plain(obj), 0) + "\n"


def _sha(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


class Inputs:
    """Loads input files and records their hashes."""

    def __init__(self):
        self.hashes: dict[str, str] = {}

    def text(self, name: str, path: str) -> str:
        try:
            raw = Path(path).read_bytes()
        except OSError as exc:
            raise InputError(f"cannot read {path}: {exc}") from exc
        self.hashes[name] = _sha(raw)
        return raw.decode("utf-8")

    def json(self, name: str, path: str):
        try:
            return json.loads(self.text(name, path))
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON: {exc}") from exc

    def value(self, name: str, value):
        self.hashes[name] = _sha(repr(value).encode())
        return value


# ---------------------------------------------------------------------------
# Input helpers

_TERM = re.compile(r"^(?P<coef>[0-9.eE+\-j()]*?)\s*\*?\s*(?P<z>z(\s*\^\s*(?P<pow>\d+))?)?$")


def parse_poly(text: str) -> rkhs.PolyMultiplier:
    """Coefficient list "[1, 0, 0.5]" or literal sums like "1 + 0.5 z^2 - z"."""
    text = text.strip()
    if text.startswith("["):
        try:
            vals = json.loads(text)
            return rkhs.poly([complex(*v) if isinstance(v, list) else complex(v) for v in vals])
        except (ValueError, TypeError) as exc:
            raise InputError(f"bad coefficient list {text!r}") from exc
    coeffs: dict[int, complex] = {}
    # split on + / - that are not part of an exponent or a parenthesized complex number
    parts, depth, cur = [], 0, ""
    for i, ch in enumerate(text):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch in "+-" and depth == 0 and cur.strip() and cur.strip()[-1] not in "eE":
            parts.append(cur)
            cur = ch
        else:
            cur += ch
    parts.append(cur)
    for raw in parts:
        term = raw.replace(" ", "")
        if not term:
            raise InputError(f"empty term in {text!r}")
        sign = 1.0
        while term and term[0] in "+-":
            sign *= -1.0 if term[0] == "-" else 1.0
            term = term[1:]
        m = _TERM.match(term)
        if not m or (not m.group("coef") and not m.group("z")):
            raise InputError(f"cannot parse term {raw.strip()!r}")
        try:
            c = complex(m.group("coef")) if m.group("coef") else 1.0
        except ValueError as exc:
            raise InputError(f"bad coefficient in {raw.strip()!r}") from exc
        k = 0 if not m.group("z") else int(m.group("pow") or 1)
        coeffs[k] = coeffs.get(k, 0) + sign * c
    deg = max(coeffs)
    return rkhs.poly([coeffs.get(k, 0) for k in range(deg + 1)])


def _space(inp: Inputs, path: str) -> osp.OpSubspace:
    return osp.subspace_from_json(inp.json("space", path))


def _map(inp: Inputs, X: osp.OpSubspace, path: str | None) -> osp.MatrixMap:
    if path is None:
        return osp.identity_map(X)
    return osp.map_from_json(X, inp.json("map", path))


def _coords(obj, name: str) -> np.ndarray:
    try:
        return np.stack([nk.cmat_from_json(c) for c in obj["coords"]])
    except (KeyError, TypeError, ValueError) as exc:
        raise IllFormed(f"bad {name} JSON: {exc}") from exc


def _user_to_orth(X: osp.OpSubspace, x: np.ndarray) -> np.ndarray:
    """Coordinates over the user basis -> coordinates over the orthonormal basis."""
    if x.shape[0] != X.coords.shape[0]:
        raise IllFormed(f"{x.shape[0]} coordinates for {X.coords.shape[0]} basis elements")
    return np.einsum("kj,knm->jnm", X.coords, x)


# ---------------------------------------------------------------------------
# Commands. Each returns (exit code, verdict, result dict, certificate or None).

def _ext_verdict(v: cp.Verdict) -> int:
    return {cp.Verdict.YES: EXIT_YES, cp.Verdict.NO: EXIT_NO}.get(v, EXIT_INDET)


def _farkas_or_none(res: cp.ExtensionResult):
    if res.verdict == cp.Verdict.NO and res.certificate is not None and res.problem is not None:
        return certs.farkas(res.problem, res.certificate.y)
    return None


def cmd_cc_check(a, inp):
    X = _space(inp, a.space)
    phi = _map(inp, X, a.map)
    r = cp.is_cc(phi, a.tol)
    ext = r.extension
    result = {"margin": r.margin, "residual": ext.residual, "notes": ext.notes}
    return _ext_verdict(r.verdict), r.verdict.value, result, _farkas_or_none(ext)


def cmd_cb_norm(a, inp):
    X = _space(inp, a.space)
    phi = _map(inp, X, a.map)
    r = cp.cb_norm(phi, a.tol)
    return EXIT_YES, "Value", {"cb_norm": r.value, "lower": r.lower, "upper": r.upper, "margin": r.margin}, None


def _purity_cert(phi, pr: bd.PurityResult):
    if pr.verdict == bd.Purity.NOT_PURE and pr.witness_chois is not None:
        return certs.cp_split(phi, pr.spec.layout, *pr.witness_chois)
    return None


def cmd_extreme_check(a, inp):
    X = _space(inp, a.space)
    phi = _map(inp, X, a.map)
    pr = bd.is_rect_extreme(phi, a.tol)
    code = {bd.Purity.PURE: EXIT_YES, bd.Purity.NOT_PURE: EXIT_NO}.get(pr.verdict, EXIT_INDET)
    result = {"max_excursion": pr.max_excursion, "excursions": pr.excursions,
              "witness_distance": pr.witness_distance}
    return code, pr.verdict.value, result, _purity_cert(phi, pr)


def cmd_hull_member(a, inp):
    K = rc.rectset_from_json(inp.json("set", a.set))
    if not isinstance(K, rc.FiniteHull):
        raise IllFormed("hull-member needs a finite hull")
    v = _coords(inp.json("point", a.point), "point")
    r = rc.hull_member(K, v, a.tol)
    result = {"margin": r.margin, "residual": r.extension.residual, "notes": r.extension.notes}
    if r.blocks:
        result["witness_blocks"] = list(r.blocks)
    return _ext_verdict(r.verdict), r.verdict.value, result, _farkas_or_none(r.extension)


def _polar_values(obj) -> np.ndarray:
    try:
        return np.stack([nk.cmat_from_json(c) for c in obj["values"]])
    except (KeyError, TypeError, ValueError) as exc:
        raise IllFormed(f"bad polar map JSON: {exc}") from exc


def cmd_polar_member(a, inp):
    K = rc.rectset_from_json(inp.json("set", a.set))
    if not isinstance(K, rc.FiniteHull):
        raise IllFormed("polar-member needs a finite hull")
    f = _polar_values(inp.json("map", a.map))
    norms = rc.polar_norms(K, f)
    ok = max(norms) <= 1.0 + rc.POLAR_TOL
    cert = None
    if not ok:
        j = int(np.argmax(norms))
        cert = certs.polar_violation(K.generators[j].coords, f)
    return (EXIT_YES if ok else EXIT_NO), ("Yes" if ok else "No"), {"pairing_norms": norms}, cert


def cmd_separate(a, inp):
    K = rc.rectset_from_json(inp.json("set", a.set))
    if not isinstance(K, rc.FiniteHull):
        raise IllFormed("separate needs a finite hull")
    v = _coords(inp.json("point", a.point), "point")
    r = rc.separate(K, v, restarts=a.restarts, seed=a.seed, tol=a.tol)
    result = r.to_json()
    return (EXIT_YES if r.found else EXIT_INDET), ("Found" if r.found else "NotFound"), result, None


def cmd_dilate(a, inp):
    X = _space(inp, a.space)
    phi = _map(inp, X, a.map)
    r = bd.triple_dilation(phi, minimal=not a.no_minimal, tol=a.tol)
    return EXIT_YES, "Dilated", r.to_json(), None


def _boundary_cert(phi, u: bd.UepResult, bc: bd.BoundaryCertificate | None):
    layout = u.spec.layout
    tro = None if u.generates else list(u.extension.domain.basis)
    if bc is not None and "reducible" in bc.reasons and bc.intertwiner is not None:
        m, n = phi.m, phi.n
        w = bc.intertwiner
        P, Q = w[:m * m].reshape(m, m), w[m * m:].reshape(n, n)
        return certs.intertwiner(phi, layout, u.choi, P, Q, tro)
    if not u.unique and u.choi_pair is not None:
        th = [lambda t, c=c: layout.apply(c, _corner(t, phi.domain))[:phi.n, phi.n:] for c in u.choi_pair]
        probe = max(u.complement, key=lambda t: nk.op_norm(th[0](t) - th[1](t)))
        return certs.extension_pair(phi, layout, *u.choi_pair, probe, tro)
    if u.triple_residual > bd.TRIPLE_TOL:
        ext = u.extension
        b = ext.domain.basis
        best, trip = -1.0, None
        for i in range(len(b)):
            for j in range(len(b)):
                for k in range(len(b)):
                    lhs = ext(b[i] @ nk.adjoint(b[j]) @ b[k])
                    rhs = ext.values[i] @ nk.adjoint(ext.values[j]) @ ext.values[k]
                    r = nk.op_norm(lhs - rhs)
                    if r > best:
                        best, trip = r, (b[i], b[j], b[k])
        return certs.non_triple_extension(phi, layout, u.choi, trip, tro)
    return None


def _corner(t, X):
    p, q = X.p, X.q
    u = np.zeros((p + q, p + q), dtype=complex)
    u[:p, p:] = t
    return u


def cmd_uep_check(a, inp):
    X = _space(inp, a.space)
    phi = _map(inp, X, a.map)
    T = osp.subspace_from_json(inp.json("tro", a.tro)) if a.tro else None
    u = bd.uep_check(phi, T, a.tol)
    result = {"unique": u.unique, "triple_residual": u.triple_residual, "widths": u.widths,
              "affine_dimension": u.affine_dimension, "generates": u.generates,
              "extension": u.extension.to_json()}
    cert = None if u.uep else _boundary_cert(phi, u, None)
    return (EXIT_YES if u.uep else EXIT_NO), ("UEP" if u.uep else "NotUEP"), result, cert


def _boundary_outcome(phi, bc: bd.BoundaryCertificate):
    code = {bd.BoundaryStatus.BOUNDARY: EXIT_YES,
            bd.BoundaryStatus.NOT_BOUNDARY: EXIT_NO}.get(bc.status, EXIT_INDET)
    cert = _boundary_cert(phi, bc.uep, bc) if code == EXIT_NO else None
    return code, cert


def cmd_boundary_check(a, inp):
    X = _space(inp, a.space)
    phi = _map(inp, X, a.map)
    T = osp.subspace_from_json(inp.json("tro", a.tro)) if a.tro else None
    bc = bd.boundary_certify(phi, T, a.tol)
    code, cert = _boundary_outcome(phi, bc)
    return code, bc.status.value, bc.to_json(), cert


def cmd_envelope_certify(a, inp):
    X = _space(inp, a.space)
    r = bd.triple_envelope_certify(X, a.tol)
    code, cert = _boundary_outcome(osp.identity_map(X), r.certificate)
    result = {"certified": r.certified, "envelope": r.envelope.to_json(),
              "envelope_dimension": r.envelope.dim, "full_space": r.envelope.dim == X.p * X.q,
              "boundary": r.certificate.to_json()}
    return code, r.certificate.status.value, result, cert


def cmd_tro_generate(a, inp):
    X = _space(inp, a.space)
    T = osp.tro_generate(X)
    return EXIT_YES, "Generated", {"tro": T.to_json(), "dimension": T.dim}, None


def cmd_rkhs_mult_norm(a, inp):
    phi = parse_poly(inp.value("phi", a.phi))
    r = rkhs.mult_norm(phi, a.s, a.t, a.N)
    return EXIT_YES, "Value", {"value": r.value, "half_value": r.half_value, "N": r.N,
                               "coefficients": list(phi.coefficients)}, None


def cmd_rkhs_compactness(a, inp):
    phi = parse_poly(inp.value("phi", a.phi))
    trend = rkhs.compactness_trend(phi, a.s, a.t, a.N)
    fit = rkhs.fit_exponent(trend)
    return EXIT_YES, "Trend", {"trend": trend, "fitted_exponent": fit.exponent}, None


def cmd_rkhs_conditions(a, inp):
    r = rkhs.mult_boundary_conditions(a.s, a.t, a.N)
    return EXIT_YES, ("AllTrue" if r.all_true else "NotAllTrue"), r.to_json(), None


def cmd_gauge_check(a, inp):
    X = _space(inp, a.space)
    G = gauge.GaugedSpace(X)
    rep = gauge.check_axioms(G, a.probes, a.seed)
    bad = gauge.order_normality_probe(G, a.probes, a.seed)
    result = {"probes": rep.probes, "compression_violations": rep.compression_violations,
              "direct_sum_violations": rep.direct_sum_violations,
              "properness_violations": rep.properness_violations, "normality_violations": bad}
    cert = None
    if rep.first_violation is not None:
        cert = certs.gauge_violation(*rep.first_violation)
    ok = rep.ok and bad == 0
    return (EXIT_YES if ok else EXIT_NO), ("Holds" if ok else "Violated"), result, cert


def cmd_km_estimate(a, inp):
    X = _space(inp, a.space)
    x = _user_to_orth(X, _coords(inp.json("point", a.point), "point"))
    try:
        r = rc.km_norm_estimate(X, x, samples=a.samples, seed=a.seed, tol=a.tol)
    except SamplerExhausted as exc:
        return EXIT_INDET, "Exhausted", {"message": str(exc)}, None
    return EXIT_YES, "Estimate", {"lower": r.lower, "upper": r.upper, "candidates": r.candidates,
                                  "extreme_points": len(r.extreme_points)}, None


def cmd_verify(a, inp):
    doc = inp.json("certificate", a.certificate)
    cert = doc.get("certificate", doc) if isinstance(doc, dict) else doc
    if cert is None:
        raise IllFormed("document carries no certificate")
    rep = certs.verify(cert)
    return (EXIT_YES if rep["ok"] else EXIT_NO), ("Valid" if rep["ok"] else "Invalid"), rep, None


COMMANDS = {
    "cc-check": cmd_cc_check,
    "cb-norm": cmd_cb_norm,
    "extreme-check": cmd_extreme_check,
    "hull-member": cmd_hull_member,
    "polar-member": cmd_polar_member,
    "separate": cmd_separate,
    "dilate": cmd_dilate,
    "uep-check": cmd_uep_check,
    "boundary-check": cmd_boundary_check,
    "envelope-certify": cmd_envelope_certify,
    "tro-generate": cmd_tro_generate,
    "rkhs-mult-norm": cmd_rkhs_mult_norm,
    "rkhs-compactness": cmd_rkhs_compactness,
    "rkhs-conditions": cmd_rkhs_conditions,
    "gauge-check": cmd_gauge_check,
    "km-estimate": cmd_km_estimate,
    "verify": cmd_verify,
}


def _positive_float(s: str) -> float:
    try:
        v = float(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {s!r}")
    if not v > 0 or not math.isfinite(v):
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _positive_int(s: str) -> int:
    try:
        v = int(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {s!r}")
    if v < 1:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _seed(s: str) -> int:
    try:
        v = int(s, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {s!r}")
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in 64 bits")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=_seed, default=0)
    common.add_argument("--tol", type=_positive_float, default=sdp.DEFAULT_TOL)
    common.add_argument("--max-iter", type=_positive_int, default=200)
    common.add_argument("--out", default=None, help="output path (default stdout)")
    common.add_argument("--format", choices=("json", "csv"), default="json")

    parser = _Parser(prog="opbound", description="Decision procedures for operator spaces and maps.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, help_):
        return sub.add_parser(name, parents=[common], help=help_)

    for name, help_ in (("cc-check", "complete contractivity"), ("cb-norm", "completely bounded norm"),
                        ("extreme-check", "rectangular extreme point test"),
                        ("dilate", "triple morphism dilation")):
        p = add(name, help_)
        p.add_argument("--space", required=True)
        p.add_argument("--map", default=None, help="map JSON (default: identity inclusion)")
        if name == "dilate":
            p.add_argument("--no-minimal", action="store_true")
    for name, help_ in (("uep-check", "unique extension property"),
                        ("boundary-check", "boundary representation certificate")):
        p = add(name, help_)
        p.add_argument("--space", required=True)
        p.add_argument("--map", default=None)
        p.add_argument("--tro", default=None, help="ambient TRO JSON (default: generated TRO)")
    for name, help_ in (("envelope-certify", "triple envelope"), ("tro-generate", "generated TRO"),
                        ("gauge-check", "gauge axioms")):
        p = add(name, help_)
        p.add_argument("--space", required=True)
        if name == "gauge-check":
            p.add_argument("--probes", type=_positive_int, default=200)
    p = add("hull-member", "finite hull membership")
    p.add_argument("--set", required=True)
    p.add_argument("--point", required=True)
    p = add("polar-member", "polar membership")
    p.add_argument("--set", required=True)
    p.add_argument("--map", required=True)
    p = add("separate", "separating map search")
    p.add_argument("--set", required=True)
    p.add_argument("--point", required=True)
    p.add_argument("--restarts", type=_positive_int, default=20)
    p = add("km-estimate", "norm bracket from extreme points")
    p.add_argument("--space", required=True)
    p.add_argument("--point", required=True)
    p.add_argument("--samples", type=_positive_int, default=200)
    for name in ("rkhs-mult-norm", "rkhs-compactness"):
        p = add(name, "multiplier norm" if name == "rkhs-mult-norm" else "tail compression trend")
        p.add_argument("--phi", required=True)
        p.add_argument("--s", type=float, required=True)
        p.add_argument("--t", type=float, required=True)
        p.add_argument("--N", type=_positive_int, required=True)
    p = add("rkhs-conditions", "boundary hypotheses at truncation scale")
    p.add_argument("--s", type=float, required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--N", type=_positive_int, default=512)
    p = add("verify", "re-check a certificate")
    p.add_argument("certificate", help="certificate JSON or a result document carrying one")
    return parser


def _csv(command: str, result: dict) -> str:
    if command == "rkhs-compactness":
        rows = ["m,tail_norm"] + ["%d,%.17g" % (m, v) for m, v in enumerate(result["trend"])]
        return "\n".join(rows) + "\n"
    raise UsageError(f"--format csv is only available for rkhs-compactness")


def dispatch(argv=None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    try:
        a = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if a.command is None:
        print("usage error: a subcommand is required", file=sys.stderr)
        return EXIT_USAGE
    inp = Inputs()
    sdp.set_max_iter(a.max_iter)
    try:
        code, verdict, result, cert = COMMANDS[a.command](a, inp)
        if a.format == "csv":
            text = _csv(a.command, _plain(result))
        else:
            doc = {"command": a.command, "version": VERSION, "verdict": verdict, "exit_code": code,
                   "inputs": inp.hashes,
                   "config": {"tol": a.tol, "max_iter": a.max_iter, "seed": a.seed},
                   "result": result, "certificate": cert}
            text = dumps(doc)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InputError, IllFormed) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalBreakdown, NoConvergence, DimensionBlowup) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_SOFTWARE
    except OpBoundError as exc:
        # precondition and shape violations are problems with the supplied data
        print(f"input error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    finally:
        sdp.set_max_iter(None)
    if a.out:
        Path(a.out).write_text(text)
    else:
        stdout.write(text)
    return code


def main() -> None:
    sys.exit(dispatch())
