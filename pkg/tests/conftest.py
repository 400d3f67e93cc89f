import numpy as np
import pytest

from opbound import numkernel as nk
from opbound import opspace as osp


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_map(rng, X: osp.OpSubspace, n: int, m: int, scale: float = 1.0) -> osp.MatrixMap:
    return osp.MatrixMap(X, n, m, tuple(scale * nk.random_cmat(rng, n, m) for _ in range(X.dim)))


def random_subspace(rng, p: int, q: int, dim: int) -> osp.OpSubspace:
    return osp.subspace([nk.random_cmat(rng, p, q) for _ in range(dim)], p, q)


def diag_tro() -> osp.OpSubspace:
    return osp.OpSubspace(2, 2, (nk.unit(2, 0, 0), nk.unit(2, 1, 1)), osp.TRO)


def scalar_on_identity() -> osp.MatrixMap:
    """phi(I_2) = 1 on span{I_2}."""
    X = osp.subspace([np.eye(2)])
    return osp.matrix_map(X, [np.eye(1)])


# Acceptance summary: each criterion test stores a one-line detail here and
# the terminal summary prints PASS/FAIL per criterion from the test outcomes.
ACCEPTANCE_DETAILS: dict[str, str] = {}


@pytest.fixture
def acceptance(request):
    def note(detail: str):
        ACCEPTANCE_DETAILS[request.node.nodeid] = detail
    return note


def pytest_terminal_summary(terminalreporter):
    rows = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            if "test_acceptance.py::test_criterion" in rep.nodeid and rep.when == "call" or (
                    outcome == "error" and "test_acceptance.py" in rep.nodeid):
                rows.append((rep.nodeid, "PASS" if outcome == "passed" else "FAIL"))
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid, verdict in sorted(rows):
        name = nodeid.split("::")[-1]
        detail = ACCEPTANCE_DETAILS.get(nodeid, "")
        terminalreporter.write_line(f"{verdict}  {name}  {detail}".rstrip())
