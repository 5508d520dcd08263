import time
from contextlib import contextmanager

import pytest

from zollsphere.sphere_core import HarmonicField
from zollsphere.zoll_solver import deform

TANGENCY_TS = (0.05, 0.025, 0.0125)


@pytest.fixture(scope="session")
def xyz_rho_dot():
    """The odd cubic x1 x2 x3 as a degree-3 field on S^2."""
    return HarmonicField.from_function(2, 3, lambda p: p[:, 0] * p[:, 1] * p[:, 2])


@pytest.fixture(scope="session")
def deformed(xyz_rho_dot):
    """Converged states along t * x1 x2 x3 (L=8, L_g=12, tol=1e-8), keyed by t."""
    out = {}
    for t in TANGENCY_TS:
        trace = []
        out[t] = (deform(xyz_rho_dot, t, tol=1e-8, L=8, L_g=12, trace=trace), trace)
    return out


_CRITERIA = []


@pytest.fixture
def criterion():
    """Context manager that records one pass/fail line per acceptance criterion."""

    @contextmanager
    def run(number, text):
        t0 = time.perf_counter()
        status = "FAIL"
        try:
            yield
            status = "PASS"
        finally:
            line = f"{status} criterion {number}: {text} ({time.perf_counter() - t0:.1f} s)"
            _CRITERIA.append((number, line))
            print(line)

    return run


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_CRITERIA):
            terminalreporter.write_line(line)
