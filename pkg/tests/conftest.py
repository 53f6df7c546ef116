import numpy as np
import pytest

from sbim.metamodel import SimLogLikTable


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def quadratic_table(rng, M=40, d=1, a=0.0, b=None, c=None, sigma=0.5, spread=2.0, weights=None):
    """Synthetic table with values ``a + b.theta + theta'c theta`` plus Gaussian noise."""
    b = np.zeros(d) if b is None else np.asarray(b, dtype=float)
    c = -np.eye(d) if c is None else np.asarray(c, dtype=float)
    thetas = rng.uniform(-spread, spread, size=(M, d))
    w = np.ones(M) if weights is None else np.asarray(weights, dtype=float)
    mean = a + thetas @ b + np.einsum("mi,ij,mj->m", thetas, c, thetas)
    values = mean + sigma * rng.standard_normal(M) / np.sqrt(w)
    return SimLogLikTable(thetas, values, w)


ACCEPTANCE_LINES = []


def record(criterion, passed, detail):
    """Register a PASS/FAIL line for the end-of-run acceptance summary."""
    line = f"criterion {criterion}: {'PASS' if passed else 'FAIL'} {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
