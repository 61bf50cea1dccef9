import numpy as np
import pytest

from homopt.maps import MatrixProduct
from homopt.problem import Problem, SquaredLoss
from homopt.regularizers import ElementalPair, NormProduct


def rel(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def matrix_problem(Y, lam, r_init=1, reg=None):
    Y = np.asarray(Y, dtype=float)
    reg = reg or NormProduct(["l2", "l2"])
    return Problem(ElementalPair(MatrixProduct(*Y.shape), reg), SquaredLoss(Y), lam, r_init=r_init)


def central_diff(f, x, eps=1e-6):
    """Gradient of scalar f at array x by central differences."""
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        e = np.zeros_like(x)
        e[idx] = eps
        g[idx] = (f(x + e) - f(x - e)) / (2 * eps)
    return g


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def record(label, ok, detail):
    """Store one acceptance verdict line; printed in the pytest summary."""
    line = f"{label} {'PASS' if ok else 'FAIL'}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0].split("-")[1])):
            terminalreporter.write_line(line)
