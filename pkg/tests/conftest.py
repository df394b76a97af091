import numpy as np
import pytest
import scipy.sparse as sp
from scipy.optimize import linprog

# lines recorded by the acceptance module, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def lp_optimum(y, tau, w):
    """Optimal value of the penalized check-loss problem as a linear program.

    Variables: u (free), positive/negative residual parts p, m and positive/
    negative jump parts a, b, with y - u = p - m and diff(u) = a - b.
    """
    y = np.asarray(y, dtype=float)
    n = len(y)
    eye = sp.eye(n)
    D = sp.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n))
    A = sp.bmat([[eye, eye, -eye, None, None], [D, None, None, -sp.eye(n - 1), sp.eye(n - 1)]])
    c = np.concatenate([np.zeros(n), tau * np.ones(n), (1 - tau) * np.ones(n), w * np.ones(2 * (n - 1))])
    bounds = [(None, None)] * n + [(0, None)] * (2 * n + 2 * (n - 1))
    res = linprog(c, A_eq=A, b_eq=np.concatenate([y, np.zeros(n - 1)]), bounds=bounds, method="highs")
    assert res.status == 0, res.message
    return float(res.fun)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
