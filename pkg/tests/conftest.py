import numpy as np
import pytest

from cvxorder.measure import new_discrete


def random_measure(rng, n, d, scale=1.0, uniform=False):
    w = np.full(n, 1.0 / n) if uniform else rng.dirichlet(np.ones(n))
    return new_discrete(scale * rng.standard_normal((n, d)), w)


def martingale_spread(rng, mu, splits=3, spread=1.0):
    """A measure dominating ``mu``: each atom split into ``splits`` atoms with the atom as mean."""
    pts, wts = [], []
    for x, w in zip(mu.points, mu.weights):
        lam = rng.dirichlet(np.ones(splits))
        z = spread * rng.standard_normal((splits, mu.dim))
        z -= lam @ z  # zero mean under lam
        pts.append(x + z)
        wts.append(w * lam)
    return new_discrete(np.vstack(pts), np.concatenate(wts))


def example_11(n):
    """The Dirac at the origin and its two-point comparison measure indexed by ``n``."""
    mu = new_discrete([[0.0, 0.0]], [1.0])
    nu = new_discrete([[-1.0, 0.0], [1.0, 1.0 / n]], [0.5, 0.5])
    return mu, nu


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one "PASS/FAIL" line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
