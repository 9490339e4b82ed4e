import numpy as np
import pytest

from zominimax import Projector, ProblemSpec, bilinear_saddle, quadratic_saddle


def scalar_problem(fn, d_x=1, d_y=1, proj_x=None, proj_y=None, L=1.0, mu=0.0, D_y=2.0):
    """Deterministic problem from a row-wise function ``fn(X, Y) -> values``."""
    return ProblemSpec(
        oracle=lambda X, Y, xi: fn(X, Y),
        draw_noise=lambda rng, n: np.zeros(n, dtype=np.int64),
        proj_x=proj_x or Projector.unconstrained(d_x),
        proj_y=proj_y or Projector.box(-1.0, 1.0, dim=d_y),
        L=L,
        mu=mu,
        D_y=D_y,
    )


@pytest.fixture
def quad6():
    """Seeded quadratic saddle with d = 6 and unconstrained x."""
    return quadratic_saddle(3, 3, 1.0, a=[0.2, -0.1, 0.3], x_box=None, x_radius=1.0, seed=3)


@pytest.fixture
def bilinear():
    return bilinear_saddle(1.0)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(results):
        terminalreporter.write_line(results[num])
