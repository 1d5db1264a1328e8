import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from qlschrod.discretization import PotentialSpec, RadialGrid  # noqa: E402
from qlschrod.functional import FunctionalContext  # noqa: E402
from qlschrod.mountain_pass import SolverConfig, solve  # noqa: E402
from qlschrod.nonlinearity import HomogeneousQ  # noqa: E402
from qlschrod.penalization import Ball, PenalizedH, choose_a  # noqa: E402

ROOT = Path(__file__).resolve().parent.parent


def benchmark_context(nodes=400, omega_radius=6.0, epsilon=1.0, potential=None, q=None):
    q = q or HomogeneousQ.product()
    pot = potential or PotentialSpec("constant", 1.0)
    h = PenalizedH(q, choose_a(HomogeneousQ.product(), 1.0, 1.0), Ball(omega_radius), 1.0, 1.0)
    return FunctionalContext.build(RadialGrid(3, 20.0, nodes), pot, pot, h, epsilon)


@pytest.fixture(scope="session")
def bench_ctx():
    return benchmark_context()


@pytest.fixture(scope="session")
def bench_solution(bench_ctx):
    return solve(bench_ctx, SolverConfig())


def bumps(grid, rng, count=3, amp=1.0, signed=False, reach=8.0):
    f = np.zeros(grid.size)
    for _ in range(count):
        c = rng.uniform(0.0, reach)
        s = rng.uniform(0.7, 3.0)
        a = rng.normal() if signed else rng.uniform(0.0, 1.0)
        f += amp * a * np.exp(-((grid.radii - c) / s) ** 2)
    f[~grid.interior] = 0.0
    return f


ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
