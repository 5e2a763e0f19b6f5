import numpy as np
import pytest

from cobundle.coobs import build_index, build_jacobian
from cobundle.schur import diag_scaling
from cobundle.synthetic import make_problem, perturb

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def linearized(num_cameras, num_points, seed, visibility=0.5, min_co=1, scale=1e-2):
    """A perturbed synthetic problem with its index, blocks and scaling vector."""
    problem = perturb(make_problem(num_cameras, num_points, seed, visibility=visibility, min_co=min_co),
                      scale, seed + 1000)
    index = build_index(problem)
    blocks = build_jacobian(problem, index)
    return problem, index, blocks, diag_scaling(blocks, index)


@pytest.fixture
def small_system():
    return linearized(5, 40, seed=7, visibility=0.5, min_co=2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
