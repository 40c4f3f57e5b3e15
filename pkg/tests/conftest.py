import numpy as np
import pytest

from polydem import meshgen as mg
from polydem.assembly import BoundaryCondition
from polydem.plasticity import Material, stress
from polydem.problem import build_problem


def zero_field(d):
    return lambda x, t: np.zeros((len(x), d))


def affine_field(A, b):
    A = np.asarray(A, float)
    b = np.asarray(b, float)
    return lambda x, t=0.0: np.asarray(x) @ A.T + b


def clamp_all(mesh, func):
    """Dirichlet condition on every boundary tag of ``mesh``."""
    return [BoundaryCondition(tag, "dirichlet", func) for tag in mesh.tag_names]


def random_trace_free(rng, n):
    a = rng.standard_normal((n, 3, 3))
    a = 0.5 * (a + a.transpose(0, 2, 1))
    return a - np.trace(a, axis1=1, axis2=2)[:, None, None] * np.eye(3) / 3


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def steel():
    return Material(70e3, 0.3, 250.0, rho=1.0, hardening="linear", Et=70e3 / 5)


@pytest.fixture
def poly_problem(steel):
    m = mg.polygonal_mesh(5, 5, perturb=0.25, seed=3)
    return build_problem(m, steel, [])


@pytest.fixture
def tet_problem(steel):
    m = mg.box_tet_mesh(2, 2, 2, perturb=0.15, seed=2)
    return build_problem(m, steel, [])


def stresses(problem, u, eps_p=None):
    eps = problem.ops.strains(u)
    if eps_p is None:
        eps_p = np.zeros((problem.mesh.n_cells, 3, 3))
    return stress(eps, eps_p, problem.material)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
