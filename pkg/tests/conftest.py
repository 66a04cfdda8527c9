import numpy as np
import pytest

from transhock.background import ForceProfile, build_background
from transhock.domain import Grid
from transhock.driver import Problem, SolverSettings, solve
from transhock.upstream import PerturbationSpec, TrigMode, analytic_supersonic

L0, L1 = 1.0, 2.0
GAMMA, RHO0, U0, FBAR = 2.0, 1.0, 2.0, 0.1

# one mode per perturbation family, each with the wall parities it must respect
MODES = dict(
    u10=[TrigMode(1.0, "cos", 1, "cos", 0)],
    u20=[TrigMode(0.5, "sin", 1, "cos", 1)],
    u30=[TrigMode(0.5, "cos", 0, "sin", 1)],
    P0=[TrigMode(1.0, "cos", 0, "cos", 1)],
    Phi0=[TrigMode(1.0, "cos", 1, "cos", 1)],
    Pex=[TrigMode(1.0, "cos", 1, "cos", 0)],
)


@pytest.fixture(scope="session")
def bg():
    return build_background(GAMMA, RHO0, U0, ForceProfile(L0, L1, FBAR), L0, L1)


def make_problem(bg, shape, eps, modes=None):
    g = Grid(bg.Ls, bg.L1, *shape)
    pert = PerturbationSpec(eps, **(MODES if modes is None else modes))
    fld = analytic_supersonic(pert, bg, g.y2, g.y3)
    return Problem(bg, fld, pert, g)


class SolveCache:
    """Converged solutions shared between test modules (the fine grids take seconds)."""

    def __init__(self, bg):
        self.bg = bg
        self.store = {}

    def get(self, shape, eps):
        key = (tuple(shape), float(eps))
        if key not in self.store:
            self.store[key] = solve(make_problem(self.bg, shape, eps), SolverSettings())
        return self.store[key]


@pytest.fixture(scope="session")
def solutions(bg):
    return SolveCache(bg)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
