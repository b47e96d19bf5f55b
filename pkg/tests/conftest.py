import pytest

from cslqp import csl_rates, kinetic
from cslqp.grid import OccupationFunction
from cslqp.materials import load_csl, load_material


@pytest.fixture(scope="session")
def al():
    return load_material("aluminum")


@pytest.fixture(scope="session")
def baseline():
    return load_csl("paper-baseline")


@pytest.fixture(scope="session")
def solver_cfg():
    return kinetic.SolverConfig()


@pytest.fixture(scope="session")
def grid(solver_cfg):
    return solver_cfg.grid()


@pytest.fixture(scope="session")
def curve(grid, al, baseline):
    return csl_rates.generation_curve(grid, al, baseline)


@pytest.fixture(scope="session")
def steady(grid, al, curve, solver_cfg):
    """Numeric and analytic steady states keyed by temperature in K."""
    cache = {}

    def get(T):
        if T not in cache:
            f0 = OccupationFunction.thermal(grid, al, T)
            f_num, report = kinetic.evolve_to_steady_state(f0, T, curve, solver_cfg, al)
            f_an, diag = kinetic.analytic_steady_state(T, curve, grid, al)
            cache[T] = (f_num, report, f_an, diag)
        return cache[T]

    return get
