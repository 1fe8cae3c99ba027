import numpy as np
import pytest
from hypothesis import settings

from chemoshallow import grid as G
from chemoshallow.params import PhysicalParams, gaussian_vacuum

settings.register_profile("ci", max_examples=40, deadline=None)
settings.load_profile("ci")

_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def report(request):
    """Record one pass/fail line per acceptance criterion."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(number, ok, detail):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def g33():
    return G.make_grid(5.0, 33)


@pytest.fixture
def params():
    return PhysicalParams()


@pytest.fixture(scope="session")
def canonical():
    grid = G.make_grid(5.0, 65)
    p = PhysicalParams()
    return grid, p, gaussian_vacuum(grid, p)


@pytest.fixture(scope="session")
def canonical_solution(canonical):
    from chemoshallow.fixedpoint import FixedPointConfig, run_fixed_point

    grid, p, init = canonical
    cfg = FixedPointConfig(T=0.1, dt=0.005)
    return cfg, run_fixed_point(init, p, cfg)
