import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fracpara import ConductivityField, GridSpec, build_grid, load_scenario

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def grid1d():
    return build_grid(GridSpec(n=1, L=4.0, Nx=64, T=1.0, Nt=64, Ny=64, grade=3.0))


@pytest.fixture(scope="session")
def small2d():
    return build_grid(GridSpec(n=2, L=3.0, Nx=16, T=1.0, Nt=16, Ny=16, grade=3.0))


@pytest.fixture(scope="session")
def scenario1d():
    return load_scenario(preset="default1d")


@pytest.fixture(scope="session")
def scenario2d():
    return load_scenario(preset="default2d")


@pytest.fixture(scope="session")
def identity1d(grid1d):
    return ConductivityField.identity(grid1d)


def gaussian_datum(grid, width=0.25, spread=0.5):
    """Smooth causal datum concentrated near the origin of space-time."""
    from fracpara import SpaceTimeField

    return SpaceTimeField.from_function(
        grid, lambda t, x: np.exp(-(t / width) ** 2 - np.sum((x / spread) ** 2, axis=-1)))


# acceptance criteria register their outcome here; printed once at the end of the session
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, title, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {number:2d} ({title}): {detail}")
