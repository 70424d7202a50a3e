import time

import pytest

import coagdrift as cd


@pytest.fixture(scope="session")
def default_params():
    return cd.ModelParams(v=0.5, m0=0.005)


@pytest.fixture(scope="session")
def solved(default_params):
    """Certified fat-tail solve at the default grid, shared by the
    profile-level tests and several acceptance criteria."""
    start = time.perf_counter()
    profile, report = cd.outer_solve(default_params)
    elapsed = time.perf_counter() - start
    return profile, report, elapsed
