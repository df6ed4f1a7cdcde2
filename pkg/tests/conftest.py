import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from chdbc.fem import Discretization

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def disc_cache():
    cache = {}

    def get(n, factor=1):
        if (n, factor) not in cache:
            cache[n, factor] = Discretization.build(n, factor)
        return cache[n, factor]

    return get


def random_consistent(disc, rng, amp=1.0):
    """Random (u, p) with T_u u = T_p p exactly."""
    p = rng.uniform(-amp, amp, disc.n_p)
    u = rng.uniform(-amp, amp, disc.n_u)
    bv = disc.mesh.boundary_vertices
    if disc.bmesh.factor == 1:
        u[bv] = p
    else:
        import scipy.sparse.linalg as spla

        u[bv] = spla.spsolve(disc.T_u[:, bv].tocsc(), disc.T_p @ p)
    return u, p


# acceptance criterion -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
