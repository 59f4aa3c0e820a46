import numpy as np
import pytest

from linobs.calculus import su2
from linobs.mesh import build_circle, build_icosphere, build_torus
from linobs.models import (model_chern_simons, model_cyclic_particle, model_freedman_townsend,
                           model_semilinear_sphere, model_yang_mills)
from linobs.topology import compute_homology


@pytest.fixture(scope="session")
def algebra():
    return su2()


@pytest.fixture(scope="session")
def circle():
    return build_circle(64)


@pytest.fixture(scope="session")
def t2():
    return build_torus(2, 5)


@pytest.fixture(scope="session")
def t3():
    return build_torus(3, 6)


@pytest.fixture(scope="session")
def t4():
    return build_torus(4, 3)


@pytest.fixture(scope="session")
def ico3():
    return build_icosphere(3)


@pytest.fixture(scope="session")
def ode(circle):
    return model_cyclic_particle(circle)


@pytest.fixture(scope="session")
def sphere1(ico3):
    return model_semilinear_sphere(ico3, 1)


@pytest.fixture(scope="session")
def sphere2(ico3):
    return model_semilinear_sphere(ico3, 2)


@pytest.fixture(scope="session")
def cs(t3, algebra):
    return model_chern_simons(t3, algebra)


@pytest.fixture(scope="session")
def ym(t3, algebra):
    return model_yang_mills(t3, algebra)


@pytest.fixture(scope="session")
def ft(algebra):
    return model_freedman_townsend(build_torus(4, 4), algebra)


@pytest.fixture(scope="session")
def all_models(ode, sphere1, sphere2, cs, ym, ft):
    return [ode, sphere1, sphere2, cs, ym, ft]


@pytest.fixture(scope="session")
def hd_of():
    def get(model):
        return compute_homology(model.complex)
    return get


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = {}


@pytest.fixture(scope="session")
def acceptance():
    """Records ``criterion -> (passed, detail)`` for the terminal summary."""
    return ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"CRITERION {n}: {'PASS' if ok else 'FAIL'} {detail}")
