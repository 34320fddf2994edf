import numpy as np
import pytest
from hypothesis import settings

from hitchlab import hitchin, rep, surface

settings.register_profile("hitchlab", max_examples=40, deadline=None)
settings.load_profile("hitchlab")


@pytest.fixture(scope="session")
def mesh_cache():
    cache = {}

    def get(g, r):
        if (g, r) not in cache:
            cache[g, r] = surface.build_genus(g, r)
        return cache[g, r]

    return get


@pytest.fixture(scope="session")
def g2r1(mesh_cache):
    return mesh_cache(2, 1)


@pytest.fixture(scope="session")
def g2r2(mesh_cache):
    return mesh_cache(2, 2)


@pytest.fixture(scope="session")
def fuchsian2(g2r1):
    return rep.fuchsian_rep(g2r1)


@pytest.fixture(scope="session")
def solved_r1(g2r1, fuchsian2):
    fmap = hitchin.harmonic_map(fuchsian2, g2r1)
    pair = hitchin.extract_pair(fuchsian2, g2r1, fmap)
    return fmap, pair


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    def record(n, ok, detail):
        _ACCEPTANCE[n] = (ok, detail)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
