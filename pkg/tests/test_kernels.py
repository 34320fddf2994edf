import os
import subprocess
import sys

import numpy as np
import pytest

from hitchlab import dec, hitchin, kernels
from hitchlab import hyperbolic as hy

compiled = pytest.mark.skipif("cython" not in kernels.available(), reason="extension not built")


def _args(mesh, connection):
    pull = dec._pullbacks(connection, mesh)
    return pull, mesh.edges[:, 0], mesh.edges[:, 1], mesh.edge_weight


def _map(mesh, seed):
    rng = np.random.default_rng(seed)
    v = 0.4 * rng.standard_normal((mesh.n_vertices, 3))
    v[:, 2] = 0.0
    return hy.project(hy.exp_map(np.tile(hy.E3, (mesh.n_vertices, 1)), v))


def test_python_always_available():
    assert "python" in kernels.available()
    assert kernels.get("python").NAME == "python"


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.get("fortran")


def test_env_override(monkeypatch):
    monkeypatch.setenv("HITCHLAB_BACKEND", "python")
    assert kernels.get().NAME == "python"


@pytest.mark.parametrize("backend", ["python", "cython"])
def test_env_override_at_import(backend):
    if backend not in kernels.available():
        pytest.skip("extension not built")
    env = dict(os.environ, HITCHLAB_BACKEND=backend)
    out = subprocess.run(
        [sys.executable, "-c", "from hitchlab import kernels; print(kernels.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == backend


@compiled
@pytest.mark.parametrize("seed", range(4))
def test_backends_agree(g2r1, fuchsian2, seed):
    x = _map(g2r1, seed)
    a = _args(g2r1, fuchsian2)
    e_py, g_py = kernels.harmonic_energy_grad(x, *a, backend="python")
    e_cy, g_cy = kernels.harmonic_energy_grad(x, *a, backend="cython")
    assert float(e_py) == pytest.approx(float(e_cy), rel=1e-14)
    assert np.abs(g_py - g_cy).max() < 1e-12 * max(1.0, np.abs(g_py).max())
    assert float(kernels.harmonic_energy(x, *a, backend="cython")) == pytest.approx(float(e_py), rel=1e-14)


@pytest.mark.parametrize("backend", kernels.available())
def test_energy_is_extended_precision(g2r1, fuchsian2, backend):
    x = _map(g2r1, 7)
    e = kernels.harmonic_energy(x, *_args(g2r1, fuchsian2), backend=backend)
    assert isinstance(e, np.longdouble)


@compiled
def test_harmonic_map_same_on_both_backends(g2r1, fuchsian2):
    a = hitchin.harmonic_map(fuchsian2, g2r1, backend="python")
    b = hitchin.harmonic_map(fuchsian2, g2r1, backend="cython")
    assert a.backend == "python" and b.backend == "cython"
    assert np.max(hy.dist(a.values, b.values)) < 1e-10
