"""Backend selection for the hot loops.

The compiled extension is used when it imports; set ``HITCHLAB_BACKEND=python``
to force the NumPy fallback.
"""

from __future__ import annotations

import os

import numpy as np

from . import _kernels_py

_py = _kernels_py
try:
    from . import _kernels as _cy
except ImportError:  # extension not built
    _cy = None


def available():
    return ["python"] + (["cython"] if _cy is not None else [])


def get(name=None):
    name = name or os.environ.get("HITCHLAB_BACKEND", "")
    if name == "python" or (not name and _cy is None):
        return _py
    if name in ("cython", ""):
        if _cy is None:
            raise ImportError("compiled kernels are not built")
        return _cy
    raise ValueError(f"unknown backend {name!r}")


def _prep(x, pull, src, tgt, w):
    return (
        np.ascontiguousarray(x, dtype=float),
        np.ascontiguousarray(pull, dtype=float),
        np.ascontiguousarray(src, dtype=np.int_),
        np.ascontiguousarray(tgt, dtype=np.int_),
        np.ascontiguousarray(w, dtype=float),
    )


def harmonic_energy(x, pull, src, tgt, w, backend=None):
    return get(backend).harmonic_energy(*_prep(x, pull, src, tgt, w))


def harmonic_energy_grad(x, pull, src, tgt, w, backend=None):
    return get(backend).harmonic_energy_grad(*_prep(x, pull, src, tgt, w))


BACKEND = get().NAME
