"""NumPy reference implementation of the harmonic-map energy kernels."""

from __future__ import annotations

import numpy as np

NAME = "python"


def _mdot(x, y):
    return x[:, 0] * y[:, 0] + x[:, 1] * y[:, 1] - x[:, 2] * y[:, 2]


def _pair(x, pull, src, tgt):
    # transported points in extended precision; the energy differences near
    # convergence are far below double resolution
    xs = x[src].astype(np.longdouble)
    y = np.einsum("eij,ej->ei", pull.astype(np.longdouble), x[tgt].astype(np.longdouble))
    # renormalize so rounding off the hyperboloid does not reach the energy
    xs = xs / np.sqrt(-_mdot(xs, xs))[:, None]
    y = y / np.sqrt(-_mdot(y, y))[:, None]
    return xs, y


def harmonic_energy(x, pull, src, tgt, w):
    """``1/2 sum_e w_e d(x_src, pull_e x_tgt)^2`` as an extended-precision scalar."""
    xs, y = _pair(x, pull, src, tgt)
    diff = xs - y
    chord = np.sqrt(np.maximum(_mdot(diff, diff), 0))
    d = 2 * np.arcsinh(chord / 2)
    return np.sum(np.asarray(w, dtype=np.longdouble) * d * d) / 2


def harmonic_energy_grad(x, pull, src, tgt, w):
    """Energy and its Riemannian gradient (ambient coordinates, tangent at each vertex)."""
    x = np.asarray(x, dtype=float)
    xs, y = _pair(x, pull, src, tgt)
    diff = xs - y
    chord = np.sqrt(np.maximum(_mdot(diff, diff), 0))
    dl = 2 * np.arcsinh(chord / 2)
    energy = np.sum(np.asarray(w, dtype=np.longdouble) * dl * dl) / 2
    d = dl.astype(float)
    xs, y = xs.astype(float), y.astype(float)
    c = -_mdot(xs, y)
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(d > 1e-8, d / np.sinh(np.where(d > 1e-8, d, 1.0)), 1.0 - d * d / 6.0)
    k = (w * scale)[:, None]
    # log_x(y) and log_y(x), then pull the second back to the target frame
    lxy = y - c[:, None] * xs
    lyx = xs - c[:, None] * y
    pinv = pull.transpose(0, 2, 1) * np.array([1.0, 1.0, -1.0])[None, None, :]
    pinv = pinv * np.array([1.0, 1.0, -1.0])[None, :, None]
    grad = np.zeros_like(x)
    np.add.at(grad, src, -k * lxy)
    np.add.at(grad, tgt, -k * np.einsum("eij,ej->ei", pinv, lyx))
    return energy, grad
