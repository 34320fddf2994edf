"""Hyperboloid-model geometry and the PSL(2,R) ~ SO(2,1) dictionary.

All Lorentzian quantities use the fixed fiber metric ``H = diag(1, 1, -1)``.
Points of the hyperbolic plane are vectors ``x`` with ``<x, x> = -1`` and
``x[2] > 0``.  Functions accept stacked inputs along leading axes where that
is cheap to support.
"""

from __future__ import annotations

import numpy as np

H = np.diag([1.0, 1.0, -1.0])
E3 = np.array([0.0, 0.0, 1.0])

# so(2,1) generators: rotation about the timelike axis and the two boosts
J = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
K1 = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
K2 = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0]])

# sl(2,R) basis, orthonormal for B(X, Y) = tr(XY)/2 with signature (+, +, -)
_SL2_BASIS = np.array(
    [
        [[1.0, 0.0], [0.0, -1.0]],
        [[0.0, 1.0], [1.0, 0.0]],
        [[0.0, -1.0], [1.0, 0.0]],
    ]
)
_SL2_SIGNS = np.array([1.0, 1.0, -1.0])


class GeometryError(ValueError):
    """Raised for inputs that are not valid hyperbolic / Lorentzian data."""


def mdot(x, y):
    """Minkowski product ``<x, y>`` along the last axis."""
    x = np.asarray(x)
    y = np.asarray(y)
    return x[..., 0] * y[..., 0] + x[..., 1] * y[..., 1] - x[..., 2] * y[..., 2]


def project(x):
    """Push (approximate) points back onto the upper sheet."""
    x = np.asarray(x, dtype=float)
    n = np.sqrt(np.abs(mdot(x, x)))
    out = x / n[..., None]
    flip = out[..., 2] < 0
    if np.any(flip):
        out = np.where(flip[..., None], -out, out)
    return out


def point(r, theta):
    """Point at hyperbolic distance ``r`` from ``E3`` in direction ``theta``."""
    return np.array([np.sinh(r) * np.cos(theta), np.sinh(r) * np.sin(theta), np.cosh(r)])


def dist(x, y):
    """Hyperbolic distance, stable for nearby points."""
    d = np.asarray(x) - np.asarray(y)
    chord = np.sqrt(np.maximum(mdot(d, d), 0.0))
    return 2.0 * np.arcsinh(0.5 * chord)


def midpoint(x, y):
    s = np.asarray(x) + np.asarray(y)
    return s / np.sqrt(-mdot(s, s))[..., None]


def log_map(x, y):
    """Tangent vector at ``x`` pointing to ``y`` with length ``dist(x, y)``."""
    c = -mdot(x, y)
    d = dist(x, y)
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(d > 1e-8, d / np.sinh(np.where(d > 1e-8, d, 1.0)), 1.0 - d * d / 6.0)
    return scale[..., None] * (np.asarray(y) - c[..., None] * np.asarray(x))


def exp_map(x, v):
    n = np.sqrt(np.maximum(mdot(v, v), 0.0))
    with np.errstate(invalid="ignore", divide="ignore"):
        sh = np.where(n > 1e-12, np.sinh(n) / np.where(n > 1e-12, n, 1.0), 1.0 + n * n / 6.0)
    return np.cosh(n)[..., None] * np.asarray(x) + sh[..., None] * np.asarray(v)


def triangle_angles(a, b, c):
    """Interior angles opposite to side lengths ``a, b, c`` (hyperbolic law of cosines)."""
    ca, cb, cc = np.cosh(a), np.cosh(b), np.cosh(c)
    sa, sb, sc = np.sinh(a), np.sinh(b), np.sinh(c)
    alpha = np.arccos(np.clip((cb * cc - ca) / (sb * sc), -1.0, 1.0))
    beta = np.arccos(np.clip((ca * cc - cb) / (sa * sc), -1.0, 1.0))
    gamma = np.arccos(np.clip((ca * cb - cc) / (sa * sb), -1.0, 1.0))
    return alpha, beta, gamma


# --- SO(2,1) matrices -------------------------------------------------------


def rotation(phi):
    c, s = np.cos(phi), np.sin(phi)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def half_turn(p):
    """Rotation by pi about the point ``p``."""
    p = np.asarray(p, dtype=float)
    return -np.eye(3) - 2.0 * np.outer(p, H @ p)


def boost_to(p):
    """The pure boost taking ``E3`` to ``p`` (stacked over leading axes)."""
    p = np.asarray(p, dtype=float)
    q = p[..., :2]
    out = np.zeros(p.shape[:-1] + (3, 3))
    out[..., :2, :2] = np.eye(2) + q[..., :, None] * q[..., None, :] / (1.0 + p[..., 2])[..., None, None]
    out[..., :2, 2] = q
    out[..., 2, :2] = q
    out[..., 2, 2] = p[..., 2]
    return out


def inv(m):
    """Inverse of SO(2,1) matrices: ``H M^T H``."""
    m = np.asarray(m)
    return H @ np.swapaxes(m, -1, -2) @ H


def so21_deviation(m):
    """``max |M^T H M - H|`` per matrix."""
    m = np.asarray(m)
    d = np.swapaxes(m, -1, -2) @ H @ m - H
    return np.abs(d).max(axis=(-1, -2))


def is_so21(m, tol=1e-10):
    m = np.asarray(m, dtype=float)
    return bool(
        np.all(so21_deviation(m) <= tol * max(1.0, float(np.abs(m).max()) ** 2))
        and np.all(np.linalg.det(m) > 0)
        and np.all(m[..., 2, 2] > 0)
    )


def reorthonormalize(m):
    """h-Gram-Schmidt on the columns: timelike column first, then the two spacelike."""
    m = np.array(m, dtype=float)
    c3 = m[..., :, 2]
    c3 = c3 / np.sqrt(-mdot(c3, c3))[..., None]
    c1 = m[..., :, 0]
    c1 = c1 + mdot(c1, c3)[..., None] * c3
    c1 = c1 / np.sqrt(mdot(c1, c1))[..., None]
    c2 = m[..., :, 1]
    c2 = c2 + mdot(c2, c3)[..., None] * c3 - mdot(c2, c1)[..., None] * c1
    c2 = c2 / np.sqrt(mdot(c2, c2))[..., None]
    return np.stack([c1, c2, c3], axis=-1)


def chain(mats, renorm_every=32):
    """Ordered product ``M_0 M_1 ...`` with periodic re-orthonormalization."""
    out = np.eye(3)
    for k, m in enumerate(mats, 1):
        out = out @ m
        if k % renorm_every == 0:
            out = reorthonormalize(out)
    return out


def so21_log(m):
    """Principal logarithm of SO(2,1) matrices close enough to the identity.

    Uses ``L = s / (2 sinh s) (M - M^{-1})`` with ``cosh s = (tr M - 1) / 2``
    (``s`` imaginary for elliptic elements).  Raises ``GeometryError`` when
    the rotation angle reaches pi.
    """
    m = np.asarray(m, dtype=float)
    c = 0.5 * (np.trace(m, axis1=-2, axis2=-1) - 1.0)
    if np.any(c <= -1.0 + 1e-12):
        raise GeometryError("logarithm branch failure: rotation angle reaches pi")
    skew = m - inv(m)
    factor = np.empty_like(c)
    hyp = c > 1.0 + 1e-9
    ell = c < 1.0 - 1e-9
    mid = ~(hyp | ell)
    s = np.arccosh(np.where(hyp, c, 1.0))
    factor[hyp] = s[hyp] / (2.0 * np.sinh(s[hyp]))
    t = np.arccos(np.where(ell, c, 1.0))
    factor[ell] = t[ell] / (2.0 * np.sin(t[ell]))
    # c = 1 + x^2/2 + ..., s/sinh s = 1 - s^2/6
    factor[mid] = 0.5 * (1.0 - (c[mid] - 1.0) / 3.0)
    return factor[..., None, None] * skew


def so21_exp(lie):
    """Exponential of so(2,1) matrices (Rodrigues-type closed form)."""
    lie = np.asarray(lie, dtype=float)
    kappa = 0.5 * np.trace(lie @ lie, axis1=-2, axis2=-1)
    l2 = lie @ lie
    a = np.empty_like(kappa)
    b = np.empty_like(kappa)
    pos = kappa > 1e-12
    neg = kappa < -1e-12
    small = ~(pos | neg)
    s = np.sqrt(np.where(pos, kappa, 1.0))
    a[pos] = np.sinh(s[pos]) / s[pos]
    b[pos] = (np.cosh(s[pos]) - 1.0) / kappa[pos]
    t = np.sqrt(np.where(neg, -kappa, 1.0))
    a[neg] = np.sin(t[neg]) / t[neg]
    b[neg] = (1.0 - np.cos(t[neg])) / t[neg] ** 2
    a[small] = 1.0 + kappa[small] / 6.0
    b[small] = 0.5 + kappa[small] / 24.0
    eye = np.broadcast_to(np.eye(3), lie.shape)
    return eye + a[..., None, None] * lie + b[..., None, None] * l2


def lie_coords(lie):
    """``(theta, b1, b2)`` with ``L = theta J + b1 K1 + b2 K2``."""
    lie = np.asarray(lie)
    return np.stack([lie[..., 1, 0], lie[..., 0, 2], lie[..., 1, 2]], axis=-1)


def lie_from_coords(c):
    c = np.asarray(c, dtype=float)
    return c[..., 0, None, None] * J + c[..., 1, None, None] * K1 + c[..., 2, None, None] * K2


# --- PSL(2,R) ---------------------------------------------------------------


def so21_from_psl2(m):
    """Adjoint image of a unimodular 2x2 matrix, written in the ``H``-orthonormal basis."""
    m = np.asarray(m, dtype=float)
    if abs(np.linalg.det(m) - 1.0) > 1e-12:
        raise GeometryError("matrix is not unimodular")
    minv = np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]])
    out = np.empty((3, 3))
    for k, x in enumerate(_SL2_BASIS):
        y = m @ x @ minv
        out[:, k] = 0.5 * np.einsum("ij,lji->l", y, _SL2_BASIS) * _SL2_SIGNS
    return out


def psl2_from_so21(mat):
    """A unimodular ``m`` with ``so21_from_psl2(m) = mat``; sign fixed by ``tr m >= 0``."""
    mat = np.asarray(mat, dtype=float)
    ys = np.einsum("lk,lij->kij", mat, _SL2_BASIS)
    rows = []
    # unknown m flattened as (a, b, c, d); equations m X_k - Y_k m = 0
    for x, y in zip(_SL2_BASIS, ys):
        for i in range(2):
            for j in range(2):
                row = np.zeros(4)
                for k in range(2):
                    row[2 * i + k] += x[k, j]
                    row[2 * k + j] -= y[i, k]
                rows.append(row)
    _, sv, vt = np.linalg.svd(np.array(rows))
    v = vt[-1].reshape(2, 2)
    det = np.linalg.det(v)
    if det <= 0 or sv[-2] < 1e-8 * sv[0]:
        raise GeometryError("matrix is not in the identity component of SO(2,1)")
    v = v / np.sqrt(det)
    tr = np.trace(v)
    if tr < 0 or (tr == 0 and v[np.nonzero(np.abs(v.ravel()) > 0)[0][0] // 2, 0] < 0):
        v = -v
    return v


def abs_trace(mat):
    """``|tr m|`` of the PSL(2,R) preimage; ``tr Ad(m) = tr(m)^2 - 1``."""
    return float(np.sqrt(max(np.trace(np.asarray(mat)) + 1.0, 0.0)))
