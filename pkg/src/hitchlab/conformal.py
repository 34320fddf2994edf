"""Regular cohomology classes and the conformal structures they induce.

A 1-cochain ``eta`` induces on each face the 2x2 Gram matrix
``h(eta(e01), eta(e02))`` of its first two edges.  The class is regular when
that matrix is positive definite on every face, and the induced conformal
class is the Gram matrix rescaled to unit determinant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dec
from .hyperbolic import H, triangle_angles

REG_REL = 1e-6


@dataclass(frozen=True, eq=False)
class RegularityReport:
    min_eigenvalue: float
    regular: bool
    failing_faces: np.ndarray
    eps_reg: float
    eigenvalues: np.ndarray  # (F, 2), before normalization

    def same_as(self, other):
        return (
            self.regular == other.regular
            and self.min_eigenvalue == other.min_eigenvalue
            and np.array_equal(self.failing_faces, other.failing_faces)
        )


@dataclass(frozen=True, eq=False)
class InducedConformalClass:
    gram: np.ndarray  # (F, 2, 2), unit determinant
    area: np.ndarray  # (F,) face weights used for averaging
    source: str = ""

    @property
    def n_faces(self):
        return len(self.gram)


def face_gram(connection, mesh, eta):
    """Per-face ``h``-Gram matrix of ``eta`` on the edges ``v0 -> v1``, ``v0 -> v2``."""
    from .spacetime import _frame_vectors

    e = dec._values(eta)
    pull = dec._pullbacks(connection, mesh)
    x = _frame_vectors(pull, mesh, e[None], np.zeros((1, mesh.n_vertices, 3)))[0][..., :2]
    g = np.swapaxes(x, -1, -2) @ H @ x
    return 0.5 * (g + np.swapaxes(g, -1, -2))


def regularity(eta, mesh, connection, rel=REG_REL):
    g = face_gram(connection, mesh, eta)
    ev = np.linalg.eigvalsh(g)
    eps = rel * mesh.mean_face_area()
    bad = np.nonzero(ev[:, 0] <= eps)[0]
    return RegularityReport(
        min_eigenvalue=float(ev[:, 0].min()),
        regular=len(bad) == 0,
        failing_faces=bad,
        eps_reg=eps,
        eigenvalues=ev,
    )


class NotRegularError(ValueError):
    pass


def _normalize(g):
    det = np.linalg.det(g)
    return g / np.sqrt(det)[:, None, None]


def induced_class(eta, mesh, connection, source="eta"):
    rep_ = regularity(eta, mesh, connection)
    if not rep_.regular:
        raise NotRegularError(f"class is not regular on {len(rep_.failing_faces)} faces")
    return InducedConformalClass(_normalize(face_gram(connection, mesh, eta)), mesh.face_weight.copy(), source)


def mesh_class(mesh, kind="edge-length"):
    """Conformal class of the mesh in the same face frames.

    ``"edge-length"`` uses the flat Gram matrix determined by the three
    edge lengths, ``[l01^2, (l01^2 + l02^2 - l12^2) / 2; ., l02^2]``;
    ``"hyperbolic"`` uses the corner angle of the geodesic triangle,
    ``l01 l02 cos(theta0)`` off the diagonal.  Both discretize the same
    smooth class and differ at second order in the edge length.
    """
    ls = mesh.face_side_lengths()
    l01, l12, l20 = ls[:, 0], ls[:, 1], ls[:, 2]
    if kind == "edge-length":
        off = 0.5 * (l01**2 + l20**2 - l12**2)
    elif kind == "hyperbolic":
        off = l01 * l20 * np.cos(triangle_angles(l12, l20, l01)[0])
    else:
        raise ValueError(f"unknown mesh class kind {kind!r}")
    g = np.empty((mesh.n_faces, 2, 2))
    g[:, 0, 0] = l01**2
    g[:, 1, 1] = l20**2
    g[:, 0, 1] = g[:, 1, 0] = off
    return InducedConformalClass(_normalize(g), mesh.face_weight.copy(), f"mesh {kind}")


def dilatation(c1, c2):
    """Per-face ``log K`` with ``K`` the ratio of singular values of the map relating the two metrics."""
    if c1.n_faces != c2.n_faces:
        raise ValueError("conformal classes live on different meshes")
    w, q = np.linalg.eigh(c1.gram)
    isq = np.einsum("fij,fj,fkj->fik", q, 1.0 / np.sqrt(w), q)
    rel = isq @ c2.gram @ isq
    mu = np.linalg.eigvalsh(0.5 * (rel + np.swapaxes(rel, -1, -2)))
    return 0.5 * np.log(mu[:, 1] / mu[:, 0])


def class_distance(c1, c2):
    """Area-weighted mean dilatation; zero iff the classes agree on every face."""
    d = dilatation(c1, c2)
    w = c1.area
    return float(np.sum(w * d) / np.sum(w))


def tautological_eta(connection, mesh):
    """``d0`` of the unit timelike section: the edge chords in the hyperboloid chart."""
    from .spacetime import tautological_section

    return dec.d0(connection, mesh, tautological_section(mesh))


def segment_probe(eta_a, eta_b, mesh, connection, n=11):
    """Regularity flags along the straight segment from ``eta_a`` to ``eta_b``."""
    a, b = dec._values(eta_a), dec._values(eta_b)
    ts = np.linspace(0.0, 1.0, n)
    flags = [regularity((1 - t) * a + t * b, mesh, connection).regular for t in ts]
    return ts, np.array(flags)


def search_regular(kernel, mesh, connection, n_random=64, seed=0):
    """Look for a regular element of the kernel span.

    Tries each basis vector, then ``n_random`` seeded random combinations;
    the face Gram matrix is even in ``eta`` so signs are not searched.  Returns ``(coefficients, report)`` for the candidate with
    the largest minimum eigenvalue; the report says whether it is regular.
    """
    rng = np.random.default_rng(seed)
    m = kernel.dim
    cands = [np.eye(m)[i] for i in range(m)] + [rng.standard_normal(m) for _ in range(n_random)]
    best = None
    for c in cands:
        c = c / np.linalg.norm(c)
        r = regularity(kernel.combine(c), mesh, connection)
        if best is None or r.min_eigenvalue > best[1].min_eigenvalue:
            best = (c, r)
    return best
