"""Discrete exterior calculus with values in the flat R^(2,1) bundle.

Cochains of degree 0, 1, 2 carry one fiber vector per vertex, oriented edge
and face.  Vectors are written in the vertex-adapted frames of
:mod:`hitchlab.rep`: a 1-cochain value sits at the source vertex of its edge
and a 2-cochain value at corner 0 of its face.  Reversing an edge maps the
value ``w`` to ``-T(e) w``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .hyperbolic import inv
from .rep import SurfaceRep, face_sides, frames, pullbacks

AUX_METRICS = ("chart", "adapted")
GAP_THRESHOLD = 1e2
RANK_FLOOR = 1e-12
DENSE_LIMIT = 2400


class AmbiguousKernelError(RuntimeError):
    """The singular spectrum has no clear gap; refine the mesh."""

    def __init__(self, message, degree=None, singular_values=None):
        super().__init__(message)
        self.degree = degree
        self.singular_values = singular_values


class SingularLaplacianError(RuntimeError):
    """The bundle Laplacian on 0-cochains is singular (reducible connection)."""


class NotFlatError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class Cochain:
    degree: int
    values: np.ndarray  # (n_cells, 3)
    mesh: object = None

    def __post_init__(self):
        if self.degree not in (0, 1, 2):
            raise ValueError("degree must be 0, 1 or 2")
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValueError("cochain values must have shape (n, 3)")
        object.__setattr__(self, "values", v)

    @property
    def flat(self):
        return self.values.ravel()

    def __add__(self, other):
        return Cochain(self.degree, self.values + _values(other), self.mesh)

    def __sub__(self, other):
        return Cochain(self.degree, self.values - _values(other), self.mesh)

    def __mul__(self, c):
        return Cochain(self.degree, c * self.values, self.mesh)

    __rmul__ = __mul__


def _values(x):
    return x.values if isinstance(x, Cochain) else np.asarray(x, dtype=float)


def _block_diag(blocks):
    n = len(blocks)
    rows = np.repeat(np.arange(3 * n).reshape(n, 3), 3, axis=1).ravel()
    cols = np.tile(np.arange(3 * n).reshape(n, 1, 3), (1, 3, 1)).ravel()
    return sp.csr_matrix((np.asarray(blocks).ravel(), (rows, cols)), shape=(3 * n, 3 * n))


def _sym_power(blocks, power):
    w, q = np.linalg.eigh(blocks)
    return np.einsum("nij,nj,nkj->nik", q, w**power, q)


def fiber_metric(mesh, aux="chart"):
    """Positive fiber metric per vertex, as a matrix in adapted coordinates.

    ``"chart"`` is the Euclidean metric of R^3 in the polygon chart,
    ``F_v^T F_v``; ``"adapted"`` is the Euclidean metric of the adapted
    frame, which in the chart reads ``h + 2 (h P_v)(h P_v)^T``.
    """
    if aux == "chart":
        f = frames(mesh)
        return np.swapaxes(f, 1, 2) @ f
    if aux == "adapted":
        return np.broadcast_to(np.eye(3), (mesh.n_vertices, 3, 3)).copy()
    raise ValueError(f"unknown auxiliary metric {aux!r}; choose from {AUX_METRICS}")


def _pullbacks(connection, mesh):
    if isinstance(connection, SurfaceRep):
        if connection.genus != mesh.genus:
            raise ValueError("genus mismatch between rep and mesh")
        return pullbacks(connection, mesh)
    t = np.asarray(connection, dtype=float)
    if t.shape != (mesh.n_edges, 3, 3):
        raise ValueError("transports must have shape (E, 3, 3)")
    return inv(t)


def d0_matrix(pull, mesh):
    E, V = mesh.n_edges, mesh.n_vertices
    src, tgt = mesh.edges[:, 0], mesh.edges[:, 1]
    r = np.arange(3 * E).reshape(E, 3)
    rows = np.concatenate([np.repeat(r, 3, axis=1).ravel(), r.ravel()])
    cols_t = (3 * tgt[:, None, None] + np.arange(3)[None, None, :]) + np.zeros((E, 3, 1), dtype=int)
    cols = np.concatenate([cols_t.ravel(), (3 * src[:, None] + np.arange(3)).ravel()])
    data = np.concatenate([pull.ravel(), -np.ones(3 * E)])
    return sp.csr_matrix((data, (rows, cols)), shape=(3 * E, 3 * V))


def d1_matrix(pull, mesh):
    """Face value at corner 0: ``w_0 + rho_0 w_1 + rho_0 rho_1 w_2`` with face-oriented sides."""
    F, E = mesh.n_faces, mesh.n_edges
    sides = face_sides(mesh, pull)
    acc = np.empty((F, 4, 3, 3))
    acc[:, 0] = np.eye(3)
    for s in range(3):
        acc[:, s + 1] = acc[:, s] @ sides[:, s]
    # reversed edge: -T(e) w with T(e) = rho_s, so the block is -acc_s rho_s = -acc_{s+1}
    blocks = np.where(mesh.face_signs[:, :, None, None] > 0, acc[:, :3], -acc[:, 1:])
    rows = (3 * np.arange(F)[:, None, None, None] + np.arange(3)[None, None, :, None]) + np.zeros((F, 3, 3, 3), dtype=int)
    cols = (3 * mesh.face_edges[:, :, None, None] + np.arange(3)[None, None, None, :]) + np.zeros((F, 3, 3, 3), dtype=int)
    return sp.csr_matrix((blocks.ravel(), (rows.ravel(), cols.ravel())), shape=(3 * F, 3 * E))


@dataclass(frozen=True, eq=False)
class BundleComplex:
    """Sparse d0, d1 and the diagonal-block Hodge masses for one connection."""

    mesh: object
    pull: np.ndarray
    aux: str
    D0: sp.csr_matrix
    D1: sp.csr_matrix
    K: np.ndarray
    mass_scale: float = 1.0
    _blocks: dict = field(default_factory=dict, repr=False)

    def _mass_blocks(self, k):
        m = self.mesh
        s = self.mass_scale
        if k == 0:
            return s * m.vertex_weight[:, None, None] * self.K
        if k == 1:
            return s * m.edge_weight[:, None, None] * self.K[m.edges[:, 0]]
        return s * self.K[m.faces[:, 0]] / m.face_weight[:, None, None]

    def mass(self, k, power=1.0):
        key = (k, power)
        if key not in self._blocks:
            blocks = self._mass_blocks(k)
            self._blocks[key] = _block_diag(blocks if power == 1.0 else _sym_power(blocks, power))
        return self._blocks[key]

    def codifferential(self, omega):
        """``M0^-1 D0^T M1 omega``."""
        return self.mass(0, -1.0) @ (self.D0.T @ (self.mass(1) @ omega))

    def norm(self, k, x):
        x = np.asarray(x).ravel()
        return float(np.sqrt(max(x @ (self.mass(k) @ x), 0.0)))

    def inner(self, k, x, y):
        return float(np.asarray(x).ravel() @ (self.mass(k) @ np.asarray(y).ravel()))

    def scaled_d0(self):
        """``M1^1/2 D0 M0^-1/2``."""
        return (self.mass(1, 0.5) @ self.D0 @ self.mass(0, -0.5)).tocsr()

    def scaled_d1(self):
        """``M2^1/2 D1 M1^-1/2``."""
        return (self.mass(2, 0.5) @ self.D1 @ self.mass(1, -0.5)).tocsr()


def bundle_complex(connection, mesh, aux="chart", mass_scale=1.0):
    if isinstance(connection, SurfaceRep):
        return _cached_complex(connection, mesh, aux, float(mass_scale))
    return _build_complex(_pullbacks(connection, mesh), mesh, aux, float(mass_scale))


@lru_cache(maxsize=8)
def _cached_complex(rep, mesh, aux, mass_scale):
    return _build_complex(_pullbacks(rep, mesh), mesh, aux, mass_scale)


def _build_complex(pull, mesh, aux, mass_scale):
    return BundleComplex(
        mesh=mesh,
        pull=pull,
        aux=aux,
        D0=d0_matrix(pull, mesh),
        D1=d1_matrix(pull, mesh),
        K=fiber_metric(mesh, aux),
        mass_scale=mass_scale,
    )


def d0(connection, mesh, u):
    """``(d u)(e: i -> j) = T(e)^-1 u(j) - u(i)``."""
    cx = bundle_complex(connection, mesh)
    return Cochain(1, (cx.D0 @ _values(u).ravel()).reshape(-1, 3), mesh)


def d1(connection, mesh, omega):
    cx = bundle_complex(connection, mesh)
    return Cochain(2, (cx.D1 @ _values(omega).ravel()).reshape(-1, 3), mesh)


# --- spectra ----------------------------------------------------------------


def _deterministic_start(n):
    return np.cos(0.5 + np.arange(n) * 0.7548776662466927) + 1.0 / np.sqrt(n)


def smallest_singular(S, k, dense_limit=DENSE_LIMIT):
    """Smallest ``k`` singular values of sparse ``S`` and right singular vectors.

    Dense SVD for small problems, otherwise shift-invert Lanczos on
    ``S^T S`` with a fixed start vector.  Singular values are recomputed as
    ``|S y|`` which is accurate for the tiny ones.
    """
    S = sp.csr_matrix(S)
    m, n = S.shape
    k = int(min(k, n))
    if n <= dense_limit:
        _, sv, vt = np.linalg.svd(S.toarray(), full_matrices=True)
        full = np.zeros(n)
        full[: len(sv)] = sv
        order = np.argsort(full, kind="stable")[:k]
        y = vt[order].T
    else:
        a = (S.T @ S).tocsc()
        scale = float(abs(a).sum(axis=1).max())
        sigma = -1e-8 * scale
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", sp.SparseEfficiencyWarning)
            lu = spla.splu((a - sigma * sp.identity(n, format="csc")).tocsc())
        opinv = spla.LinearOperator((n, n), matvec=lu.solve, dtype=float)
        _, y = spla.eigsh(a, k=k, sigma=sigma, which="LM", OPinv=opinv, v0=_deterministic_start(n), tol=0)
        y, _ = np.linalg.qr(y)
    sigmas = np.linalg.norm(S @ y, axis=0)
    order = np.argsort(sigmas, kind="stable")
    return sigmas[order], y[:, order]


def operator_scale(S):
    """Cheap upper bound for ``|S|_2``: ``sqrt(|S|_1 |S|_inf)``."""
    a = abs(sp.csr_matrix(S))
    return float(np.sqrt(a.sum(axis=0).max() * a.sum(axis=1).max()))


def gap_rule(sigmas, scale, floor=RANK_FLOOR):
    """Numerical rank by the largest ratio of consecutive singular values.

    Returns ``(m, ratio)`` with ``m`` the number of singular values below the
    gap; a leading ``floor * scale`` stands in for the zero-th value.
    """
    fl = floor * scale
    s = np.concatenate([[fl], np.maximum(np.asarray(sigmas, dtype=float), fl)])
    ratios = s[1:] / s[:-1]
    m = int(np.argmax(ratios))
    return m, float(ratios[m])


# --- Dirac operator -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DiracOperator:
    """``[M0^-1 D0^T M1 ; D1]`` acting on 1-cochains."""

    complex: BundleComplex
    matrix: sp.csr_matrix
    scaled: sp.csr_matrix  # same operator between mass-orthonormal coordinates

    @property
    def mesh(self):
        return self.complex.mesh

    @property
    def aux(self):
        return self.complex.aux

    @property
    def shape(self):
        return self.matrix.shape

    def apply(self, omega):
        return self.matrix @ _values(omega).ravel()


def assemble_dirac(connection, mesh, aux="chart", mass_scale=1.0, flat_tol=1e-8):
    from .rep import face_curvature

    field = connection if isinstance(connection, SurfaceRep) else np.asarray(connection)
    _, curv = face_curvature(field if isinstance(field, SurfaceRep) else field, mesh)
    if curv > flat_tol:
        raise NotFlatError(f"connection is not flat: face curvature {curv:.3e}")
    cx = bundle_complex(connection, mesh, aux, mass_scale)
    top = cx.mass(0, -1.0) @ cx.D0.T @ cx.mass(1)
    mat = sp.vstack([top, cx.D1]).tocsr()
    scaled = sp.vstack([(cx.mass(0, -0.5) @ cx.D0.T @ cx.mass(1, 0.5)), cx.scaled_d1()]).tocsr()
    return DiracOperator(complex=cx, matrix=mat, scaled=scaled)


@dataclass(frozen=True, eq=False)
class KernelBasis:
    vectors: np.ndarray  # (m, E, 3), orthonormal in the 1-form mass inner product
    singular_values: np.ndarray
    gap_ratio: float
    aux: str
    residuals: np.ndarray  # (m, 2): codifferential and d1 mass norms

    @property
    def dim(self):
        return len(self.vectors)

    def cochain(self, i, mesh=None):
        return Cochain(1, self.vectors[i], mesh)

    def combine(self, coeffs, mesh=None):
        c = np.asarray(coeffs, dtype=float)
        if c.shape != (self.dim,):
            raise ValueError(f"expected {self.dim} coefficients")
        return Cochain(1, np.tensordot(c, self.vectors, axes=1), mesh)


def _expected_h1(genus):
    return 6 * genus - 6


def kernel_basis(op, nev=None, gap_threshold=GAP_THRESHOLD):
    """Numerical kernel of the Dirac operator.

    Raises :class:`AmbiguousKernelError` when the spectral gap ratio is below
    ``gap_threshold``.
    """
    cx = op.complex
    g = cx.mesh.genus
    nev = 6 * g + 4 if nev is None else int(nev)
    sig, y = smallest_singular(op.scaled, nev)
    m, ratio = gap_rule(sig, operator_scale(op.scaled))
    if ratio < gap_threshold or m >= len(sig):
        raise AmbiguousKernelError(
            f"no spectral gap (ratio {ratio:.3g} below {gap_threshold:g}); refine the mesh",
            degree=1,
            singular_values=sig,
        )
    # M1-orthonormal basis
    w = cx.mass(1, -0.5) @ y[:, :m]
    res = np.empty((m, 2))
    for i in range(m):
        res[i, 0] = cx.norm(0, cx.codifferential(w[:, i]))
        res[i, 1] = cx.norm(2, cx.D1 @ w[:, i])
    return KernelBasis(
        vectors=w.T.reshape(m, -1, 3),
        singular_values=sig[: min(len(sig), m + 4)],
        gap_ratio=ratio,
        aux=cx.aux,
        residuals=res,
    )


@dataclass(frozen=True)
class CohomologyReport:
    h0: int
    h1: int
    h2: int
    index: int
    expected_index: int
    gaps: tuple
    spectra: tuple

    def as_tuple(self):
        return (self.h0, self.h1, self.h2, self.index)

    @property
    def index_ok(self):
        return self.index == self.expected_index


def _rank_deficiency(S, nev, degree, gap_threshold):
    sig, _ = smallest_singular(S, nev)
    m, ratio = gap_rule(sig, operator_scale(S))
    if ratio < gap_threshold or m >= len(sig):
        raise AmbiguousKernelError(
            f"degree {degree}: no spectral gap (ratio {ratio:.3g})", degree=degree, singular_values=sig
        )
    return m, ratio, sig


def cohomology_report(connection, mesh, aux="chart", gap_threshold=GAP_THRESHOLD):
    """``(h0, h1, h2, index)`` from numerical ranks of the twisted complex."""
    op = assemble_dirac(connection, mesh, aux)
    cx = op.complex
    g = mesh.genus
    h0, r0, s0 = _rank_deficiency(cx.scaled_d0(), 8, 0, gap_threshold)
    h2, r2, s2 = _rank_deficiency(cx.scaled_d1().T.tocsr(), 8, 2, gap_threshold)
    h1, r1, s1 = _rank_deficiency(op.scaled, 6 * g + 6, 1, gap_threshold)
    return CohomologyReport(
        h0=h0,
        h1=h1,
        h2=h2,
        index=h1 - h0 - h2,
        expected_index=_expected_h1(g),
        gaps=(r0, r1, r2),
        spectra=(s0, s1, s2),
    )


# --- Coulomb gauge ------------------------------------------------------------


def _laplacian_solver(cx):
    lap = (cx.D0.T @ cx.mass(1) @ cx.D0).tocsc()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sp.SparseEfficiencyWarning)
        try:
            lu = spla.splu(lap)
        except RuntimeError as exc:
            raise SingularLaplacianError("bundle Laplacian is singular: connection is reducible") from exc
    # inverse iteration for the smallest eigenvalue against the vertex masses
    m0 = cx.mass(0)
    x = _deterministic_start(lap.shape[0])
    lam = np.inf
    for _ in range(6):
        y = lu.solve(m0 @ x)
        if not np.all(np.isfinite(y)):
            raise SingularLaplacianError("bundle Laplacian is singular: connection is reducible")
        nrm = np.sqrt(y @ (m0 @ y))
        lam = np.sqrt(x @ (m0 @ x)) / nrm
        x = y / nrm
    scale = float(abs(lap).sum(axis=1).max() / m0.diagonal().min())
    if lam < 1e-10 * scale:
        raise SingularLaplacianError(f"bundle Laplacian is singular (lambda_min ~ {lam:.2e}): connection is reducible")
    return lap, lu


def coulomb_gauge(connection, mesh, xi, aux="chart"):
    """Project ``xi`` to the coclosed representative ``xi + d0 v``.

    Solves ``(D0^T M1 D0) v = -D0^T M1 xi`` and polishes the solution with
    one step of iterative refinement.
    """
    cx = bundle_complex(connection, mesh, aux)
    x = _values(xi).ravel()
    lap, lu = _laplacian_solver(cx)
    rhs = -(cx.D0.T @ (cx.mass(1) @ x))
    v = lu.solve(rhs)
    v += lu.solve(rhs - lap @ v)
    out = x + cx.D0 @ v
    return Cochain(1, out.reshape(-1, 3), mesh), Cochain(0, v.reshape(-1, 3), mesh)


def coulomb_residual(connection, mesh, xi, aux="chart"):
    """``|d0* xi|_M0 / |xi|_M1``."""
    cx = bundle_complex(connection, mesh, aux)
    x = _values(xi).ravel()
    nx = cx.norm(1, x)
    return cx.norm(0, cx.codifferential(x)) / nx if nx > 0 else 0.0
