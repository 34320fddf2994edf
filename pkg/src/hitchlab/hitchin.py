"""Equivariant harmonic maps and the Higgs-type pair they determine.

The map is stored as one point of the hyperboloid per vertex, written in the
vertex's adapted frame, so the inclusion of the polygon chart is the
constant map ``E3``.  Equivariance is built in: the energy of an edge
compares ``f_src`` with ``rho'(e) f_tgt``.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from . import dec, kernels, words
from .hyperbolic import (
    E3,
    GeometryError,
    boost_to,
    dist,
    exp_map,
    inv,
    lie_coords,
    lie_from_coords,
    log_map,
    mdot,
    project,
    so21_exp,
    so21_log,
)
from .surface import fuchsian_deck

GRAD_TOL = 1e-8
MAX_ITER = 100_000
ARMIJO = 1e-4
ESCAPE_RADIUS = 40.0
ESCAPE_CHECK = 100  # iterations between diameter checkpoints
ESCAPE_RUN = 8  # consecutive growing checkpoints that count as escaping

# fixed words for the character comparisons
TEST_WORDS = (
    "A1",
    "B1",
    "A2",
    "B2",
    "A1 B1",
    "A1 B2",
    "A1 B1 A1^-1 B1^-1",
    "A1 A2",
    "B1 A2^-1",
    "A1 B1 A2 B2",
)


class DivergentMapError(GeometryError):
    """The descent iterates leave every compact set (no equivariant minimizer)."""


@dataclass(frozen=True, eq=False)
class EquivariantMap:
    values: np.ndarray  # (V, 3) in adapted frames
    energy: float
    grad_norm: float
    iterations: int
    converged: bool
    history: np.ndarray = field(repr=False)
    backend: str = ""

    def chart_values(self, mesh):
        return np.einsum("vij,vj->vi", boost_to(mesh.positions), self.values)

    def displacement(self):
        """Per-vertex distance from the inclusion."""
        return dist(self.values, E3)


def _edge_data(connection, mesh):
    pull = dec._pullbacks(connection, mesh)
    return pull, mesh.edges[:, 0], mesh.edges[:, 1], mesh.edge_weight


def grad_mass_norm(grad, mass):
    return float(np.sqrt(np.sum(mdot(grad, grad) / mass)))


def energy(connection, mesh, values, backend=None):
    pull, s, t, w = _edge_data(connection, mesh)
    return kernels.harmonic_energy(values, pull, s, t, w, backend=backend)


def energy_grad(connection, mesh, values, backend=None):
    pull, s, t, w = _edge_data(connection, mesh)
    return kernels.harmonic_energy_grad(values, pull, s, t, w, backend=backend)


def _preconditioner(x, pull, src, tgt, w, mass, shift=1.0):
    """Connection Laplacian on tangent coordinates, ``sum_e w_e |z_s - e^{i theta_e} z_t|^2 + shift |z|_M^2``.

    Returns the tangent bases at ``x`` and a sparse factorization.
    """
    from scipy.sparse import coo_matrix
    from scipy.sparse.linalg import splu

    f = boost_to(x)
    q = inv(f[src]) @ pull @ f[tgt]
    rot = np.exp(1j * _angle(_polar(q)[1]))
    V = len(x)
    rows = np.r_[src, tgt, src, tgt, np.arange(V)]
    cols = np.r_[src, tgt, tgt, src, np.arange(V)]
    vals = np.r_[w, w, -w * rot, -w * np.conj(rot), shift * mass].astype(complex)
    a = coo_matrix((vals, (rows, cols)), shape=(V, V)).tocsc()
    return f[:, :, :2], splu(a)


def harmonic_map(
    connection,
    mesh,
    init=None,
    tol=GRAD_TOL,
    max_iter=MAX_ITER,
    backend=None,
    escape_radius=ESCAPE_RADIUS,
):
    """Minimize ``E(f) = 1/2 sum_e w_e d(f_src, rho'(e) f_tgt)^2``.

    Riemannian descent along the gradient preconditioned by the connection
    Laplacian of the current map, with Armijo backtracking from unit step.
    Every accepted step lowers the energy (evaluated in extended
    precision).  Stops when the gradient's inverse-mass norm drops to
    ``tol``.

    Parameters
    ----------
    connection : SurfaceRep or (E, 3, 3) array of transports
    init : (V, 3) array, optional
        Starting map in adapted frames; defaults to the inclusion (``E3``).

    Raises
    ------
    DivergentMapError
        When the diameter of the map keeps growing while the energy drops
        (``ESCAPE_RUN`` consecutive checkpoints) or exceeds
        ``escape_radius``; this is how reducible representations show up.
    """
    pull, s, t, w = _edge_data(connection, mesh)
    kern = kernels.get(backend)
    args = [np.ascontiguousarray(a) for a in (pull, s.astype(np.int_), t.astype(np.int_), w)]
    mass = mesh.vertex_weight
    x = np.tile(E3, (mesh.n_vertices, 1)) if init is None else project(np.array(init, dtype=float))
    e, g = kern.harmonic_energy_grad(x, *args)
    gn = grad_mass_norm(g, mass)
    hist = [e]
    diam = []
    it = 0
    while gn > tol and it < max_iter:
        basis, lu = _preconditioner(x, pull, s, t, w, mass)
        c = np.einsum("vi,vik->vk", g * np.array([1.0, 1.0, -1.0]), basis)
        z = lu.solve(c[:, 0] + 1j * c[:, 1])
        d = -(z.real[:, None] * basis[:, :, 0] + z.imag[:, None] * basis[:, :, 1])
        slope = float(np.real(np.vdot(c[:, 0] + 1j * c[:, 1], z)))
        step = 1.0
        while True:
            xn = project(exp_map(x, step * d))
            en = kern.harmonic_energy(xn, *args)
            if en <= e - ARMIJO * step * slope:
                break
            step *= 0.5
            if step < 1e-12:
                break
        if not en < e:
            # no representable decrease left
            break
        e, g = kern.harmonic_energy_grad(xn, *args)
        x = xn
        gn = grad_mass_norm(g, mass)
        hist.append(e)
        it += 1
        if it % ESCAPE_CHECK == 0:
            diam.append(float(np.max(dist(x, E3))))
            recent = np.diff(diam[-ESCAPE_RUN - 1 :])
            growing = len(recent) == ESCAPE_RUN and np.all(recent > 0) and recent.sum() > 0.5
            if diam[-1] > escape_radius or growing:
                raise DivergentMapError(
                    f"iterates escape (diameter {diam[-1]:.2f} after {it} steps, gradient norm {gn:.3g}); "
                    "is the rep reducible?"
                )
    return EquivariantMap(
        values=x,
        energy=float(e),
        grad_norm=gn,
        iterations=it,
        converged=gn <= tol,
        history=np.array(hist, dtype=float),
        backend=kern.NAME,
    )


def fd_gradient_check(connection, mesh, values, rng=None, h=1e-6):
    """Central-difference derivative along a random tangent field vs the analytic gradient.

    Returns ``(finite_difference, analytic)``.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    d = rng.standard_normal(values.shape)
    d = d + mdot(d, values)[:, None] * values
    _, g = energy_grad(connection, mesh, values)
    ep = energy(connection, mesh, project(exp_map(values, h * d)))
    em = energy(connection, mesh, project(exp_map(values, -h * d)))
    return (ep - em) / (2 * h), float(np.sum(mdot(g, d)))


# --- pair extraction --------------------------------------------------------

_BASIS = lie_from_coords(np.eye(3))
_STRUCT = lie_coords(_BASIS[:, None] @ _BASIS[None, :] - _BASIS[None, :] @ _BASIS[:, None])


def bracket(x, y):
    """Lie bracket in ``(theta, b1, b2)`` coordinates."""
    return np.einsum("...i,...j,ijk->...k", x, y, _STRUCT)


@dataclass(frozen=True, eq=False)
class HitchinPair:
    """Edge data ``L_e = theta_e J + psi_e`` in the frames adapted to a map.

    ``coords[:, 0]`` is the compact part ``a`` (a multiple of ``J``) and
    ``coords[:, 1:]`` the boost part ``psi``.  ``frames`` are the map frames
    ``F_v`` (``F_v E3 = f_v``) relative to the vertex-adapted frames.
    """

    coords: np.ndarray  # (E, 3)
    frames: np.ndarray  # (V, 3, 3)
    genus: int
    w2: int = 0

    @property
    def component(self):
        return f"M_{2 * self.genus - 2}"

    def a_matrices(self):
        return lie_from_coords(np.c_[self.a, np.zeros((len(self.a), 2))])

    def psi_matrices(self):
        """Boost parts as h-symmetric matrices (symmetric in the usual sense too)."""
        return lie_from_coords(np.c_[np.zeros(len(self.a)), self.psi])

    @property
    def a(self):
        return self.coords[:, 0]

    @property
    def psi(self):
        return self.coords[:, 1:]


def _polar(m):
    """``M = B U`` with ``B`` a pure boost and ``U`` fixing ``E3``; returns ``(M E3, U)``."""
    x = m[..., :, 2]
    return x, inv(boost_to(x)) @ m


def _angle(u):
    return np.arctan2(u[..., 1, 0], u[..., 0, 0])


def _rot(phi):
    c, s = np.cos(phi), np.sin(phi)
    out = np.zeros(np.shape(phi) + (3, 3))
    out[..., 0, 0] = out[..., 1, 1] = c
    out[..., 1, 0] = s
    out[..., 0, 1] = -s
    out[..., 2, 2] = 1.0
    return out


def _wrap(t):
    return (t + np.pi) % (2 * np.pi) - np.pi


def coulomb_phases(theta, mesh, sweeps=20):
    """Vertex rotations ``phi`` making the edge angles ``theta + phi_tgt - phi_src`` small.

    Gauss-Newton on ``sum_e w_e wrap(theta_e + phi_tgt - phi_src)^2``; the
    wrapped residual cannot vanish when the circle bundle has nonzero
    degree, so vortices remain near a few faces.
    """
    from scipy.sparse import csr_matrix
    from scipy.sparse.linalg import spsolve

    V, E = mesh.n_vertices, mesh.n_edges
    s, t = mesh.edges[:, 0], mesh.edges[:, 1]
    d = csr_matrix(
        (np.r_[-np.ones(E), np.ones(E)], (np.r_[np.arange(E), np.arange(E)], np.r_[s, t])), shape=(E, V)
    )
    w = mesh.edge_weight
    lap = (d.T @ d.multiply(w[:, None])).tolil()
    lap[0, 0] += 1.0  # pin the global rotation
    lap = lap.tocsc()
    phi = np.zeros(V)
    for _ in range(sweeps):
        r = _wrap(theta + phi[t] - phi[s])
        step = spsolve(lap, -(d.T @ (w * r)))
        phi += step
        if np.max(np.abs(step)) < 1e-12:
            break
    return phi


def extract_pair(connection, mesh, fmap, gauge=True):
    """Split the connection in frames adapted to ``fmap`` into ``(a, psi)``.

    The frames are ``F_v = boost_to(f_v) R(phi_v)`` with ``phi`` from
    :func:`coulomb_phases` (skipped with ``gauge=False``), and
    ``L_e = log(F_src^-1 rho'(e) F_tgt)``.
    """
    pull = dec._pullbacks(connection, mesh)
    vals = fmap.values if isinstance(fmap, EquivariantMap) else np.asarray(fmap)
    f = boost_to(vals)
    s, t = mesh.edges[:, 0], mesh.edges[:, 1]
    m = inv(f[s]) @ pull @ f[t]
    if gauge:
        phi = coulomb_phases(_angle(_polar(m)[1]), mesh)
        f = f @ _rot(phi)
        m = inv(f[s]) @ pull @ f[t]
    return HitchinPair(coords=lie_coords(so21_log(m)), frames=f, genus=mesh.genus)


def sigma(pair):
    """The involution ``(a, psi) -> (a, -psi)``."""
    c = pair.coords.copy()
    c[:, 1:] = -c[:, 1:]
    return replace(pair, coords=c)


def higgs_split(pair, mesh):
    """Per-face split of ``psi`` into complex-linear and antilinear parts.

    On each face ``psi`` is the linear map from the edge basis
    ``(e01, e02)`` to the boost plane.  The face complex structure comes
    from the corner-angle (hyperbolic) mesh class; the boost plane carries the rotation
    generated by ``J``.  Returns ``(phi, phi_bar)``, each (F, 2, 2), with
    ``phi + phi_bar`` the face matrix of ``psi``.
    """
    from .conformal import mesh_class

    c = mesh_class(mesh, "hyperbolic").gram
    eps = np.array([[0.0, -1.0], [1.0, 0.0]])
    jc = np.linalg.inv(c) @ eps  # squares to -1 when det c = 1
    sides = pair.coords[mesh.face_edges, 1:] * mesh.face_signs[..., None]
    psi = np.stack([sides[:, 0], -sides[:, 2]], axis=-1)
    rot = psi @ jc
    phi = 0.5 * (psi - eps @ rot)
    return phi, psi - phi


def compose_flat(pair):
    """Transports ``exp(a + psi)^-1`` of the recomposed connection (map frames)."""
    return so21_exp(-lie_from_coords(pair.coords))


@dataclass(frozen=True)
class HitchinResiduals:
    r1: float  # compact part of the face closure: curvature + [psi, psi]
    r2: float  # anti-holomorphic part of d_A Phi
    closure: float  # boost part of the face closure, d_A psi
    codiff: float  # vertex divergence of psi
    hopf: float  # trace-free part of the psi Gram against the mesh class

    def as_dict(self):
        return dict(r1=self.r1, r2=self.r2, closure=self.closure, codiff=self.codiff, hopf=self.hopf)


def _local_sides(pair, mesh):
    """Face sides with the corner rotations removed along ``v0 -> v1 -> v2``.

    Returns (F, 3, 3, 3) matrices whose product is the face holonomy and
    whose first two factors are pure boosts.
    """
    m = so21_exp(lie_from_coords(pair.coords))
    sides = m[mesh.face_edges]
    sides = np.where(mesh.face_signs[..., None, None] > 0, sides, inv(sides))
    out = np.empty_like(sides)
    u = np.broadcast_to(np.eye(3), sides.shape[:1] + (3, 3))
    for k in range(2):
        x = u @ sides[:, k]
        _, uk = _polar(x)
        out[:, k] = x @ inv(uk)
        u = uk
    out[:, 2] = u @ sides[:, 2]
    return out


def _log_vectors(m):
    """Tangent vector at ``E3`` pointing to ``M E3``, as ``(x, y)``."""
    return log_map(E3, m[..., :, 2])[..., :2]


def residuals(pair, mesh):
    """Discrete Hitchin-equation residuals in mass norms.

    Each face is put in a local gauge where its sides are boosts up to one
    small rotation, and the face closure is the second-order
    Baker-Campbell-Hausdorff sum ``L0 + L1 + L2 + 1/2 sum_{s<t} [Ls, Lt]``.
    Its compact part discretizes ``F_A + 1/2 [psi ^ psi]`` and its boost
    part ``d_A psi``.  The vertex divergence of the edge log vectors
    discretizes ``d_A* psi`` (it is minus the energy gradient).  ``r2`` is
    half the combined norm of the last two.  ``hopf`` is the trace-free part
    of the Gram matrix of ``psi`` (log vectors at ``v0``) against the
    corner-angle mesh class.
    """
    from .conformal import mesh_class

    L = lie_coords(so21_log(_local_sides(pair, mesh)))
    q = L.sum(axis=1) + 0.5 * (bracket(L[:, 0], L[:, 1]) + bracket(L[:, 0], L[:, 2]) + bracket(L[:, 1], L[:, 2]))
    area = mesh.face_weight
    r1 = float(np.sqrt(np.sum(q[:, 0] ** 2 / area)))
    closure = float(np.sqrt(np.sum(np.sum(q[:, 1:] ** 2, axis=1) / area)))

    m = so21_exp(lie_from_coords(pair.coords))
    w = mesh.edge_weight[:, None]
    div = np.zeros((mesh.n_vertices, 2))
    np.add.at(div, mesh.edges[:, 0], w * _log_vectors(m))
    np.add.at(div, mesh.edges[:, 1], w * _log_vectors(inv(m)))
    codiff = float(np.sqrt(np.sum(np.sum(div**2, axis=1) / mesh.vertex_weight)))

    sides = m[mesh.face_edges]
    sides = np.where(mesh.face_signs[..., None, None] > 0, sides, inv(sides))
    p01, p02 = _log_vectors(sides[:, 0]), _log_vectors(inv(sides[:, 2]))
    g = np.empty((mesh.n_faces, 2, 2))
    g[:, 0, 0] = np.sum(p01 * p01, axis=1)
    g[:, 1, 1] = np.sum(p02 * p02, axis=1)
    g[:, 0, 1] = g[:, 1, 0] = np.sum(p01 * p02, axis=1)
    # tangent-space Gram at v0 -> compare with the corner-angle class
    c = mesh_class(mesh, "hyperbolic").gram
    ci = np.linalg.inv(c)
    tr = np.einsum("fij,fji->f", ci, g)
    x = ci @ (g - 0.5 * tr[:, None, None] * c)
    hopf = float(np.sqrt(np.sum(np.einsum("fij,fji->f", x, x) / area)))
    return HitchinResiduals(r1=r1, r2=0.5 * float(np.hypot(closure, codiff)), closure=closure, codiff=codiff, hopf=hopf)


# --- characters of transport fields -----------------------------------------


def _steps(mesh):
    dk = mesh.deck()
    adj = [[] for _ in range(mesh.n_vertices)]
    for e, (a, b) in enumerate(mesh.edges):
        adj[a].append((e, 1, int(b), dk[e]))
        adj[b].append((e, -1, int(a), inv(dk[e])))
    return adj


@lru_cache(maxsize=64)
def _loop_cached(mesh, word):
    adj = _steps(mesh)
    v0 = 0
    p0 = mesh.positions[v0]
    target = fuchsian_deck(mesh.genus, word) @ p0
    lens = mesh.edge_length

    def key(v, p):
        return (v,) + tuple(np.round(p, 6))

    start = (float(dist(p0, target)), 0.0, 0, v0, np.eye(3), ())
    heap = [start]
    seen = {}
    count = 1
    while heap:
        _, cost, _, v, g, path = heapq.heappop(heap)
        p = g @ mesh.positions[v]
        if v == v0 and dist(p, target) < 1e-6:
            return path
        k = key(v, p)
        if seen.get(k, np.inf) <= cost:
            continue
        seen[k] = cost
        for e, sgn, u, step in adj[v]:
            gn = g @ step
            q = gn @ mesh.positions[u]
            c = cost + lens[e]
            if seen.get(key(u, q), np.inf) <= c:
                continue
            heapq.heappush(heap, (c + float(dist(q, target)), c, count, u, gn, path + ((e, sgn),)))
            count += 1
    raise GeometryError(f"no loop found for word {words.format_word(word)}")


def loop_for_word(mesh, word):
    """Closed edge path at vertex 0 whose deck product is ``word``.

    A* search on the universal cover with the hyperbolic distance to the
    translated base point as heuristic.  The Fuchsian group acts freely,
    so the path represents ``word`` in the fundamental group.
    """
    word = words.parse(word) if isinstance(word, str) else words.reduce(tuple(word))
    return _loop_cached(mesh, word)


def loop_holonomy(transports, mesh, loop):
    pull = inv(np.asarray(transports, dtype=float))
    h = np.eye(3, dtype=np.longdouble)
    for e, sgn in loop:
        h = h @ (pull[e] if sgn > 0 else inv(pull[e])).astype(np.longdouble)
    return h.astype(float)


def field_character(transports, mesh, word):
    """``|tr|`` of the PSL(2,R) holonomy of a transport field along ``word``."""
    loop = loop_for_word(mesh, word)
    if not loop:
        return 2.0
    h = loop_holonomy(transports, mesh, loop)
    return float(np.sqrt(max(np.trace(h) + 1.0, 0.0)))
