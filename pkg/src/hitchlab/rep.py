"""Surface-group representations into SO(2,1) and the induced edge transports."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import mpmath
import numpy as np

from . import words
from .hyperbolic import GeometryError, boost_to, inv, is_so21, so21_deviation
from .surface import FundamentalPolygon, TriangulatedSurface, _mp_polygon, adapted_deck, fuchsian_deck, regular_polygon

RELATOR_TOL = 1e-10
CENTRAL_TOL = 1e-6
IRREDUCIBLE_TOL = 1e-8

TEMPORAL_GAUGE_NOTE = (
    "Bulk connections on the surface times a time interval are never stored. "
    "Every flat ISO(2,1) connection is kept in temporal gauge, so only the "
    "surface transports and the time-dependent translation part are held."
)


def temporal_gauge_note():
    return TEMPORAL_GAUGE_NOTE


class RelatorError(GeometryError):
    pass


class EulerClassError(GeometryError):
    pass


@dataclass(frozen=True, eq=False)
class SurfaceRep:
    """Generators ``A_1, B_1, ..., A_g, B_g`` in SO(2,1).

    ``edge_transport`` is filled by :func:`bind`.  Fiber vectors at a vertex
    are written in the adapted frame ``F_v = boost_to(positions[v])``; the
    pullback ``rho'(e) = F_src^-1 rho(w_e) F_tgt`` moves a vector from the
    target frame into the source frame and ``T(e) = rho'(e)^-1``.  Reversing
    an edge inverts the transport.
    """

    genus: int
    generators: np.ndarray
    euler_class: int | None = None
    irreducible_flag: bool | None = None
    provenance: str = "custom"
    edge_transport: np.ndarray | None = None
    fuchsian: bool = False

    def word(self, word):
        if self.fuchsian:
            return fuchsian_deck(self.genus, tuple(word))
        return words.evaluate(word, self.generators)

    def relator_residual(self):
        return relator_residual(self.generators)


def relator_residual(generators):
    """Relative residual of the surface relation, split into two balanced halves.

    With ``P`` the first ``ceil(g/2)`` commutators and ``Q`` the inverse of the
    rest, the relation reads ``P = Q``; the residual is
    ``|P - Q|_inf / max(|P|_inf, |Q|_inf, 1)``.  Splitting keeps both sides
    short, so the rounding error does not blow up with the word length.
    """
    gens = np.asarray(generators, dtype=float)
    g = len(gens) // 2
    h = (g + 1) // 2
    rel = words.relator(g)
    left = words.evaluate(rel[: 4 * h], gens)
    right = words.evaluate(words.invert(rel[4 * h:]), gens)
    norm = max(np.abs(left).sum(axis=1).max(), np.abs(right).sum(axis=1).max(), 1.0)
    return float(np.abs(left - right).sum(axis=1).max() / norm)


def make_rep(generators, provenance="custom", check=True, fuchsian=False):
    """Validate generator matrices and compute the Euler class and irreducibility."""
    gens = np.array(generators, dtype=float)
    if gens.ndim != 3 or gens.shape[1:] != (3, 3) or len(gens) % 2 or len(gens) < 4:
        raise ValueError("expected 2g generator matrices of shape (3, 3) with g >= 2")
    if check:
        for k, m in enumerate(gens):
            if not is_so21(m, tol=1e-10):
                raise GeometryError(f"generator {k} is not in SO+(2,1): deviation {so21_deviation(m):.3e}")
        res = relator_residual(gens)
        if res > RELATOR_TOL:
            raise RelatorError(f"relator residual {res:.3e} exceeds {RELATOR_TOL:.0e}")
    rep = SurfaceRep(genus=len(gens) // 2, generators=gens, provenance=provenance, fuchsian=fuchsian)
    e = euler_class(rep) if check else None
    return replace(rep, euler_class=e, irreducible_flag=is_irreducible(gens))


def fuchsian_rep(polygon):
    """Uniformizing representation from the side pairings of the regular 4g-gon."""
    if isinstance(polygon, TriangulatedSurface):
        polygon = regular_polygon(polygon.genus)
    elif not isinstance(polygon, FundamentalPolygon):
        polygon = regular_polygon(int(polygon))
    return make_rep(polygon.generators, provenance=f"fuchsian genus {polygon.genus}", fuchsian=True)


def trivial_rep(genus):
    return make_rep(np.broadcast_to(np.eye(3), (2 * genus, 3, 3)), provenance="trivial")


def conjugate(rep, g):
    """Globally conjugated representation ``g rho g^-1``."""
    g = np.asarray(g, dtype=float)
    gens = g @ rep.generators @ inv(g)
    return make_rep(gens, provenance=f"conjugate of {rep.provenance}")


def random_so21(rng, scale=1.0):
    """Random element of SO+(2,1): rotation, boost, rotation."""
    from .hyperbolic import point, rotation

    r = scale * rng.uniform(0.0, 1.0)
    return rotation(rng.uniform(0, 2 * np.pi)) @ boost_to(point(r, rng.uniform(0, 2 * np.pi))) @ rotation(
        rng.uniform(0, 2 * np.pi)
    )


def frames(mesh):
    """Adapted frames ``F_v`` taking ``E3`` to the vertex lifts."""
    return boost_to(mesh.positions)


def to_adapted(mesh, values):
    """Vertex values in polygon-chart coordinates -> adapted frames."""
    return np.einsum("vij,vj->vi", inv(frames(mesh)), values)


def to_chart(mesh, values):
    return np.einsum("vij,vj->vi", frames(mesh), values)


def pullbacks(rep, mesh):
    """Adapted pullbacks ``rho'(e) = F_src^-1 rho(w_e) F_tgt``."""
    if rep.edge_transport is not None and len(rep.edge_transport) == mesh.n_edges:
        return inv(rep.edge_transport)
    if rep.fuchsian:
        return adapted_deck(mesh)
    cache = {}
    raw = np.empty((mesh.n_edges, 3, 3))
    for e, w in enumerate(mesh.edge_words):
        if w not in cache:
            cache[w] = rep.word(w)
        raw[e] = cache[w]
    f = frames(mesh)
    return inv(f[mesh.edges[:, 0]]) @ raw @ f[mesh.edges[:, 1]]


def transports(rep, mesh):
    """Per-edge transports ``T(e) = rho'(e)^-1`` in adapted frames."""
    return inv(pullbacks(rep, mesh))


def bind(rep, mesh):
    if mesh.genus != rep.genus:
        raise ValueError("genus mismatch between rep and mesh")
    return replace(rep, edge_transport=transports(replace(rep, edge_transport=None), mesh))


def face_sides(mesh, pull):
    """Face-oriented ``rho`` of the three sides, shape (F, 3, 3, 3)."""
    p = pull[mesh.face_edges]
    return np.where(mesh.face_signs[..., None, None] > 0, p, inv(p))


def _holonomy_block(sides):
    # extended-precision accumulation: side matrices can have entries in the
    # hundreds, so a double product would lose the cancellation in Hol - I
    s = sides.astype(np.longdouble)
    return np.einsum("fij,fjk,fkl->fil", s[:, 0], s[:, 1], s[:, 2])


def face_words(mesh):
    """Freely reduced word around each face, read from corner 0."""
    return [words.mul(*sw) for sw in mesh.side_words()]


def _face_holonomy_words(rep, mesh, idx, fw):
    out = np.broadcast_to(np.eye(3), (len(idx), 3, 3)).copy()
    for i, f in enumerate(idx):
        if fw[f]:
            out[i] = rep.word(fw[f])
    return out


def face_holonomy(field, mesh):
    """Holonomy around each face, starting and ending at corner 0.

    ``field`` is either a :class:`SurfaceRep`, whose transports are induced
    by the deck words (the product is then the image of the reduced face
    word), or an (E, 3, 3) array of transports multiplied as matrices.
    """
    if isinstance(field, SurfaceRep):
        return _face_holonomy_words(field, mesh, np.arange(mesh.n_faces), face_words(mesh))
    return _holonomy_block(face_sides(mesh, inv(np.asarray(field)))).astype(float)


def face_curvature(field, mesh, parts=1, workers=None):
    """Per-face ``|Hol_f - I|_inf`` and the maximum.

    The faces may be split into ``parts`` independent blocks (evaluated on a
    thread pool when ``workers`` is given); the result does not depend on
    the split.
    """
    if isinstance(field, SurfaceRep):
        fw = face_words(mesh)

        def hol(idx):
            return _face_holonomy_words(field, mesh, idx, fw)

    else:
        sides = face_sides(mesh, inv(np.asarray(field)))

        def hol(idx):
            return _holonomy_block(sides[idx])

    blocks = np.array_split(np.arange(mesh.n_faces), max(1, int(parts)))

    def run(idx):
        return np.abs(hol(idx) - np.eye(3)).max(axis=(1, 2)).astype(float)

    if workers:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            devs = list(pool.map(run, blocks))
    else:
        devs = [run(b) for b in blocks]
    dev = np.concatenate(devs)
    return dev, float(dev.max()) if len(dev) else 0.0


# --- Euler class ---------------------------------------------------------------
# Elements of the universal cover act on the line covering the boundary circle.
# Boundary points are light rays (cos 2 pi x, sin 2 pi x, 1); a lift is stored as
# (M, s) with s the image of 0, which fixes the whole lifted map.


class _Float:
    """Double-precision arithmetic for the lift."""

    pi = np.pi
    cos, sin, atan2, floor = np.cos, np.sin, np.arctan2, np.floor
    rnd = staticmethod(np.round)
    snap = 0.0
    inv = staticmethod(inv)

    @staticmethod
    def vec(a, b, c):
        return np.array([a, b, c])

    @staticmethod
    def mul(a, b):
        return a @ b

    @staticmethod
    def eye():
        return np.eye(3)


class _Mp:
    """Arbitrary-precision arithmetic for the lift (exact Fuchsian generators)."""

    cos, sin, atan2 = staticmethod(mpmath.cos), staticmethod(mpmath.sin), staticmethod(mpmath.atan2)
    floor, rnd = staticmethod(mpmath.floor), staticmethod(mpmath.nint)
    snap = mpmath.mpf("1e-30")

    @property
    def pi(self):
        return +mpmath.pi

    @staticmethod
    def inv(m):
        h = mpmath.diag([1, 1, -1])
        return h * m.T * h

    @staticmethod
    def vec(a, b, c):
        return mpmath.matrix([a, b, c])

    @staticmethod
    def mul(a, b):
        return a * b

    @staticmethod
    def eye():
        return mpmath.eye(3)


_FLOAT, _MP = _Float(), _Mp()


def _angle(m, x, ar=_FLOAT):
    phi = 2 * ar.pi * x
    v = ar.mul(m, ar.vec(ar.cos(phi), ar.sin(phi), 1))
    return (ar.atan2(v[1], v[0]) / (2 * ar.pi)) % 1


def _lift_eval(lift, y, ar=_FLOAT):
    m, s = lift
    k = ar.rnd(y)
    if abs(y - k) <= ar.snap:
        # integer points map to integer shifts of s; avoids the branch cut at 0
        return k + s
    fl = ar.floor(y)
    return fl + s + ((_angle(m, y - fl, ar) - _angle(m, 0, ar)) % 1)


def _lift(m, ar=_FLOAT):
    return (m, _angle(m, 0, ar))


def _lift_inv(lift, ar=_FLOAT):
    m, s = lift
    mi = ar.inv(m)
    c = _angle(mi, 0, ar)
    return (mi, c - ar.rnd(_lift_eval(lift, c, ar)))


def _lift_mul(a, b, ar=_FLOAT):
    return (ar.mul(a[0], b[0]), _lift_eval(a, b[1], ar))


def relator_lift(generators, ar=_FLOAT):
    """Lift of the surface relator to the universal cover: ``(matrix, translation)``."""
    gens = np.asarray(generators, dtype=float) if ar is _FLOAT else list(generators)
    out = (ar.eye(), 0)
    for j in range(len(gens) // 2):
        a, b = _lift(gens[2 * j], ar), _lift(gens[2 * j + 1], ar)
        comm = _lift_mul(_lift_mul(a, b, ar), _lift_mul(_lift_inv(a, ar), _lift_inv(b, ar), ar), ar)
        out = _lift_mul(out, comm, ar)
    return out


def _central_shift(gens, ar):
    """Translation of the lifted relator and its largest deviation from a constant shift."""
    m, s = relator_lift(gens, ar)
    e = int(ar.rnd(s))
    probes = [k / 9 for k in range(9)]
    dev = max(abs(float(_lift_eval((m, s), y, ar) - y) - e) for y in probes)
    return e, dev


# orientation convention: the uniformizing rep of the polygon has e = 2g - 2
_EULER_SIGN = 1


def _mp_generators(genus):
    return _mp_polygon(genus)[2]


def euler_class(rep):
    """Euler class from the translation number of the lifted relator.

    The lifted relator covers the identity, so it is a deck translation by
    an integer ``e``; the bound ``|e| <= 2g - 2`` is asserted.  Fuchsian reps
    are evaluated on the exact polygon generators.
    """
    gens = rep.generators if isinstance(rep, SurfaceRep) else np.asarray(rep, dtype=float)
    g = len(gens) // 2
    if isinstance(rep, SurfaceRep) and rep.fuchsian:
        # the polygon generators are known exactly; rounding them to doubles
        # leaves a relator defect that the boundary action amplifies with g
        with mpmath.workdps(40):
            e, dev = _central_shift(_mp_generators(g), _MP)
    else:
        e, dev = _central_shift(gens, _FLOAT)
    if dev > CENTRAL_TOL:
        raise EulerClassError(f"lifted relator is not central (deviation {dev:.2e})")
    e = _EULER_SIGN * e
    if abs(e) > 2 * g - 2:
        raise EulerClassError(f"Euler class {e} violates the Milnor-Wood bound")
    return e + 0


# --- invariants -------------------------------------------------------------


def character(rep, word):
    """``|tr|`` of the PSL(2,R) image of ``word``; 2 for the empty word."""
    word = words.parse(word) if isinstance(word, str) else tuple(word)
    if not word:
        return 2.0
    m = rep.word(word) if isinstance(rep, SurfaceRep) else words.evaluate(word, rep)
    return float(np.sqrt(max(np.trace(m) + 1.0, 0.0)))


def is_irreducible(generators, tol=IRREDUCIBLE_TOL):
    """No common invariant line (fixed point in the plane, on its boundary, or
    an invariant geodesic) for all generators.

    A common invariant line is an eigenvector of every fixed linear
    combination; repeated eigenvalues of the combination are treated as
    reducible.
    """
    gens = np.asarray(generators, dtype=float)
    coeffs = np.cos(1.0 + 0.7 * np.arange(len(gens))) + 1.5
    x = np.tensordot(coeffs, gens, axes=1)
    vals, vecs = np.linalg.eig(x)
    if np.min(np.abs(vals[:, None] - vals[None, :]) + np.eye(3) * 1e9) <= tol * max(1.0, np.abs(vals).max()):
        return False
    for k in range(3):
        v = vecs[:, k] / np.linalg.norm(vecs[:, k])
        common = True
        for m in gens:
            w = m @ v
            lam = np.vdot(v, w)
            if np.linalg.norm(w - lam * v) > tol * max(1.0, np.linalg.norm(m)):
                common = False
                break
        if common:
            return False
    return True
