"""Triangulated genus-g surfaces with their uniformizing hyperbolic metric.

The surface is stored as a Delta-complex.  Every vertex carries one lift
``positions[v]`` to the hyperboloid; every oriented edge ``src -> tgt``
carries a deck word ``w`` such that the edge lifts to the geodesic from
``positions[src]`` to ``D(w) positions[tgt]``, where ``D`` evaluates words
with the Fuchsian side pairings.  Faces are listed counter-clockwise.
"""

from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass, field, replace
from functools import lru_cache

import mpmath
import numpy as np

from . import words
from .hyperbolic import E3, dist, inv, mdot, midpoint, project, triangle_angles

EDGE_WEIGHT_FLOOR = 1e-8
_DPS = 40


class MeshQualityWarning(UserWarning):
    pass


@dataclass(frozen=True)
class FundamentalPolygon:
    """Regular hyperbolic 4g-gon with the ``a b a^-1 b^-1`` side pairing.

    ``pairings`` lists ``(target_side, source_side, letter)``: the generator
    ``letter`` maps side ``source_side`` onto side ``target_side`` reversing
    its direction.  ``corner_words[k]`` maps corner 0 to corner ``k``.
    """

    genus: int
    corners: np.ndarray
    side_midpoints: np.ndarray
    generators: np.ndarray
    pairings: tuple
    corner_words: tuple
    labels: tuple

    @property
    def n_sides(self):
        return 4 * self.genus

    def corner_angles(self):
        n = self.n_sides
        out = []
        for k in range(n):
            prev, cur, nxt = self.corners[k - 1], self.corners[k], self.corners[(k + 1) % n]
            a, b, c = dist(prev, nxt), dist(cur, prev), dist(cur, nxt)
            out.append(triangle_angles(a, b, c)[0])
        return np.array(out)

    def faces(self):
        """Base triangulation as chart-point labels: ``"O"`` is the center,
        ``("c", k)`` corner ``k`` and ``("m", k)`` the midpoint of side ``k``.

        Each corner kite (center, m_{k-1}, c_k, m_k) is cut along its short
        diagonal into two isosceles triangles with apex angle ``2 pi / 4g``.
        """
        n = self.n_sides
        out = []
        for k in range(n):
            out.append(("O", ("m", (k - 1) % n), ("m", k)))
            out.append((("c", k), ("m", k), ("m", (k - 1) % n)))
        return out


@lru_cache(maxsize=None)
def _mp_polygon(genus):
    n = 4 * genus
    with mpmath.workdps(_DPS):
        pi = mpmath.pi
        ct = 1 / mpmath.tan(pi / n)
        circ = mpmath.acosh(ct**2)
        half_side = mpmath.acosh(ct)
        inrad = mpmath.acosh(mpmath.cosh(circ) / mpmath.cosh(half_side))
        hm = mpmath.diag([1, 1, -1])

        def pt(r, th):
            return mpmath.matrix([mpmath.sinh(r) * mpmath.cos(th), mpmath.sinh(r) * mpmath.sin(th), mpmath.cosh(r)])

        def rot(phi):
            c, s = mpmath.cos(phi), mpmath.sin(phi)
            return mpmath.matrix([[c, -s, 0], [s, c, 0], [0, 0, 1]])

        def half_turn(p):
            return -mpmath.eye(3) - 2 * (p * (p.T * hm))

        corners = [pt(circ, 2 * pi * k / n) for k in range(n)]
        mids = [pt(inrad, 2 * pi * k / n + pi / n) for k in range(n)]

        def pairing(k, kp):
            return half_turn(mids[k]) * rot(2 * pi * (k - kp) / n)

        gens, pairings = [], []
        for j in range(genus):
            gens.append(pairing(4 * j, 4 * j + 2))
            pairings.append((4 * j, 4 * j + 2, 2 * j + 1))
            gens.append(pairing(4 * j + 3, 4 * j + 1))
            pairings.append((4 * j + 3, 4 * j + 1, 2 * j + 2))
        inverses = [hm * m.T * hm for m in gens]
    return corners, mids, gens, inverses, tuple(pairings)


def _to_float(m):
    return np.array([[float(m[i, j]) for j in range(m.cols)] for i in range(m.rows)])


@lru_cache(maxsize=65536)
def _fuchsian_deck_mp(genus, word):
    _, _, gens, inverses, _ = _mp_polygon(genus)
    with mpmath.workdps(_DPS):
        out = mpmath.eye(3)
        for x in word:
            out = out * (gens[x - 1] if x > 0 else inverses[-x - 1])
        return out


@lru_cache(maxsize=65536)
def fuchsian_deck(genus, word):
    """Deck matrix of ``word`` for the regular polygon, evaluated in extended precision."""
    return _to_float(_fuchsian_deck_mp(genus, word))


def _boost_mp(p):
    x, y, z = (mpmath.mpf(float(c)) for c in p)
    d = 1 + z
    return mpmath.matrix([[1 + x * x / d, x * y / d, x], [x * y / d, 1 + y * y / d, y], [x, y, z]])


@lru_cache(maxsize=16)
def adapted_deck(mesh):
    """``F_src^-1 D(w_e) F_tgt`` per edge with ``F_v = boost_to(positions[v])``.

    These are the Fuchsian pullbacks written in vertex-adapted frames; they
    are close to the identity for short edges.  Evaluated in extended
    precision so the rounding does not depend on the size of ``D(w_e)``.
    """
    hm = mpmath.diag([1, 1, -1])
    out = np.empty((mesh.n_edges, 3, 3))
    boosts = {}
    with mpmath.workdps(_DPS):
        for v in np.unique(mesh.edges):
            boosts[v] = _boost_mp(mesh.positions[v])
        for e, (a, b) in enumerate(mesh.edges):
            fa = boosts[a]
            out[e] = _to_float(hm * fa.T * hm * _fuchsian_deck_mp(mesh.genus, mesh.edge_words[e]) * boosts[b])
    return out


def regular_polygon(genus):
    """Regular 4g-gon with corner angle ``2 pi / 4g`` centered at ``E3``.

    Generators are evaluated in extended precision and rounded, which keeps
    the relator residual at the level of the rounding of the entries.
    """
    if int(genus) != genus or genus < 2:
        raise ValueError("genus must be an integer >= 2")
    genus = int(genus)
    n = 4 * genus
    corners, mids, gens, _, pairings = _mp_polygon(genus)
    # corner k+1 = g corner k', corner k = g corner k'+1 for pairing (k <- k', g)
    rel = []
    for k, kp, x in pairings:
        rel.append(((k + 1) % n, kp, x))
        rel.append((k, (kp + 1) % n, x))
    cw = {0: ()}
    queue = deque([0])
    while queue:
        c = queue.popleft()
        for tgt, src, x in rel:
            if src == c and tgt not in cw:
                cw[tgt] = words.mul((x,), cw[c])
                queue.append(tgt)
            elif tgt == c and src not in cw:
                cw[src] = words.mul((-x,), cw[c])
                queue.append(src)
    if len(cw) != n:
        raise ValueError("side pairing does not identify all corners")
    labels = []
    for j in range(genus):
        labels += [f"a{j + 1}", f"b{j + 1}", f"a{j + 1}^-1", f"b{j + 1}^-1"]
    return FundamentalPolygon(
        genus=genus,
        corners=np.array([_to_float(c).ravel() for c in corners]),
        side_midpoints=np.array([_to_float(c).ravel() for c in mids]),
        generators=np.array([_to_float(m) for m in gens]),
        pairings=pairings,
        corner_words=tuple(cw[k] for k in range(n)),
        labels=tuple(labels),
    )


@dataclass(frozen=True, eq=False)
class TriangulatedSurface:
    genus: int
    generators: np.ndarray  # Fuchsian side pairings used for the deck words
    positions: np.ndarray  # (V, 3)
    edges: np.ndarray  # (E, 2) src, tgt
    edge_words: tuple  # E deck words
    faces: np.ndarray  # (F, 3) counter-clockwise vertices
    face_edges: np.ndarray  # (F, 3) edge of side (v0v1, v1v2, v2v0)
    face_signs: np.ndarray  # (F, 3) +1 when the stored edge runs along the side
    refinement_level: int = 0
    edge_length: np.ndarray = field(default=None)
    vertex_weight: np.ndarray = field(default=None)
    edge_weight: np.ndarray = field(default=None)
    face_weight: np.ndarray = field(default=None)
    clamped_fraction: float = 0.0

    @property
    def n_vertices(self):
        return len(self.positions)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def n_faces(self):
        return len(self.faces)

    def euler_characteristic(self):
        return self.n_vertices - self.n_edges + self.n_faces

    def total_area(self):
        return float(np.sum(self.face_weight))

    def mean_edge_length(self):
        return float(np.mean(self.edge_length))

    def mean_face_area(self):
        return float(np.mean(self.face_weight))

    def deck(self, generators=None):
        """Deck matrices of all edge words, for the given generators (default Fuchsian)."""
        cache = {}
        out = np.empty((self.n_edges, 3, 3))
        for e, w in enumerate(self.edge_words):
            if w not in cache:
                if generators is None:
                    cache[w] = fuchsian_deck(self.genus, w)
                else:
                    cache[w] = words.evaluate(w, generators)
            out[e] = cache[w]
        return out

    def side_words(self):
        """Deck word of each face side in the face's own traversal direction."""
        out = []
        for f in range(self.n_faces):
            row = []
            for s in range(3):
                w = self.edge_words[self.face_edges[f, s]]
                row.append(w if self.face_signs[f, s] > 0 else words.invert(w))
            out.append(row)
        return out

    def face_chart(self):
        """Lifts of the three corners of each face, with corner 0 at its stored position."""
        dk = self.deck()
        out = np.empty((self.n_faces, 3, 3))
        for f in range(self.n_faces):
            cur = np.eye(3)
            for s in range(3):
                v = self.faces[f, s]
                out[f, s] = cur @ self.positions[v]
                e = self.face_edges[f, s]
                step = dk[e] if self.face_signs[f, s] > 0 else inv(dk[e])
                cur = cur @ step
        return out

    def face_side_lengths(self):
        """Lengths of (v0v1, v1v2, v2v0) per face."""
        return self.edge_length[self.face_edges]

    def validate(self):
        """Raise ``ValueError`` on any broken mesh invariant."""
        g = self.genus
        if self.euler_characteristic() != 2 - 2 * g:
            raise ValueError("Euler characteristic mismatch")
        counts = np.zeros((self.n_edges, 2), dtype=int)
        for f in range(self.n_faces):
            for s in range(3):
                e, sg = self.face_edges[f, s], self.face_signs[f, s]
                counts[e, 0 if sg > 0 else 1] += 1
                a, b = self.faces[f, s], self.faces[f, (s + 1) % 3]
                src, tgt = self.edges[e]
                if (sg > 0 and (src, tgt) != (a, b)) or (sg < 0 and (src, tgt) != (b, a)):
                    raise ValueError(f"face {f} side {s} does not match edge {e}")
        if not np.all(counts == 1):
            raise ValueError("orientation inconsistency: edge not traversed once each way")
        ls = self.face_side_lengths()
        if np.any(ls <= 0):
            raise ValueError("nonpositive edge length")
        tri = ls.sum(axis=1)[:, None] - 2 * ls
        if np.any(tri <= 0):
            raise ValueError("triangle inequality violated")
        for name in ("vertex_weight", "edge_weight", "face_weight"):
            if np.any(getattr(self, name) <= 0):
                raise ValueError(f"nonpositive {name}")
        if np.any(np.abs(mdot(self.positions, self.positions) + 1.0) > 1e-9):
            raise ValueError("vertex lift off the hyperboloid")
        return self


def _canonical(genus, generators, positions, edges, edge_words, faces, face_edges, face_signs, level):
    edges = np.array(edges, dtype=np.int64)
    face_signs = np.array(face_signs, dtype=np.int64)
    edge_words = list(edge_words)
    flip = np.zeros(len(edges), dtype=bool)
    for e, (a, b) in enumerate(edges):
        w = edge_words[e]
        if a > b or (a == b and words.invert(w) < w):
            flip[e] = True
            edges[e] = (b, a)
            edge_words[e] = words.invert(w)
    face_edges = np.array(face_edges, dtype=np.int64)
    face_signs = np.where(flip[face_edges], -face_signs, face_signs)
    order = sorted(range(len(edges)), key=lambda e: (edges[e][0], edges[e][1], len(edge_words[e]), edge_words[e]))
    new_id = np.empty(len(edges), dtype=np.int64)
    new_id[order] = np.arange(len(edges))
    edges = edges[order]
    edge_words = tuple(edge_words[e] for e in order)
    face_edges = new_id[face_edges]
    faces = np.array(faces, dtype=np.int64)
    forder = sorted(range(len(faces)), key=lambda f: (tuple(sorted(faces[f])), tuple(faces[f]), tuple(face_edges[f])))
    mesh = TriangulatedSurface(
        genus=genus,
        generators=np.asarray(generators, dtype=float),
        positions=np.asarray(positions, dtype=float),
        edges=edges,
        edge_words=edge_words,
        faces=faces[forder],
        face_edges=face_edges[forder],
        face_signs=face_signs[forder],
        refinement_level=level,
    )
    return hodge_weights(mesh)


def _chart_points(poly):
    """Polygon chart points as ``(class, deck word, position)``.

    Classes: 0 center, 1 corner, 2.. side midpoints (one per side pair).
    """
    n = poly.n_sides
    pts = {"O": (0, (), E3.copy())}
    for k in range(n):
        pts[("c", k)] = (1, poly.corner_words[k], poly.corners[k])
    for j, (k, kp, x) in enumerate(poly.pairings):
        stored, other = min(k, kp), max(k, kp)
        # generator x maps side kp onto side k
        w_other = (x,) if stored == kp else (-x,)
        pts[("m", stored)] = (2 + j, (), poly.side_midpoints[stored])
        pts[("m", other)] = (2 + j, w_other, poly.side_midpoints[other])
    return pts


def _base_mesh(poly):
    pts = _chart_points(poly)
    tris = poly.faces()
    n_cls = 2 + len(poly.pairings)
    positions = np.empty((n_cls, 3))
    for cls, w, p in pts.values():
        if not w:
            positions[cls] = p
    edges, edge_words, keys = [], [], []
    faces, face_edges, face_signs = [], [], []
    for tri in tris:
        row_e, row_s = [], []
        for s in range(3):
            a, wa, _ = pts[tri[s]]
            b, wb, _ = pts[tri[(s + 1) % 3]]
            w = words.mul(words.invert(wa), wb)
            mat = fuchsian_deck(poly.genus, w)
            found = None
            for e, (src, tgt, m) in enumerate(keys):
                if (src, tgt) == (a, b) and np.allclose(m, mat, atol=1e-8):
                    found = (e, 1)
                elif (src, tgt) == (b, a) and np.allclose(inv(m), mat, atol=1e-8):
                    found = (e, -1)
                if found:
                    break
            if found is None:
                found = (len(edges), 1)
                edges.append((a, b))
                edge_words.append(w)
                keys.append((a, b, mat))
            row_e.append(found[0])
            row_s.append(found[1])
        faces.append(tuple(pts[p][0] for p in tri))
        face_edges.append(row_e)
        face_signs.append(row_s)
    return _canonical(poly.genus, poly.generators, positions, edges, edge_words, faces, face_edges, face_signs, 0)


def build_genus(g, refinement=0):
    """Mesh of the closed genus-``g`` surface from the regular 4g-gon, refined ``refinement`` times."""
    if int(g) != g or g < 2:
        raise ValueError("genus must be an integer >= 2")
    if refinement < 0:
        raise ValueError("refinement must be >= 0")
    mesh = _base_mesh(regular_polygon(int(g)))
    for _ in range(refinement):
        mesh = refine(mesh)
    return mesh


def refine(mesh):
    """1 -> 4 split at hyperbolic edge midpoints."""
    V, E = mesh.n_vertices, mesh.n_edges
    dk = mesh.deck()
    src, tgt = mesh.edges[:, 0], mesh.edges[:, 1]
    far = np.einsum("eij,ej->ei", dk, mesh.positions[tgt])
    mids = midpoint(mesh.positions[src], far)
    alt = np.einsum("eij,ej->ei", inv(dk), mids)
    use_alt = alt[:, 2] < mids[:, 2] - 1e-12
    mid_pos = project(np.where(use_alt[:, None], alt, mids))
    # chart deck of the midpoint seen from the source vertex
    mid_from_src = [mesh.edge_words[e] if use_alt[e] else () for e in range(E)]

    positions = np.vstack([mesh.positions, mid_pos])
    edges, edge_words = [], []
    half1, half2 = np.arange(E), E + np.arange(E)
    for e in range(E):
        edges.append((src[e], V + e))
        edge_words.append(mid_from_src[e])
    for e in range(E):
        edges.append((V + e, tgt[e]))
        edge_words.append(words.mul(words.invert(mid_from_src[e]), mesh.edge_words[e]))

    faces, face_edges, face_signs = [], [], []
    side_words = mesh.side_words()
    for f in range(mesh.n_faces):
        c = mesh.faces[f]
        fe, fs = mesh.face_edges[f], mesh.face_signs[f]
        k = [(), side_words[f][0], words.mul(side_words[f][0], side_words[f][1])]
        mid_v, mid_deck = [], []
        start_half, end_half = [], []  # (edge, sign) from corner s to M_s, and M_s to corner s+1
        for s in range(3):
            e = fe[s]
            mid_v.append(V + e)
            if fs[s] > 0:
                mid_deck.append(words.mul(k[s], mid_from_src[e]))
                start_half.append((half1[e], 1))
                end_half.append((half2[e], 1))
            else:
                mid_deck.append(words.mul(k[(s + 1) % 3], mid_from_src[e]))
                start_half.append((half2[e], -1))
                end_half.append((half1[e], -1))
        interior = []
        for s in range(3):  # I_s: M_{s-1} -> M_s
            interior.append(len(edges))
            edges.append((mid_v[s - 1], mid_v[s]))
            edge_words.append(words.mul(words.invert(mid_deck[s - 1]), mid_deck[s]))
        for s in range(3):
            faces.append((c[s], mid_v[s], mid_v[s - 1]))
            face_edges.append((start_half[s][0], interior[s], end_half[s - 1][0]))
            face_signs.append((start_half[s][1], -1, end_half[s - 1][1]))
        faces.append((mid_v[0], mid_v[1], mid_v[2]))
        face_edges.append((interior[1], interior[2], interior[0]))
        face_signs.append((1, 1, 1))
    return _canonical(
        mesh.genus, mesh.generators, positions, edges, edge_words, faces, face_edges, face_signs,
        mesh.refinement_level + 1,
    )


def hodge_weights(mesh, floor=EDGE_WEIGHT_FLOOR):
    """Diagonal Hodge masses from hyperbolic edge lengths and angles.

    Vertex mass is a third of the incident face areas, face mass is the face
    area (angle defect), edge mass is the cotangent weight
    ``(cot a + cot b) / 2`` over the two opposite angles, clamped at ``floor``.
    """
    dk = mesh.deck()
    far = np.einsum("eij,ej->ei", dk, mesh.positions[mesh.edges[:, 1]])
    length = dist(mesh.positions[mesh.edges[:, 0]], far)
    ls = length[mesh.face_edges]  # sides (v0v1, v1v2, v2v0)
    # angle at v0 is opposite v1v2, etc.
    ang0, ang1, ang2 = triangle_angles(ls[:, 1], ls[:, 2], ls[:, 0])
    angles = np.stack([ang0, ang1, ang2], axis=1)
    area = np.pi - angles.sum(axis=1)
    vw = np.zeros(mesh.n_vertices)
    np.add.at(vw, mesh.faces.ravel(), np.repeat(area / 3.0, 3))
    ew = np.zeros(mesh.n_edges)
    # side s is opposite the corner s+2
    opp = angles[:, [2, 0, 1]]
    np.add.at(ew, mesh.face_edges.ravel(), 0.5 / np.tan(opp.ravel()))
    bad = ew <= 0
    if np.any(bad):
        warnings.warn(f"{int(bad.sum())} nonpositive edge weights clamped", MeshQualityWarning, stacklevel=2)
    ew = np.maximum(ew, floor)
    return replace(
        mesh,
        edge_length=length,
        vertex_weight=vw,
        edge_weight=ew,
        face_weight=area,
        clamped_fraction=float(bad.mean()),
    )
