"""Dreibeins and singular flat Lorentzian metrics on the surface times an interval.

A dreibein is sampled on a time grid: the spatial part is the 1-cochain
``xi_t = eta + d0(v_t)`` and the temporal part the 0-cochain
``u_t = dv_t/dt``.  The metric on a face is the Gram matrix, in the fiber
metric ``h = diag(1, 1, -1)``, of ``xi`` evaluated on the face's first two
edges and of ``u`` at its base corner.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dec
from .hyperbolic import E3, H, inv

SING_REL = 1e-8


@dataclass(frozen=True, eq=False)
class GaugeProfile:
    """Time profile ``v_t`` of the gauge 0-cochain.

    ``kind`` is ``"zero"``, ``"linear"`` (``v_t = t a``), ``"exponential"``
    (``v_t = exp(rate t) a``) or ``"samples"`` (values given on the grid).
    """

    kind: str = "zero"
    section: np.ndarray | None = None
    rate: float = 1.0
    samples: np.ndarray | None = None

    def values(self, times, n_vertices):
        t = np.asarray(times, dtype=float)
        if self.kind == "zero":
            return np.zeros((len(t), n_vertices, 3))
        if self.kind == "linear":
            return t[:, None, None] * self.section[None]
        if self.kind == "exponential":
            return np.exp(self.rate * t)[:, None, None] * self.section[None]
        if self.kind == "samples":
            s = np.asarray(self.samples, dtype=float)
            if s.shape != (len(t), n_vertices, 3):
                raise ValueError("sampled profile does not match the time grid")
            return s
        raise ValueError(f"unknown profile kind {self.kind!r}")

    @property
    def closed_form(self):
        return self.kind in ("zero", "linear", "exponential")

    def derivative(self, times, n_vertices, exact=True):
        """``dv/dt`` on the grid; exact for closed forms unless ``exact=False``."""
        t = np.asarray(times, dtype=float)
        if exact and self.closed_form:
            if self.kind == "zero":
                return np.zeros((len(t), n_vertices, 3))
            if self.kind == "linear":
                return np.broadcast_to(self.section, (len(t), n_vertices, 3)).copy()
            return self.rate * np.exp(self.rate * t)[:, None, None] * self.section[None]
        return time_derivative(self.values(t, n_vertices), t)


def time_derivative(samples, times):
    """Centered differences inside the grid, one-sided at the two ends."""
    return np.gradient(samples, np.asarray(times, dtype=float), axis=0, edge_order=1)


def tautological_section(mesh):
    """The unit timelike section ``P_v``; constant ``E3`` in adapted frames."""
    return np.broadcast_to(E3, (mesh.n_vertices, 3)).copy()


def cone_profile(mesh):
    return GaugeProfile("linear", section=tautological_section(mesh))


@dataclass(frozen=True, eq=False)
class Dreibein:
    times: np.ndarray  # (N,)
    eta: np.ndarray  # (E, 3) class representative
    spatial: np.ndarray  # (N, E, 3)
    temporal: np.ndarray  # (N, V, 3)
    gauge: np.ndarray  # (N, V, 3) the sampled v_t
    profile: GaugeProfile

    @property
    def n_times(self):
        return len(self.times)


def assemble_dreibein(connection, mesh, eta, profile=None, times=(0.0, 1.0), exact_derivative=True):
    """``xi_t = eta + d0(v_t)`` and ``u_t = dv_t/dt`` on the time grid."""
    t = np.asarray(times, dtype=float)
    if t.ndim != 1 or len(t) < 2:
        raise ValueError("time grid needs at least 2 points")
    if np.any(np.diff(t) <= 0):
        raise ValueError("time grid must be strictly increasing")
    profile = GaugeProfile() if profile is None else profile
    eta = np.zeros((mesh.n_edges, 3)) if eta is None else np.asarray(dec._values(eta), dtype=float)
    if eta.shape != (mesh.n_edges, 3):
        raise ValueError("eta must be a 1-cochain")
    cx = dec.bundle_complex(connection, mesh)
    v = profile.values(t, mesh.n_vertices)
    dv = (cx.D0 @ v.reshape(len(t), -1).T).T.reshape(len(t), mesh.n_edges, 3)
    return Dreibein(
        times=t,
        eta=eta,
        spatial=eta[None] + dv,
        temporal=profile.derivative(t, mesh.n_vertices, exact=exact_derivative),
        gauge=v,
        profile=profile,
    )


def cartan_residual(connection, mesh, dreibein, aux="chart"):
    """Per-time spatial residual ``|d1 xi_t|`` and evolution residual
    ``|d xi_t/dt - d0 u_t|`` in mass norms.

    The time derivative of ``xi`` is taken by finite differences on the
    grid, independently of how ``u`` was obtained.
    """
    cx = dec.bundle_complex(connection, mesh, aux)
    n = dreibein.n_times
    xi = dreibein.spatial.reshape(n, -1)
    dxi = time_derivative(xi, dreibein.times)
    du = (cx.D0 @ dreibein.temporal.reshape(n, -1).T).T
    spatial = np.array([cx.norm(2, cx.D1 @ xi[k]) for k in range(n)])
    evolution = np.array([cx.norm(1, dxi[k] - du[k]) for k in range(n)])
    return spatial, evolution


def class_consistency(connection, mesh, dreibein, aux="chart"):
    """Largest deviation of the Coulomb projection of ``xi_t`` from ``eta`` over t."""
    worst = 0.0
    scale = max(float(np.abs(dreibein.eta).max()), 1.0)
    for k in range(dreibein.n_times):
        proj, _ = dec.coulomb_gauge(connection, mesh, dreibein.spatial[k], aux)
        worst = max(worst, float(np.abs(proj.values - dreibein.eta).max()) / scale)
    return worst


# --- metric -----------------------------------------------------------------


def _face_frames(pull, mesh):
    """Face-oriented side matrices and corner-to-base transports per face."""
    from .rep import face_sides

    sides = face_sides(mesh, pull)
    acc = np.empty((mesh.n_faces, 3, 3, 3))
    acc[:, 0] = np.eye(3)
    acc[:, 1] = sides[:, 0]
    acc[:, 2] = sides[:, 0] @ sides[:, 1]
    return sides, acc


def _frame_vectors(pull, mesh, spatial, temporal):
    """Columns ``[xi(e01), xi(e02), u(v0)]`` in the base-corner frame, shape (N, F, 3, 3)."""
    sides, _ = _face_frames(pull, mesh)
    fe, fs = mesh.face_edges, mesh.face_signs
    tr = inv(pull)  # T(e)
    w0 = spatial[:, fe[:, 0]]
    rev0 = -np.einsum("fij,nfj->nfi", tr[fe[:, 0]], w0)
    x01 = np.where(fs[None, :, 0, None] > 0, w0, rev0)
    w2 = spatial[:, fe[:, 2]]
    rev2 = -np.einsum("fij,nfj->nfi", tr[fe[:, 2]], w2)
    side2 = np.where(fs[None, :, 2, None] > 0, w2, rev2)  # at v2, pointing v2 -> v0
    # reverse side 2 so it is anchored at v0: -T(side) w with T(side) = rho_2^-1
    x02 = -np.einsum("fij,nfj->nfi", inv(sides[:, 2]), side2)
    u0 = temporal[:, mesh.faces[:, 0]]
    return np.stack([x01, x02, u0], axis=-1)


@dataclass(frozen=True, eq=False)
class SpacetimeMetric:
    times: np.ndarray
    gram: np.ndarray  # (N, F, 3, 3), basis (e01, e02, d/dt)
    frames: np.ndarray  # (N, F, 3, 3) the dreibein columns
    det: np.ndarray  # (N, F)
    mask: np.ndarray  # (N, F) True where singular
    signature: np.ndarray  # (N, F, 3) counts of (-, 0, +) eigenvalues
    eps_sing: float

    def masked_fraction(self):
        return float(self.mask.mean())

    def masked_fraction_per_time(self):
        return self.mask.mean(axis=1)

    def signature_tally(self):
        out = {}
        for n, z, p in self.signature[~self.mask].reshape(-1, 3):
            key = "(" + ",".join(["-"] * int(n) + ["0"] * int(z) + ["+"] * int(p)) + ")"
            out[key] = out.get(key, 0) + 1
        return out

    def lorentzian_fraction(self):
        """Share of unmasked samples with signature (-,+,+)."""
        um = ~self.mask
        if not np.any(um):
            return 0.0
        good = (self.signature[..., 0] == 1) & (self.signature[..., 2] == 2)
        return float(good[um].mean())


def assemble_metric(connection, mesh, dreibein, sing_rel=SING_REL):
    pull = dec._pullbacks(connection, mesh)
    x = _frame_vectors(pull, mesh, dreibein.spatial, dreibein.temporal)
    gram = np.swapaxes(x, -1, -2) @ H @ x
    gram = 0.5 * (gram + np.swapaxes(gram, -1, -2))
    det = np.linalg.det(x)
    eps = sing_rel * mesh.mean_edge_length() ** 3
    mask = np.abs(det) < eps
    ev = np.linalg.eigvalsh(gram)
    etol = 1e-12 * np.maximum(np.abs(ev).max(axis=-1, keepdims=True), 1e-300)
    sig = np.stack([(ev < -etol).sum(-1), (np.abs(ev) <= etol).sum(-1), (ev > etol).sum(-1)], axis=-1)
    return SpacetimeMetric(
        times=dreibein.times, gram=gram, frames=x, det=det, mask=mask, signature=sig, eps_sing=eps
    )


def cone_metric_entries(connection, mesh, times):
    """Closed-form cone entries ``(g_tt, g_ti, g_ij)`` for ``v_t = t P``: ``-1``,
    ``t h(a, d0 a)`` and ``t^2 gamma_hat``."""
    a = tautological_section(mesh)
    unit = assemble_dreibein(connection, mesh, None, GaugeProfile("linear", section=a), times=[0.0, 1.0])
    x1 = _frame_vectors(dec._pullbacks(connection, mesh), mesh, unit.spatial[1:] - unit.spatial[:1], unit.temporal[:1])[0]
    gamma_hat = np.swapaxes(x1[..., :2], -1, -2) @ H @ x1[..., :2]
    cross = np.einsum("fi,ij,fjk->fk", x1[..., 2], H, x1[..., :2])
    t = np.asarray(times, dtype=float)
    return (
        -np.ones((len(t), mesh.n_faces)),
        t[:, None, None] * cross[None],
        t[:, None, None, None] ** 2 * gamma_hat[None],
    )


# --- verification -----------------------------------------------------------


def _edge_sides(mesh):
    """For each edge: (face, side) traversed with sign +1 and with sign -1."""
    plus = np.empty((mesh.n_edges, 2), dtype=int)
    minus = np.empty((mesh.n_edges, 2), dtype=int)
    for f in range(mesh.n_faces):
        for s in range(3):
            tgt = plus if mesh.face_signs[f, s] > 0 else minus
            tgt[mesh.face_edges[f, s]] = (f, s)
    return plus, minus


def _src_corner(mesh, f, s):
    """Corner index of the source vertex of the edge on side ``s`` of face ``f``."""
    return s if mesh.face_signs[f, s] > 0 else (s + 1) % 3


def _cond(x):
    sv = np.linalg.svd(x, compute_uv=False)
    with np.errstate(divide="ignore"):
        return sv[..., 0] / sv[..., -1]


@dataclass(frozen=True)
class FlatnessReport:
    masked_fraction: float
    checks_run: bool
    compatibility: float  # relative, over adjacent face pairs
    face_flatness: float  # max |X^-1 Hol X - I| / cond
    star_flatness: float  # same around vertex stars
    spatial_residual: float
    evolution_residual: float
    worst_face: int
    worst_time: int
    tol: float

    @property
    def compatible(self):
        return self.checks_run and self.compatibility <= self.tol

    @property
    def flat(self):
        return self.checks_run and max(self.face_flatness, self.star_flatness) <= self.tol

    @property
    def torsion_free(self):
        return self.checks_run and max(self.spatial_residual, self.evolution_residual) <= self.tol

    @property
    def passed(self):
        return self.compatible and self.flat and self.torsion_free

    def summary(self):
        if not self.checks_run:
            return f"{100 * self.masked_fraction:.0f}% masked, no checks run"
        return (
            f"masked {100 * self.masked_fraction:.1f}%, compatibility {self.compatibility:.2e}, "
            f"flatness {max(self.face_flatness, self.star_flatness):.2e}, "
            f"torsion {max(self.spatial_residual, self.evolution_residual):.2e}"
        )


def vertex_stars(mesh):
    """Faces around each vertex as ``(face, corner)`` cycles, following shared sides."""
    plus, minus = _edge_sides(mesh)
    seen = set()
    stars = []
    for f0 in range(mesh.n_faces):
        for c0 in range(3):
            if (f0, c0) in seen:
                continue
            cycle = []
            f, c = f0, c0
            while (f, c) not in seen:
                seen.add((f, c))
                cycle.append((f, c))
                e = mesh.face_edges[f, c]  # side leaving corner c
                f2, s2 = minus[e] if mesh.face_signs[f, c] > 0 else plus[e]
                f, c = f2, (s2 + 1) % 3
            stars.append(cycle)
    return stars


def verify_metric(connection, mesh, dreibein, metric, tol=1e-8, aux="chart"):
    """Compatibility, flatness and torsion checks on the unmasked samples."""
    if np.all(metric.mask):
        return FlatnessReport(1.0, False, np.nan, np.nan, np.nan, np.nan, np.nan, -1, -1, tol)
    pull = dec._pullbacks(connection, mesh)
    sides, acc = _face_frames(pull, mesh)
    x = metric.frames
    xinv = np.linalg.inv(np.where(metric.mask[..., None, None], np.eye(3), x))
    cond = _cond(x)

    # (a) adjacent faces: C = X_f^-1 P X_f', with P the transport from the base
    # corner of f' to the base corner of f through the shared edge
    plus, minus = _edge_sides(mesh)
    f1, s1 = plus[:, 0], plus[:, 1]
    f2, s2 = minus[:, 0], minus[:, 1]
    c1 = np.array([_src_corner(mesh, f, s) for f, s in zip(f1, s1)])
    c2 = np.array([_src_corner(mesh, f, s) for f, s in zip(f2, s2)])
    p = acc[f1, c1] @ inv(acc[f2, c2])
    conn = xinv[:, f1] @ p[None] @ x[:, f2]
    lhs = np.swapaxes(conn, -1, -2) @ metric.gram[:, f1] @ conn
    rhs = metric.gram[:, f2]
    scale = np.maximum(np.abs(rhs).max(axis=(-1, -2)), np.abs(metric.gram[:, f1]).max(axis=(-1, -2)))
    ok = ~(metric.mask[:, f1] | metric.mask[:, f2])
    rel = np.abs(lhs - rhs).max(axis=(-1, -2)) / np.maximum(scale, 1e-300)
    compat = float(rel[ok].max()) if np.any(ok) else 0.0

    # (b) conjugated holonomy around faces
    hol = (sides[:, 0].astype(np.longdouble) @ sides[:, 1] @ sides[:, 2]).astype(float)
    chol = xinv @ hol[None] @ x
    dev = np.abs(chol - np.eye(3)).max(axis=(-1, -2)) / np.maximum(cond, 1.0)
    dev = np.where(metric.mask, 0.0, dev)
    k, fw = np.unravel_index(int(np.argmax(dev)), dev.shape)
    face_flat = float(dev.max())

    # vertex stars: compose the face-to-face maps around each vertex
    star_flat = 0.0
    for cycle in vertex_stars(mesh):
        faces = [f for f, _ in cycle]
        if np.any(metric.mask[:, faces]):
            live = ~np.any(metric.mask[:, faces], axis=1)
        else:
            live = np.ones(metric.mask.shape[0], dtype=bool)
        if not np.any(live):
            continue
        f0 = faces[0]
        loop = _star_holonomy(mesh, acc, cycle)
        m = xinv[live][:, f0] @ loop[None] @ x[live][:, f0]
        d = np.abs(m - np.eye(3)).max(axis=(-1, -2)) / np.maximum(cond[live][:, f0], 1.0)
        star_flat = max(star_flat, float(d.max()))

    spatial, evolution = cartan_residual(connection, mesh, dreibein, aux)
    return FlatnessReport(
        masked_fraction=metric.masked_fraction(),
        checks_run=True,
        compatibility=compat,
        face_flatness=face_flat,
        star_flatness=star_flat,
        spatial_residual=float(spatial.max()),
        evolution_residual=float(evolution.max()),
        worst_face=int(fw),
        worst_time=int(k),
        tol=tol,
    )


def _star_holonomy(mesh, acc, cycle):
    """Transport around a vertex star, read in the base frame of the first face.

    Consecutive faces ``f, g`` share the side leaving the vertex in ``f``;
    the base frame of ``g`` is carried to that of ``f`` through the source
    vertex of the shared edge.  The product picks up the holonomies of all
    faces in the star.
    """
    total = np.eye(3, dtype=np.longdouble)
    for (f, c), (g, d) in zip(cycle, cycle[1:] + cycle[:1]):
        cf = _src_corner(mesh, f, c)
        cg = _src_corner(mesh, g, (d - 1) % 3)
        total = total @ acc[f, cf] @ inv(acc[g, cg])
    return total.astype(float)
