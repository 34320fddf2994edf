"""Run configuration, default tolerances and the end-to-end round trip."""

from __future__ import annotations

import contextlib
from dataclasses import asdict, dataclass, field

import numpy as np

from . import conformal, dec, hitchin, rep, spacetime, surface

TOLERANCES = {
    "relator": 1e-10,
    "curvature": 1e-10,
    "gap_ratio": 1e2,
    "verify": 1e-6,
    "cone": 1e-6,
    "grad": 1e-8,
    "residual": 1e-3,
    "character": 1e-2,
    "class_distance": 1e-2,
    "sigma": 1e-6,
}


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    genus: int = 2
    refine: int = 2
    t0: float = 1.0
    t1: float = 2.0
    n_times: int = 5
    profile: str = "linear-cone"  # zero | linear-cone | samples
    samples: str | None = None  # .npy file with (N, V, 3) gauge samples
    coeffs: list | None = None
    aux: str = "chart"
    out: str = "hitchlab-out"
    serial: bool = False
    tolerances: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.genus < 2:
            raise UsageError("genus must be at least 2")
        if self.refine < 0:
            raise UsageError("refinement must be nonnegative")
        if self.n_times < 2:
            raise UsageError("time grid needs at least 2 points")
        if not self.t1 > self.t0:
            raise UsageError("time grid must be increasing (t1 > t0)")
        if self.profile not in ("zero", "linear-cone", "samples"):
            raise UsageError(f"unknown profile {self.profile!r}")
        if self.profile == "samples" and not self.samples:
            raise UsageError("profile 'samples' needs --samples")
        if self.coeffs is not None and len(self.coeffs) != 6 * self.genus - 6:
            raise UsageError(f"need {6 * self.genus - 6} kernel coefficients, got {len(self.coeffs)}")
        unknown = set(self.tolerances) - set(TOLERANCES)
        if unknown:
            raise UsageError(f"unknown tolerance keys {sorted(unknown)}")

    @property
    def tol(self):
        return {**TOLERANCES, **self.tolerances}

    @property
    def times(self):
        return np.linspace(self.t0, self.t1, self.n_times)

    def as_dict(self):
        """Fields that determine the results (not where or how they are written)."""
        d = asdict(self)
        d.pop("out")
        d.pop("serial")
        return d


def deterministic(serial):
    """Single-threaded BLAS in serial mode, so outputs are bit-reproducible."""
    if not serial:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(1)


def setup(cfg):
    mesh = surface.build_genus(cfg.genus, cfg.refine)
    return mesh, rep.fuchsian_rep(mesh)


def gauge_profile(cfg, mesh):
    if cfg.profile == "zero":
        return spacetime.GaugeProfile("zero")
    if cfg.profile == "linear-cone":
        return spacetime.cone_profile(mesh)
    samples = np.load(cfg.samples)
    if samples.shape != (cfg.n_times, mesh.n_vertices, 3):
        raise UsageError(f"samples must have shape ({cfg.n_times}, {mesh.n_vertices}, 3)")
    return spacetime.GaugeProfile("samples", samples=samples)


def class_eta(cfg, r, mesh, kernel=None):
    """``sum a_i eta_i`` when coefficients are given, else the zero class."""
    if cfg.coeffs is None:
        return np.zeros((mesh.n_edges, 3))
    if kernel is None:
        kernel = dec.kernel_basis(dec.assemble_dirac(r, mesh, cfg.aux))
    return dec._values(kernel.combine(np.asarray(cfg.coeffs, dtype=float)))


def select_regular(r, mesh, kernel):
    """A regular kernel element if the search finds one, else the tautological class."""
    coeffs, report = conformal.search_regular(kernel, mesh, r)
    if report.regular:
        return dec._values(kernel.combine(coeffs)), "kernel", report
    eta = dec._values(conformal.tautological_eta(r, mesh))
    return eta, "tautological", conformal.regularity(eta, mesh, r)


def character_table(r, mesh, transports, sigma_transports, word_list=hitchin.TEST_WORDS):
    rows = []
    for w in word_list:
        ref = rep.character(r, w)
        rec = hitchin.field_character(transports, mesh, w)
        sig = hitchin.field_character(sigma_transports, mesh, w)
        rows.append((w, ref, rec, sig))
    return rows


def check(name, value, tol, ok=None, kind="max"):
    if ok is None:
        ok = value <= tol if kind == "max" else value >= tol
    return {"name": name, "value": value, "tol": tol, "kind": kind, "pass": bool(ok)}


def roundtrip(cfg):
    """Both directions on the Fuchsian rep.

    rep -> kernel -> regular class -> conformal class -> dreibein and metric
    -> verification, then rep -> harmonic map -> pair -> recomposed flat
    connection -> characters.  Returns ``(report, artifacts, tables)``.
    """
    tol = cfg.tol
    g = cfg.genus
    mesh, r = setup(cfg)
    checks = []
    info = {}
    checks.append(check("euler class", int(r.euler_class), 0, ok=r.euler_class == 2 * g - 2))
    checks.append(check("relator residual", r.relator_residual(), tol["relator"]))
    checks.append(check("face curvature", rep.face_curvature(r, mesh)[1], tol["curvature"]))

    op = dec.assemble_dirac(r, mesh, cfg.aux)
    kernel = dec.kernel_basis(op, gap_threshold=tol["gap_ratio"])
    checks.append(check("kernel dim", kernel.dim, 0, ok=kernel.dim == 6 * g - 6))
    checks.append(check("kernel gap ratio", kernel.gap_ratio, tol["gap_ratio"], kind="min"))

    eta, source, reg = select_regular(r, mesh, kernel)
    info["eta source"] = source
    info["eta min eigenvalue"] = reg.min_eigenvalue
    cls = conformal.induced_class(eta, mesh, r, source=source)
    dist = conformal.class_distance(conformal.mesh_class(mesh), cls)
    checks.append(check("class distance", dist, tol["class_distance"]))

    profile = gauge_profile(cfg, mesh) if cfg.profile != "zero" else spacetime.cone_profile(mesh)
    dreibein = spacetime.assemble_dreibein(r, mesh, eta, profile, cfg.times)
    metric = spacetime.assemble_metric(r, mesh, dreibein)
    flat = spacetime.verify_metric(r, mesh, dreibein, metric, tol=tol["verify"], aux=cfg.aux)
    checks.append(check("metric verification", max(flat.compatibility, flat.face_flatness, flat.star_flatness),
                        tol["verify"], ok=flat.compatible and flat.flat))
    info["metric"] = flat.summary()
    info["masked fraction"] = flat.masked_fraction

    fmap = hitchin.harmonic_map(r, mesh, tol=tol["grad"])
    checks.append(check("harmonic map gradient", fmap.grad_norm, tol["grad"]))
    pair = hitchin.extract_pair(r, mesh, fmap)
    res = hitchin.residuals(pair, mesh)
    info.update({f"pair {k}": v for k, v in res.as_dict().items()})
    info["map displacement"] = float(fmap.displacement().max())
    spair = hitchin.sigma(pair)
    t_rec, t_sig = hitchin.compose_flat(pair), hitchin.compose_flat(spair)
    checks.append(check("recomposed face curvature", rep.face_curvature(t_rec, mesh)[1], tol["sigma"]))
    table = character_table(r, mesh, t_rec, t_sig)
    mism = max(abs(rec - ref) for _, ref, rec, _ in table)
    smism = max(abs(sig - rec) for _, _, rec, sig in table)
    checks.append(check("character mismatch", mism, tol["character"]))
    checks.append(check("sigma character agreement", smism, tol["sigma"]))
    sres = hitchin.residuals(spair, mesh)
    checks.append(check("sigma residual equality", max(abs(sres.r1 - res.r1), abs(sres.r2 - res.r2)), 1e-12))

    report = {
        "command": "roundtrip",
        "config": cfg.as_dict(),
        "tolerances": tol,
        "counts": {"V": mesh.n_vertices, "E": mesh.n_edges, "F": mesh.n_faces},
        "kernel_dim": kernel.dim,
        "euler_class": int(r.euler_class),
        "class_distance": dist,
        "character_mismatch": mism,
        "info": info,
        "checks": checks,
    }
    artifacts = {
        "surface": mesh,
        "rep": r,
        "kernel": kernel,
        "eta": dec.Cochain(1, eta),
        "conformal": cls,
        "metric": metric,
        "map": fmap,
        "pair": pair,
    }
    tables = {
        "characters": (["word", "rep", "recomposed", "sigma"], table),
        "spectrum": (["index", "singular_value"], list(enumerate(op_spectrum(kernel)))),
    }
    return report, artifacts, tables


def op_spectrum(kernel):
    return [float(s) for s in kernel.singular_values]
