"""Command line front end.

Exit codes
----------
0  all checks passed
2  usage error
3  invariant failure (corrupt or inconsistent data)
4  tolerance failure (a numerical check did not meet its tolerance)
5  missing input artifact
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import conformal, dec, hitchin, pipeline, rep, spacetime, store
from .hyperbolic import GeometryError

EXIT_OK, EXIT_USAGE, EXIT_INVARIANT, EXIT_TOLERANCE, EXIT_MISSING = 0, 2, 3, 4, 5

EPILOG = """exit codes: 0 ok, 2 usage error, 3 invariant failure, 4 tolerance failure, 5 missing input.
The default output directory is taken from $HITCHLAB_OUT (else ./hitchlab-out)."""


class ToleranceFailure(Exception):
    pass


# --- output helpers ---------------------------------------------------------


class Session:
    """Output directory, manifest bookkeeping and report printing for one command."""

    def __init__(self, cfg, command):
        self.cfg = cfg
        self.command = command
        self.root = Path(cfg.out)
        self.root.mkdir(parents=True, exist_ok=True)
        self.outputs = {}
        self.inputs = {}

    def save(self, name, obj, extra=None):
        path = self.root / f"{name}.json"
        prov = store.provenance(command=self.command, config=self.cfg.as_dict(), **(extra or {}))
        store.save(obj, path, prov)
        self.outputs[name] = store.ref(path, self.root)
        return path

    def load(self, name, schema=None):
        path = self.root / f"{name}.json"
        obj = store.load(path, schema=schema)
        self.inputs[name] = store.ref(path, self.root)
        return obj

    def load_prov(self, name):
        path = self.root / f"{name}.json"
        obj, prov = store.load_with_provenance(path)
        self.inputs[name] = store.ref(path, self.root)
        return obj, prov

    def csv(self, name, header, rows):
        buf = io.StringIO(newline="")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([store._num(v) if isinstance(v, (float, np.floating)) else v for v in row])
        path = self.root / f"{name}.csv"
        store.atomic_write(path, buf.getvalue())
        self.outputs[name] = store.ref(path, self.root)

    def finish(self, report):
        path = self.root / f"{self.command.replace(' ', '-')}-report.json"
        store.atomic_write(path, store.dumps(report))
        self.outputs["report"] = store.ref(path, self.root)
        mpath = self.root / "manifest.json"
        if mpath.exists():
            manifest = store.load(mpath, schema="manifest/v1")
        else:
            manifest = store.Manifest(notes="hitchlab run")
        manifest.stages = [s for s in manifest.stages if s.name != self.command]
        manifest.add(self.command, self.inputs, self.outputs)
        manifest.tolerances = dict(sorted({**manifest.tolerances, **self.cfg.tol}.items()))
        manifest.created = timestamp(self.cfg)
        store.save(manifest, mpath)
        print_report(report)
        failed = [c["name"] for c in report.get("checks", []) if not c["pass"]]
        if failed:
            raise ToleranceFailure(", ".join(failed))


def timestamp(cfg):
    if cfg.serial and "SOURCE_DATE_EPOCH" not in os.environ:
        return "1970-01-01T00:00:00Z"
    return store.timestamp()


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{v:.6g}"
    return str(v)


def print_report(report):
    out = sys.stdout
    out.write(f"== {report['command']} ==\n")
    for k, v in report.items():
        if k in ("command", "checks", "config", "info", "tolerances"):
            continue
        out.write(f"{k}: {_fmt(v)}\n")
    for k, v in report.get("info", {}).items():
        out.write(f"{k}: {_fmt(v)}\n")
    for c in report.get("checks", []):
        status = "PASS" if c["pass"] else "FAIL"
        out.write(f"[{status}] {c['name']}: {_fmt(c['value'])} (tol {_fmt(c['tol'])})\n")
    tol = report.get("tolerances")
    if tol:
        out.write("tolerances: " + ", ".join(f"{k}={_fmt(v)}" for k, v in sorted(tol.items())) + "\n")


def _report(cmd, cfg, **kw):
    return {"command": cmd, "config": cfg.as_dict(), "tolerances": cfg.tol, **kw}


def _mesh_rep(sess, cfg):
    """Upstream mesh and rep from the output directory when present, else built."""
    root = sess.root
    if (root / "surface.json").exists() and (root / "rep.json").exists():
        mesh = sess.load("surface", "surface/v1")
        r = sess.load("rep", "rep/v1")
        if mesh.genus == cfg.genus and mesh.refinement_level == cfg.refine and r.genus == cfg.genus:
            return mesh, r
    mesh, r = pipeline.setup(cfg)
    sess.save("surface", mesh)
    sess.save("rep", r)
    return mesh, r


# --- commands ---------------------------------------------------------------


def cmd_surface_build(cfg, args):
    from .surface import build_genus

    sess = Session(cfg, "surface build")
    mesh = build_genus(cfg.genus, cfg.refine)
    sess.save("surface", mesh)
    rep_ = _report(
        "surface build",
        cfg,
        counts={"V": mesh.n_vertices, "E": mesh.n_edges, "F": mesh.n_faces},
        euler_characteristic=mesh.euler_characteristic(),
        total_area=mesh.total_area(),
        mean_edge_length=mesh.mean_edge_length(),
        clamped_fraction=mesh.clamped_fraction,
        checks=[
            pipeline.check("total area error", abs(mesh.total_area() - 4 * np.pi * (cfg.genus - 1)), 1e-8),
        ],
    )
    sess.finish(rep_)


def cmd_rep_fuchsian(cfg, args):
    sess = Session(cfg, "rep fuchsian")
    r = rep.fuchsian_rep(cfg.genus)
    sess.save("rep", r)
    sess.finish(
        _report(
            "rep fuchsian",
            cfg,
            euler_class=int(r.euler_class),
            irreducible=bool(r.irreducible_flag),
            checks=[pipeline.check("relator residual", r.relator_residual(), cfg.tol["relator"])],
        )
    )


def cmd_rep_euler(cfg, args):
    sess = Session(cfg, "rep euler")
    r = sess.load("rep", "rep/v1") if args.rep is None else store.load(args.rep, schema="rep/v1")
    e = rep.euler_class(r)
    bound = 2 * r.genus - 2
    sess.finish(
        _report(
            "rep euler",
            cfg,
            euler_class=e,
            checks=[pipeline.check("Milnor-Wood bound", abs(e), bound)],
        )
    )


def cmd_dec_kernel(cfg, args):
    sess = Session(cfg, "dec kernel")
    mesh, r = _mesh_rep(sess, cfg)
    op = dec.assemble_dirac(r, mesh, cfg.aux)
    k = dec.kernel_basis(op, gap_threshold=cfg.tol["gap_ratio"])
    sess.save("kernel", k)
    sess.csv("spectrum", ["index", "singular_value"], enumerate(k.singular_values))
    sess.finish(
        _report(
            "dec kernel",
            cfg,
            kernel_dim=k.dim,
            gap_ratio=k.gap_ratio,
            max_residual=float(k.residuals.max()),
            checks=[
                pipeline.check("kernel dim", k.dim, 6 * cfg.genus - 6, ok=k.dim == 6 * cfg.genus - 6),
                pipeline.check("gap ratio", k.gap_ratio, cfg.tol["gap_ratio"], kind="min"),
            ],
        )
    )


def cmd_dec_cohomology(cfg, args):
    sess = Session(cfg, "dec cohomology")
    mesh, r = _mesh_rep(sess, cfg)
    c = dec.cohomology_report(r, mesh, cfg.aux, gap_threshold=cfg.tol["gap_ratio"])
    expected = (0, 6 * cfg.genus - 6, 0, 6 * cfg.genus - 6)
    print(c.as_tuple())
    sess.finish(
        _report(
            "dec cohomology",
            cfg,
            h=list(c.as_tuple()),
            gaps=[float(x) for x in c.gaps],
            checks=[pipeline.check("(h0, h1, h2, index)", str(c.as_tuple()), str(expected), ok=c.as_tuple() == expected)],
        )
    )


def _assemble(cfg, sess, mesh, r):
    eta = pipeline.class_eta(cfg, r, mesh)
    profile = pipeline.gauge_profile(cfg, mesh)
    dreibein = spacetime.assemble_dreibein(r, mesh, eta, profile, cfg.times)
    return eta, dreibein, spacetime.assemble_metric(r, mesh, dreibein)


def _cone_rows(cfg, r, mesh, metric):
    gtt, gti, gij = spacetime.cone_metric_entries(r, mesh, cfg.times)
    rows = []
    for k, t in enumerate(cfg.times):
        g = metric.gram[k]
        rows.append(
            (
                float(t),
                float(np.abs(g[:, 2, 2] - gtt[k]).max()),
                float(np.abs(g[:, 2, :2] - gti[k]).max()),
                float(np.abs(g[:, :2, :2] - gij[k]).max()),
                float(np.abs(g[:, 2, :2]).max()),
            )
        )
    return rows


CONE_HEADER = ["t", "gtt_error", "gti_error_closed_form", "gij_error", "gti_abs"]


def cmd_spacetime_assemble(cfg, args):
    sess = Session(cfg, "spacetime assemble")
    mesh, r = _mesh_rep(sess, cfg)
    eta, dreibein, metric = _assemble(cfg, sess, mesh, r)
    sess.save("eta", dec.Cochain(1, eta))
    sess.save("metric", metric)
    sess.csv("mask", ["t", "masked_fraction"], zip(cfg.times, metric.masked_fraction_per_time()))
    spatial, evolution = spacetime.cartan_residual(r, mesh, dreibein, cfg.aux)
    kw = {}
    if cfg.profile == "linear-cone" and cfg.coeffs is None:
        rows = _cone_rows(cfg, r, mesh, metric)
        sess.csv("cone_entries", CONE_HEADER, rows)
        kw["cone_max_error"] = max(max(row[1:4]) for row in rows)
    sess.finish(
        _report(
            "spacetime assemble",
            cfg,
            masked_fraction=metric.masked_fraction(),
            signature=str(metric.signature_tally()),
            spatial_residual=float(spatial.max()),
            evolution_residual=float(evolution.max()),
            **kw,
            checks=[pipeline.check("spatial Cartan residual", float(spatial.max()), cfg.tol["verify"])],
        )
    )


def cmd_spacetime_verify(cfg, args):
    sess = Session(cfg, "spacetime verify")
    mesh = sess.load("surface", "surface/v1")
    r = sess.load("rep", "rep/v1")
    eta = sess.load("eta", "cochain/v1")
    metric, prov = sess.load_prov("metric")
    stored = pipeline.RunConfig(**{**prov["config"], "out": cfg.out, "serial": cfg.serial, "tolerances": cfg.tolerances})
    profile = pipeline.gauge_profile(stored, mesh)
    dreibein = spacetime.assemble_dreibein(r, mesh, eta.values, profile, metric.times)
    rebuilt = spacetime.assemble_metric(r, mesh, dreibein)
    checks = [
        pipeline.check(
            "stored metric reproduced",
            float(np.abs(rebuilt.gram - metric.gram).max()),
            0.0,
            ok=np.array_equal(rebuilt.gram, metric.gram),
        )
    ]
    flat = spacetime.verify_metric(r, mesh, dreibein, metric, tol=cfg.tol["verify"], aux=cfg.aux)
    if flat.checks_run:
        checks += [
            pipeline.check("compatibility", flat.compatibility, cfg.tol["verify"]),
            pipeline.check("flatness", max(flat.face_flatness, flat.star_flatness), cfg.tol["verify"]),
        ]
    kw = {}
    if stored.profile == "linear-cone" and stored.coeffs is None:
        rows = _cone_rows(stored, r, mesh, metric)
        sess.csv("cone_entries", CONE_HEADER, rows)
        print(" ".join(f"{h:>22}" for h in CONE_HEADER))
        for row in rows:
            print(" ".join(f"{v:22.6e}" for v in row))
        err = max(max(row[1:4]) for row in rows)
        checks.append(pipeline.check("cone entries vs closed form", err, cfg.tol["cone"]))
        # the literal cone -dt^2 + t^2 gamma has no cross term
        checks.append(pipeline.check("cone cross term g_ti", max(row[4] for row in rows), cfg.tol["cone"]))
    sess.finish(
        _report(
            "spacetime verify",
            cfg,
            summary=flat.summary(),
            masked_fraction=flat.masked_fraction,
            **kw,
            checks=checks,
        )
    )


def cmd_conformal_induce(cfg, args):
    sess = Session(cfg, "conformal induce")
    mesh, r = _mesh_rep(sess, cfg)
    if cfg.coeffs is not None:
        eta, source = pipeline.class_eta(cfg, r, mesh), "coefficients"
    else:
        k = dec.kernel_basis(dec.assemble_dirac(r, mesh, cfg.aux), gap_threshold=cfg.tol["gap_ratio"])
        eta, source, _ = pipeline.select_regular(r, mesh, k)
    reg = conformal.regularity(eta, mesh, r)
    if not reg.regular:
        sess.finish(
            _report(
                "conformal induce",
                cfg,
                source=source,
                checks=[pipeline.check("regular", reg.min_eigenvalue, reg.eps_reg, kind="min")],
            )
        )
        return
    cls = conformal.induced_class(eta, mesh, r, source=source)
    ref = conformal.mesh_class(mesh)
    dil = conformal.dilatation(ref, cls)
    sess.save("conformal", cls)
    sess.csv("dilatation", ["face", "log_K"], enumerate(dil))
    d = conformal.class_distance(ref, cls)
    sess.finish(
        _report(
            "conformal induce",
            cfg,
            source=source,
            min_eigenvalue=reg.min_eigenvalue,
            class_distance=d,
            checks=[pipeline.check("class distance", d, cfg.tol["class_distance"])],
        )
    )


def cmd_hitchin_solve(cfg, args):
    sess = Session(cfg, "hitchin solve")
    mesh, r = _mesh_rep(sess, cfg)
    fmap = hitchin.harmonic_map(r, mesh, tol=cfg.tol["grad"])
    sess.save("map", fmap)
    sess.csv("energy", ["iteration", "energy"], enumerate(fmap.history))
    sess.finish(
        _report(
            "hitchin solve",
            cfg,
            energy=fmap.energy,
            iterations=fmap.iterations,
            backend=fmap.backend,
            max_displacement=float(fmap.displacement().max()),
            checks=[pipeline.check("gradient norm", fmap.grad_norm, cfg.tol["grad"])],
        )
    )


def cmd_hitchin_extract(cfg, args):
    sess = Session(cfg, "hitchin extract")
    mesh = sess.load("surface", "surface/v1")
    r = sess.load("rep", "rep/v1")
    fmap = sess.load("map", "map/v1")
    pair = hitchin.extract_pair(r, mesh, fmap)
    sess.save("pair", pair)
    res = hitchin.residuals(pair, mesh)
    tol = cfg.tol["residual"]
    sess.finish(
        _report(
            "hitchin extract",
            cfg,
            component=pair.component,
            w2=pair.w2,
            closure=res.closure,
            codifferential=res.codiff,
            checks=[
                pipeline.check("r1", res.r1, tol),
                pipeline.check("r2", res.r2, tol),
                pipeline.check("hopf", res.hopf, tol),
            ],
        )
    )


def cmd_roundtrip(cfg, args):
    sess = Session(cfg, "roundtrip")
    report, artifacts, tables = pipeline.roundtrip(cfg)
    for name, obj in artifacts.items():
        sess.save(name, obj)
    for name, (header, rows) in tables.items():
        sess.csv(name, header, rows)
    sess.finish(report)


# --- argument parsing -------------------------------------------------------


def _tol_pair(s):
    k, _, v = s.partition("=")
    if not v:
        raise argparse.ArgumentTypeError("expected KEY=VALUE")
    return k, float(v)


def _common(p):
    p.add_argument("--genus", type=int, help="surface genus (>= 2)")
    p.add_argument("--refine", type=int, help="refinement level")
    p.add_argument("--out", help="output directory")
    p.add_argument("--serial", action="store_true", default=None, help="single-threaded, bit-reproducible")
    p.add_argument("--aux", choices=dec.AUX_METRICS, help="auxiliary fiber metric")
    p.add_argument("--tol", type=_tol_pair, action="append", default=[], metavar="KEY=VALUE",
                   help="override a tolerance (keys: " + ", ".join(pipeline.TOLERANCES) + ")")
    p.add_argument("--config", help="JSON file with run-config fields (flags override it)")


def _time(p):
    p.add_argument("--t0", type=float)
    p.add_argument("--t1", type=float)
    p.add_argument("--n-times", type=int, dest="n_times")
    p.add_argument("--profile", choices=("zero", "linear-cone", "samples"))
    p.add_argument("--samples", help=".npy array of gauge samples, shape (N, V, 3)")
    p.add_argument("--coeffs", type=float, nargs="+", help="kernel coefficients a_1 .. a_{6g-6}")


COMMANDS = {
    ("surface", "build"): (cmd_surface_build, False),
    ("rep", "fuchsian"): (cmd_rep_fuchsian, False),
    ("rep", "euler"): (cmd_rep_euler, False),
    ("dec", "kernel"): (cmd_dec_kernel, False),
    ("dec", "cohomology"): (cmd_dec_cohomology, False),
    ("spacetime", "assemble"): (cmd_spacetime_assemble, True),
    ("spacetime", "verify"): (cmd_spacetime_verify, True),
    ("conformal", "induce"): (cmd_conformal_induce, True),
    ("hitchin", "solve"): (cmd_hitchin_solve, False),
    ("hitchin", "extract"): (cmd_hitchin_extract, False),
    ("roundtrip", None): (cmd_roundtrip, True),
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hitchlab", description=__doc__.splitlines()[0], epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    top = parser.add_subparsers(dest="group", required=True)
    groups = {}
    for (group, sub), (fn, timed) in COMMANDS.items():
        if sub is None:
            p = top.add_parser(group, epilog=EPILOG)
        else:
            if group not in groups:
                groups[group] = top.add_parser(group).add_subparsers(dest="sub", required=True)
            p = groups[group].add_parser(sub, epilog=EPILOG)
        _common(p)
        if timed:
            _time(p)
        if (group, sub) == ("rep", "euler"):
            p.add_argument("--rep", help="rep/v1 file (default: <out>/rep.json)")
        p.set_defaults(fn=fn)
    return parser


def make_config(args):
    base = {}
    if args.config:
        doc = json.loads(Path(args.config).read_text())
        base = doc.get("payload", doc).get("config", doc.get("payload", doc))
    fields = pipeline.RunConfig.__dataclass_fields__
    cfg = {k: v for k, v in base.items() if k in fields}
    for k in fields:
        v = getattr(args, k, None)
        if v is not None and k != "tolerances":
            cfg[k] = v
    tols = dict(cfg.get("tolerances", {}))
    tols.update(dict(args.tol))
    cfg["tolerances"] = tols
    cfg.setdefault("out", os.environ.get("HITCHLAB_OUT", "hitchlab-out"))
    return pipeline.RunConfig(**cfg)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = make_config(args)
    except (pipeline.UsageError, TypeError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return EXIT_MISSING
    try:
        with pipeline.deterministic(cfg.serial):
            args.fn(cfg, args)
    except pipeline.UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (store.ResolutionError, FileNotFoundError) as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except ToleranceFailure as exc:
        print(f"tolerance failure: {exc}", file=sys.stderr)
        return EXIT_TOLERANCE
    except (dec.AmbiguousKernelError, conformal.NotRegularError, hitchin.DivergentMapError) as exc:
        print(f"tolerance failure: {exc}", file=sys.stderr)
        return EXIT_TOLERANCE
    except (store.StoreError, GeometryError, ValueError) as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
