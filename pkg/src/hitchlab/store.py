"""Canonical JSON persistence for every artifact type, plus run manifests.

Each file is one document ``{"schema", "payload", "provenance"}`` written
with sorted keys, LF newlines and floats printed as ``%.17g``, so that
``save(load(save(x)))`` is byte-identical to ``save(x)`` and the sha256 of
the file is a stable content hash.  Arrays keep the canonical ordering of
the mesh (vertices ascending, edges by ``(src, tgt, word)``, faces by
sorted vertex triple).
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__

SCHEMAS = (
    "surface/v1",
    "rep/v1",
    "cochain/v1",
    "kernel/v1",
    "metric/v1",
    "conformal/v1",
    "map/v1",
    "pair/v1",
    "manifest/v1",
)


class StoreError(Exception):
    pass


class SchemaVersionError(StoreError):
    pass


class HashMismatchError(StoreError):
    pass


class InvariantError(StoreError):
    pass


class ResolutionError(StoreError):
    pass


# --- canonical text ---------------------------------------------------------


def _num(x):
    x = float(x)
    if not math.isfinite(x):
        raise StoreError("non-finite float cannot be stored")
    return "%.17g" % x


def _scalar(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if x is None:
        return "null"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return _num(x)
    if isinstance(x, str):
        return json.dumps(x, ensure_ascii=True)
    raise TypeError(f"cannot store {type(x).__name__}")


def _flat_list(x):
    return isinstance(x, (list, tuple)) and all(not isinstance(v, (list, tuple, dict)) for v in x)


def _dump(x, ind=0):
    pad = "  " * (ind + 1)
    if isinstance(x, np.ndarray):
        x = x.tolist()
    if isinstance(x, dict):
        if not x:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_dump(x[k], ind + 1)}" for k in sorted(x)]
        return "{\n" + ",\n".join(items) + "\n" + "  " * ind + "}"
    if isinstance(x, (list, tuple)):
        if _flat_list(x):
            return "[" + ", ".join(_scalar(v) for v in x) + "]"
        return "[\n" + ",\n".join(pad + _dump(v, ind + 1) for v in x) + "\n" + "  " * ind + "]"
    return _scalar(x)


def dumps(doc):
    return _dump(doc) + "\n"


def sha256_bytes(b):
    return hashlib.sha256(b).hexdigest()


def file_hash(path):
    return sha256_bytes(Path(path).read_bytes())


def atomic_write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return sha256_bytes(text.encode("utf-8"))


def provenance(**extra):
    out = {"package": "hitchlab", "version": __version__}
    out.update(extra)
    return out


# --- encoders ---------------------------------------------------------------


def _enc_surface(m):
    return {
        "genus": m.genus,
        "refinement_level": m.refinement_level,
        "generators": m.generators,
        "positions": m.positions,
        "edges": m.edges,
        "edge_words": [list(w) for w in m.edge_words],
        "faces": m.faces,
        "face_edges": m.face_edges,
        "face_signs": m.face_signs,
    }


def _dec_surface(p):
    from .surface import _canonical

    mesh = _canonical(
        p["genus"],
        p["generators"],
        p["positions"],
        p["edges"],
        [tuple(w) for w in p["edge_words"]],
        p["faces"],
        p["face_edges"],
        p["face_signs"],
        p["refinement_level"],
    )
    try:
        mesh.validate()
    except ValueError as exc:
        raise InvariantError(f"surface: {exc}") from exc
    return mesh


def _enc_rep(r):
    return {
        "genus": r.genus,
        "generators": r.generators,
        "euler_class": r.euler_class,
        "irreducible": r.irreducible_flag,
        "fuchsian": r.fuchsian,
        "label": r.provenance,
    }


def _dec_rep(p):
    from .rep import RELATOR_TOL, SurfaceRep, relator_residual

    gens = np.asarray(p["generators"], dtype=float)
    res = relator_residual(gens)
    if res > RELATOR_TOL:
        raise InvariantError(f"rep: relator residual {res:.3g} exceeds {RELATOR_TOL:g}")
    return SurfaceRep(
        genus=p["genus"],
        generators=gens,
        euler_class=p["euler_class"],
        irreducible_flag=p["irreducible"],
        provenance=p["label"],
        fuchsian=p["fuchsian"],
    )


def _enc_cochain(c):
    return {"degree": c.degree, "values": c.values}


def _dec_cochain(p):
    from .dec import Cochain

    return Cochain(p["degree"], np.asarray(p["values"], dtype=float).reshape(-1, 3))


def _enc_kernel(k):
    return {
        "vectors": k.vectors,
        "singular_values": k.singular_values,
        "gap_ratio": k.gap_ratio,
        "aux": k.aux,
        "residuals": k.residuals,
    }


def _dec_kernel(p):
    from .dec import KernelBasis

    vec = np.asarray(p["vectors"], dtype=float)
    return KernelBasis(
        vectors=vec.reshape(len(vec), -1, 3),
        singular_values=np.asarray(p["singular_values"], dtype=float),
        gap_ratio=float(p["gap_ratio"]),
        aux=p["aux"],
        residuals=np.asarray(p["residuals"], dtype=float).reshape(-1, 2),
    )


def _enc_metric(m):
    return {
        "times": m.times,
        "gram": m.gram,
        "frames": m.frames,
        "det": m.det,
        "mask": m.mask.astype(int),
        "signature": m.signature,
        "eps_sing": m.eps_sing,
    }


def _dec_metric(p):
    from .spacetime import SpacetimeMetric

    times = np.asarray(p["times"], dtype=float)
    n = len(times)
    return SpacetimeMetric(
        times=times,
        gram=np.asarray(p["gram"], dtype=float).reshape(n, -1, 3, 3),
        frames=np.asarray(p["frames"], dtype=float).reshape(n, -1, 3, 3),
        det=np.asarray(p["det"], dtype=float).reshape(n, -1),
        mask=np.asarray(p["mask"], dtype=int).reshape(n, -1).astype(bool),
        signature=np.asarray(p["signature"], dtype=np.int64).reshape(n, -1, 3),
        eps_sing=float(p["eps_sing"]),
    )


def _enc_conformal(c):
    return {"gram": c.gram, "area": c.area, "source": c.source}


def _dec_conformal(p):
    from .conformal import InducedConformalClass

    g = np.asarray(p["gram"], dtype=float).reshape(-1, 2, 2)
    det = np.linalg.det(g)
    if np.any(np.abs(det - 1.0) > 1e-9) or np.any(g[:, 0, 0] <= 0):
        raise InvariantError("conformal: gram matrices must be positive with unit determinant")
    return InducedConformalClass(g, np.asarray(p["area"], dtype=float), p["source"])


def _enc_map(f):
    return {
        "values": f.values,
        "energy": f.energy,
        "grad_norm": f.grad_norm,
        "iterations": f.iterations,
        "converged": f.converged,
        "history": f.history,
        "backend": f.backend,
    }


def _dec_map(p):
    from .hitchin import EquivariantMap
    from .hyperbolic import mdot

    v = np.asarray(p["values"], dtype=float).reshape(-1, 3)
    if np.any(np.abs(mdot(v, v) + 1.0) > 1e-12) or np.any(v[:, 2] <= 0):
        raise InvariantError("map: values off the upper hyperboloid sheet")
    return EquivariantMap(
        values=v,
        energy=float(p["energy"]),
        grad_norm=float(p["grad_norm"]),
        iterations=int(p["iterations"]),
        converged=bool(p["converged"]),
        history=np.asarray(p["history"], dtype=float),
        backend=p["backend"],
    )


def _enc_pair(q):
    return {
        "coords": q.coords,
        "frames": q.frames,
        "genus": q.genus,
        "w2": q.w2,
        "component": q.component,
    }


def _dec_pair(p):
    from .hitchin import HitchinPair

    if p["w2"] != 0:
        raise InvariantError("pair: only the w2 = 0 component is supported")
    return HitchinPair(
        coords=np.asarray(p["coords"], dtype=float).reshape(-1, 3),
        frames=np.asarray(p["frames"], dtype=float).reshape(-1, 3, 3),
        genus=int(p["genus"]),
        w2=int(p["w2"]),
    )


def _codecs():
    from .conformal import InducedConformalClass
    from .dec import Cochain, KernelBasis
    from .hitchin import EquivariantMap, HitchinPair
    from .rep import SurfaceRep
    from .spacetime import SpacetimeMetric
    from .surface import TriangulatedSurface

    return {
        "surface/v1": (TriangulatedSurface, _enc_surface, _dec_surface),
        "rep/v1": (SurfaceRep, _enc_rep, _dec_rep),
        "cochain/v1": (Cochain, _enc_cochain, _dec_cochain),
        "kernel/v1": (KernelBasis, _enc_kernel, _dec_kernel),
        "metric/v1": (SpacetimeMetric, _enc_metric, _dec_metric),
        "conformal/v1": (InducedConformalClass, _enc_conformal, _dec_conformal),
        "map/v1": (EquivariantMap, _enc_map, _dec_map),
        "pair/v1": (HitchinPair, _enc_pair, _dec_pair),
        "manifest/v1": (Manifest, _enc_manifest, _dec_manifest),
    }


def schema_of(obj):
    for name, (cls, _, _) in _codecs().items():
        if isinstance(obj, cls):
            return name
    raise TypeError(f"no schema for {type(obj).__name__}")


def to_document(obj, prov=None):
    schema = schema_of(obj)
    enc = _codecs()[schema][1]
    return {"schema": schema, "payload": enc(obj), "provenance": prov or provenance()}


def save(obj, path, prov=None):
    """Write ``obj`` canonically and atomically; returns the sha256 of the file."""
    return atomic_write(path, dumps(to_document(obj, prov)))


def read_document(path, expected_hash=None):
    path = Path(path)
    if not path.exists():
        raise ResolutionError(f"missing artifact {path}")
    raw = path.read_bytes()
    if expected_hash is not None and sha256_bytes(raw) != expected_hash:
        raise HashMismatchError(f"{path}: content hash differs from the recorded one")
    doc = json.loads(raw.decode("utf-8"))
    schema = doc.get("schema")
    if schema not in SCHEMAS:
        raise SchemaVersionError(f"{path}: unknown schema {schema!r}")
    return doc


def load(path, expected_hash=None, schema=None):
    """Read an artifact; invariants of the decoded object are re-checked."""
    doc = read_document(path, expected_hash)
    if schema is not None and doc["schema"] != schema:
        raise SchemaVersionError(f"{path}: expected {schema}, found {doc['schema']}")
    return _codecs()[doc["schema"]][2](doc["payload"])


def load_with_provenance(path, expected_hash=None):
    doc = read_document(path, expected_hash)
    return _codecs()[doc["schema"]][2](doc["payload"]), doc["provenance"]


# --- manifests --------------------------------------------------------------


def timestamp():
    """UTC ISO timestamp; ``SOURCE_DATE_EPOCH`` pins it for reproducible runs."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = int(epoch) if epoch is not None else int(time.time())
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t))


@dataclass
class Stage:
    name: str
    inputs: dict = field(default_factory=dict)  # label -> {"path", "sha256"}
    outputs: dict = field(default_factory=dict)


@dataclass
class Manifest:
    stages: list = field(default_factory=list)
    tolerances: dict = field(default_factory=dict)
    created: str = ""
    notes: str = ""
    schema_version: str = "manifest/v1"

    def add(self, name, inputs=None, outputs=None):
        st = Stage(name, dict(inputs or {}), dict(outputs or {}))
        self.stages.append(st)
        return st

    def artifacts(self):
        for st in self.stages:
            for label, ref in list(st.inputs.items()) + list(st.outputs.items()):
                yield st.name, label, ref


def _enc_manifest(m):
    return {
        "schema_version": m.schema_version,
        "stages": [{"name": s.name, "inputs": s.inputs, "outputs": s.outputs} for s in m.stages],
        "tolerances": m.tolerances,
        "created": m.created,
        "notes": m.notes,
    }


def _dec_manifest(p):
    if p.get("schema_version") not in SCHEMAS:
        raise SchemaVersionError(f"unknown manifest version {p.get('schema_version')!r}")
    return Manifest(
        stages=[Stage(s["name"], s["inputs"], s["outputs"]) for s in p["stages"]],
        tolerances=p["tolerances"],
        created=p["created"],
        notes=p["notes"],
        schema_version=p["schema_version"],
    )


def ref(path, root=None):
    """Reference to a stored file: path relative to ``root`` plus its hash."""
    path = Path(path)
    rel = os.path.relpath(path, root) if root is not None else str(path)
    return {"path": Path(rel).as_posix(), "sha256": file_hash(path)}


def resolve(manifest, root):
    """Check every referenced artifact exists with the recorded hash.

    Returns the list of resolved paths; raises ``ResolutionError`` or
    ``HashMismatchError``.
    """
    out = []
    for stage, label, r in manifest.artifacts():
        p = Path(root) / r["path"]
        if not p.exists():
            raise ResolutionError(f"stage {stage!r}: {label} -> {r['path']} does not exist")
        if file_hash(p) != r["sha256"]:
            raise HashMismatchError(f"stage {stage!r}: {label} -> {r['path']} hash mismatch")
        out.append(p)
    return out
