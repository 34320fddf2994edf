"""Discrete flat SO(2,1) connections on closed hyperbolic surfaces: cohomology,
spacetime dreibeins, induced conformal classes and Hitchin pairs."""

__version__ = "0.1.0"

from .surface import build_genus, refine, regular_polygon  # noqa: E402
from .rep import SurfaceRep, euler_class, fuchsian_rep, trivial_rep  # noqa: E402
from .dec import cohomology_report, coulomb_gauge, kernel_basis, assemble_dirac  # noqa: E402
from .hitchin import compose_flat, extract_pair, harmonic_map, sigma  # noqa: E402

__all__ = [
    "build_genus",
    "refine",
    "regular_polygon",
    "SurfaceRep",
    "euler_class",
    "fuchsian_rep",
    "trivial_rep",
    "cohomology_report",
    "coulomb_gauge",
    "kernel_basis",
    "assemble_dirac",
    "compose_flat",
    "extract_pair",
    "harmonic_map",
    "sigma",
]
