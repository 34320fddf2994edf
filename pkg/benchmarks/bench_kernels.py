"""Time the harmonic-map energy/gradient kernel on both backends.

    python benchmarks/bench_kernels.py --genus 2 --refine 3 --repeat 20
"""

import argparse
import time

import numpy as np

from hitchlab import kernels, rep, surface
from hitchlab.hyperbolic import E3, exp_map


def _setup(genus, refine, seed=0):
    mesh = surface.build_genus(genus, refine)
    r = rep.fuchsian_rep(mesh)
    pull = rep.pullbacks(r, mesh)
    rng = np.random.default_rng(seed)
    v = 0.1 * rng.standard_normal((mesh.n_vertices, 3))
    v[:, 2] = 0
    x = exp_map(np.tile(E3, (mesh.n_vertices, 1)), v)
    return mesh, (x, pull, mesh.edges[:, 0], mesh.edges[:, 1], mesh.edge_weight)


def bench(genus, refine, repeat):
    mesh, args = _setup(genus, refine)
    out = {}
    for name in kernels.available():
        kernels.harmonic_energy_grad(*args, backend=name)  # warm up
        t = time.perf_counter()
        for _ in range(repeat):
            e, g = kernels.harmonic_energy_grad(*args, backend=name)
        out[name] = ((time.perf_counter() - t) / repeat, float(e), g)
    return mesh, out


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--genus", type=int, default=2)
    p.add_argument("--refine", type=int, nargs="+", default=[1, 2, 3])
    p.add_argument("--repeat", type=int, default=20)
    a = p.parse_args()
    print(f"{'g':>2} {'r':>2} {'E':>7} {'backend':>8} {'ms/call':>10} {'speedup':>8} {'max |dg|':>10}")
    for r in a.refine:
        mesh, out = bench(a.genus, r, a.repeat)
        base = out["python"]
        for name, (dt, e, g) in out.items():
            dg = float(np.abs(g - base[2]).max())
            print(f"{a.genus:>2} {r:>2} {mesh.n_edges:>7} {name:>8} {1e3 * dt:>10.3f} {base[0] / dt:>8.1f} {dg:>10.2e}")


if __name__ == "__main__":
    main()
