import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hitchlab import dec, rep
from hitchlab.hyperbolic import inv


@pytest.mark.parametrize("level", [0, 1, 2])
def test_d1_d0_vanishes_for_flat(mesh_cache, level):
    m = mesh_cache(2, level)
    cx = dec.bundle_complex(rep.fuchsian_rep(m), m)
    prod = cx.D1 @ cx.D0
    assert abs(prod).max() < 1e-12 * max(1.0, abs(cx.D0).max() ** 2)


def test_d1_d0_detects_curvature(g2r1, fuchsian2, rng):
    t = rep.transports(fuchsian2, g2r1).copy()
    t[5] = t[5] @ rep.random_so21(rng, 0.2)
    cx = dec.bundle_complex(t, g2r1)
    assert abs(cx.D1 @ cx.D0).max() > 1e-3
    with pytest.raises(dec.NotFlatError):
        dec.assemble_dirac(t, g2r1)


@given(st.integers(0, 2**31 - 1))
def test_d0_formula(seed):
    from hitchlab.surface import build_genus

    m = build_genus(2, 0)
    r = rep.fuchsian_rep(m)
    u = np.random.default_rng(seed).standard_normal((m.n_vertices, 3))
    t = rep.transports(r, m)
    src, tgt = m.edges.T
    ref = np.einsum("eij,ej->ei", inv(t), u[tgt]) - u[src]
    assert np.allclose(dec.d0(r, m, u).values, ref, atol=1e-12)


def test_constant_section_is_closed_for_trivial(g2r1):
    # a constant vector in the chart, written in the adapted vertex frames
    u = rep.to_adapted(g2r1, np.tile([0.3, -1.0, 2.0], (g2r1.n_vertices, 1)))
    assert np.abs(dec.d0(rep.trivial_rep(2), g2r1, u).values).max() < 1e-13


@pytest.mark.parametrize(
    "g, level, aux", [(2, 1, "chart"), (2, 2, "chart"), (3, 1, "chart"), (2, 1, "adapted"), (3, 1, "adapted")]
)
def test_fuchsian_cohomology(mesh_cache, g, level, aux):
    m = mesh_cache(g, level)
    c = dec.cohomology_report(rep.fuchsian_rep(m), m, aux)
    assert c.as_tuple() == (0, 6 * g - 6, 0, 6 * g - 6)
    assert c.index_ok
    assert min(c.gaps) > 1e2


def test_trivial_cohomology_is_three_copies_of_de_rham(g2r1):
    # H^*(S; R^3) for genus 2: Betti numbers (1, 4, 1) times 3
    c = dec.cohomology_report(rep.trivial_rep(2), g2r1)
    assert c.as_tuple() == (3, 12, 3, 6)


def test_kernel_basis_orthonormal_and_harmonic(g2r2):
    r = rep.fuchsian_rep(g2r2)
    op = dec.assemble_dirac(r, g2r2)
    k = dec.kernel_basis(op)
    assert k.dim == 6
    gram = np.array([[op.complex.inner(1, a, b) for b in k.vectors] for a in k.vectors])
    assert np.allclose(gram, np.eye(6), atol=1e-9)
    scale = dec.operator_scale(op.scaled)
    assert k.residuals.max() < 1e-8 * scale
    assert k.gap_ratio > 1e2


def test_ambiguous_kernel(g2r1, fuchsian2):
    op = dec.assemble_dirac(fuchsian2, g2r1)
    with pytest.raises(dec.AmbiguousKernelError):
        dec.kernel_basis(op, gap_threshold=1e30)


def test_combine_checks_length(g2r1, fuchsian2):
    k = dec.kernel_basis(dec.assemble_dirac(fuchsian2, g2r1))
    with pytest.raises(ValueError):
        k.combine(np.ones(3))


@pytest.mark.parametrize("seed", range(3))
def test_coulomb_recovers_harmonic_class(g2r1, fuchsian2, seed):
    rng = np.random.default_rng(seed)
    k = dec.kernel_basis(dec.assemble_dirac(fuchsian2, g2r1))
    eta = k.combine(rng.standard_normal(k.dim)).values
    v = rng.standard_normal((g2r1.n_vertices, 3))
    xi = eta + dec.d0(fuchsian2, g2r1, v).values
    proj, gauge = dec.coulomb_gauge(fuchsian2, g2r1, xi)
    assert np.abs(proj.values - eta).max() < 1e-9
    assert np.abs(gauge.values + v).max() < 1e-8
    assert dec.coulomb_residual(fuchsian2, g2r1, proj) < 1e-10


def test_coulomb_singular_for_trivial(g2r1):
    with pytest.raises(dec.SingularLaplacianError):
        dec.coulomb_gauge(rep.trivial_rep(2), g2r1, np.zeros((g2r1.n_edges, 3)))


def test_cochain_arithmetic():
    a = dec.Cochain(1, np.ones((4, 3)))
    b = 2 * a - a
    assert np.array_equal(b.values, a.values)
    with pytest.raises(ValueError):
        dec.Cochain(3, np.ones((4, 3)))
    with pytest.raises(ValueError):
        dec.Cochain(1, np.ones((4, 2)))


def _d1_brute(pull, mesh, omega):
    """Face values by walking each face; independent of the sparse assembly."""
    out = np.zeros((mesh.n_faces, 3))
    for f in range(mesh.n_faces):
        acc = np.eye(3)
        for s in range(3):
            e, sg = mesh.face_edges[f, s], mesh.face_signs[f, s]
            # side matrix moves vectors from corner s+1 into the frame at corner s
            side = pull[e] if sg > 0 else np.linalg.inv(pull[e])
            val = omega[e] if sg > 0 else -side @ omega[e]
            out[f] += acc @ val
            acc = acc @ side
    return out


def test_d1_matches_brute_force(g2r2):
    r = rep.fuchsian_rep(g2r2)
    pull = dec._pullbacks(r, g2r2)
    omega = np.random.default_rng(1).standard_normal((g2r2.n_edges, 3))
    assert np.abs(dec.d1(r, g2r2, omega).values - _d1_brute(pull, g2r2, omega)).max() < 1e-12


def test_d0_of_fixed_chart_point(g2r1, fuchsian2):
    # a fixed point of the chart, written in adapted frames, is parallel across
    # interior edges and jumps by the deck transformation across polygon sides
    p = np.array([0.2, -0.1, np.sqrt(1.05)])
    u = rep.to_adapted(g2r1, np.tile(p, (g2r1.n_vertices, 1)))
    du = np.abs(dec.d0(fuchsian2, g2r1, u).values).max(axis=1)
    # edge words that are trivial in the group (possibly not as words) act as I
    interior = np.abs(g2r1.deck() - np.eye(3)).max(axis=(1, 2)) < 1e-12
    assert du[interior].max() < 1e-13
    assert du[~interior].min() > 1e-3


def test_zero_inputs(g2r1, fuchsian2):
    assert not np.any(dec.d0(fuchsian2, g2r1, np.zeros((g2r1.n_vertices, 3))).values)
    assert not np.any(dec.d1(fuchsian2, g2r1, np.zeros((g2r1.n_edges, 3))).values)


def test_dirac_second_block_on_exact_forms(g2r2):
    r = rep.fuchsian_rep(g2r2)
    op = dec.assemble_dirac(r, g2r2)
    u = np.random.default_rng(2).standard_normal((g2r2.n_vertices, 3))
    out = op.apply(dec.d0(r, g2r2, u))
    assert np.abs(out[3 * g2r2.n_vertices:]).max() < 1e-12


def test_adjoint_identity(g2r1, fuchsian2):
    cx = dec.bundle_complex(fuchsian2, g2r1)
    rng = np.random.default_rng(3)
    for _ in range(20):
        u = rng.standard_normal(3 * g2r1.n_vertices)
        w = rng.standard_normal(3 * g2r1.n_edges)
        lhs = cx.inner(1, cx.D0 @ u, w)
        rhs = u @ (cx.D0.T @ (cx.mass(1) @ w))
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("scale", [1e-2, 1e2])
def test_kernel_dim_under_mass_scaling(g2r2, scale):
    r = rep.fuchsian_rep(g2r2)
    assert dec.kernel_basis(dec.assemble_dirac(r, g2r2, mass_scale=scale)).dim == 6


def test_kernel_dim_stable_across_refinement(mesh_cache):
    dims = []
    for level in (1, 2, 3):
        m = mesh_cache(2, level)
        dims.append(dec.kernel_basis(dec.assemble_dirac(rep.fuchsian_rep(m), m)).dim)
    assert dims == [6, 6, 6]


def test_index_count_genus_four():
    from hitchlab.surface import build_genus

    m = build_genus(4, 0)
    assert 3 * m.n_edges - 3 * m.n_vertices - 3 * m.n_faces == 18
    c = dec.cohomology_report(rep.fuchsian_rep(m), build_genus(4, 1))
    assert c.index == 18


def test_trivial_h0_at_base_level(mesh_cache):
    m = mesh_cache(2, 0)
    cx = dec.bundle_complex(rep.trivial_rep(2), m)
    # dense nullspace oracle for d0
    s = np.linalg.svd(cx.D0.toarray(), compute_uv=False)
    assert np.sum(s < 1e-10 * s.max()) == 3
    assert dec.cohomology_report(rep.trivial_rep(2), m).h0 == 3


def test_coulomb_against_dense_solve(mesh_cache):
    m = mesh_cache(2, 0)
    r = rep.fuchsian_rep(m)
    cx = dec.bundle_complex(r, m)
    xi = np.random.default_rng(4).standard_normal((m.n_edges, 3))
    lap = (cx.D0.T @ cx.mass(1) @ cx.D0).toarray()
    v = np.linalg.solve(lap, -(cx.D0.T @ (cx.mass(1) @ xi.ravel())))
    proj, gauge = dec.coulomb_gauge(r, m, xi)
    assert np.allclose(gauge.values.ravel(), v, atol=1e-10)
    assert dec.coulomb_residual(r, m, proj) < 1e-8
