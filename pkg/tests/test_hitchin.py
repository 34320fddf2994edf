import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hitchlab import hitchin, rep, words
from hitchlab import hyperbolic as hy


def random_map(mesh, rng, scale=0.3):
    v = scale * rng.standard_normal((mesh.n_vertices, 3))
    v[:, 2] = 0.0  # tangent at E3
    return hy.project(hy.exp_map(np.tile(hy.E3, (mesh.n_vertices, 1)), v))


def parabolic_rep():
    p = hy.so21_from_psl2(np.array([[1.0, 0.7], [0.0, 1.0]]))
    q = hy.so21_from_psl2(np.array([[1.0, -0.4], [0.0, 1.0]]))
    return rep.make_rep(np.stack([p, q, p @ q, q]))


def test_inclusion_energy_closed_form(g2r1, fuchsian2):
    # the inclusion is E3 in adapted frames; each edge contributes w l^2 / 2
    x = np.tile(hy.E3, (g2r1.n_vertices, 1))
    ref = 0.5 * np.sum(g2r1.edge_weight * g2r1.edge_length**2)
    assert float(hitchin.energy(fuchsian2, g2r1, x)) == pytest.approx(ref, rel=1e-13)


@pytest.mark.parametrize("seed", range(5))
def test_gradient_matches_finite_differences(g2r1, fuchsian2, seed):
    rng = np.random.default_rng(seed)
    x = random_map(g2r1, rng)
    fd, an = hitchin.fd_gradient_check(fuchsian2, g2r1, x, rng)
    assert fd == pytest.approx(an, rel=1e-6, abs=1e-9)


def test_converges_monotonically(solved_r1):
    fmap, _ = solved_r1
    assert fmap.converged and fmap.grad_norm <= hitchin.GRAD_TOL
    assert np.all(np.diff(fmap.history) < 0)


def test_minimizer_independent_of_start(g2r1, fuchsian2, solved_r1, rng):
    fmap, _ = solved_r1
    other = hitchin.harmonic_map(fuchsian2, g2r1, init=random_map(g2r1, rng, 0.5))
    assert other.converged
    assert np.max(hy.dist(other.values, fmap.values)) < 1e-8
    assert other.energy == pytest.approx(fmap.energy, rel=1e-12)


@pytest.mark.parametrize("seed", range(3))
def test_conjugation_equivariance(g2r1, fuchsian2, solved_r1, seed):
    fmap, _ = solved_r1
    g = rep.random_so21(np.random.default_rng(seed), 0.8)
    conj = rep.conjugate(fuchsian2, g)
    cmap = hitchin.harmonic_map(conj, g2r1)
    assert cmap.energy == pytest.approx(fmap.energy, rel=1e-10)
    expected = hy.project(fmap.chart_values(g2r1) @ g.T)
    assert np.max(hy.dist(cmap.chart_values(g2r1), expected)) < 1e-8


def test_trivial_rep_collapses(g2r1):
    fm = hitchin.harmonic_map(rep.trivial_rep(2), g2r1)
    assert fm.energy < 1e-14


def test_parabolic_rep_escapes(g2r1):
    r = parabolic_rep()
    assert not r.irreducible_flag
    with pytest.raises(hitchin.DivergentMapError):
        hitchin.harmonic_map(r, g2r1)


def test_recomposed_connection_is_flat(g2r1, solved_r1):
    _, pair = solved_r1
    _, curv = rep.face_curvature(hitchin.compose_flat(pair), g2r1)
    assert curv < 1e-10


@pytest.mark.parametrize("word", hitchin.TEST_WORDS)
def test_recomposed_characters(g2r1, fuchsian2, solved_r1, word):
    _, pair = solved_r1
    ref = rep.character(fuchsian2, word)
    assert hitchin.field_character(hitchin.compose_flat(pair), g2r1, word) == pytest.approx(ref, rel=1e-9)
    sig = hitchin.field_character(hitchin.compose_flat(hitchin.sigma(pair)), g2r1, word)
    assert sig == pytest.approx(ref, rel=1e-9)


def test_gauge_does_not_change_characters(g2r1, fuchsian2, solved_r1):
    fmap, pair = solved_r1
    raw = hitchin.extract_pair(fuchsian2, g2r1, fmap, gauge=False)
    for w in ("A1", "A1 B1"):
        a = hitchin.field_character(hitchin.compose_flat(raw), g2r1, w)
        b = hitchin.field_character(hitchin.compose_flat(pair), g2r1, w)
        assert a == pytest.approx(b, rel=1e-10)
    # the Coulomb phases shrink the compact part
    assert np.abs(pair.a).max() < np.abs(raw.a).max()


def test_sigma_involution(solved_r1, g2r1):
    _, pair = solved_r1
    s = hitchin.sigma(pair)
    assert np.array_equal(hitchin.sigma(s).coords, pair.coords)
    assert np.array_equal(s.a, pair.a)
    r, rs = hitchin.residuals(pair, g2r1), hitchin.residuals(s, g2r1)
    assert rs.r1 == pytest.approx(r.r1, abs=1e-12) and rs.r2 == pytest.approx(r.r2, abs=1e-12)
    assert pair.component == "M_2" and pair.w2 == 0


def test_residuals_decrease_under_refinement(mesh_cache):
    out = []
    for level in (1, 2, 3):
        m = mesh_cache(2, level)
        r = rep.fuchsian_rep(m)
        out.append(hitchin.residuals(hitchin.extract_pair(r, m, hitchin.harmonic_map(r, m)), m))
    for key in ("r1", "r2", "closure"):
        vals = [getattr(x, key) for x in out]
        assert vals[0] > vals[1] > vals[2], key
    # codiff is the energy gradient, so it vanishes at the minimizer
    assert max(x.codiff for x in out) < 1e-8


def test_higgs_split(g2r1, solved_r1):
    _, pair = solved_r1
    from hitchlab.conformal import mesh_class

    phi, phib = hitchin.higgs_split(pair, g2r1)
    sides = pair.coords[g2r1.face_edges, 1:] * g2r1.face_signs[..., None]
    psi = np.stack([sides[:, 0], -sides[:, 2]], axis=-1)
    assert np.allclose(phi + phib, psi)
    eps = np.array([[0.0, -1.0], [1.0, 0.0]])
    jc = np.linalg.inv(mesh_class(g2r1, "hyperbolic").gram) @ eps
    assert np.allclose(phi @ jc, eps @ phi, atol=1e-12)
    assert np.allclose(phib @ jc, -eps @ phib, atol=1e-12)


@given(st.lists(st.floats(-2, 2), min_size=6, max_size=6))
def test_bracket_matches_commutator(c):
    x, y = np.array(c[:3]), np.array(c[3:])
    X, Y = hy.lie_from_coords(x), hy.lie_from_coords(y)
    assert np.allclose(hy.lie_from_coords(hitchin.bracket(x, y)), X @ Y - Y @ X, atol=1e-12)


def test_coulomb_phases_recover_exact_gradient(g2r1, rng):
    phi0 = rng.uniform(-1, 1, g2r1.n_vertices)
    s, t = g2r1.edges.T
    theta = hitchin._wrap(phi0[s] - phi0[t])
    phi = hitchin.coulomb_phases(theta, g2r1)
    assert np.abs(hitchin._wrap(theta + phi[t] - phi[s])).max() < 1e-10


@pytest.mark.parametrize("word", ["", "A1", "B2^-1", "A1 B1 A1^-1 B1^-1", "A1 B1 A2 B2"])
def test_loop_for_word(g2r1, word):
    loop = hitchin.loop_for_word(g2r1, word)
    dk = g2r1.deck()
    g = np.eye(3)
    v = 0
    for e, sgn in loop:
        src, tgt = g2r1.edges[e]
        assert v == (src if sgn > 0 else tgt)
        g = g @ (dk[e] if sgn > 0 else hy.inv(dk[e]))
        v = tgt if sgn > 0 else src
    assert v == 0
    target = words.evaluate(words.parse(word), g2r1.generators) if word else np.eye(3)
    p = g2r1.positions[0]
    assert hy.dist(g @ p, target @ p) < 1e-9
