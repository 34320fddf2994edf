import numpy as np
import pytest
from scipy.optimize import minimize

from hitchlab import rep, words
from hitchlab.hyperbolic import GeometryError, boost_to, dist, point, rotation

REFLECT = np.diag([1.0, -1.0, 1.0])


def translation_length(m):
    """Minimal displacement of ``m`` on the hyperboloid, by direct search."""

    def disp(z):
        p = point(np.hypot(*z), np.arctan2(z[1], z[0]))
        return dist(p, m @ p)

    best = min((minimize(disp, x0, method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-14})
                for x0 in ([0.0, 0.0], [0.5, 0.2], [-0.3, 0.6])), key=lambda r: r.fun)
    return best.fun


@pytest.mark.parametrize("g", [2, 3])
def test_fuchsian_invariants(g):
    r = rep.fuchsian_rep(g)
    assert r.euler_class == 2 * g - 2
    assert r.relator_residual() < 1e-10
    assert r.irreducible_flag


@pytest.mark.parametrize("g", [4, 5, 6])
def test_fuchsian_euler_high_genus(g):
    assert rep.fuchsian_rep(g).euler_class == 2 * g - 2


@pytest.mark.parametrize("g", [2, 3])
def test_euler_float_and_exact_agree(g):
    r = rep.fuchsian_rep(g)
    assert rep.euler_class(r.generators) == r.euler_class


@pytest.mark.parametrize("word", ["A1", "B1", "A1 B1", "A2 B1^-1"])
def test_character_matches_translation_length(word):
    r = rep.fuchsian_rep(2)
    ell = translation_length(r.word(words.parse(word)))
    assert rep.character(r, word) == pytest.approx(2 * np.cosh(ell / 2), rel=1e-7)
    assert rep.character(r, word) > 2


def test_empty_word_character():
    assert rep.character(rep.fuchsian_rep(2), "") == 2.0


@pytest.mark.parametrize("r_level", [0, 1, 2])
def test_face_curvature_fuchsian(mesh_cache, r_level):
    m = mesh_cache(2, r_level)
    r = rep.fuchsian_rep(m)
    _, worst = rep.face_curvature(r, m)
    assert worst < 1e-10
    _, worst_t = rep.face_curvature(rep.transports(r, m), m)
    assert worst_t < 1e-10


def test_perturbed_generator_shows_curvature(g2r1, fuchsian2):
    gens = fuchsian2.generators.copy()
    gens[0] = gens[0] @ rotation(1e-3)
    bad = rep.make_rep(gens, check=False)
    assert rep.face_curvature(bad, g2r1)[1] > 1e-4


def test_trivial_rep_is_exactly_flat(g2r1):
    assert rep.face_curvature(rep.trivial_rep(2), g2r1)[1] == 0.0


@pytest.mark.parametrize("word", ["A1", "A1 B2 A2^-1", "B1 B2 A1"])
def test_character_inverse_reversal(word):
    r = rep.fuchsian_rep(2)
    w = words.parse(word)
    assert rep.character(r, words.invert(w)) == pytest.approx(rep.character(r, w), rel=1e-12)


def test_face_curvature_split_invariant(g2r1, fuchsian2):
    t = rep.transports(fuchsian2, g2r1)
    a, _ = rep.face_curvature(t, g2r1)
    b, _ = rep.face_curvature(t, g2r1, parts=5, workers=3)
    assert np.array_equal(a, b)


@pytest.mark.parametrize("seed", range(4))
def test_conjugation_invariance(seed):
    r = rep.fuchsian_rep(2)
    g = rep.random_so21(np.random.default_rng(seed), scale=1.0)
    c = rep.conjugate(r, g)
    assert c.euler_class == r.euler_class
    for w in ["A1", "B2", "A1 B1 A2"]:
        assert rep.character(c, w) == pytest.approx(rep.character(r, w), rel=1e-10)


def test_orientation_reversal_flips_euler():
    r = rep.fuchsian_rep(2)
    assert rep.conjugate(r, REFLECT).euler_class == -2


def test_trivial_rep():
    t = rep.trivial_rep(2)
    assert t.euler_class == 0
    assert not t.irreducible_flag


@pytest.mark.parametrize("kind", ["rotation", "boost"])
def test_abelian_reps_are_reducible(kind, rng):
    if kind == "rotation":
        gens = [rotation(x) for x in rng.uniform(0, 2 * np.pi, 4)]
    else:
        gens = [boost_to(point(s, 0.0)) if s > 0 else boost_to(point(-s, np.pi)) for s in rng.uniform(-1, 1, 4)]
    r = rep.make_rep(np.stack(gens))
    assert r.euler_class == 0
    assert not r.irreducible_flag


def test_make_rep_rejects_bad_input():
    with pytest.raises(ValueError):
        rep.make_rep(np.eye(3)[None])
    bad = np.stack([np.eye(3)] * 4)
    bad[0, 0, 0] = 1.1
    with pytest.raises(GeometryError):
        rep.make_rep(bad)
    r = rep.fuchsian_rep(2)
    gens = r.generators.copy()
    gens[0] = gens[0] @ rotation(1e-6)
    with pytest.raises(rep.RelatorError):
        rep.make_rep(gens)


def test_adapted_frames_pullback_consistency(g2r1, fuchsian2):
    pull = rep.pullbacks(fuchsian2, g2r1)
    # pullback maps the target frame origin to the edge-neighbour point in the source frame
    fr = rep.frames(g2r1)
    dk = g2r1.deck()
    src, tgt = g2r1.edges.T
    lhs = np.einsum("eij,ej->ei", fr[src] @ pull, np.tile([0.0, 0.0, 1.0], (g2r1.n_edges, 1)))
    rhs = np.einsum("eij,ej->ei", dk, g2r1.positions[tgt])
    assert np.allclose(lhs, rhs, atol=1e-12)
