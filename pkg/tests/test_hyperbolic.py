import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hitchlab import hyperbolic as hy
from hitchlab.rep import random_so21

radii = st.floats(0.0, 4.0)
angles = st.floats(-np.pi, np.pi)
small = st.floats(-1.5, 1.5)


@given(radii, angles)
def test_point_on_sheet(r, th):
    p = hy.point(r, th)
    assert abs(hy.mdot(p, p) + 1.0) < 1e-9 * np.cosh(r) ** 2
    assert hy.dist(hy.E3, p) == pytest.approx(r, abs=1e-9)


@given(radii, angles, radii, angles)
def test_log_exp_roundtrip(r1, t1, r2, t2):
    x, y = hy.point(r1, t1), hy.point(r2, t2)
    v = hy.log_map(x, y)
    assert abs(hy.mdot(v, x)) < 1e-8 * np.cosh(r1 + r2) ** 2
    assert np.sqrt(max(hy.mdot(v, v), 0.0)) == pytest.approx(hy.dist(x, y), rel=1e-8, abs=1e-10)
    back = hy.exp_map(x, v)
    assert hy.dist(back, y) < 1e-7


@given(radii, angles)
def test_boost_to(r, th):
    p = hy.point(r, th)
    b = hy.boost_to(p)
    assert np.allclose(b @ hy.E3, p, atol=1e-9 * np.cosh(r))
    assert hy.is_so21(b, tol=1e-9 * np.cosh(r) ** 2)
    assert np.allclose(b, b.T)


def test_triangle_angles_equilateral_defect():
    # equilateral triangle of side a: cos(alpha) = cosh(a) / (1 + cosh(a))
    a = 0.7
    al, be, ga = hy.triangle_angles(a, a, a)
    assert al == pytest.approx(np.arccos(np.cosh(a) / (1 + np.cosh(a))), abs=1e-14)
    assert al == pytest.approx(be) and be == pytest.approx(ga)
    assert al + be + ga < np.pi


@given(small, small, small)
def test_so21_exp_log(a, b, c):
    lie = hy.lie_from_coords([a, b, c])
    m = hy.so21_exp(lie)
    assert hy.is_so21(m, tol=1e-10)
    assert np.allclose(hy.so21_log(m), lie, atol=1e-9)
    assert np.allclose(hy.lie_coords(lie), [a, b, c])


def test_so21_exp_matches_expm():
    from scipy.linalg import expm

    for c in ([0.3, 0.0, 0.0], [0.0, 0.8, -0.2], [1.1, 0.4, 0.2], [1e-7, 2e-7, 0.0]):
        lie = hy.lie_from_coords(c)
        assert np.allclose(hy.so21_exp(lie), expm(lie), atol=1e-13)


def test_log_branch_failure():
    with pytest.raises(hy.GeometryError):
        hy.so21_log(hy.rotation(np.pi))


def test_psl2_roundtrip():
    rng = np.random.default_rng(11)
    for _ in range(100):
        a = rng.standard_normal((2, 2))
        if np.linalg.det(a) < 0:
            a[:, 0] *= -1
        a /= np.sqrt(np.linalg.det(a))
        back = hy.psl2_from_so21(hy.so21_from_psl2(a))
        assert min(np.abs(back - a).max(), np.abs(back + a).max()) < 1e-10 * max(1.0, np.abs(a).max() ** 2)


@pytest.mark.parametrize("seed", range(6))
def test_so21_psl2_roundtrip(seed):
    m = random_so21(np.random.default_rng(seed), scale=1.5)
    a = hy.psl2_from_so21(m)
    assert np.linalg.det(a) == pytest.approx(1.0, abs=1e-10)
    assert np.allclose(hy.so21_from_psl2(a), m, atol=1e-9)
    assert hy.abs_trace(m) == pytest.approx(abs(np.trace(a)), abs=1e-9)


@pytest.mark.parametrize("theta", [0.3, 1.0, 2.5])
def test_psl2_rotation_doubles_angle(theta):
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    m = hy.so21_from_psl2(np.array([[c, -s], [s, c]]))
    assert np.allclose(m, hy.rotation(theta), atol=1e-14)


def test_psl2_identity():
    assert np.allclose(hy.so21_from_psl2(np.eye(2)), np.eye(3))


def test_psl2_homomorphism(rng):
    a = np.array([[2.0, 1.0], [1.0, 1.0]])
    b = np.array([[1.0, 0.5], [0.0, 1.0]])
    assert np.allclose(hy.so21_from_psl2(a @ b), hy.so21_from_psl2(a) @ hy.so21_from_psl2(b))


def test_not_unimodular():
    with pytest.raises(hy.GeometryError):
        hy.so21_from_psl2(2.0 * np.eye(2))


def test_half_turn_is_involution():
    p = hy.point(0.9, 0.4)
    h = hy.half_turn(p)
    assert np.allclose(h @ h, np.eye(3), atol=1e-12)
    assert np.allclose(h @ p, p)


def test_reorthonormalize_and_chain(rng):
    m = random_so21(rng)
    noisy = m + 1e-9 * rng.standard_normal((3, 3))
    assert hy.so21_deviation(hy.reorthonormalize(noisy)) < 1e-13
    mats = [random_so21(rng, 0.3) for _ in range(100)]
    ref = np.linalg.multi_dot(mats)
    out = hy.chain(mats)
    assert hy.so21_deviation(out) < 1e-10
    assert np.allclose(out, ref, rtol=1e-8, atol=1e-8 * np.abs(ref).max())
