from fractions import Fraction

import numpy as np
import pytest
import sympy as sp
from numpy.testing import assert_allclose
from scipy import integrate as quad

from submetrylab.poly import Poly
from submetrylab.polyfun import (
    PolyFunction,
    eigen_decompose,
    eigenspace_basis,
    gradient,
    gram_gradients,
    harmonic_basis,
    harmonic_dimension,
    l2_inner,
    laplace_beltrami,
    reduce_canonical,
)
from submetrylab.spaces import get_space, tangent_project

S2 = get_space("s2")
HOPF_H1 = "x1^2 + x2^2 - x3^2 - x4^2"


def f2(text, space=S2):
    return PolyFunction.parse(space, text)


def test_canonical_examples():
    assert reduce_canonical(S2, Poly(3, {(2, 0, 0): 1, (0, 2, 0): 1, (0, 0, 2): 1})) == f2("1")
    assert eigen_decompose(f2("z^2")) == [(0, f2("1/3")), (6, f2("z^2 - 1/3"))]
    assert eigen_decompose(f2("x^2")) == [(0, f2("1/3")), (6, f2("x^2 - 1/3"))]
    t1 = get_space("t1")
    assert eigen_decompose(f2("c^2", t1)) == [(0, f2("1/2", t1)), (4, f2("1/2 c^2 - 1/2 s^2", t1))]
    assert eigen_decompose(f2("5")) == [(0, f2("5"))]
    s3 = get_space("s3")
    h1 = f2(HOPF_H1, s3)
    assert eigen_decompose(h1) == [(8, h1)]


def test_laplacian_examples():
    assert laplace_beltrami(f2("7")).is_zero()
    assert laplace_beltrami(f2("z")) == f2("2 z")
    assert laplace_beltrami(f2("z^2")) == f2("6 z^2 - 2")


def _spherical_laplacian(expr):
    """Delta = -div grad on S^2 in spherical coordinates, as a sympy oracle."""
    th, ph = sp.symbols("theta phi")
    x, y, z = sp.symbols("x y z")
    g = expr.subs({x: sp.sin(th) * sp.cos(ph), y: sp.sin(th) * sp.sin(ph), z: sp.cos(th)}, simultaneous=True)
    lap = -(sp.diff(sp.sin(th) * sp.diff(g, th), th) / sp.sin(th) + sp.diff(g, ph, 2) / sp.sin(th) ** 2)
    return sp.lambdify((th, ph), lap, "numpy")


@pytest.mark.parametrize("text,expr", [
    ("z", "z"), ("z^2", "z**2"), ("x y z", "x*y*z"),
    ("x^3 - 2 y z^2 + 1/2", "x**3 - 2*y*z**2 + 1/2"), ("x^2 y^2 z", "x**2*y**2*z"),
])
def test_laplacian_against_spherical_coordinates(text, expr):
    oracle = _spherical_laplacian(sp.sympify(expr))
    rng = np.random.default_rng(0)
    th, ph = rng.uniform(0.2, 3.0, 20), rng.uniform(0, 2 * np.pi, 20)
    pts = np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=1)
    assert_allclose(laplace_beltrami(f2(text))(pts), oracle(th, ph), atol=1e-10)


def test_l2_inner_examples():
    z = f2("z")
    assert l2_inner(z, z) == Fraction(1, 3)
    rng = np.random.default_rng(5)
    pts = S2.random_points(200000, rng)
    assert abs(np.mean(pts[:, 2] ** 2) - 1 / 3) < 5e-3
    # z^2 integrated against the normalized area measure dz/2 on [-1, 1]
    val, _ = quad.quad(lambda t: t ** 4 / 2, -1, 1)
    assert_allclose(float(l2_inner(f2("z^2"), f2("z^2"))), val, rtol=1e-14)
    assert l2_inner(f2("x^2 - 1/3"), f2("z^2 - 1/3")) == Fraction(-2, 45)


def test_laplacian_symmetric_and_eigenspaces_orthogonal():
    basis = harmonic_basis(S2, 12)
    for f in basis[:6]:
        for g in basis[:6]:
            assert l2_inner(laplace_beltrami(f), g) == l2_inner(f, laplace_beltrami(g))
    e2, e6 = eigenspace_basis(S2, 2), eigenspace_basis(S2, 6)
    assert all(l2_inner(a, b) == 0 for a in e2 for b in e6)


@pytest.mark.parametrize("sid,dims", [("s2", [1, 3, 5, 7]), ("s3", [1, 4, 9, 16]), ("s4", [1, 5, 14, 30])])
def test_eigenspace_dimensions(sid, dims):
    space = get_space(sid)
    n = space.intrinsic_dim
    for m, d in enumerate(dims):
        lam = m * (m + n - 1)
        basis = eigenspace_basis(space, lam)
        assert len(basis) == d == harmonic_dimension(m, n + 1)
        for f in basis:
            assert laplace_beltrami(f) == f.scale(lam)


def test_gram_examples():
    z, z2 = f2("z"), f2("z^2")
    assert gram_gradients([z]) == [[f2("1 - z^2")]]
    assert gram_gradients([z2])[0][0] == f2("4 z^2 - 4 z^4")
    g = gram_gradients([z, f2("3")])
    assert g[0][1].is_zero() and g[1][0].is_zero() and g[1][1].is_zero()


def test_gradient_examples():
    rng = np.random.default_rng(2)
    pts = S2.random_points(30, rng)
    x, y, z = pts.T
    assert_allclose(gradient(f2("z"))(pts), np.stack([-x * z, -y * z, 1 - z * z], axis=1), atol=1e-15)
    proj = np.array([tangent_project(S2, p, [0, 0, 1]) for p in pts])
    assert_allclose(gradient(f2("z"))(pts), proj, atol=1e-15)
    assert_allclose(gradient(f2("4"))(pts), 0)
    # circle: c = cos(theta) has gradient -sin(theta) times the angular direction (-s, c)
    t1 = get_space("t1")
    th = rng.uniform(0, 2 * np.pi, 10)
    cpts = np.stack([np.cos(th), np.sin(th)], axis=1)
    expect = -np.sin(th)[:, None] * np.stack([-np.sin(th), np.cos(th)], axis=1)
    assert_allclose(gradient(f2("c", t1))(cpts), expect, atol=1e-15)


@pytest.mark.parametrize("sid,texts", [
    ("s2", ["z", "x y + z^3", "x^2 - y"]),
    ("s3", ["x1^2 + x2^2 - x3^2 - x4^2", "2 x1 x3 + 2 x2 x4", "x4^3 - x1"]),
    ("t2", ["x1 x3", "x2^2 + x4"]),
])
def test_gram_matches_gradient_dot_products(sid, texts):
    space = get_space(sid)
    fs = [PolyFunction.parse(space, t) for t in texts]
    gram = gram_gradients(fs)
    pts = space.random_points(200, np.random.default_rng(11))
    grads = [gradient(f)(pts) for f in fs]
    for i in range(len(fs)):
        for j in range(len(fs)):
            assert_allclose(gram[i][j](pts), np.sum(grads[i] * grads[j], axis=1), atol=1e-10)


def test_gradient_against_directional_difference():
    space = get_space("s3")
    f = PolyFunction.parse(space, "x1^3 x2 - 2 x3 x4^2 + x2")
    rng = np.random.default_rng(4)
    h = 1e-5
    for _ in range(10):
        p = space.random_point(rng)
        v = space.random_unit_tangent(p, rng)
        fd = (f(np.cos(h) * p + np.sin(h) * v) - f(np.cos(h) * p - np.sin(h) * v)) / (2 * h)
        assert_allclose(gradient(f)(p[None, :])[0] @ v, fd, atol=1e-6)
