import numpy as np
import pytest
from numpy.testing import assert_allclose

from submetrylab.errors import DomainError
from submetrylab.spaces import (
    GeodesicRay,
    curvature_along,
    distance,
    geodesic_eval,
    get_space,
    normal_frame,
    tangent_project,
)


def test_tangent_project_examples():
    s2 = get_space("s2")
    assert_allclose(tangent_project(s2, [0, 0, 1], [1, 0, 5]), [1, 0, 0])
    assert_allclose(tangent_project(s2, [0, 0, 1], [0, 0, 3]), [0, 0, 0])
    t2 = get_space("t2")
    assert_allclose(tangent_project(t2, [1, 0, 1, 0], [1, 1, 0, 1]), [0, 1, 0, 1])


def test_tangent_project_rejects_off_space_point():
    with pytest.raises(DomainError):
        tangent_project(get_space("s2"), [0, 0, 2], [1, 0, 0])


def test_geodesic_examples():
    s2 = get_space("s2")
    assert_allclose(geodesic_eval(s2, [0, 0, 1], [1, 0, 0], np.pi / 2), [1, 0, 0], atol=1e-15)
    rng = np.random.default_rng(1)
    p = s2.random_point(rng)
    v = s2.random_unit_tangent(p, rng)
    assert_allclose(geodesic_eval(s2, p, v, 2 * np.pi), p, atol=1e-14)

    s22 = get_space("s2xs2")
    p = np.array([0, 0, 1, 1, 0, 0.0])
    v = np.array([1, 0, 0, 0, 1, 0.0]) / np.sqrt(2)
    assert_allclose(geodesic_eval(s22, p, v, np.sqrt(2) * np.pi), -p, atol=1e-14)


def test_geodesic_rejects_non_unit_direction():
    with pytest.raises(DomainError):
        geodesic_eval(get_space("s2"), [0, 0, 1], [2, 0, 0], 1.0)


def test_distance_examples():
    s2 = get_space("s2")
    p = np.array([0.6, 0, 0.8])
    assert_allclose(distance(s2, p, -p), np.pi)
    assert_allclose(distance(s2, [0, 0, 1], [1, 0, 0]), np.pi / 2)
    t2 = get_space("t2")
    q = [np.cos(3 * np.pi / 2), np.sin(3 * np.pi / 2), 1, 0]
    assert_allclose(distance(t2, [1, 0, 1, 0], q), np.pi / 2)


@pytest.mark.parametrize("sid", ["s2", "s3", "s4", "t2", "s2xs2"])
def test_geodesic_invariants(sid):
    space = get_space(sid)
    rng = np.random.default_rng(7)
    for _ in range(5):
        p = space.random_point(rng)
        v = space.random_unit_tangent(p, rng)
        ray = GeodesicRay(space, p, v)
        # distance equals arclength below the injectivity radius
        t = 0.3
        assert_allclose(distance(space, p, ray.at(t)), t, rtol=1e-12)
        # restarting from c(s) continues the same geodesic
        s = 0.7
        assert_allclose(geodesic_eval(space, ray.at(s), ray.velocity(s), 1.1), ray.at(s + 1.1), atol=1e-13)
        assert space.residual(ray.at(5.0)) < 1e-13


@pytest.mark.parametrize("sid", ["s2", "s3", "t2", "s2xs2"])
def test_normal_frame_orthonormal(sid):
    space = get_space(sid)
    rng = np.random.default_rng(3)
    p = space.random_point(rng)
    ray = GeodesicRay(space, p, space.random_unit_tangent(p, rng))
    for t in (0.0, 0.4, 2.5):
        e = normal_frame(space, ray, t)
        assert e.shape == (space.intrinsic_dim - 1, space.ambient_dim)
        assert_allclose(e @ e.T, np.eye(len(e)), atol=1e-14)
        assert_allclose(e @ ray.velocity(t), 0, atol=1e-14)
        for row in e:
            assert_allclose(tangent_project(space, ray.at(t), row), row, atol=1e-14)


def test_equator_frame_is_constant_pole_direction():
    s2 = get_space("s2")
    ray = GeodesicRay(s2, np.array([1.0, 0, 0]), np.array([0, 1.0, 0]))
    for t in (0.0, 1.0, 3.0):
        e = normal_frame(s2, ray, t)
        assert_allclose(np.abs(e), [[0, 0, 1]], atol=1e-15)


def test_curvature_examples():
    rng = np.random.default_rng(0)
    for sid, n in (("s2", 2), ("s3", 3), ("s4", 4)):
        space = get_space(sid)
        p = space.random_point(rng)
        ray = GeodesicRay(space, p, space.random_unit_tangent(p, rng))
        assert_allclose(curvature_along(space, ray, 0.8), np.eye(n - 1))
    t2 = get_space("t2")
    p = t2.random_point(rng)
    ray = GeodesicRay(t2, p, t2.random_unit_tangent(p, rng))
    assert_allclose(curvature_along(t2, ray, 0.8), np.zeros((1, 1)))


def _fd_jacobi(space, p, v, w, ts, h=1e-4):
    """Jacobi field with J(0) = 0, J'(0) = w from a variation through geodesics."""
    def ray(s):
        d = v + s * w
        return GeodesicRay(space, p, d / np.linalg.norm(d))
    plus, minus = ray(h), ray(-h)
    return np.array([(plus.at(t) - minus.at(t)) / (2 * h) for t in ts])


def test_product_curvature_against_variation_oracle():
    space = get_space("s2xs2")
    a, b = 0.6, 0.8
    p = np.array([1.0, 0, 0, 0, 1.0, 0])
    v = np.array([0, a, 0, 0, 0, b])
    ray = GeodesicRay(space, p, v)
    kappa = np.diag(curvature_along(space, ray, 0.0))
    assert_allclose(sorted(kappa), [0.0, a * a, b * b])
    ts = np.linspace(0.1, 3.0, 7)
    for i, e0 in enumerate(normal_frame(space, ray, 0.0)):
        jac = _fd_jacobi(space, p, v, e0, ts)
        k = kappa[i]
        expect = ts if k == 0 else np.sin(np.sqrt(k) * ts) / np.sqrt(k)
        got = [normal_frame(space, ray, t)[i] @ j for t, j in zip(ts, jac)]
        assert_allclose(got, expect, atol=1e-6)
