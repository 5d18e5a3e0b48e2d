import numpy as np
import pytest
from numpy.testing import assert_allclose

from submetrylab.errors import PreconditionError
from submetrylab.lapalg import Subalgebra
from submetrylab.polyfun import PolyFunction, gram_gradients, l2_inner, laplace_beltrami
from submetrylab.spaces import distance, get_space
from submetrylab.submetry import (
    HOPF_STRINGS,
    SUBMETRY_IDS,
    ParametricChart,
    average,
    average_function,
    basic_mean_curvature_report,
    commutator_residual,
    equidistance_check,
    get_submetry,
    induced_metric_check,
    mean_curvature,
    regular_rank_region,
)

S2 = get_space("s2")
S3 = get_space("s3")


def f2(text, space=S2):
    return PolyFunction.parse(space, text)


def hopf_h():
    return [f2(t, S3) for t in HOPF_STRINGS]


@pytest.mark.parametrize("sid", SUBMETRY_IDS)
def test_catalog_rho_is_fiberwise_constant(sid):
    sigma = get_submetry(sid)
    assert sigma.check_fiberwise_constant(8, np.random.default_rng(0)) <= 1e-10
    leaf = sigma.regular_leaves(3, np.random.default_rng(0))[0]
    pts, wts = sigma.chart_for_leaf(leaf).nodes(8)
    assert max(sigma.space.residual(p) for p in pts) <= 1e-12
    assert_allclose(wts.sum(), 1.0)


def test_fiber_volumes():
    a = 0.5
    assert_allclose(get_submetry("s2-latitude").chart_for_leaf(a).volume(), 2 * np.pi * np.sqrt(1 - a * a),
                    rtol=1e-10)
    assert_allclose(get_submetry("s2-fold").chart_for_leaf(a).volume(), 4 * np.pi * np.sqrt(1 - a * a),
                    rtol=1e-10)
    assert_allclose(get_submetry("s3-hopf").chart_for_leaf(np.array([0.3, 0.4, 0.5])).volume(), 2 * np.pi,
                    rtol=1e-10)
    phi = 0.3
    assert_allclose(get_submetry("s3-clifford").chart_for_leaf(phi).volume(),
                    4 * np.pi ** 2 * np.cos(phi) * np.sin(phi), rtol=1e-10)


def test_average_examples():
    lat = get_submetry("s2-latitude")
    a = 0.3
    chart = lat.chart_for_leaf(a)
    assert_allclose(average(f2("z"), chart), a)
    assert_allclose(average(f2("x^2"), chart), (1 - a * a) / 2)
    assert_allclose(average(f2("z"), get_submetry("s2-fold").chart_for_leaf(a)), 0, atol=1e-15)


def test_average_function_examples():
    lat = get_submetry("s2-latitude")
    assert average_function(f2("x^2"), lat) == f2("1/2 - 1/2 z^2")
    assert average_function(f2("z^3"), lat) == f2("z^3")


def test_hopf_numeric_average_lands_in_hopf_algebra():
    hopf = get_submetry("s3-hopf")
    f = f2("x1^2 + x2^2 - x3^2 - x4^2", S3) * f2("x1^2", S3)
    res = average_function(f, hopf, backend="numeric", samples=300)
    assert res.fit_residual <= 1e-8
    assert Subalgebra(S3, hopf_h()).contains(res.rationalized, 4)
    assert_allclose(res.rationalized(res.points), res.values, atol=1e-8)


def test_average_idempotent_and_orthogonal_projection():
    for sid in ("s2-latitude", "s2-fold"):
        sigma = get_submetry(sid)
        basic = [sigma.exact_average(f2(t)) for t in ("z", "z^2", "z^4 - z")]
        for t in ("x^2 y", "x z^3", "y^2 z^2 + x", "x^4 z^2"):
            f = f2(t)
            av = average_function(f, sigma)
            assert average_function(av, sigma) == av
            for g in basic:
                assert l2_inner(f - av, g) == 0


def test_commutator_examples():
    lat = get_submetry("s2-latitude")
    rep = commutator_residual(f2("x^2"), lat)
    assert rep.exact and rep.identity.is_zero() and rep.residual == 0.0
    assert lat.exact_average(laplace_beltrami(f2("x^2"))) == f2("1 - 3 z^2")
    assert commutator_residual(f2("z^2 - 1/3"), get_submetry("s2-fold")).residual == 0.0
    hopf = get_submetry("s3-hopf")
    grid = S3.random_points(500, np.random.default_rng(1))
    assert commutator_residual(f2("x1^4", S3), hopf, grid).residual <= 1e-8


def test_mean_curvature_examples():
    lat = get_submetry("s2-latitude")
    phi = 0.7
    chart = lat.chart_for_leaf(np.cos(phi))
    p = lat.point_on_leaf(np.cos(phi))
    h = mean_curvature(chart, p)
    assert_allclose(np.linalg.norm(h), 1 / np.tan(phi), rtol=1e-9)
    assert h[2] > 0  # toward the north pole

    hopf = get_submetry("s3-hopf")
    u = np.array([0.2, -0.5, 0.3])
    assert_allclose(mean_curvature(hopf.chart_for_leaf(u), hopf.point_on_leaf(u)), 0, atol=1e-8)

    # Clifford torus: trace of the shape operator toward the u-core is cot - tan
    cl = get_submetry("s3-clifford")
    phi = 0.4
    p = cl.point_on_leaf(phi)
    v = np.array([-np.sin(phi), 0, np.cos(phi), 0])  # increases phi, away from the u-core
    h = mean_curvature(cl.chart_for_leaf(phi), p)
    assert_allclose(h @ -v, 1 / np.tan(phi) - np.tan(phi), rtol=1e-9)


def test_mean_curvature_finite_difference_chart():
    # same latitude circle through a generic parametric chart (finite differences)
    a = 0.4
    r = np.sqrt(1 - a * a)
    chart = ParametricChart(S2, lambda u: np.array([r * np.cos(u[0]), r * np.sin(u[0]), a]), 1)
    h = mean_curvature(chart, chart.point([0.3]))
    assert_allclose(np.linalg.norm(h), a / r, rtol=1e-6)


@pytest.mark.parametrize("sid,leaf,tol", [
    ("s2-latitude", 0.5, 1e-9),
    ("s3-clifford", np.pi / 4, 1e-6),
    ("s3-hopf", np.array([0.0, 0.6, 0.8]), 1e-8),
    ("s2-fold", 0.5, 1e-6),
])
def test_basic_mean_curvature_examples(sid, leaf, tol):
    rep = basic_mean_curvature_report(get_submetry(sid), leaf, samples=50 if sid == "s2-latitude" else 100)
    assert rep.spread <= tol
    doc = rep.to_json(tol)
    assert doc["pass"] and set(doc) == {"case", "operation", "samples", "spread", "tolerance", "pass"}
    if sid == "s3-clifford":
        assert_allclose(rep.pushed, 0, atol=1e-6)


def test_basic_mean_curvature_rejects_singular_fiber():
    with pytest.raises(PreconditionError):
        basic_mean_curvature_report(get_submetry("s2-latitude"), 1.0, samples=5)


def test_regular_rank_examples():
    pts = S2.random_points(40, np.random.default_rng(0))
    poles = np.array([[0, 0, 1.0], [0, 0, -1.0]])
    m, flags = regular_rank_region([f2("z")], np.vstack([pts, poles]))
    assert m == 1 and flags[:-2].all() and not flags[-2:].any()
    m, flags = regular_rank_region(hopf_h(), S3.random_points(40, np.random.default_rng(0)))
    assert m == 2 and flags.all()
    assert regular_rank_region([f2("3")], pts)[0] == 0


def test_induced_metric_examples():
    lat = get_submetry("s2-latitude")
    a = 0.3
    rep = induced_metric_check([f2("z")], lat, a)
    assert rep.gram_exact == [[f2("1 - z^2")]]
    assert rep.spread <= 1e-13  # the entry is the basic function 1 - z^2; only round-off remains
    assert_allclose(rep.quotient_metric, 1 / (1 - a * a))
    assert_allclose(rep.quotient_length, np.pi, atol=1e-10)

    fold = get_submetry("s2-fold")
    rep = induced_metric_check([f2("z^2")], fold, a)
    assert rep.gram_exact == [[f2("4 z^2 - 4 z^4")]]  # even in z: equal on both components
    assert_allclose(rep.gram_at_leaf[0, 0], 4 * a * a * (1 - a * a))
    assert rep.spread <= 1e-12

    hopf = get_submetry("s3-hopf")
    alg = Subalgebra(S3, hopf_h())
    for u in hopf.sample_leaves(4, None):
        rep = induced_metric_check(hopf_h(), hopf, u)
        assert rep.spread <= 1e-10
        # the Gram entries are 4 (delta_ij - h_i h_j): functions of the leaf only
        assert_allclose(rep.gram_at_leaf, 4 * (np.eye(3) - np.outer(u, u)), atol=1e-12)
    for row in gram_gradients(hopf_h()):
        for e in row:
            assert alg.contains(e, 4)


def test_equidistance_examples():
    lat = get_submetry("s2-latitude")
    a, b = 0.2, -0.6
    lo, hi = equidistance_check(lat, a, b)
    assert_allclose([lo, hi], abs(np.arccos(a) - np.arccos(b)), atol=1e-10)

    hopf = get_submetry("s3-hopf")
    u, w = np.array([1.0, 0, 0]), np.array([0.0, 0.6, 0.8])
    lo, hi = equidistance_check(hopf, u, w)
    assert hi - lo <= 1e-8
    assert_allclose(lo, 0.5 * np.arccos(u @ w), atol=1e-8)
    assert equidistance_check(hopf, w, w) == pytest.approx((0.0, 0.0), abs=1e-8)


def test_hopf_fibers_are_circle_orbits():
    hopf = get_submetry("s3-hopf")
    rng = np.random.default_rng(3)
    p = S3.random_point(rng)
    t = 1.234
    q = np.array([np.cos(t) * p[0] - np.sin(t) * p[1], np.sin(t) * p[0] + np.cos(t) * p[1],
                  np.cos(t) * p[2] - np.sin(t) * p[3], np.sin(t) * p[2] + np.cos(t) * p[3]])
    assert_allclose(hopf.rho_values(q[None, :]), hopf.rho_values(p[None, :]), atol=1e-15)
    assert distance(S3, p, q) <= t + 1e-12
