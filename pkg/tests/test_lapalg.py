from fractions import Fraction
from itertools import product

import numpy as np
import pytest

from submetrylab.errors import ConfigurationError, CutoffExceeded, NotBasicError
from submetrylab.lapalg import Subalgebra, check_laplacian_closed, maximality_probe, reynolds, verify_separation
from submetrylab.polyfun import PolyFunction, harmonic_basis, l2_inner, laplace_beltrami
from submetrylab.spaces import get_space
from submetrylab.submetry import HOPF_STRINGS, get_submetry

S2 = get_space("s2")


def f2(text):
    return PolyFunction.parse(S2, text)


def alg(*gens, space=S2):
    return Subalgebra.from_strings(space, gens)


def monomials(space, degree):
    n = space.ambient_dim
    return [PolyFunction.parse(space, " ".join(f"{space.names[i]}^{e}" for i, e in enumerate(exps) if e) or "1")
            for exps in product(range(degree + 1), repeat=n) if sum(exps) <= degree]


def test_filtration_is_nested_and_independent():
    a = alg("z^2")
    assert len(a.filtration(0)) == 1
    assert len(a.filtration(4)) == 3
    assert len(a.filtration(5)) == 3
    assert len(a.filtration(6)) == 4
    assert a.contains(f2("z^4 - 3 z^2 + 1"))
    assert not a.contains(f2("z^3"))


def test_closure_examples():
    cert = check_laplacian_closed(alg("z"), 4)
    assert cert.closed
    assert alg("z").expand(cert.witnesses[0], 4) == f2("2 z")
    s3 = get_space("s3")
    hopf = alg(*HOPF_STRINGS, space=s3)
    cert = check_laplacian_closed(hopf, 4)
    assert cert.closed
    for g, w in zip(hopf.generators, cert.witnesses):
        assert hopf.expand(w, 4) == laplace_beltrami(g) == g.scale(8)

    cert = check_laplacian_closed(alg("z^3"), 9)
    assert not cert.closed
    assert cert.failing_index == 0
    # Delta z^3 = 12 z^3 - 6 z; everything but the z term is in the algebra
    assert cert.residual == f2("-6 z")
    assert "not closed within degree 9" in cert.describe()


def test_witnesses_re_expand_exactly():
    a = alg("z^2")
    cert = check_laplacian_closed(a, 6)
    assert cert.closed
    assert a.expand(cert.witnesses[0], 6) == f2("6 z^2 - 2")


def test_closure_bound_errors():
    a = alg("z^3")
    with pytest.raises(ConfigurationError):
        check_laplacian_closed(a, a.cap + 1)
    with pytest.raises(ConfigurationError):
        check_laplacian_closed(a, 2)


def test_reynolds_examples():
    a = alg("z")
    assert reynolds(a, f2("z^3 - z"), 30) == f2("z^3 - z")
    assert reynolds(a, f2("x^2"), 30) == f2("1/2 - 1/2 z^2")
    assert reynolds(a, f2("1"), 30) == f2("1")
    assert reynolds(alg("z^2"), f2("1"), 30) == f2("1")
    # the projection coefficient from the exact inner products
    c = l2_inner(f2("x^2 - 1/3"), f2("z^2 - 1/3")) / l2_inner(f2("z^2 - 1/3"), f2("z^2 - 1/3"))
    assert c == Fraction(-1, 2)


def test_reynolds_matches_averaging():
    lat = get_submetry("s2-latitude")
    fold = get_submetry("s2-fold")
    for f in monomials(S2, 4):
        assert reynolds(alg("z"), f, 30) == lat.exact_average(f)
        assert reynolds(alg("z^2"), f, 30) == fold.exact_average(f)


def test_reynolds_cutoff_exceeded():
    with pytest.raises(CutoffExceeded):
        reynolds(alg("z"), f2("z^3"), 6)


@pytest.mark.parametrize("gen", ["z", "z^2"])
def test_reynolds_identity_and_projection(gen):
    a = alg(gen)
    amb = monomials(S2, 4)
    for x in a.filtration(4):
        for b in amb:
            assert reynolds(a, x * b, 72) == x * reynolds(a, b, 72)
    basis = harmonic_basis(S2, 20)
    for f in basis:
        rf = reynolds(a, f, 20)
        assert reynolds(a, rf, 20) == rf
        for g in basis:
            assert l2_inner(rf, g) == l2_inner(f, reynolds(a, g, 20))


def test_separation_examples():
    lat = get_submetry("s2-latitude")
    rep = verify_separation([f2("z")], lat, samples=12)
    assert rep.separates and rep.margin > 0
    leaves = lat.sample_leaves(12, None)
    assert np.isclose(rep.margin, min(abs(a - b) for a in leaves for b in leaves if a != b))

    rep = verify_separation([f2("z^2")], lat, samples=12)
    assert not rep.separates
    p, q = rep.violation
    assert np.isclose(p[2], -q[2]) and abs(p[2]) > 0

    hopf = get_submetry("s3-hopf")
    rep = verify_separation(list(hopf.rho), hopf, samples=16)
    assert rep.separates and rep.margin > 1e-3


def test_separation_rejects_non_basic():
    with pytest.raises(NotBasicError):
        verify_separation([f2("x")], get_submetry("s2-latitude"), samples=4)


def test_hopf_image_is_unit_sphere():
    s3 = get_space("s3")
    h = [PolyFunction.parse(s3, t) for t in HOPF_STRINGS]
    assert h[0] * h[0] + h[1] * h[1] + h[2] * h[2] == PolyFunction.constant(s3, 1)


def test_maximality_examples():
    lat = get_submetry("s2-latitude")
    rep = maximality_probe(alg("z"), lat, 30)
    assert rep.agree
    assert [r.eigenvalue for r in rep.rows] == [0, 2, 6, 12, 20, 30]
    assert all(r.dim_basic == r.dim_algebra == 1 for r in rep.rows)

    rep = maximality_probe(alg("z^2"), get_submetry("s2-fold"), 30)
    assert rep.agree
    assert [r.dim_basic for r in rep.rows] == [1, 0, 1, 0, 1, 0]

    rep = maximality_probe(alg("z^3"), lat, 30)
    bad = rep.first_mismatch()
    assert bad.eigenvalue == 2 and bad.dim_basic == 1 and bad.dim_algebra == 0
    assert bad.outside[0] == f2("z").scale(bad.outside[0].ambient.coefficient((0, 0, 1)))


def test_field_of_fractions_regression():
    # z = z^3 / z^2, yet z is not in <z^2>; it is in the closed algebra <z>
    assert not alg("z^2").contains(f2("z^3"), 6)
    assert not alg("z^2").contains(f2("z"), 6)
    assert alg("z^2").contains(f2("z^2"), 6)
    assert alg("z").contains(f2("z"), 6)
