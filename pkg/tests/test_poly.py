from fractions import Fraction

import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from submetrylab.poly import Poly, format_poly, parse_poly

X = sp.symbols("x1:4")


def to_sympy(p: Poly):
    return sum(sp.Rational(c.numerator, c.denominator) * sp.prod([x ** k for x, k in zip(X, e)])
               for e, c in p.terms.items())


terms = st.dictionaries(
    st.tuples(*[st.integers(0, 3)] * 3),
    st.fractions(min_value=-5, max_value=5, max_denominator=7),
    max_size=5,
)


def test_parse_and_format_example():
    p = parse_poly("3/2 x1^2 x3 - 1 x2", 3)
    assert p.coefficient((2, 0, 1)) == Fraction(3, 2)
    assert p.coefficient((0, 1, 0)) == -1
    assert parse_poly(format_poly(p), 3) == p


def test_parse_accepts_products_and_decimals():
    assert parse_poly("2*x1*x1 + 0.5", 3) == parse_poly("2 x1^2 + 1/2", 3)


@settings(max_examples=60, deadline=None)
@given(terms, terms)
def test_arithmetic_matches_sympy(a, b):
    p, q = Poly(3, a), Poly(3, b)
    assert parse_poly(format_poly(p), 3) == p
    assert sp.expand(to_sympy(p * q) - to_sympy(p) * to_sympy(q)) == 0
    assert sp.expand(to_sympy(p - q) - (to_sympy(p) - to_sympy(q))) == 0
    assert sp.expand(to_sympy(p.diff(1)) - sp.diff(to_sympy(p), X[1])) == 0
    lap = sum(sp.diff(to_sympy(p), x, 2) for x in X)
    assert sp.expand(to_sympy(p.laplacian()) - lap) == 0
