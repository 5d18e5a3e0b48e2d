"""Exact algebraic functions on the catalog spaces.

A function in the algebra generated by eigenfunctions of the Laplace-Beltrami
operator is stored by its eigen-decomposition.  On a sphere factor S^n in
R^(n+1) a polynomial splits as P = sum_j r^(2j) H_(k-2j) with harmonic
homogeneous H; restricting r = 1 leaves the harmonic pieces, and each is an
eigenfunction.  On products the split is done factor by factor, so every
component is multi-homogeneous and harmonic in each factor's variables.  The
resulting representative is unique, which makes equality on M decidable.

Laplacian sign convention: Delta f = -div grad f (nonnegative spectrum).
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from itertools import combinations_with_replacement, product
from math import comb, prod
from typing import Iterable, Sequence

import numpy as np

from .poly import Poly, format_poly, parse_poly, sphere_radius_sq
from .spaces import SpaceModel


def harmonic_eigenvalue(m: int, ambient: int) -> Fraction:
    """Eigenvalue of the restriction to the unit sphere of a harmonic
    homogeneous polynomial of degree ``m`` in ``ambient`` variables.

    In polar form the flat Laplacian reads d_r^2 + (N-1)/r d_r - Delta_S/r^2.
    For r^m Y harmonic the radial part contributes m(m-1) + (N-1)m, which the
    sphere part must cancel.
    """
    radial_second = m * (m - 1)
    radial_first = (ambient - 1) * m
    return Fraction(radial_second + radial_first)


@lru_cache(maxsize=None)
def _radius_power(nvars: int, vars: tuple[int, ...], j: int) -> Poly:
    if j == 0:
        return Poly.const(nvars, 1)
    return _radius_power(nvars, vars, j - 1) * sphere_radius_sq(nvars, vars)


@lru_cache(maxsize=200_000)
def _decompose(p: Poly, vars: tuple[int, ...], k: int) -> tuple[Poly, ...]:
    """Split ``p`` (homogeneous of degree ``k`` in ``vars``) into harmonic pieces.

    Returns ``(h_0, h_1, ...)`` with ``p = sum_j r^(2j) h_j`` where ``h_j`` is
    harmonic and homogeneous of degree ``k - 2j`` in ``vars``.
    """
    if k < 2 or p.is_zero():
        return (p,)
    n_amb = len(vars)
    lower = _decompose(p.laplacian(vars), vars, k - 2)
    pieces = [None]
    rest = p
    # Delta(r^(2j) h) = 2j(2k - 2j + N - 2) r^(2j-2) h for h harmonic of degree k-2j
    for idx, g in enumerate(lower):
        j = idx + 1
        h = g.scale(Fraction(1, 2 * j * (2 * k - 2 * j + n_amb - 2)))
        pieces.append(h)
        rest = rest - _radius_power(p.nvars, vars, j) * h
    pieces[0] = rest
    return tuple(pieces)


def _multidegree_split(space: SpaceModel, p: Poly) -> dict[tuple[int, ...], Poly]:
    pieces: dict[tuple[int, ...], Poly] = {(): p}
    for vars in space.factor_vars:
        nxt: dict[tuple[int, ...], Poly] = {}
        for md, q in pieces.items():
            for k, qk in q.homogeneous_parts(vars).items():
                for j, h in enumerate(_decompose(qk, vars, k)):
                    if h.is_zero():
                        continue
                    key = md + (k - 2 * j,)
                    nxt[key] = nxt[key] + h if key in nxt else h
        pieces = {md: q for md, q in nxt.items() if not q.is_zero()}
    return pieces


def multidegree_eigenvalue(space: SpaceModel, md: Sequence[int]) -> Fraction:
    return sum((harmonic_eigenvalue(m, n + 1) for m, n in zip(md, space.factor_dims)), Fraction(0))


class PolyFunction:
    """Function on a catalog space in canonical eigen-decomposed form.

    ``components`` is a tuple of ``(eigenvalue, polynomial)`` pairs sorted by
    eigenvalue; each polynomial is multi-homogeneous and harmonic per factor.
    """

    __slots__ = ("space", "components", "_ambient", "_hash")

    def __init__(self, space: SpaceModel, components: Iterable[tuple[Fraction, Poly]] = ()):
        self.space = space
        self.components = tuple(sorted(((Fraction(l), h) for l, h in components if not h.is_zero()),
                                       key=lambda c: c[0]))
        self._ambient = None
        self._hash = None

    # constructors
    @classmethod
    def constant(cls, space: SpaceModel, c) -> "PolyFunction":
        return reduce_canonical(space, Poly.const(space.ambient_dim, c))

    @classmethod
    def coordinate(cls, space: SpaceModel, i: int) -> "PolyFunction":
        return reduce_canonical(space, Poly.var(space.ambient_dim, i))

    @classmethod
    def parse(cls, space: SpaceModel, text: str) -> "PolyFunction":
        return reduce_canonical(space, parse_poly(text, space.ambient_dim, space.aliases))

    # views
    @property
    def ambient(self) -> Poly:
        """The canonical ambient polynomial (sum of the components)."""
        if self._ambient is None:
            total = Poly.zero(self.space.ambient_dim)
            for _, h in self.components:
                total = total + h
            self._ambient = total
        return self._ambient

    @property
    def eigenvalues(self) -> tuple[Fraction, ...]:
        return tuple(l for l, _ in self.components)

    def component(self, lam) -> "PolyFunction":
        lam = Fraction(lam)
        return PolyFunction(self.space, [(l, h) for l, h in self.components if l == lam])

    def degree(self) -> int:
        return self.ambient.degree()

    def is_zero(self) -> bool:
        return not self.components

    def is_constant(self) -> bool:
        return all(l == 0 for l, _ in self.components)

    def constant_value(self) -> Fraction:
        for l, h in self.components:
            if l == 0:
                return h.constant_term()
        return Fraction(0)

    def coords(self) -> dict:
        """Sparse coordinate vector keyed by ``(eigenvalue, exponent)``."""
        return {(l, e): c for l, h in self.components for e, c in h.terms.items()}

    @classmethod
    def from_coords(cls, space: SpaceModel, vec: dict) -> "PolyFunction":
        by_l: dict[Fraction, dict] = {}
        for (l, e), c in vec.items():
            by_l.setdefault(l, {})[e] = c
        return cls(space, [(l, Poly(space.ambient_dim, t)) for l, t in by_l.items()])

    def __call__(self, pts):
        return self.ambient.compile()(pts)

    def evaluator(self):
        return self.ambient.compile()

    def to_string(self, names: Sequence[str] | None = None) -> str:
        return format_poly(self.ambient, names or self.space.names)

    def __repr__(self) -> str:
        return f"PolyFunction[{self.space.id}]({self.to_string()!r})"

    # arithmetic
    def __eq__(self, other) -> bool:
        if isinstance(other, (int, Fraction)):
            other = PolyFunction.constant(self.space, other)
        if not isinstance(other, PolyFunction):
            return NotImplemented
        return self.space == other.space and self.components == other.components

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self.space.id, self.components))
        return self._hash

    def _coerce(self, other) -> "PolyFunction":
        if isinstance(other, PolyFunction):
            if other.space != self.space:
                raise ValueError("functions live on different spaces")
            return other
        return PolyFunction.constant(self.space, other)

    def __add__(self, other) -> "PolyFunction":
        other = self._coerce(other)
        acc: dict[Fraction, Poly] = dict(self.components)
        for l, h in other.components:
            acc[l] = acc[l] + h if l in acc else h
        return PolyFunction(self.space, acc.items())

    __radd__ = __add__

    def __neg__(self) -> "PolyFunction":
        return PolyFunction(self.space, [(l, -h) for l, h in self.components])

    def __sub__(self, other) -> "PolyFunction":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "PolyFunction":
        return self._coerce(other) - self

    def scale(self, c) -> "PolyFunction":
        c = Fraction(c)
        return PolyFunction(self.space, [(l, h.scale(c)) for l, h in self.components])

    def __mul__(self, other) -> "PolyFunction":
        if not isinstance(other, PolyFunction):
            return self.scale(other)
        other = self._coerce(other)
        return reduce_canonical(self.space, self.ambient * other.ambient)

    def __rmul__(self, other) -> "PolyFunction":
        return self.scale(other)

    def __pow__(self, k: int) -> "PolyFunction":
        return reduce_canonical(self.space, self.ambient ** k)


@lru_cache(maxsize=50_000)
def reduce_canonical(space: SpaceModel, p: Poly) -> PolyFunction:
    """Canonical form of the restriction of the ambient polynomial ``p`` to M."""
    if p.nvars != space.ambient_dim:
        raise ValueError(f"polynomial in {p.nvars} variables on {space.id}")
    by_l: dict[Fraction, Poly] = {}
    for md, h in _multidegree_split(space, p).items():
        l = multidegree_eigenvalue(space, md)
        by_l[l] = by_l[l] + h if l in by_l else h
    return PolyFunction(space, by_l.items())


def laplace_beltrami(f: PolyFunction) -> PolyFunction:
    return PolyFunction(f.space, [(l, h.scale(l)) for l, h in f.components])


def ambient_laplacian(space: SpaceModel, p: Poly) -> Poly:
    """Laplace-Beltrami of ``p|M`` written with flat operators, without any
    harmonic decomposition: on a unit sphere factor with N ambient variables,
    -(Delta_0 P - E(E-1)P - (N-1)E P) restricted to r = 1, E the Euler operator.
    """
    out = Poly.zero(space.ambient_dim)
    for vars in space.factor_vars:
        n_amb = len(vars)
        ep = p.euler(vars)
        eep = ep.euler(vars)
        out = out - (p.laplacian(vars) - (eep - ep) - ep.scale(n_amb - 1))
    return out


def sphere_moment(alpha: Sequence[int], ambient: int) -> Fraction:
    """Normalized integral of x^alpha over the unit sphere in R^ambient."""
    if any(a % 2 for a in alpha):
        return Fraction(0)
    num = prod(_double_factorial(a - 1) for a in alpha)
    half = sum(alpha) // 2
    den = prod(ambient + 2 * j for j in range(half))
    return Fraction(num, den)


def _double_factorial(n: int) -> int:
    return prod(range(n, 0, -2)) if n > 0 else 1


def integrate(space: SpaceModel, p: Poly) -> Fraction:
    """Normalized integral (total volume 1) of ``p`` over M."""
    total = Fraction(0)
    for e, c in p.terms.items():
        m = Fraction(1)
        for vars in space.factor_vars:
            m *= sphere_moment([e[i] for i in vars], len(vars))
            if not m:
                break
        total += c * m
    return total


def l2_inner(f: PolyFunction, g: PolyFunction) -> Fraction:
    if f.space != g.space:
        raise ValueError("functions live on different spaces")
    total = Fraction(0)
    # eigencomponents are orthogonal: pair equal eigenvalues only
    gd = dict(g.components)
    for l, h in f.components:
        if l in gd:
            total += integrate(f.space, h * gd[l])
    return total


def eigen_decompose(f: PolyFunction) -> list[tuple[Fraction, PolyFunction]]:
    return [(l, PolyFunction(f.space, [(l, h)])) for l, h in f.components]


def gram_gradients(rhos: Sequence[PolyFunction]) -> list[list[PolyFunction]]:
    """Matrix of <grad rho_i, grad rho_j> = (rho_i D rho_j + rho_j D rho_i - D(rho_i rho_j)) / 2."""
    lap = [laplace_beltrami(r) for r in rhos]
    n = len(rhos)
    out: list[list[PolyFunction | None]] = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(i, n):
            e = (rhos[i] * lap[j] + rhos[j] * lap[i] - laplace_beltrami(rhos[i] * rhos[j])).scale(Fraction(1, 2))
            out[i][j] = out[j][i] = e
    return out


@dataclass(frozen=True)
class GradientField:
    """Tangential gradient as one ambient polynomial per coordinate."""

    space: SpaceModel
    polys: tuple[Poly, ...]

    def __call__(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return np.stack([p.compile()(pts) for p in self.polys], axis=-1)

    def dot(self, other: "GradientField") -> Poly:
        total = Poly.zero(self.space.ambient_dim)
        for a, b in zip(self.polys, other.polys):
            total = total + a * b
        return total


def gradient(f: PolyFunction) -> GradientField:
    space = f.space
    p = f.ambient
    n = space.ambient_dim
    grad = [p.diff(i) for i in range(n)]
    for vars in space.factor_vars:
        radial = Poly.zero(n)
        for i in vars:
            radial = radial + Poly.var(n, i) * grad[i]
        for i in vars:
            grad[i] = grad[i] - radial * Poly.var(n, i)
    return GradientField(space, tuple(grad))


# ---------------------------------------------------------------------------
# eigenspaces

def spectrum(space: SpaceModel, cutoff) -> list[Fraction]:
    """Distinct eigenvalues not exceeding ``cutoff``."""
    return sorted({multidegree_eigenvalue(space, md) for md in _multidegrees(space, Fraction(cutoff))})


def _multidegrees(space: SpaceModel, cutoff: Fraction) -> list[tuple[int, ...]]:
    ranges = []
    for n in space.factor_dims:
        ms = []
        m = 0
        while harmonic_eigenvalue(m, n + 1) <= cutoff:
            ms.append(m)
            m += 1
        ranges.append(ms)
    return [md for md in product(*ranges) if multidegree_eigenvalue(space, md) <= cutoff]


def harmonic_dimension(m: int, ambient: int) -> int:
    if m < 0:
        return 0
    lower = comb(m - 2 + ambient - 1, ambient - 1) if m >= 2 else 0
    return comb(m + ambient - 1, ambient - 1) - lower


@lru_cache(maxsize=None)
def _factor_harmonics(nvars: int, vars: tuple[int, ...], m: int) -> tuple[Poly, ...]:
    """Harmonic projections of the monomials of degree ``m`` with last exponent <= 1.

    Modulo r^2 every monomial reduces to such monomials, so their projections
    form a basis of the harmonic polynomials of degree ``m``.
    """
    out = []
    last = vars[-1]
    for combo in combinations_with_replacement(vars, m):
        e = [0] * nvars
        for i in combo:
            e[i] += 1
        if e[last] <= 1:
            out.append(_decompose(Poly.monomial(e), vars, m)[0])
    return tuple(out)


@lru_cache(maxsize=None)
def eigenspace_basis(space: SpaceModel, lam) -> tuple[PolyFunction, ...]:
    """Exact basis of E_lambda (empty if lambda is not an eigenvalue)."""
    lam = Fraction(lam)
    n = space.ambient_dim
    out = []
    for md in _multidegrees(space, lam):
        if multidegree_eigenvalue(space, md) != lam:
            continue
        per_factor = [_factor_harmonics(n, vars, m) for vars, m in zip(space.factor_vars, md)]
        for hs in product(*per_factor):
            h = Poly.const(n, 1)
            for q in hs:
                h = h * q
            out.append(PolyFunction(space, [(lam, h)]))
    return tuple(out)


def harmonic_basis(space: SpaceModel, cutoff) -> list[PolyFunction]:
    out: list[PolyFunction] = []
    for lam in spectrum(space, cutoff):
        out.extend(eigenspace_basis(space, lam))
    return out
