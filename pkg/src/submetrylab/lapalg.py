"""Finitely generated subalgebras of the eigenfunction algebra.

Membership is decided by exact linear algebra in the degree filtration:
F_d is spanned by the products of generators of total ambient degree <= d.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Sequence

import numpy as np

from .config import DEFAULT, DEFAULT_SEED
from .errors import ConfigurationError, CutoffExceeded, InconclusiveError, NotBasicError
from .linalg import RationalSpan, nullspace, solve_dense
from .polyfun import (
    PolyFunction,
    eigenspace_basis,
    l2_inner,
    laplace_beltrami,
    spectrum,
)
from .spaces import SpaceModel


def _key_order(k):
    lam, e = k
    return (lam, sum(e), e)


class Subalgebra:
    """Subalgebra of R[M] generated by ``generators`` (constants always included)."""

    def __init__(self, space: SpaceModel, generators: Sequence[PolyFunction], cap: int | None = None,
                 name: str | None = None):
        self.space = space
        self.generators = tuple(g for g in generators if not g.is_constant())
        self.cap = DEFAULT.degree_cap if cap is None else cap
        self.name = name
        self.gen_degrees = tuple(g.degree() for g in self.generators)
        self._products: dict[tuple[int, ...], PolyFunction] = {(0,) * len(self.generators): PolyFunction.constant(space, 1)}
        self._basis: list[PolyFunction] = []
        self._labels: list[tuple[int, ...]] = []
        self._span = RationalSpan(sort_key=_key_order)
        self._built_to = -1
        self._spans: dict[int, RationalSpan] = {}
        self._eigen_cache: dict[tuple[Fraction, int], tuple[PolyFunction, ...]] = {}

    @classmethod
    def from_strings(cls, space: SpaceModel, gens: Sequence[str], **kw) -> "Subalgebra":
        return cls(space, [PolyFunction.parse(space, g) for g in gens], **kw)

    def __repr__(self) -> str:
        gens = ", ".join(g.to_string() for g in self.generators)
        return f"Subalgebra[{self.space.id}]<{gens}>"

    def _check(self, d: int):
        if d > self.cap:
            raise ConfigurationError(f"degree {d} exceeds the configured cap {self.cap}")

    def _product(self, exps: tuple[int, ...]) -> PolyFunction:
        if exps not in self._products:
            i = next(k for k, e in enumerate(exps) if e)
            prev = list(exps)
            prev[i] -= 1
            self._products[exps] = self._product(tuple(prev)) * self.generators[i]
        return self._products[exps]

    def _exponents_of_degree(self, d: int):
        """Generator exponent vectors whose weighted degree is exactly ``d``."""
        n = len(self.generators)
        out = []

        def rec(i, remaining, acc):
            if i == n:
                if remaining == 0:
                    out.append(tuple(acc))
                return
            g = self.gen_degrees[i]
            for e in range(remaining // g + 1):
                rec(i + 1, remaining - e * g, acc + [e])

        if n == 0:
            return [()] if d == 0 else []
        rec(0, d, [])
        return out

    def _build(self, d: int):
        self._check(d)
        for deg in range(self._built_to + 1, d + 1):
            for exps in sorted(self._exponents_of_degree(deg)):
                f = self._product(exps)
                if self._span.add(f.coords()):
                    self._basis.append(f)
                    self._labels.append(exps)
            self._built_to = deg

    def filtration(self, d: int) -> tuple[PolyFunction, ...]:
        """Linearly independent basis of F_d; F_(d-1)'s basis is a prefix."""
        self._build(d)
        n = sum(1 for lab in self._labels if self._weighted(lab) <= d)
        return tuple(self._basis[:n])

    def _weighted(self, exps) -> int:
        return sum(e * g for e, g in zip(exps, self.gen_degrees))

    def labels(self, d: int) -> tuple[tuple[int, ...], ...]:
        self._build(d)
        return tuple(lab for lab in self._labels if self._weighted(lab) <= d)

    def membership(self, f: PolyFunction, d: int) -> tuple[PolyFunction, dict[int, Fraction]]:
        """``(residual, witness)``; the residual is zero iff ``f`` lies in F_d.

        The witness maps positions in ``filtration(d)`` to coefficients.
        """
        if d not in self._spans:
            self._spans[d] = _span_of(self.filtration(d))
        rem, witness = self._spans[d].reduce(f.coords())
        return PolyFunction.from_coords(self.space, rem), {k: v for k, v in witness.items() if v}

    def contains(self, f: PolyFunction, d: int | None = None) -> bool:
        d = max(f.degree(), max(self.gen_degrees, default=0)) if d is None else d
        d = min(d, self.cap)
        return self.membership(f, d)[0].is_zero()

    def expand(self, witness: dict[int, Fraction], d: int) -> PolyFunction:
        basis = self.filtration(d)
        total = PolyFunction(self.space)
        for i, c in witness.items():
            total = total + basis[i].scale(c)
        return total

    def eigen_part(self, lam, d: int) -> tuple[PolyFunction, ...]:
        """Exact basis of F_d intersected with E_lambda."""
        lam = Fraction(lam)
        key = (lam, d)
        if key not in self._eigen_cache:
            basis = self.filtration(d)
            cols = [{k: v for k, v in b.coords().items() if k[0] != lam} for b in basis]
            out = []
            span = RationalSpan(sort_key=_key_order)
            for combo in nullspace(cols):
                f = PolyFunction(self.space)
                for i, c in combo.items():
                    f = f + basis[i].scale(c)
                if not f.is_zero() and span.add(f.coords()):
                    out.append(f)
            self._eigen_cache[key] = tuple(out)
        return self._eigen_cache[key]


def _span_of(basis: Sequence[PolyFunction]) -> RationalSpan:
    span = RationalSpan(sort_key=_key_order)
    for b in basis:
        span.add(b.coords())
    return span


# ---------------------------------------------------------------------------
# Laplacian closure

@dataclass
class ClosureCertificate:
    closed: bool
    degree_bound: int
    witnesses: list[dict[int, Fraction]] = field(default_factory=list)
    failing_index: int | None = None
    residual: PolyFunction | None = None

    def describe(self) -> str:
        if self.closed:
            return f"closed within degree {self.degree_bound}"
        return (f"not closed within degree {self.degree_bound}: generator {self.failing_index} "
                f"leaves residual {self.residual.to_string()}")


def check_laplacian_closed(algebra: Subalgebra, degree_bound: int) -> ClosureCertificate:
    if degree_bound > algebra.cap:
        raise ConfigurationError(f"degree bound {degree_bound} exceeds cap {algebra.cap}")
    if any(g > degree_bound for g in algebra.gen_degrees):
        raise ConfigurationError("a generator exceeds the degree bound")
    witnesses = []
    for i, g in enumerate(algebra.generators):
        residual, witness = algebra.membership(laplace_beltrami(g), degree_bound)
        if not residual.is_zero():
            return ClosureCertificate(False, degree_bound, witnesses, i, residual)
        witnesses.append(witness)
    return ClosureCertificate(True, degree_bound, witnesses)


# ---------------------------------------------------------------------------
# Reynolds operator

def reynolds(algebra: Subalgebra, f: PolyFunction, eigen_cutoff, degree: int | None = None) -> PolyFunction:
    """Eigenspace-wise L2 projection of ``f`` onto the algebra.

    ``degree`` is the filtration degree searched for A meet E_lambda; it
    defaults to the degree of ``f``, enough for the catalog algebras.
    """
    cutoff = Fraction(eigen_cutoff)
    for lam in f.eigenvalues:
        if lam > cutoff:
            raise CutoffExceeded(f"component with eigenvalue {lam} above cutoff {cutoff}")
    d = min(algebra.cap, max(f.degree(), 0) if degree is None else degree)
    out = PolyFunction(f.space)
    for lam, h in f.components:
        basis = algebra.eigen_part(lam, d)
        if not basis:
            continue
        comp = PolyFunction(f.space, [(lam, h)])
        gram = [[l2_inner(a, b) for b in basis] for a in basis]
        rhs = [l2_inner(comp, b) for b in basis]
        for c, b in zip(solve_dense(gram, rhs), basis):
            out = out + b.scale(c)
    return out


# ---------------------------------------------------------------------------
# separation and maximality

@dataclass
class SeparationReport:
    separates: bool
    margin: float
    pairs: int
    violation: tuple[np.ndarray, np.ndarray] | None = None
    violation_leaves: tuple | None = None


def verify_separation(rho: Sequence[PolyFunction], sigma, samples: int = 24, tol: float = 1e-8,
                      rng: np.random.Generator | None = None, basic_tol: float | None = None) -> SeparationReport:
    """Check that ``rho`` takes different values on distinct sampled fibers of ``sigma``."""
    rng = rng or np.random.default_rng(DEFAULT_SEED)
    basic_tol = DEFAULT.fiber_constancy if basic_tol is None else basic_tol
    evals = [r.evaluator() for r in rho]

    def values(pts):
        return np.stack([e(pts) for e in evals], axis=-1)

    leaves = sigma.sample_leaves(samples, rng)
    reps = []
    for leaf in leaves:
        chart = sigma.chart_for_leaf(leaf)
        pts, _ = chart.nodes(16)
        vals = values(pts)
        spread = float(np.max(np.ptp(vals, axis=0))) if len(vals) > 1 else 0.0
        if spread > basic_tol:
            raise NotBasicError(f"rho varies by {spread:.3e} on the fiber {leaf!r}")
        k = rng.integers(len(pts))
        reps.append((pts[k], vals[k]))
    margin, violation, vleaves, npairs = np.inf, None, None, 0
    for i, j in combinations(range(len(leaves)), 2):
        npairs += 1
        sep = float(np.max(np.abs(reps[i][1] - reps[j][1])))
        if sep < margin:
            margin = sep
        if sep <= tol and violation is None:
            violation = (reps[i][0], reps[j][0])
            vleaves = (leaves[i], leaves[j])
    return SeparationReport(violation is None, margin, npairs, violation, vleaves)


@dataclass
class ProbeRow:
    eigenvalue: Fraction
    dim_basic: int
    dim_algebra: int
    members: int
    agree: bool
    outside: list[PolyFunction] = field(default_factory=list)


@dataclass
class MaximalityReport:
    rows: list[ProbeRow]

    @property
    def agree(self) -> bool:
        return all(r.agree for r in self.rows)

    def first_mismatch(self) -> ProbeRow | None:
        return next((r for r in self.rows if not r.agree), None)


def _numeric_rref(m: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Row-reduce ``m`` (rows = vectors) with partial pivoting."""
    a = np.array(m, dtype=float)
    rows, cols = a.shape
    r = 0
    for c in range(cols):
        if r == rows:
            break
        piv = r + int(np.argmax(np.abs(a[r:, c])))
        if abs(a[piv, c]) < tol:
            continue
        a[[r, piv]] = a[[piv, r]]
        a[r] /= a[r, c]
        for k in range(rows):
            if k != r:
                a[k] -= a[k, c] * a[r]
        r += 1
    return a[:r]


def maximality_probe(algebra: Subalgebra, sigma, eigen_cutoff, samples: int = 80,
                     rng: np.random.Generator | None = None, rank_rel: float | None = None,
                     max_denominator: int = 10**6) -> MaximalityReport:
    """Compare dim(A meet E_lambda) with the dimension of the basic part of E_lambda."""
    rng = rng or np.random.default_rng(DEFAULT_SEED)
    rank_rel = DEFAULT.rank_rel if rank_rel is None else rank_rel
    space = algebra.space
    rows = []
    for lam in spectrum(space, eigen_cutoff):
        basis = eigenspace_basis(space, lam)
        npts = max(samples, 3 * len(basis))
        pts = space.random_points(npts, rng)
        vals = np.stack([b(pts) for b in basis], axis=1)
        avgs = np.stack([sigma.average_at(b, pts) for b in basis], axis=1)
        coeffs, *_ = np.linalg.lstsq(vals, avgs, rcond=None)
        u, s, _ = np.linalg.svd(coeffs)
        # averaging is a projection: nonzero singular values are O(1), so the scale is floored at 1
        thresh = rank_rel * max(float(s[0]), 1.0)
        ambiguous = [x for x in s if thresh / DEFAULT.rank_ambiguity < x < thresh * DEFAULT.rank_ambiguity]
        if ambiguous:
            raise InconclusiveError(f"inconclusive at eigenvalue {lam}: singular value {ambiguous[0]:.3e}")
        rank = int(np.sum(s > thresh))
        d = min(algebra.cap, max(basis[0].degree(), max(algebra.gen_degrees, default=0)))
        dim_a = len(algebra.eigen_part(lam, d))
        members, outside = 0, []
        if rank:
            for row in _numeric_rref(u[:, :rank].T):
                f = PolyFunction(space)
                for c, b in zip(row, basis):
                    q = Fraction(float(c)).limit_denominator(max_denominator)
                    if q:
                        f = f + b.scale(q)
                if algebra.contains(f, d):
                    members += 1
                else:
                    outside.append(f)
        rows.append(ProbeRow(lam, rank, dim_a, members, rank == dim_a == members, outside))
    return MaximalityReport(rows)
