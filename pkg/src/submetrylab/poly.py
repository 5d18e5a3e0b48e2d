"""Sparse multivariate polynomials with exact rational coefficients.

A :class:`Poly` maps exponent tuples to :class:`fractions.Fraction`
coefficients.  The number of variables is fixed per polynomial; zero
coefficients are never stored.  The plain-text syntax understood by
:func:`parse_poly` and produced by :func:`format_poly` looks like::

    3/2 x1^2 x3 - 1 x2
"""
from __future__ import annotations

import re
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

Exps = tuple[int, ...]


def _frac(c) -> Fraction:
    if isinstance(c, Fraction):
        return c
    if isinstance(c, float):
        raise TypeError("floating point coefficients are not allowed in exact polynomials")
    return Fraction(c)


class Poly:
    """Immutable sparse polynomial in ``nvars`` variables over the rationals."""

    __slots__ = ("nvars", "terms", "_hash")

    def __init__(self, nvars: int, terms: Mapping[Exps, Fraction] | None = None):
        self.nvars = nvars
        clean: dict[Exps, Fraction] = {}
        if terms:
            for e, c in terms.items():
                c = _frac(c)
                if c:
                    if len(e) != nvars:
                        raise ValueError(f"exponent {e} does not match {nvars} variables")
                    clean[tuple(e)] = c
        self.terms = clean
        self._hash = None

    # construction helpers
    @classmethod
    def zero(cls, nvars: int) -> "Poly":
        return cls(nvars)

    @classmethod
    def const(cls, nvars: int, c) -> "Poly":
        return cls(nvars, {(0,) * nvars: _frac(c)})

    @classmethod
    def var(cls, nvars: int, i: int) -> "Poly":
        e = [0] * nvars
        e[i] = 1
        return cls(nvars, {tuple(e): Fraction(1)})

    @classmethod
    def monomial(cls, exps: Sequence[int], c=1) -> "Poly":
        return cls(len(exps), {tuple(exps): _frac(c)})

    @classmethod
    def _raw(cls, nvars: int, terms: dict) -> "Poly":
        p = cls.__new__(cls)
        p.nvars = nvars
        p.terms = terms
        p._hash = None
        return p

    # basic protocol
    def __bool__(self) -> bool:
        return bool(self.terms)

    def is_zero(self) -> bool:
        return not self.terms

    def __eq__(self, other) -> bool:
        if isinstance(other, Poly):
            return self.nvars == other.nvars and self.terms == other.terms
        if isinstance(other, (int, Fraction)):
            return self == Poly.const(self.nvars, other)
        return NotImplemented

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self.nvars, frozenset(self.terms.items())))
        return self._hash

    def __repr__(self) -> str:
        return f"Poly({format_poly(self)!r})"

    def _coerce(self, other) -> "Poly":
        if isinstance(other, Poly):
            if other.nvars != self.nvars:
                raise ValueError("variable count mismatch")
            return other
        return Poly.const(self.nvars, other)

    def __add__(self, other) -> "Poly":
        other = self._coerce(other)
        out = dict(self.terms)
        for e, c in other.terms.items():
            s = out.get(e, 0) + c
            if s:
                out[e] = s
            else:
                out.pop(e, None)
        return Poly._raw(self.nvars, out)

    __radd__ = __add__

    def __neg__(self) -> "Poly":
        return Poly._raw(self.nvars, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other) -> "Poly":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "Poly":
        return self._coerce(other) - self

    def scale(self, c) -> "Poly":
        c = _frac(c)
        if not c:
            return Poly.zero(self.nvars)
        return Poly._raw(self.nvars, {e: v * c for e, v in self.terms.items()})

    def __mul__(self, other) -> "Poly":
        if not isinstance(other, Poly):
            return self.scale(other)
        if other.nvars != self.nvars:
            raise ValueError("variable count mismatch")
        out: dict[Exps, Fraction] = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                s = out.get(e, 0) + c1 * c2
                if s:
                    out[e] = s
                else:
                    out.pop(e, None)
        return Poly._raw(self.nvars, out)

    def __rmul__(self, other) -> "Poly":
        return self.scale(other)

    def __pow__(self, k: int) -> "Poly":
        if k < 0:
            raise ValueError("negative power")
        result = Poly.const(self.nvars, 1)
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    # structure
    def degree(self, vars: Iterable[int] | None = None) -> int:
        """Total degree, optionally counting only the variables in ``vars``."""
        if not self.terms:
            return -1
        if vars is None:
            return max(sum(e) for e in self.terms)
        vs = tuple(vars)
        return max(sum(e[i] for i in vs) for e in self.terms)

    def homogeneous_parts(self, vars: Iterable[int] | None = None) -> dict[int, "Poly"]:
        vs = tuple(range(self.nvars)) if vars is None else tuple(vars)
        parts: dict[int, dict] = {}
        for e, c in self.terms.items():
            d = sum(e[i] for i in vs)
            parts.setdefault(d, {})[e] = c
        return {d: Poly._raw(self.nvars, t) for d, t in sorted(parts.items())}

    def diff(self, i: int) -> "Poly":
        out = {}
        for e, c in self.terms.items():
            k = e[i]
            if k:
                ne = list(e)
                ne[i] = k - 1
                out[tuple(ne)] = c * k
        return Poly._raw(self.nvars, out)

    def laplacian(self, vars: Iterable[int] | None = None) -> "Poly":
        """Euclidean Laplacian (sum of pure second derivatives) in ``vars``."""
        vs = range(self.nvars) if vars is None else vars
        out: dict[Exps, Fraction] = {}
        for i in vs:
            for e, c in self.terms.items():
                k = e[i]
                if k >= 2:
                    ne = list(e)
                    ne[i] = k - 2
                    ne = tuple(ne)
                    s = out.get(ne, 0) + c * k * (k - 1)
                    if s:
                        out[ne] = s
                    else:
                        out.pop(ne, None)
        return Poly._raw(self.nvars, out)

    def euler(self, vars: Iterable[int] | None = None) -> "Poly":
        """Euler operator sum_i x_i d/dx_i restricted to ``vars``."""
        vs = tuple(range(self.nvars)) if vars is None else tuple(vars)
        out = {}
        for e, c in self.terms.items():
            d = sum(e[i] for i in vs)
            if d:
                out[e] = c * d
        return Poly._raw(self.nvars, out)

    def substitute_sign(self, i: int) -> "Poly":
        """The polynomial with x_i replaced by -x_i."""
        return Poly._raw(self.nvars, {e: (-c if e[i] % 2 else c) for e, c in self.terms.items()})

    def coefficient(self, exps: Sequence[int]) -> Fraction:
        return self.terms.get(tuple(exps), Fraction(0))

    def constant_term(self) -> Fraction:
        return self.coefficient((0,) * self.nvars)

    # numerics
    def compile(self):
        """Return a vectorized float evaluator ``f(points) -> values``."""
        if not self.terms:
            return lambda pts: np.zeros(np.asarray(pts, dtype=float).shape[:-1])
        exps = np.array(list(self.terms.keys()), dtype=np.int64)
        coeffs = np.array([float(c) for c in self.terms.values()])

        def f(pts):
            pts = np.asarray(pts, dtype=float)
            # (..., 1, nvars) ** (nterms, nvars) -> (..., nterms)
            mon = np.prod(pts[..., None, :] ** exps, axis=-1)
            return mon @ coeffs

        return f

    def __call__(self, pts):
        return self.compile()(pts)


def sphere_radius_sq(nvars: int, vars: Sequence[int]) -> Poly:
    """sum of x_i^2 over ``vars``."""
    terms = {}
    for i in vars:
        e = [0] * nvars
        e[i] = 2
        terms[tuple(e)] = Fraction(1)
    return Poly(nvars, terms)


# ---------------------------------------------------------------------------
# text syntax

_FACTOR = re.compile(r"\s*(?:(\d+/\d+|\d*\.\d+|\d+)|([A-Za-z_]\w*)(?:\^(\d+))?|\*)\s*")


def default_names(nvars: int) -> tuple[str, ...]:
    return tuple(f"x{i + 1}" for i in range(nvars))


def parse_poly(text: str, nvars: int, aliases: Mapping[str, int] | None = None) -> Poly:
    """Parse the monomial syntax ``"3/2 x1^2 x3 - 1 x2"``.

    Factors within a term are separated by whitespace or ``*``.  Variables are
    ``x1..xN`` plus any names in ``aliases`` (mapping to 0-based indices).
    Decimal literals are converted exactly (``0.5`` -> ``1/2``).
    """
    names = {n: i for i, n in enumerate(default_names(nvars))}
    if aliases:
        names.update(aliases)
    s = text.strip()
    if not s:
        raise ValueError("empty polynomial")
    # split on top-level +/- that are not exponent signs
    terms: list[tuple[int, str]] = []
    sign, buf = 1, ""
    i = 0
    while i < len(s):
        ch = s[i]
        if ch in "+-" and (buf.strip() == "" or not buf.rstrip().endswith("^")):
            if buf.strip():
                terms.append((sign, buf))
                buf = ""
                sign = 1
            sign = -sign if ch == "-" else sign
        else:
            buf += ch
        i += 1
    if buf.strip():
        terms.append((sign, buf))
    elif not terms:
        raise ValueError(f"cannot parse polynomial {text!r}")
    out = Poly.zero(nvars)
    for sgn, body in terms:
        coeff = Fraction(sgn)
        exps = [0] * nvars
        pos = 0
        body = body.strip()
        while pos < len(body):
            m = _FACTOR.match(body, pos)
            if not m or m.end() == pos:
                raise ValueError(f"cannot parse {body[pos:]!r} in {text!r}")
            pos = m.end()
            num, name, power = m.group(1), m.group(2), m.group(3)
            if num:
                coeff *= Fraction(num)
            elif name:
                if name not in names:
                    raise ValueError(f"unknown variable {name!r} in {text!r}")
                exps[names[name]] += int(power) if power else 1
        out = out + Poly.monomial(exps, coeff)
    return out


def _monomial_key(e: Exps):
    return (-sum(e), tuple(-k for k in e))


def format_poly(p: Poly, names: Sequence[str] | None = None) -> str:
    """Inverse of :func:`parse_poly` (graded order, highest degree first)."""
    if not p.terms:
        return "0"
    names = names or default_names(p.nvars)
    parts = []
    for e in sorted(p.terms, key=_monomial_key):
        c = p.terms[e]
        sign = "-" if c < 0 else "+"
        mag = abs(c)
        factors = [names[i] + (f"^{k}" if k > 1 else "") for i, k in enumerate(e) if k]
        if not factors:
            body = str(mag)
        elif mag == 1:
            body = " ".join(factors)
        else:
            body = f"{mag} " + " ".join(factors)
        parts.append((sign, body))
    first_sign, first = parts[0]
    out = ("-" if first_sign == "-" else "") + first
    for sign, body in parts[1:]:
        out += f" {sign} {body}"
    return out
