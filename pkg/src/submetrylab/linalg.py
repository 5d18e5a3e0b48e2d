"""Exact linear algebra over the rationals on sparse coordinate vectors.

Vectors are dicts ``key -> Fraction``.  Keys must be sortable; the sort order
decides pivot choice (largest key first), which keeps reduced remainders
deterministic.
"""
from __future__ import annotations

from fractions import Fraction
from typing import Hashable, Sequence

Vec = dict


def axpy(a: Fraction, x: Vec, y: Vec) -> Vec:
    """Return ``y + a*x`` as a new dict."""
    out = dict(y)
    if not a:
        return out
    for k, v in x.items():
        s = out.get(k, 0) + a * v
        if s:
            out[k] = s
        else:
            out.pop(k, None)
    return out


class RationalSpan:
    """Incrementally built, fully reduced echelon basis of a span.

    Each echelon row remembers how it is written in terms of the vectors that
    were added, so membership queries return witnesses over the original
    generating list.
    """

    def __init__(self, sort_key=None):
        self._key = sort_key or (lambda k: k)
        self.rows: list[tuple[Hashable, Vec, Vec]] = []  # (pivot, row, combo)
        self._pivot_index: dict[Hashable, int] = {}
        self.count = 0  # number of vectors offered
        self.last_relation: Vec = {}

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def rank(self) -> int:
        return len(self.rows)

    def _reduce(self, vec: Vec, combo: Vec) -> tuple[Vec, Vec]:
        vec, combo = dict(vec), dict(combo)
        changed = True
        while changed:
            changed = False
            for k in list(vec):
                idx = self._pivot_index.get(k)
                if idx is not None and k in vec:
                    _, row, rcombo = self.rows[idx]
                    a = -vec[k]
                    vec = axpy(a, row, vec)
                    combo = axpy(a, rcombo, combo)
                    changed = True
        return vec, combo

    def add(self, vec: Vec) -> bool:
        """Offer a vector; returns True if it enlarged the span."""
        idx = self.count
        self.count += 1
        rem, combo = self._reduce(vec, {idx: Fraction(1)})
        if not rem:
            self.last_relation = {k: v for k, v in combo.items() if v}
            return False
        pivot = max(rem, key=self._key)
        inv = 1 / rem[pivot]
        rem = {k: v * inv for k, v in rem.items()}
        combo = {k: v * inv for k, v in combo.items()}
        # keep the basis fully reduced
        for j, (p, row, rcombo) in enumerate(self.rows):
            a = row.get(pivot)
            if a:
                self.rows[j] = (p, axpy(-a, rem, row), axpy(-a, combo, rcombo))
        self._pivot_index[pivot] = len(self.rows)
        self.rows.append((pivot, rem, combo))
        return True

    def reduce(self, vec: Vec) -> tuple[Vec, Vec]:
        """Return ``(remainder, witness)`` with ``vec = remainder + sum witness[i]*v_i``."""
        rem, combo = self._reduce(vec, {})
        return rem, {k: -v for k, v in combo.items()}

    def contains(self, vec: Vec) -> bool:
        return not self.reduce(vec)[0]


def nullspace(columns: Sequence[Vec]) -> list[dict[int, Fraction]]:
    """Exact basis of ``{c : sum_i c_i columns[i] = 0}`` as sparse dicts."""
    span = RationalSpan(sort_key=repr)
    kernel = []
    for col in columns:
        if not span.add(col):
            kernel.append(span.last_relation)
    return kernel


def solve_dense(a: list[list[Fraction]], b: list[Fraction]) -> list[Fraction]:
    """Solve a square nonsingular rational system by Gauss-Jordan elimination."""
    n = len(a)
    m = [list(map(Fraction, row)) + [Fraction(rhs)] for row, rhs in zip(a, b)]
    for col in range(n):
        piv = next((r for r in range(col, n) if m[r][col]), None)
        if piv is None:
            raise ZeroDivisionError("singular system")
        m[col], m[piv] = m[piv], m[col]
        inv = 1 / m[col][col]
        m[col] = [v * inv for v in m[col]]
        for r in range(n):
            if r != col and m[r][col]:
                f = m[r][col]
                m[r] = [v - f * w for v, w in zip(m[r], m[col])]
    return [row[n] for row in m]
