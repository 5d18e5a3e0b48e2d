"""Closed-form geometry of the catalog spaces.

Every catalog space is a finite product of round unit spheres S^n with
n >= 1, the circle S^1 being the n = 1 case; flat tori are products of
circles.  Points and tangent vectors are ambient vectors, the factors being
stacked in order.  Along a geodesic each factor moves on a great circle with
constant speed, which makes geodesics, parallel frames and the Jacobi
operator available in closed form.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Any

import numpy as np
from scipy.linalg import null_space

from .config import DEFAULT
from .errors import DomainError


@dataclass(frozen=True)
class SpaceModel:
    id: str
    factor_dims: tuple[int, ...]
    var_names: tuple[str, ...] | None = None

    @property
    def ambient_dim(self) -> int:
        return sum(n + 1 for n in self.factor_dims)

    @property
    def intrinsic_dim(self) -> int:
        return sum(self.factor_dims)

    @property
    def codim(self) -> int:
        return len(self.factor_dims)

    @cached_property
    def factor_slices(self) -> tuple[slice, ...]:
        out, start = [], 0
        for n in self.factor_dims:
            out.append(slice(start, start + n + 1))
            start += n + 1
        return tuple(out)

    @cached_property
    def factor_vars(self) -> tuple[tuple[int, ...], ...]:
        return tuple(tuple(range(s.start, s.stop)) for s in self.factor_slices)

    @property
    def names(self) -> tuple[str, ...]:
        if self.var_names:
            return self.var_names
        return tuple(f"x{i + 1}" for i in range(self.ambient_dim))

    @property
    def aliases(self) -> dict[str, int]:
        return {n: i for i, n in enumerate(self.names)}

    def residual(self, p) -> float:
        """Largest violation of the embedding equations |p_i|^2 = 1."""
        p = np.asarray(p, dtype=float)
        return max(abs(float(p[s] @ p[s]) - 1.0) for s in self.factor_slices)

    def check_point(self, p, tol: float | None = None) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if p.shape != (self.ambient_dim,):
            raise DomainError(f"point of shape {p.shape} on {self.id}")
        tol = DEFAULT.on_space if tol is None else tol
        # embedding residual is quadratic; allow a little slack for rounding
        if self.residual(p) > max(tol, 1e-12) * 4:
            raise DomainError(f"point off {self.id}: residual {self.residual(p):.3e}")
        return p

    def normalize(self, p) -> np.ndarray:
        p = np.array(p, dtype=float)
        for s in self.factor_slices:
            p[s] /= np.linalg.norm(p[s])
        return p

    def random_point(self, rng: np.random.Generator) -> np.ndarray:
        return self.normalize(rng.standard_normal(self.ambient_dim))

    def random_points(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return np.array([self.random_point(rng) for _ in range(n)])

    def random_unit_tangent(self, p, rng: np.random.Generator) -> np.ndarray:
        while True:
            w = tangent_project(self, p, rng.standard_normal(self.ambient_dim))
            n = np.linalg.norm(w)
            if n > 1e-6:
                return w / n

    def normal_basis(self, p) -> np.ndarray:
        """Rows spanning the normal space of the embedding at ``p``."""
        p = np.asarray(p, dtype=float)
        rows = np.zeros((self.codim, self.ambient_dim))
        for k, s in enumerate(self.factor_slices):
            rows[k, s] = p[s]
        return rows


_CATALOG = {
    "s2": SpaceModel("s2", (2,), ("x", "y", "z")),
    "s3": SpaceModel("s3", (3,)),
    "s4": SpaceModel("s4", (4,)),
    "t1": SpaceModel("t1", (1,), ("c", "s")),
    "t2": SpaceModel("t2", (1, 1)),
    "s2xs2": SpaceModel("s2xs2", (2, 2)),
}

#: identifiers accepted by the CLI and config files
SPACE_IDS = ("s2", "s3", "s4", "t2", "s2xs2")


def get_space(space_id: str) -> SpaceModel:
    try:
        return _CATALOG[space_id]
    except KeyError:
        raise DomainError(f"unknown space {space_id!r}; known: {', '.join(sorted(_CATALOG))}") from None


def tangent_project(space: SpaceModel, p, w) -> np.ndarray:
    """Orthogonal projection of the ambient vector ``w`` onto T_pM."""
    p = space.check_point(p)
    w = np.array(w, dtype=float)
    for s in space.factor_slices:
        w[s] -= (w[s] @ p[s]) * p[s]
    return w


def check_tangent(space: SpaceModel, p, v, tol: float | None = None) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    tol = DEFAULT.tangent if tol is None else tol
    resid = np.linalg.norm(v - tangent_project(space, p, v))
    if resid > max(tol, 1e-12) * max(1.0, np.linalg.norm(v)) * 10:
        raise DomainError(f"vector not tangent at p (normal part {resid:.3e})")
    return v


@dataclass(frozen=True)
class GeodesicRay:
    """Unit speed geodesic t -> exp_p(t v); optionally attached to a fiber chart."""

    space: SpaceModel
    point: np.ndarray
    direction: np.ndarray
    chart: Any = field(default=None, compare=False)

    def __post_init__(self):
        p = self.space.check_point(self.point)
        v = check_tangent(self.space, p, self.direction)
        if abs(np.linalg.norm(v) - 1.0) > 1e-10:
            raise DomainError(f"ray direction must be unit, |v| = {np.linalg.norm(v)}")

    @cached_property
    def _factors(self):
        """Per factor: (speed a, point p_i, unit velocity u_i or None)."""
        out = []
        for s in self.space.factor_slices:
            vi = self.direction[s]
            a = float(np.linalg.norm(vi))
            if a > 1e-14:
                out.append((a, self.point[s], vi / a))
            else:
                out.append((0.0, self.point[s], None))
        return tuple(out)

    @property
    def speeds(self) -> tuple[float, ...]:
        return tuple(f[0] for f in self._factors)

    def at(self, t: float) -> np.ndarray:
        out = np.empty(self.space.ambient_dim)
        for s, (a, p, u) in zip(self.space.factor_slices, self._factors):
            out[s] = p if u is None else np.cos(a * t) * p + np.sin(a * t) * u
        return out

    def velocity(self, t: float) -> np.ndarray:
        out = np.zeros(self.space.ambient_dim)
        for s, (a, p, u) in zip(self.space.factor_slices, self._factors):
            if u is not None:
                out[s] = a * (-np.sin(a * t) * p + np.cos(a * t) * u)
        return out

    def reversed(self) -> "GeodesicRay":
        return GeodesicRay(self.space, self.point, -self.direction, self.chart)

    @cached_property
    def _frame_spec(self):
        """Constant data of the parallel frame of c'(t)^perp."""
        space = self.space
        blocks = []  # (slice, constant ambient vectors, curvature)
        active = []
        for k, (s, (a, p, u)) in enumerate(zip(space.factor_slices, self._factors)):
            if u is None:
                basis = null_space(p[None, :]).T
            else:
                active.append(k)
                basis = null_space(np.vstack([p, u])).T
            blocks.append((s, basis, a * a))
        speeds = np.array([self._factors[k][0] for k in active])
        mixed = null_space(speeds[None, :]).T if len(active) > 1 else np.zeros((0, len(active)))
        return blocks, active, mixed


def geodesic_eval(space: SpaceModel, p, v, t: float) -> np.ndarray:
    """Point at arclength ``t`` on the unit speed geodesic through ``p`` with velocity ``v``."""
    return GeodesicRay(space, np.asarray(p, dtype=float), np.asarray(v, dtype=float)).at(t)


def distance(space: SpaceModel, p, q) -> float:
    """Geodesic distance; per-factor great-circle angles combined in l2."""
    p = space.check_point(p)
    q = space.check_point(q)
    total = 0.0
    for s in space.factor_slices:
        # stable for both nearby and antipodal points
        ang = 2.0 * np.arctan2(np.linalg.norm(p[s] - q[s]), np.linalg.norm(p[s] + q[s]))
        total += ang * ang
    return float(np.sqrt(total))


def normal_frame(space: SpaceModel, ray: GeodesicRay, t: float) -> np.ndarray:
    """Parallel orthonormal frame of c'(t)^perp in T_{c(t)}M, one row per vector."""
    blocks, active, mixed = ray._frame_spec
    rows = []
    for s, basis, _ in blocks:
        for b in basis:
            r = np.zeros(space.ambient_dim)
            r[s] = b
            rows.append(r)
    if len(mixed):
        units = []
        for k in active:
            a, p, u = ray._factors[k]
            r = np.zeros(space.ambient_dim)
            r[space.factor_slices[k]] = -np.sin(a * t) * p + np.cos(a * t) * u
            units.append(r)
        units = np.array(units)
        rows.extend(mixed @ units)
    return np.array(rows).reshape(-1, space.ambient_dim)


def curvature_along(space: SpaceModel, ray: GeodesicRay, t: float) -> np.ndarray:
    """Matrix of J -> R(J, c')c' in the frame returned by :func:`normal_frame`."""
    blocks, _, mixed = ray._frame_spec
    diag = []
    for s, basis, a2 in blocks:
        diag.extend([a2] * len(basis))
    diag.extend([0.0] * len(mixed))
    return np.diag(np.array(diag, dtype=float))
