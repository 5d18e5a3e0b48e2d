"""Catalog manifold submetries and the checks built on them.

Every catalog fiber is an orbit of commuting one-parameter rotation groups,
so charts carry exact first and second derivatives and uniform trapezoid
nodes integrate trigonometric polynomials exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from itertools import product
from typing import Callable, Sequence

import numpy as np
from scipy import optimize
from scipy.linalg import expm, null_space

from .config import DEFAULT, DEFAULT_SEED
from .errors import DomainError, PreconditionError, QuadratureError, UnsupportedError
from .poly import Poly
from .polyfun import (
    PolyFunction,
    gradient,
    gram_gradients,
    harmonic_basis,
    laplace_beltrami,
    multidegree_eigenvalue,
    reduce_canonical,
    sphere_moment,
)
from .spaces import SpaceModel, distance, get_space, tangent_project


# ---------------------------------------------------------------------------
# fiber charts

class FiberChart:
    """Parameterized fiber with quadrature.  Subclasses provide ``point``."""

    space: SpaceModel
    dim: int
    ncomponents: int = 1
    singular: bool = False

    def point(self, u, component: int = 0) -> np.ndarray:
        raise NotImplementedError

    def jet(self, u, component: int = 0):
        """``(d1, d2)``: first derivatives (dim, N) and second (dim, dim, N).

        Default: central differences with one Richardson step.
        """
        h = DEFAULT.fd_step
        u = np.asarray(u, dtype=float)

        def d1(h):
            out = []
            for a in range(self.dim):
                e = np.zeros(self.dim)
                e[a] = h
                out.append((self.point(u + e, component) - self.point(u - e, component)) / (2 * h))
            return np.array(out)

        def d2(h):
            out = np.zeros((self.dim, self.dim, self.space.ambient_dim))
            p0 = self.point(u, component)
            for a in range(self.dim):
                ea = np.zeros(self.dim)
                ea[a] = h
                for b in range(self.dim):
                    if a == b:
                        out[a, a] = (self.point(u + ea, component) - 2 * p0 + self.point(u - ea, component)) / h**2
                    else:
                        eb = np.zeros(self.dim)
                        eb[b] = h
                        out[a, b] = (self.point(u + ea + eb, component) - self.point(u + ea - eb, component)
                                     - self.point(u - ea + eb, component) + self.point(u - ea - eb, component)) / (4 * h * h)
            return out

        r1 = (4 * d1(h / 2) - d1(h)) / 3
        r2 = (4 * d2(h / 2) - d2(h)) / 3
        return r1, r2

    def locate(self, p) -> tuple[np.ndarray, int]:
        """Parameter and component of a point on the chart (nearest node, refined)."""
        p = np.asarray(p, dtype=float)
        best = None
        grid = self._param_grid(32)
        for c in range(self.ncomponents):
            for u in grid:
                d = np.linalg.norm(self.point(u, c) - p)
                if best is None or d < best[0]:
                    best = (d, u, c)
        _, u0, c = best
        if self.dim == 0:
            return u0, c
        res = optimize.least_squares(lambda u: self.point(u, c) - p, u0, xtol=1e-15, ftol=1e-15, gtol=1e-15)
        return res.x, c

    def _param_grid(self, q: int) -> np.ndarray:
        if self.dim == 0:
            return np.zeros((1, 0))
        ts = 2 * np.pi * np.arange(q) / q
        mesh = np.meshgrid(*([ts] * self.dim), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def volume_weight(self, u, component: int = 0) -> float:
        d1, _ = self.jet(u, component)
        if self.dim == 0:
            return 1.0
        return float(np.sqrt(np.linalg.det(d1 @ d1.T)))

    def nodes(self, q: int) -> tuple[np.ndarray, np.ndarray]:
        """Trapezoid nodes (q per circle direction) and weights summing to one."""
        grid = self._param_grid(q)
        pts, wts = [], []
        for c in range(self.ncomponents):
            for u in grid:
                pts.append(self.point(u, c))
                wts.append(self.volume_weight(u, c))
        wts = np.array(wts)
        return np.array(pts), wts / wts.sum()

    def volume(self, q: int = 16) -> float:
        """Riemannian volume of the fiber (all components)."""
        grid = self._param_grid(q)
        total = 0.0
        for c in range(self.ncomponents):
            total += sum(self.volume_weight(u, c) for u in grid) / len(grid)
        return total * (2 * np.pi) ** self.dim


class RotationChart(FiberChart):
    """Union of orbits t -> exp(sum t_a X_a) p_c of commuting 2pi-periodic rotations."""

    def __init__(self, space: SpaceModel, bases: Sequence[np.ndarray], generators: Sequence[np.ndarray],
                 singular: bool = False, label: str = ""):
        self.space = space
        self.bases = [np.asarray(b, dtype=float) for b in bases]
        self.generators = [np.asarray(g, dtype=float) for g in generators]
        self.dim = len(self.generators)
        self.ncomponents = len(self.bases)
        self.singular = singular
        self.label = label
        for b in self.bases:
            if space.residual(b) > 1e-12:
                raise DomainError("chart base point off the space")

    def point(self, u, component: int = 0) -> np.ndarray:
        u = np.asarray(u, dtype=float).reshape(-1)
        if self.dim == 0:
            return self.bases[component]
        x = sum(t * g for t, g in zip(u, self.generators))
        return expm(x) @ self.bases[component]

    def _orbit(self, q: int) -> np.ndarray:
        key = (tuple(g.tobytes() for g in self.generators), self.space.ambient_dim, q)
        if key not in _ORBIT_CACHE:
            _ORBIT_CACHE[key] = np.array([expm(sum(t * g for t, g in zip(u, self.generators)))
                                          for u in self._param_grid(q)])
        return _ORBIT_CACHE[key]

    def nodes(self, q: int) -> tuple[np.ndarray, np.ndarray]:
        if self.dim == 0:
            w = np.full(self.ncomponents, 1.0 / self.ncomponents)
            return np.array(self.bases), w
        mats = self._orbit(q)
        pts, wts = [], []
        # rotations are ambient isometries: the volume density is constant on each orbit
        for c, b in enumerate(self.bases):
            pts.append(mats @ b)
            wts.append(np.full(len(mats), self.volume_weight(np.zeros(self.dim), c)))
        wts = np.concatenate(wts)
        return np.concatenate(pts), wts / wts.sum()

    def jet_at(self, q):
        q = np.asarray(q, dtype=float)
        d1 = np.array([g @ q for g in self.generators]).reshape(self.dim, -1)
        d2 = np.array([[ga @ gb @ q for gb in self.generators] for ga in self.generators]).reshape(
            self.dim, self.dim, -1)
        return d1, d2

    def jet(self, u, component: int = 0):
        return self.jet_at(self.point(u, component))

    def volume_weight(self, u, component: int = 0) -> float:
        if self.dim == 0:
            return 1.0
        d1, _ = self.jet(u, component)
        return float(np.sqrt(np.linalg.det(d1 @ d1.T)))

    def locate(self, p):
        p = np.asarray(p, dtype=float)
        for c, b in enumerate(self.bases):
            if np.linalg.norm(p - b) < 1e-12:
                return np.zeros(self.dim), c
        return super().locate(p)


class ParametricChart(FiberChart):
    """Chart given by an arbitrary smooth 2pi-periodic parameterization (finite-difference jets)."""

    def __init__(self, space: SpaceModel, param: Callable[[np.ndarray], np.ndarray], dim: int, singular: bool = False):
        self.space = space
        self._param = param
        self.dim = dim
        self.singular = singular

    def point(self, u, component: int = 0) -> np.ndarray:
        return np.asarray(self._param(np.asarray(u, dtype=float)), dtype=float)


_ORBIT_CACHE: dict = {}


def _plane_rotation(n: int, i: int, j: int) -> np.ndarray:
    g = np.zeros((n, n))
    g[i, j], g[j, i] = -1.0, 1.0
    return g


def chart_jet(chart: FiberChart, p):
    """Exact jet when the chart supports it, else finite differences at the located parameter."""
    if isinstance(chart, RotationChart):
        return chart.jet_at(p)
    u, c = chart.locate(p)
    return chart.jet(u, c)


# ---------------------------------------------------------------------------
# averaging

def _check_order(f, chart: FiberChart, q: int, exact: bool):
    if exact and isinstance(f, PolyFunction) and chart.dim and q <= f.degree():
        raise QuadratureError(f"{q} nodes cannot integrate degree {f.degree()} exactly")


def average(f, chart: FiberChart, order: int | None = None, exact: bool = True) -> float:
    """Volume-weighted mean of ``f`` over all components of the fiber."""
    if order is None:
        order = (f.degree() + 1) if isinstance(f, PolyFunction) else 32
        order = max(order, 2)
    _check_order(f, chart, order, exact)
    pts, wts = chart.nodes(order)
    vals = f(pts) if not isinstance(f, PolyFunction) else f.evaluator()(pts)
    return float(np.asarray(vals) @ wts)


def rotation_plane_average(p: Poly, i: int, j: int) -> Poly:
    """Exact average of ``p`` over rotations in the (x_i, x_j) plane."""
    n = p.nvars
    r2 = Poly.var(n, i) ** 2 + Poly.var(n, j) ** 2
    out = Poly.zero(n)
    for e, c in p.terms.items():
        a, b = e[i], e[j]
        m = sphere_moment((a, b), 2)
        if not m:
            continue
        rest = list(e)
        rest[i] = rest[j] = 0
        out = out + (r2 ** ((a + b) // 2)) * Poly.monomial(rest, c * m)
    return out


# ---------------------------------------------------------------------------
# submetry catalog

class SubmetrySpec:
    """A catalog submetry: fibers, quotient map and leaf parameterization."""

    id: str
    space: SpaceModel
    rho_strings: tuple[str, ...]
    leaf_dim: int  # dimension of the leaf space
    description: str = ""

    @cached_property
    def rho(self) -> tuple[PolyFunction, ...]:
        return tuple(PolyFunction.parse(self.space, s) for s in self.rho_strings)

    def fiber_chart(self, p) -> RotationChart:
        raise NotImplementedError

    def leaf_of(self, p):
        raise NotImplementedError

    def point_on_leaf(self, leaf) -> np.ndarray:
        raise NotImplementedError

    def chart_for_leaf(self, leaf) -> RotationChart:
        return self.fiber_chart(self.point_on_leaf(leaf))

    def sample_leaves(self, n: int, rng: np.random.Generator) -> list:
        raise NotImplementedError

    def regular_leaves(self, n: int, rng: np.random.Generator) -> list:
        return [l for l in self.sample_leaves(n, rng) if not self.chart_for_leaf(l).singular]

    def is_regular(self, p) -> bool:
        return not self.fiber_chart(p).singular

    def exact_average(self, f: PolyFunction) -> PolyFunction:
        raise UnsupportedError(f"{self.id} has no exact averaging backend")

    @property
    def has_exact_average(self) -> bool:
        return False

    def average_at(self, f, pts, order: int | None = None) -> np.ndarray:
        """Fiberwise averages of ``f`` at each row of ``pts`` (quadrature)."""
        ev = f.evaluator() if isinstance(f, PolyFunction) else f
        if order is None:
            order = max(f.degree() + 1, 2) if isinstance(f, PolyFunction) else 32
        out = np.empty(len(pts))
        for k, p in enumerate(pts):
            nodes, wts = self.fiber_chart(p).nodes(order)
            out[k] = ev(nodes) @ wts
        return out

    def rho_values(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return np.stack([r(pts) for r in self.rho], axis=-1)

    def rho_jacobian(self, p) -> np.ndarray:
        """Rows: tangential gradients of the rho_i at ``p``."""
        return np.array([self._grads[i](p) for i in range(len(self.rho))])

    @cached_property
    def _grads(self):
        return [gradient(r) for r in self.rho]

    def check_fiberwise_constant(self, n: int = 12, rng=None, tol: float | None = None) -> float:
        rng = rng or np.random.default_rng(DEFAULT_SEED)
        tol = DEFAULT.fiber_constancy if tol is None else tol
        worst = 0.0
        for _ in range(n):
            p = self.space.random_point(rng)
            nodes, _ = self.fiber_chart(p).nodes(12)
            vals = self.rho_values(nodes)
            worst = max(worst, float(np.max(np.ptp(vals, axis=0))))
        if worst > tol:
            raise DomainError(f"{self.id}: rho not constant on fibers ({worst:.3e})")
        return worst


class LatitudeFoliation(SubmetrySpec):
    id = "s2-latitude"
    rho_strings = ("z",)
    leaf_dim = 1
    description = "S^2 latitude circles z = const"

    def __init__(self):
        self.space = get_space("s2")
        self._gen = _plane_rotation(3, 0, 1)

    def fiber_chart(self, p) -> RotationChart:
        p = self.space.check_point(p)
        if np.hypot(p[0], p[1]) < 1e-12:
            return RotationChart(self.space, [p], [], singular=True, label="pole")
        return RotationChart(self.space, [p], [self._gen])

    def leaf_of(self, p):
        return float(p[2])

    def point_on_leaf(self, a) -> np.ndarray:
        return np.array([np.sqrt(max(0.0, 1 - a * a)), 0.0, a])

    def sample_leaves(self, n, rng):
        return list(np.linspace(-0.9, 0.9, n))

    def point_with_rho(self, x) -> np.ndarray:
        return self.point_on_leaf(float(x[0]) if np.ndim(x) else float(x))

    def rho_range(self):
        return (-1.0, 1.0)

    @property
    def has_exact_average(self) -> bool:
        return True

    def exact_average(self, f: PolyFunction) -> PolyFunction:
        return reduce_canonical(self.space, rotation_plane_average(f.ambient, 0, 1))


class FoldFoliation(LatitudeFoliation):
    id = "s2-fold"
    rho_strings = ("z^2",)
    description = "S^2 fibers {z = a} u {z = -a}"

    def fiber_chart(self, p) -> RotationChart:
        p = self.space.check_point(p)
        if np.hypot(p[0], p[1]) < 1e-12:
            return RotationChart(self.space, [p, -p], [], singular=True, label="poles")
        if abs(p[2]) < 1e-14:
            return RotationChart(self.space, [p], [self._gen], label="equator")
        q = p.copy()
        q[2] = -q[2]
        return RotationChart(self.space, [p, q], [self._gen])

    def leaf_of(self, p):
        return abs(float(p[2]))

    def sample_leaves(self, n, rng):
        return list(np.linspace(0.05, 0.95, n))

    def point_with_rho(self, x) -> np.ndarray:
        x = float(x[0]) if np.ndim(x) else float(x)
        return self.point_on_leaf(np.sqrt(max(0.0, x)))

    def rho_range(self):
        return (0.0, 1.0)

    def exact_average(self, f: PolyFunction) -> PolyFunction:
        a = rotation_plane_average(f.ambient, 0, 1)
        return reduce_canonical(self.space, (a + a.substitute_sign(2)).scale(Fraction(1, 2)))


HOPF_STRINGS = ("x1^2 + x2^2 - x3^2 - x4^2", "2 x1 x3 + 2 x2 x4", "2 x1 x4 - 2 x2 x3")


class HopfFibration(SubmetrySpec):
    id = "s3-hopf"
    rho_strings = HOPF_STRINGS
    leaf_dim = 2
    description = "S^3 Hopf circles, quotient S^2 via the quadratic map h"

    def __init__(self):
        self.space = get_space("s3")
        self._gen = _plane_rotation(4, 0, 1) + _plane_rotation(4, 2, 3)

    def fiber_chart(self, p) -> RotationChart:
        return RotationChart(self.space, [self.space.check_point(p)], [self._gen])

    def leaf_of(self, p):
        return self.rho_values(np.asarray(p)[None, :])[0]

    def point_on_leaf(self, u) -> np.ndarray:
        a, b, c = np.asarray(u, dtype=float) / np.linalg.norm(u)
        r1 = np.sqrt(max(0.0, (1 + a) / 2))
        if r1 < 1e-12:
            return np.array([0.0, 0.0, 1.0, 0.0])
        # z1 = r1 real, z2 = (b + i c) / (2 r1)
        return np.array([r1, 0.0, b / (2 * r1), c / (2 * r1)])

    def sample_leaves(self, n, rng):
        # Fibonacci points on the leaf space S^2
        k = np.arange(n) + 0.5
        z = 1 - 2 * k / n
        phi = np.pi * (1 + 5 ** 0.5) * k
        r = np.sqrt(1 - z * z)
        return [np.array([zz, rr * np.cos(pp), rr * np.sin(pp)]) for zz, rr, pp in zip(z, r, phi)]


class CliffordFoliation(SubmetrySpec):
    id = "s3-clifford"
    rho_strings = ("x1^2 + x2^2 - x3^2 - x4^2",)
    leaf_dim = 1
    description = "S^3 Clifford tori T_phi plus the two core circles"

    def __init__(self):
        self.space = get_space("s3")
        self._gu = _plane_rotation(4, 0, 1)
        self._gw = _plane_rotation(4, 2, 3)

    def fiber_chart(self, p) -> RotationChart:
        p = self.space.check_point(p)
        nu, nw = np.linalg.norm(p[:2]), np.linalg.norm(p[2:])
        if nw < 1e-12:
            return RotationChart(self.space, [p], [self._gu], singular=True, label="core u")
        if nu < 1e-12:
            return RotationChart(self.space, [p], [self._gw], singular=True, label="core w")
        return RotationChart(self.space, [p], [self._gu, self._gw])

    def leaf_of(self, p):
        return float(np.arctan2(np.linalg.norm(p[2:]), np.linalg.norm(p[:2])))

    def point_on_leaf(self, phi) -> np.ndarray:
        return np.array([np.cos(phi), 0.0, np.sin(phi), 0.0])

    def sample_leaves(self, n, rng):
        return list(np.linspace(0.1, np.pi / 2 - 0.1, n))

    def point_with_rho(self, x) -> np.ndarray:
        x = float(x[0]) if np.ndim(x) else float(x)
        return self.point_on_leaf(0.5 * np.arccos(np.clip(x, -1, 1)))

    def rho_range(self):
        return (-1.0, 1.0)


class TorusCircles(SubmetrySpec):
    id = "t2-circles"
    rho_strings = ("x3", "x4")
    leaf_dim = 1
    description = "flat T^2, circles theta_2 = const"

    def __init__(self):
        self.space = get_space("t2")
        self._gen = _plane_rotation(4, 0, 1)

    def fiber_chart(self, p) -> RotationChart:
        return RotationChart(self.space, [self.space.check_point(p)], [self._gen])

    def leaf_of(self, p):
        return float(np.arctan2(p[3], p[2]))

    def point_on_leaf(self, theta) -> np.ndarray:
        return np.array([1.0, 0.0, np.cos(theta), np.sin(theta)])

    def sample_leaves(self, n, rng):
        return list(np.linspace(-np.pi, np.pi, n, endpoint=False))

    @property
    def has_exact_average(self) -> bool:
        return True

    def exact_average(self, f: PolyFunction) -> PolyFunction:
        return reduce_canonical(self.space, rotation_plane_average(f.ambient, 0, 1))


_SUBMETRIES = {cls.id: cls for cls in (LatitudeFoliation, FoldFoliation, HopfFibration, CliffordFoliation, TorusCircles)}
SUBMETRY_IDS = tuple(_SUBMETRIES)
_instances: dict[str, SubmetrySpec] = {}


def get_submetry(sid: str) -> SubmetrySpec:
    if sid not in _SUBMETRIES:
        raise DomainError(f"unknown submetry {sid!r}; known: {', '.join(SUBMETRY_IDS)}")
    if sid not in _instances:
        _instances[sid] = _SUBMETRIES[sid]()
    return _instances[sid]


# ---------------------------------------------------------------------------
# averaging as a function

def fit_polyfunction(space: SpaceModel, pts, values, degree: int, max_denominator: int = 10**6):
    """Least-squares fit of samples by E_lambda components up to ``degree``, rationalized.

    Returns ``(function, coefficient_deviation, fit_residual)``.
    """
    cutoff = max(multidegree_eigenvalue(space, md)
                 for md in product(range(degree + 1), repeat=space.codim) if sum(md) <= degree)
    basis = [b for b in harmonic_basis(space, cutoff) if b.degree() <= degree]
    mat = np.stack([b(pts) for b in basis], axis=1)
    coeffs, *_ = np.linalg.lstsq(mat, values, rcond=None)
    fit_res = float(np.max(np.abs(mat @ coeffs - values))) if len(values) else 0.0
    f = PolyFunction(space)
    dev = 0.0
    for c, b in zip(coeffs, basis):
        q = Fraction(float(c)).limit_denominator(max_denominator)
        dev = max(dev, abs(float(q) - c))
        if q:
            f = f + b.scale(q)
    return f, dev, fit_res


@dataclass
class NumericAverage:
    points: np.ndarray
    values: np.ndarray
    rationalized: PolyFunction
    coefficient_deviation: float
    fit_residual: float


def average_function(f: PolyFunction, sigma: SubmetrySpec, backend: str = "exact", samples: int = 400,
                     rng: np.random.Generator | None = None):
    """Av(f): an exact PolyFunction, or sampled values plus a rationalized fit."""
    if backend == "exact":
        return sigma.exact_average(f)
    if backend != "numeric":
        raise ValueError(f"unknown backend {backend!r}")
    rng = rng or np.random.default_rng(DEFAULT_SEED)
    pts = sigma.space.random_points(samples, rng)
    vals = sigma.average_at(f, pts)
    fit, dev, res = fit_polyfunction(sigma.space, pts, vals, f.degree())
    return NumericAverage(pts, vals, fit, dev, res)


def _laplacian_spectral(g: Callable, space: SpaceModel, p: np.ndarray, degree: int) -> float:
    """Delta g(p) for g in R[M] of degree <= ``degree``, from exact trigonometric
    interpolation along the geodesics through p in an orthonormal tangent basis."""
    k = 2 * degree + 2
    ts = 2 * np.pi * np.arange(k) / k
    freqs = np.fft.fftfreq(k, d=1.0 / k)
    total = 0.0
    basis = _tangent_basis(space, p)
    for e in basis:
        # along a great circle in one sphere factor; circle factors likewise
        pts = np.array([_factor_geodesic(space, p, e, t) for t in ts])
        coeffs = np.fft.fft(g(pts))
        total += float(np.real(np.sum(-(freqs ** 2) * coeffs)) / k)
    return -total


def _tangent_basis(space: SpaceModel, p) -> np.ndarray:
    rows = []
    for s in space.factor_slices:
        for b in null_space(p[s][None, :]).T:
            r = np.zeros(space.ambient_dim)
            r[s] = b
            rows.append(r)
    return np.array(rows)


def _factor_geodesic(space: SpaceModel, p, e, t) -> np.ndarray:
    out = np.array(p, dtype=float)
    for s in space.factor_slices:
        if np.any(e[s]):
            out[s] = np.cos(t) * p[s] + np.sin(t) * e[s]
    return out


@dataclass
class CommutatorReport:
    residual: float
    exact: bool
    identity: PolyFunction | None = None
    grid_size: int = 0


def commutator_residual(f: PolyFunction, sigma: SubmetrySpec, grid=None, backend: str | None = None,
                        rng: np.random.Generator | None = None) -> CommutatorReport:
    """sup |Av(Delta f) - Delta(Av f)|; an exact identity on the exact backend."""
    backend = backend or ("exact" if sigma.has_exact_average else "numeric")
    if backend == "exact":
        diff = sigma.exact_average(laplace_beltrami(f)) - laplace_beltrami(sigma.exact_average(f))
        res = 0.0 if diff.is_zero() else float(np.max(np.abs(diff(sigma.space.random_points(64, rng or np.random.default_rng(0))))))
        return CommutatorReport(res, True, diff)
    rng = rng or np.random.default_rng(DEFAULT_SEED)
    if grid is None:
        grid = sigma.space.random_points(500, rng)
    grid = np.asarray(grid, dtype=float)
    lap_f = laplace_beltrami(f)
    d = max(f.degree(), 1)
    lhs = sigma.average_at(lap_f, grid, order=d + 1)
    avg = lambda pts: sigma.average_at(f, pts, order=d + 1)  # noqa: E731
    rhs = np.array([_laplacian_spectral(avg, sigma.space, p, d) for p in grid])
    return CommutatorReport(float(np.max(np.abs(lhs - rhs))), False, None, len(grid))


# ---------------------------------------------------------------------------
# mean curvature

def _second_fundamental(chart: FiberChart, p):
    space = chart.space
    d1, d2 = chart_jet(chart, p)
    g = d1 @ d1.T
    if np.linalg.matrix_rank(g, tol=1e-10) < chart.dim:
        raise DomainError("degenerate fiber parameterization")
    ginv = np.linalg.inv(g)
    q, _ = np.linalg.qr(d1.T)  # orthonormal basis of T_pL (columns)

    def normal(w):
        w = tangent_project(space, p, w)
        return w - q @ (q.T @ w)

    return d1, d2, g, ginv, q, normal


def mean_curvature(chart: FiberChart, p) -> np.ndarray:
    """Mean curvature vector (trace of the second fundamental form) of the fiber in M at ``p``."""
    p = chart.space.check_point(p)
    if chart.dim == 0:
        return np.zeros(chart.space.ambient_dim)
    _, d2, _, ginv, _, normal = _second_fundamental(chart, p)
    h = np.zeros(chart.space.ambient_dim)
    for a in range(chart.dim):
        for b in range(chart.dim):
            h += ginv[a, b] * normal(d2[a, b])
    return h


@dataclass
class MeanCurvatureReport:
    case: str
    points: np.ndarray
    h_vectors: np.ndarray
    pushed: np.ndarray
    spread: float

    def to_json(self, tolerance: float) -> dict:
        return {"case": self.case, "operation": "basic_mean_curvature", "samples": int(len(self.points)),
                "spread": float(self.spread), "tolerance": tolerance, "pass": bool(self.spread <= tolerance)}


def fiber_samples(chart: FiberChart, n: int, rng: np.random.Generator) -> np.ndarray:
    out = []
    for k in range(n):
        u = rng.uniform(0, 2 * np.pi, chart.dim)
        out.append(chart.point(u, k % chart.ncomponents))
    return np.array(out)


def basic_mean_curvature_report(sigma: SubmetrySpec, leaf, samples: int = 100,
                                rng: np.random.Generator | None = None) -> MeanCurvatureReport:
    rng = rng or np.random.default_rng(DEFAULT_SEED)
    chart = sigma.chart_for_leaf(leaf)
    if chart.singular:
        raise PreconditionError(f"fiber {leaf!r} of {sigma.id} is not regular")
    pts = fiber_samples(chart, samples, rng)
    hs = np.array([mean_curvature(chart, p) for p in pts])
    pushed = np.array([sigma.rho_jacobian(p) @ h for p, h in zip(pts, hs)])
    spread = float(np.max(np.ptp(pushed, axis=0)))
    return MeanCurvatureReport(sigma.id, pts, hs, pushed, spread)


# ---------------------------------------------------------------------------
# regular set, induced metric, equidistance

def regular_rank_region(rho: Sequence[PolyFunction], samples, rank_rel: float | None = None):
    """``(m, flags)``: maximal Gram rank over the samples and which samples attain it."""
    rank_rel = DEFAULT.rank_rel if rank_rel is None else rank_rel
    samples = np.asarray(samples, dtype=float)
    if not rho:
        return 0, np.ones(len(samples), dtype=bool)
    gram = gram_gradients(rho)
    evs = [[e.evaluator() for e in row] for row in gram]
    k = len(rho)
    mats = np.empty((len(samples), k, k))
    for i in range(k):
        for j in range(k):
            mats[:, i, j] = evs[i][j](samples)
    svals = np.linalg.svd(mats, compute_uv=False)
    scale = float(svals.max())
    if scale == 0.0:
        return 0, np.ones(len(samples), dtype=bool)
    ranks = np.sum(svals > rank_rel * scale, axis=1)
    m = int(ranks.max())
    return m, ranks == m


@dataclass
class InducedMetricReport:
    case: str
    leaf: object
    gram_exact: list[list[PolyFunction]]
    gram_at_leaf: np.ndarray
    spread: float
    quotient_metric: float | None = None
    quotient_length: float | None = None


def induced_metric_check(rho: Sequence[PolyFunction], sigma: SubmetrySpec, leaf, samples: int = 50,
                         rng: np.random.Generator | None = None) -> InducedMetricReport:
    rng = rng or np.random.default_rng(DEFAULT_SEED)
    chart = sigma.chart_for_leaf(leaf)
    if chart.singular:
        raise PreconditionError("fiber not regular")
    gram = gram_gradients(rho)
    evs = [[e.evaluator() for e in row] for row in gram]
    pts = fiber_samples(chart, samples, rng)
    vals = np.array([[evs[i][j](pts) for j in range(len(rho))] for i in range(len(rho))])  # k,k,n
    spread = float(np.max(np.ptp(vals, axis=2)))
    at_leaf = vals.mean(axis=2)
    report = InducedMetricReport(sigma.id, leaf, gram, at_leaf, spread)
    if len(rho) == 1 and hasattr(sigma, "point_with_rho"):
        report.quotient_metric = 1.0 / float(at_leaf[0, 0])
        report.quotient_length = quotient_length(rho[0], sigma)
    return report


def quotient_length(rho: PolyFunction, sigma: SubmetrySpec, nodes: int = 128) -> float:
    """Length of the 1-dimensional leaf space in the metric b = dx^2 / |grad rho|^2.

    |grad rho|^2 vanishes linearly at both ends of the image [lo, hi] of rho, so
    the length is the integral of sqrt((x-lo)(hi-x)/G(x)) against the Chebyshev
    weight, evaluated by Gauss-Chebyshev quadrature.
    """
    g = gram_gradients([rho])[0][0].evaluator()
    lo, hi = sigma.rho_range()
    k = np.arange(1, nodes + 1)
    xs = 0.5 * (lo + hi) + 0.5 * (hi - lo) * np.cos((2 * k - 1) * np.pi / (2 * nodes))
    gx = np.array([float(g(sigma.point_with_rho(x)[None, :])[0]) for x in xs])
    smooth = np.sqrt((xs - lo) * (hi - xs) / gx)
    return float(np.pi / nodes * smooth.sum())


def distance_to_fiber(space: SpaceModel, p, chart: RotationChart, q: int = 64, tol: float | None = None) -> float:
    """Distance from ``p`` to a fiber: best node, then golden-section refinement per parameter."""
    tol = DEFAULT.distance_refine if tol is None else tol
    grid = chart._param_grid(q)
    best = None
    for c in range(chart.ncomponents):
        for u in grid:
            d = distance(space, p, chart.point(u, c))
            if best is None or d < best[0]:
                best = (d, np.array(u, dtype=float), c)
    d0, u, c = best
    if chart.dim == 0 or d0 == 0.0:
        return d0
    h = 2 * np.pi / q
    for _ in range(3):
        for a in range(chart.dim):
            def obj(t, a=a):
                uu = u.copy()
                uu[a] = t
                return distance(space, p, chart.point(uu, c)) ** 2
            res = optimize.minimize_scalar(obj, bracket=(u[a] - h, u[a], u[a] + h), method="golden",
                                           options={"xtol": tol})
            if res.fun < distance(space, p, chart.point(u, c)) ** 2:
                u[a] = res.x
        h /= 4
    if isinstance(chart, RotationChart):
        u = _newton_polish(p, chart, u, c)
    return min(d0, distance(space, p, chart.point(u, c)))


def _newton_polish(p, chart: RotationChart, u, c, steps: int = 4):
    """Newton steps on the chordal distance |p - x(u)|^2 using exact chart jets."""
    u = np.array(u, dtype=float)
    for _ in range(steps):
        x = chart.point(u, c)
        d1, d2 = chart.jet_at(x)
        r = p - x
        grad = -2 * d1 @ r
        hess = 2 * (d1 @ d1.T) - 2 * np.einsum("abn,n->ab", d2, r)
        if np.any(np.linalg.eigvalsh(hess) <= 0):
            break
        step = np.linalg.solve(hess, grad)
        u = u - step
        if np.max(np.abs(step)) < 1e-15:
            break
    return u


def equidistance_check(sigma: SubmetrySpec, leaf1, leaf2, samples: int = 40, rng=None) -> tuple[float, float]:
    """``(min, max)`` of d(p, L2) over sampled p in L1."""
    rng = rng or np.random.default_rng(DEFAULT_SEED)
    c1 = sigma.chart_for_leaf(leaf1)
    c2 = sigma.chart_for_leaf(leaf2)
    pts, _ = c1.nodes(max(2, int(round(samples ** (1 / max(c1.dim, 1))))))
    ds = [distance_to_fiber(sigma.space, p, c2) for p in pts]
    return float(min(ds)), float(max(ds))


def horizontal_lift(sigma: SubmetrySpec, p, w) -> np.ndarray:
    """Vector v normal to the fiber at ``p`` with d rho(v) = w (least squares)."""
    p = sigma.space.check_point(p)
    jac = sigma.rho_jacobian(p)
    d1, _ = chart_jet(sigma.fiber_chart(p), p)
    q = np.linalg.qr(d1.T)[0] if len(d1) else np.zeros((sigma.space.ambient_dim, 0))
    # horizontal space = rows of the Jacobian projected off the fiber directions
    rows = jac - (jac @ q) @ q.T
    coeff, *_ = np.linalg.lstsq(jac @ rows.T, np.asarray(w, dtype=float), rcond=None)
    return rows.T @ coeff
