"""Jacobi fields along normal geodesics, focal spectra and reciprocal focal sums.

Along a geodesic of a catalog space the parallel frame and the curvature
operator are constant, so the L-Jacobi fields of a submanifold L are
explicit sine/cosine/linear combinations.  An adaptive Runge-Kutta
integrator is kept as an independent second backend.

Focal distances are the zeros of det E(t), E the matrix whose columns are a
basis of L-Jacobi fields.  The trace of the shape operator equals the paired
sum of reciprocal focal distances; the sum converges slowly, so its tail is
closed in terms of the digamma function from an affine model of the focal
sequence.
"""
from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.integrate import solve_ivp
from scipy.linalg import null_space
from scipy.special import digamma, polygamma

from .config import DEFAULT, DEFAULT_WINDOW, Tolerances
from .errors import (
    DomainError,
    FocalWindowWarning,
    IntegratorError,
    MultiplicityAmbiguityError,
    PoleError,
    PreconditionError,
    TailModelError,
    UnsupportedError,
)
from .spaces import GeodesicRay, SpaceModel, curvature_along, normal_frame, tangent_project
from .submetry import FiberChart, SubmetrySpec, chart_jet

BACKENDS = ("closed", "ode")


# ---------------------------------------------------------------------------
# shape operator

@dataclass(frozen=True)
class ShapeOperator:
    """Matrix of A_v in the orthonormal tangent frame ``basis`` (columns)."""

    matrix: np.ndarray
    basis: np.ndarray
    symmetry_residual: float

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix))

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix) if len(self.matrix) else np.zeros(0)


def normal_ray(chart: FiberChart, p, v, tol: float = 1e-10) -> GeodesicRay:
    """Unit speed geodesic from ``p`` in the direction ``v``, which must be normal to the chart's fiber."""
    space = chart.space
    p = space.check_point(p)
    ray = GeodesicRay(space, p, np.asarray(v, dtype=float), chart)
    if chart.dim:
        d1, _ = chart_jet(chart, p)
        resid = np.max(np.abs(d1 @ ray.direction) / np.linalg.norm(d1, axis=1))
        if resid > tol:
            raise DomainError(f"direction not normal to the fiber (tangential part {resid:.3e})")
    return ray


def shape_operator(chart: FiberChart, p, v) -> ShapeOperator:
    """Shape operator X -> -(nabla_X v)^T of the fiber through ``p`` in the unit normal direction ``v``.

    With chart derivatives d1_a, d2_ab the second fundamental form pairs as
    <A_v d1_a, d1_b> = <d2_ab, v>; the matrix is brought to an orthonormal
    frame by the Cholesky factor of the induced metric.
    """
    ray = normal_ray(chart, p, v)
    n = chart.space.ambient_dim
    if chart.dim == 0:
        return ShapeOperator(np.zeros((0, 0)), np.zeros((n, 0)), 0.0)
    d1, d2 = chart_jet(chart, ray.point)
    g = d1 @ d1.T
    try:
        low = np.linalg.cholesky(g)
    except np.linalg.LinAlgError:
        raise DomainError("degenerate fiber parameterization") from None
    if np.linalg.cond(g) > 1e10:
        raise DomainError("degenerate fiber parameterization")
    s = d2 @ ray.direction
    linv = np.linalg.inv(low)
    a = linv @ s @ linv.T
    basis = (linv @ d1).T  # columns: orthonormal tangent frame
    resid = float(np.max(np.abs(a - a.T)))
    if resid > 1e-10:
        raise DomainError(f"shape operator not symmetric ({resid:.3e})")
    return ShapeOperator(0.5 * (a + a.T), basis, resid)


# ---------------------------------------------------------------------------
# Jacobi fields

@dataclass(frozen=True)
class JacobiSystem:
    """Initial values and derivatives (frame coordinates, one column per field)."""

    value: np.ndarray
    derivative: np.ndarray
    tangent_dim: int = 0

    @property
    def size(self) -> int:
        return self.value.shape[1]

    def wronskian(self, e, de) -> np.ndarray:
        """Symplectic pairing <J_i', J_j> - <J_i, J_j'> of all column pairs."""
        return de.T @ e - e.T @ de


def l_jacobi_system(ray: GeodesicRay, shape: ShapeOperator) -> JacobiSystem:
    """The L-Jacobi family along ``ray``: J(0) tangent with J'(0) = -A_v J(0), or J(0) = 0 with J'(0) normal."""
    frame = normal_frame(ray.space, ray, 0.0)
    ct = frame @ shape.basis
    k = ct.shape[1]
    cn = null_space(ct.T) if k else np.eye(frame.shape[0])
    value = np.hstack([ct, np.zeros_like(cn)])
    deriv = np.hstack([-ct @ shape.matrix, cn])
    return JacobiSystem(value, deriv, k)


class JacobiSolution:
    """Evaluator of E(t) and E'(t) for t in [-T, T]."""

    def __init__(self, system: JacobiSystem, T: float, backend: str, fn):
        self.system = system
        self.T = T
        self.backend = backend
        self._fn = fn

    def __call__(self, t):
        return self.evaluate(t)[0]

    def evaluate(self, t):
        """``(E, E')`` with a leading axis when ``t`` is an array."""
        t = np.asarray(t, dtype=float)
        if np.any(np.abs(t) > self.T * (1 + 1e-12)):
            raise DomainError(f"t outside the window [-{self.T}, {self.T}]")
        return self._fn(t)

    def det(self, t):
        return np.linalg.det(self(t))

    def wronskian_drift(self, ts) -> float:
        e, de = self.evaluate(np.asarray(ts, dtype=float))
        w0 = self.system.wronskian(self.system.value, self.system.derivative)
        w = np.einsum("tki,tkj->tij", de, e) - np.einsum("tki,tkj->tij", e, de)
        return float(np.max(np.abs(w - w0)))


def _closed_form(space: SpaceModel, ray: GeodesicRay, system: JacobiSystem):
    r0 = curvature_along(space, ray, 0.0)
    if not np.allclose(r0, curvature_along(space, ray, 1.2345), atol=1e-14):
        raise UnsupportedError("closed-form Jacobi backend needs a parallel curvature operator")
    kappa, u = np.linalg.eigh(0.5 * (r0 + r0.T))
    y0 = u.T @ system.value
    y1 = u.T @ system.derivative
    root = np.sqrt(np.clip(kappa, 0.0, None))
    flat = root < 1e-14
    safe = np.where(flat, 1.0, root)

    def fn(t):
        scalar = t.ndim == 0
        t = np.atleast_1d(t)[:, None]
        c = np.where(flat, 1.0, np.cos(root * t))
        s = np.where(flat, t, np.sin(root * t) / safe)
        dc = np.where(flat, 0.0, -root * np.sin(root * t))
        ds = np.where(flat, 1.0, np.cos(root * t))
        e = c[:, :, None] * y0 + s[:, :, None] * y1
        de = dc[:, :, None] * y0 + ds[:, :, None] * y1
        e = np.einsum("ij,tjk->tik", u, e)
        de = np.einsum("ij,tjk->tik", u, de)
        return (e[0], de[0]) if scalar else (e, de)

    return fn


def _ode(space: SpaceModel, ray: GeodesicRay, system: JacobiSystem, T: float, tol: Tolerances):
    m, k = system.value.shape

    def rhs(t, y):
        e = y[: m * k].reshape(m, k)
        de = y[m * k:].reshape(m, k)
        return np.concatenate([de.ravel(), (-curvature_along(space, ray, t) @ e).ravel()])

    y0 = np.concatenate([system.value.ravel(), system.derivative.ravel()])
    sols = {}
    for sign in (1, -1):
        sol = solve_ivp(rhs, (0.0, sign * T), y0, method="DOP853", rtol=tol.ode_rtol, atol=tol.ode_atol,
                        dense_output=True)
        if sol.status != 0:
            raise IntegratorError(f"Jacobi integration failed: {sol.message}")
        sols[sign] = sol.sol

    def fn(t):
        scalar = t.ndim == 0
        t = np.atleast_1d(t)
        out = np.empty((len(t), 2 * m * k))
        pos = t >= 0
        if pos.any():
            out[pos] = sols[1](t[pos]).T
        if (~pos).any():
            out[~pos] = sols[-1](t[~pos]).T
        e = out[:, : m * k].reshape(-1, m, k)
        de = out[:, m * k:].reshape(-1, m, k)
        return (e[0], de[0]) if scalar else (e, de)

    return fn


def jacobi_fundamental(space: SpaceModel, ray: GeodesicRay, system: JacobiSystem, T: float,
                       backend: str = "closed", tol: Tolerances = DEFAULT,
                       wronskian_tol: float = 1e-9) -> JacobiSolution:
    """Solve J'' + R(J, c')c' = 0 in the parallel frame for the columns of ``system`` on [-T, T].

    The ODE backend checks the constancy of the Wronskian pairing on a grid as
    its achieved-accuracy estimate and raises :class:`IntegratorError` when
    the drift exceeds ``wronskian_tol``.
    """
    if backend == "closed":
        return JacobiSolution(system, T, backend, _closed_form(space, ray, system))
    if backend != "ode":
        raise DomainError(f"unknown Jacobi backend {backend!r}; known: {', '.join(BACKENDS)}")
    sol = JacobiSolution(system, T, backend, _ode(space, ray, system, T, tol))
    scale = 1.0 + float(np.max(np.abs(system.value)) + np.max(np.abs(system.derivative))) ** 2
    drift = sol.wronskian_drift(np.linspace(-T, T, 41))
    if drift > wronskian_tol * scale * max(1.0, T):
        raise IntegratorError(f"Jacobi integration reached Wronskian drift {drift:.3e}")
    return sol


# ---------------------------------------------------------------------------
# focal roots

@dataclass(frozen=True)
class TailModel:
    """Focal distances beyond the window continue as l_{k+m} = l_k + b (|l| for negatives)."""

    per_period: int
    step: float
    residual: float
    fitted_points: int

    def to_dict(self) -> dict:
        return {"per_period": self.per_period, "step": self.step, "residual": self.residual,
                "fitted_points": self.fitted_points}


@dataclass
class FocalSpectrum:
    """Signed focal distances along one normal geodesic, with multiplicities."""

    T: float
    positive: np.ndarray
    positive_mult: np.ndarray
    negative: np.ndarray  # negative numbers, sorted by increasing |l|
    negative_mult: np.ndarray
    tail: TailModel | None = None
    tail_error: str | None = None
    warnings: list[str] = field(default_factory=list)

    @property
    def positives_expanded(self) -> np.ndarray:
        return np.repeat(self.positive, self.positive_mult)

    @property
    def negatives_expanded(self) -> np.ndarray:
        """Absolute values |l_k^-|, ascending and repeated by multiplicity."""
        return np.repeat(-self.negative, self.negative_mult)

    def multiset(self) -> np.ndarray:
        """All signed distances, repeated by multiplicity, ascending."""
        return np.sort(np.concatenate([self.positives_expanded, -self.negatives_expanded]))

    def family_ids(self, side: int) -> np.ndarray:
        """Residue class (mod the tail period) of the first expanded index of each root."""
        mult = self.positive_mult if side > 0 else self.negative_mult
        first = np.concatenate([[0], np.cumsum(mult)[:-1]]).astype(int)
        m = self.tail.per_period if self.tail else 1
        return first % m

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["signed_distance", "multiplicity", "family_id"])
        rows = [(l, m, f) for l, m, f in zip(self.negative, self.negative_mult, self.family_ids(-1))]
        rows += [(l, m, f) for l, m, f in zip(self.positive, self.positive_mult, self.family_ids(1))]
        for l, m, f in sorted(rows):
            w.writerow([repr(float(l)), int(m), int(f)])
        return buf.getvalue()


def _refine_sign_change(f, a: float, b: float, tol: float) -> float:
    return optimize.brentq(f, a, b, xtol=tol * 1e-2, rtol=4 * np.finfo(float).eps, maxiter=200)


def _polish_even_root(sol: JacobiSolution, t: float, h: float, tol: Tolerances) -> float:
    """Refine a root without a det sign change through the sign change of u^T E(t) w.

    u, w are the singular vectors of the smallest singular value near the
    root; |sigma_min| has a kink there, the bilinear form is smooth.
    """
    for _ in range(2):
        uu, _, vt = np.linalg.svd(sol(t))
        u, w = uu[:, -1], vt[-1]

        def g(s):
            return float(u @ sol(s) @ w)

        lo, hi = max(t - h, 1e-9), min(t + h, sol.T)
        if g(lo) * g(hi) >= 0:
            return t
        t = _refine_sign_change(g, lo, hi, tol.root_bisect)
    return t


def _positive_roots(sol: JacobiSolution, T: float, tol: Tolerances, step: float):
    """Roots of det E on (0, T]: sign changes plus local minima of the relative smallest singular value."""
    n = max(int(math.ceil(T / step)), 64)
    start = min(1e-6, T / n)
    ts = np.linspace(start, T, n + 1)
    mats = sol(ts)
    if mats.shape[-1] == 0:
        return [], []
    dets = np.linalg.det(mats)
    sv = np.linalg.svd(mats, compute_uv=False)
    # singular values are measured against the typical size of E on the window
    scale = float(np.median(sv[:, 0]))
    ratio = sv[:, -1] / scale

    def det(t):
        return float(np.linalg.det(sol(t)))

    def rel(t):
        return float(np.linalg.svd(sol(t), compute_uv=False)[-1] / scale)

    candidates = []
    for i in range(n):
        if dets[i] == 0.0:
            candidates.append(ts[i])
        elif dets[i] * dets[i + 1] < 0:
            candidates.append(_refine_sign_change(det, ts[i], ts[i + 1], tol.root_bisect))
    for i in range(1, n):
        if ratio[i] <= ratio[i - 1] and ratio[i] <= ratio[i + 1] and ratio[i] < 0.1:
            if any(abs(c - ts[i]) < 2 * (ts[1] - ts[0]) for c in candidates):
                continue
            r = optimize.minimize_scalar(rel, bounds=(ts[i - 1], ts[i + 1]), method="bounded",
                                         options={"xatol": tol.root_bisect * 1e-2})
            candidates.append(_polish_even_root(sol, float(r.x), ts[1] - ts[0], tol))
    if ratio[-1] < ratio[-2] and ratio[-1] < tol.kernel_rel:
        candidates.append(float(ts[-1]))

    roots, mults = [], []
    for t in sorted(candidates):
        r = np.linalg.svd(sol(t), compute_uv=False) / scale
        kernel = int(np.sum(r < tol.kernel_rel))
        if kernel == 0:
            continue
        near = np.sum((r >= tol.kernel_rel) & (r < tol.kernel_rel * tol.rank_ambiguity))
        if near:
            raise MultiplicityAmbiguityError(
                f"focal root at t = {t:.12g}: singular values {r} straddle the kernel threshold")
        if roots and abs(t - roots[-1]) < tol.root_merge:
            mults[-1] = max(mults[-1], kernel)
            continue
        roots.append(float(t))
        mults.append(kernel)
    return roots, mults


def det_zero_order(sol: JacobiSolution, t0: float, h: float = 1e-3) -> float:
    """Order of vanishing of det E at ``t0`` estimated from a log-log fit on both sides."""
    hs = h * np.array([1.0, 0.5, 0.25])
    orders = []
    for sgn in (1, -1):
        vals = np.abs([np.linalg.det(sol(t0 + sgn * x)) for x in hs])
        orders.append(np.polyfit(np.log(hs), np.log(vals), 1)[0])
    return float(np.mean(orders))


def _fit_tail(x: np.ndarray, y: np.ndarray, T: float, tol: Tolerances) -> TailModel:
    """Smallest period m with l_{k+m} - l_k constant on the outer third of both sides."""
    cut = 2.0 * T / 3.0
    best_err = None
    for m in range(1, max(len(x), len(y)) // 2 + 1):
        diffs = []
        for seq in (x, y):
            d = seq[m:] - seq[:-m] if len(seq) > m else np.zeros(0)
            diffs.append(d[seq[m:] >= cut] if len(d) else d)
        if any(len(d) == 0 for d in diffs):
            break
        allds = np.concatenate(diffs)
        b = float(np.median(allds))
        resid = float(np.max(np.abs(allds - b)))
        if b > 0 and resid <= tol.tail_fit:
            return TailModel(m, b, resid, int(len(allds)))
        best_err = resid if best_err is None else min(best_err, resid)
    if best_err is None:
        raise TailModelError("window too short to fit the focal tail model")
    raise TailModelError(f"tail model unreliable: affine fit residual {best_err:.3e} exceeds {tol.tail_fit:g}")


def focal_spectrum(chart: FiberChart, p, v, T: float = DEFAULT_WINDOW, backend: str = "closed",
                   tol: Tolerances = DEFAULT, step: float = 2e-3) -> FocalSpectrum:
    """Focal distances of the fiber through ``p`` along the geodesic with initial velocity ``v``.

    Negative distances come from the reversed geodesic (direction -v, shape
    operator -A_v) and are negated.
    """
    ray = normal_ray(chart, p, v)
    sides = []
    for r in (ray, ray.reversed()):
        shape = shape_operator(chart, r.point, r.direction)
        system = l_jacobi_system(r, shape)
        sol = jacobi_fundamental(chart.space, r, system, T, backend=backend, tol=tol)
        sides.append(_positive_roots(sol, T, tol, step))
    (pos, pm), (neg, nm) = sides
    spec = FocalSpectrum(T, np.array(pos), np.array(pm, dtype=int), -np.array(neg), np.array(nm, dtype=int))
    for l in list(pos) + list(neg):
        if T - l < tol.window_edge:
            msg = f"focal root {l:.12g} within {tol.window_edge:g} of the window edge {T:g}"
            spec.warnings.append(msg)
            warnings.warn(msg, FocalWindowWarning, stacklevel=2)
    x, y = spec.positives_expanded, spec.negatives_expanded
    if len(x) or len(y):
        try:
            spec.tail = _fit_tail(x, y, T, tol)
        except TailModelError as exc:
            spec.tail_error = str(exc)
        if spec.tail is not None:
            expected = 2 * T * spec.tail.per_period / spec.tail.step
            if abs(len(x) + len(y) - expected) > 2 * spec.tail.per_period + 1:
                spec.warnings.append(f"root count {len(x) + len(y)} inconsistent with tail model ({expected:.1f})")
    return spec


# ---------------------------------------------------------------------------
# reciprocal sums

@dataclass(frozen=True)
class FocalTrace:
    raw: float
    accelerated: float
    tail: float
    tail_bound: float
    pairs: int


def _extend(seq: np.ndarray, n: int, tail: TailModel) -> np.ndarray:
    out = list(seq)
    while len(out) < n:
        out.append(out[len(out) - tail.per_period] + tail.step)
    return np.array(out)


def trace_from_focal(spec: FocalSpectrum, shift: int = 0, tol: Tolerances = DEFAULT) -> FocalTrace:
    """Paired reciprocal sum of focal distances, sum_k (1/l_k^+ + 1/l_{k+shift}^-).

    ``raw`` is the sum over the pairs inside the window.  The remaining pairs
    follow the tail model; grouped by residue class r they form
    sum_s [1/(A_r + s b) - 1/(B_r + s b)] = (psi(B_r/b) - psi(A_r/b)) / b.
    """
    x, y = spec.positives_expanded, spec.negatives_expanded
    if not len(x) and not len(y):
        return FocalTrace(0.0, 0.0, 0.0, 0.0, 0)
    if spec.tail is None:
        raise TailModelError(spec.tail_error or "no tail model")
    tm = spec.tail
    k = min(len(x), len(y) - shift)
    if k < tol.min_pairs:
        raise TailModelError(f"only {k} focal pairs in the window; need {tol.min_pairs}")
    raw = math.fsum(1.0 / x[:k]) - math.fsum(1.0 / y[shift:shift + k])
    m = tm.per_period
    a = _extend(x, k + m, tm)[k:k + m]
    b = _extend(y, k + shift + m, tm)[k + shift:k + shift + m]
    step = tm.step
    tail = float(np.sum(digamma(b / step) - digamma(a / step)) / step)
    bound = float(tm.residual * np.sum(polygamma(1, a / step) + polygamma(1, b / step)) / step**2)
    return FocalTrace(raw, raw + tail, tail, bound, k)


@dataclass(frozen=True)
class EulerSeries:
    phi: float
    N: int
    raw: float
    accelerated: float
    exact: float

    @property
    def raw_residual(self) -> float:
        return abs(self.raw - self.exact)

    @property
    def accelerated_residual(self) -> float:
        return abs(self.accelerated - self.exact)

    def to_dict(self) -> dict:
        return {"phi": self.phi, "N": self.N, "raw": self.raw, "accelerated": self.accelerated,
                "cot": self.exact, "raw_residual": self.raw_residual,
                "accelerated_residual": self.accelerated_residual}


def euler_series(phi: float, N: int) -> EulerSeries:
    """Symmetric partial sum of 1/(phi + n pi), |n| <= N, and its digamma-completed limit."""
    phi = float(phi)
    if min(abs(phi), abs(phi - np.pi)) < 1e-12:
        raise PoleError(f"cot has a pole at phi = {phi}")
    if not 0 < phi < np.pi:
        raise DomainError(f"phi = {phi} outside (0, pi)")
    if N < 0:
        raise DomainError("N must be non-negative")
    n = np.arange(1, N + 1)
    raw = math.fsum(np.concatenate([[1.0 / phi], 1.0 / (phi + n * np.pi), 1.0 / (phi - n * np.pi)]))
    x = phi / np.pi
    tail = (digamma(N + 1 - x) - digamma(N + 1 + x)) / np.pi
    return EulerSeries(phi, int(N), raw, raw + float(tail), float(1.0 / np.tan(phi)))


# ---------------------------------------------------------------------------
# basic focal data

@dataclass(frozen=True)
class FocalDiffReport:
    distance: float
    counts: tuple[int, int]
    d_rho: tuple[np.ndarray, np.ndarray]

    @property
    def counts_match(self) -> bool:
        return self.counts[0] == self.counts[1]

    def passes(self, tol: float) -> bool:
        return self.counts_match and self.distance <= tol


def multiset_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Distance of sorted multisets of equal size; Hausdorff distance of the supports otherwise."""
    a, b = np.sort(a), np.sort(b)
    if len(a) == len(b):
        return float(np.max(np.abs(a - b))) if len(a) else 0.0
    if not len(a) or not len(b):
        return float("inf")
    d = np.abs(a[:, None] - b[None, :])
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


def basic_focal_check(sigma: SubmetrySpec, fiber, pv1, pv2, T: float = DEFAULT_WINDOW,
                      tol: float = 1e-10) -> FocalDiffReport:
    """Compare focal spectra of one regular fiber at two points with matching d rho(v)."""
    chart = sigma.chart_for_leaf(fiber)
    if chart.singular:
        raise PreconditionError("basic focal data is only defined on regular fibers")
    drs = []
    for p, v in (pv1, pv2):
        p = sigma.space.check_point(p)
        if np.max(np.abs(sigma.rho_values(p[None, :])[0] - sigma.rho_values(chart.bases[0][None, :])[0])) > 1e-10:
            raise PreconditionError("point not on the given fiber")
        drs.append(sigma.rho_jacobian(p) @ np.asarray(v, dtype=float))
    if np.max(np.abs(drs[0] - drs[1])) > tol:
        raise PreconditionError(f"d rho(v1) != d rho(v2) (difference {np.max(np.abs(drs[0] - drs[1])):.3e})")
    specs = [focal_spectrum(chart, p, v, T) for p, v in (pv1, pv2)]
    sets = [s.multiset() for s in specs]
    return FocalDiffReport(multiset_distance(*sets), (len(sets[0]), len(sets[1])), (drs[0], drs[1]))


def tangent_unit(space: SpaceModel, p, w) -> np.ndarray:
    w = tangent_project(space, p, w)
    return w / np.linalg.norm(w)
