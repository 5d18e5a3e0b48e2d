"""Named experiments and the report bundles they produce.

Every experiment takes a :class:`RunConfig` and returns a :class:`Bundle` of
JSON-ready reports, CSV spectra and whitespace-delimited data files.  All
randomness flows from the seed in the config, so a rerun with the same
config reproduces the bundle byte for byte.
"""
from __future__ import annotations

import json
import math
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations_with_replacement
from typing import Any, Callable, Mapping

import numpy as np

from .config import DEFAULT, DEFAULT_SEED, DEFAULT_WINDOW
from .errors import ConfigurationError
from .focal import (
    basic_focal_check,
    det_zero_order,
    euler_series,
    focal_spectrum,
    jacobi_fundamental,
    JacobiSystem,
    l_jacobi_system,
    normal_ray,
    shape_operator,
    trace_from_focal,
)
from .lapalg import Subalgebra, check_laplacian_closed, maximality_probe, reynolds, verify_separation
from .poly import Poly
from .polyfun import (
    PolyFunction,
    ambient_laplacian,
    eigenspace_basis,
    gradient,
    gram_gradients,
    harmonic_basis,
    harmonic_eigenvalue,
    reduce_canonical,
    spectrum,
)
from .spaces import SPACE_IDS, GeodesicRay, get_space
from .submetry import (
    HOPF_STRINGS,
    RotationChart,
    SUBMETRY_IDS,
    average_function,
    basic_mean_curvature_report,
    commutator_residual,
    equidistance_check,
    fit_polyfunction,
    get_submetry,
    horizontal_lift,
    induced_metric_check,
    quotient_length,
)

# ---------------------------------------------------------------------------
# catalog of named algebras

ALGEBRAS: dict[str, tuple[str, tuple[str, ...]]] = {
    "s2-zonal": ("s2", ("z",)),
    "s2-even-zonal": ("s2", ("z^2",)),
    "s2-cubic": ("s2", ("z^3",)),
    "s3-hopf": ("s3", HOPF_STRINGS),
    "s3-clifford": ("s3", (HOPF_STRINGS[0],)),
    "t2-circle": ("t2", ("x3", "x4")),
}


def algebra_from(space_id: str, spec) -> Subalgebra:
    """A catalog algebra name or a sequence of generator strings on ``space_id``."""
    if isinstance(spec, str):
        spec = (spec,)
    if len(spec) == 1 and spec[0] in ALGEBRAS:
        space_id, gens = ALGEBRAS[spec[0]]
        return Subalgebra.from_strings(get_space(space_id), gens, name=spec[0])
    return Subalgebra.from_strings(get_space(space_id), list(spec))


# ---------------------------------------------------------------------------
# configuration

_ANGLE = re.compile(r"^\s*([+-]?\d*\.?\d*)\s*\*?\s*pi\s*(?:/\s*(\d+\.?\d*))?\s*$")


def parse_angle(text: str) -> float:
    """``"pi/4"``, ``"3pi/4"``, ``"2*pi/3"`` or a plain float."""
    m = _ANGLE.match(text)
    if m:
        num = float(m.group(1)) if m.group(1) not in ("", "+", "-") else (-1.0 if m.group(1) == "-" else 1.0)
        den = float(m.group(2)) if m.group(2) else 1.0
        return num * math.pi / den
    return float(text)


@dataclass(frozen=True)
class Param:
    kind: str  # "int", "float", "angle", "str", "angles", "strs"
    default: Any
    help: str = ""

    def parse(self, raw):
        if not isinstance(raw, str):
            return raw
        if self.kind == "int":
            return int(raw)
        if self.kind == "float":
            return float(raw)
        if self.kind == "angle":
            return parse_angle(raw)
        if self.kind == "angles":
            return tuple(parse_angle(x) for x in raw.split(",") if x.strip())
        if self.kind == "strs":
            return tuple(x.strip() for x in raw.split(",") if x.strip())
        return raw


@dataclass(frozen=True)
class RunConfig:
    experiment: str
    params: Mapping[str, Any]
    seed: int = DEFAULT_SEED
    output: str | None = None

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)

    def __getitem__(self, key):
        return self.params[key]


@dataclass(frozen=True)
class Experiment:
    name: str
    criterion: int | None
    description: str
    params: Mapping[str, Param]
    run: Callable[[RunConfig], "Bundle"]


EXPERIMENTS: dict[str, Experiment] = {}


def experiment(name: str, criterion: int | None, description: str, **params: Param):
    def register(fn):
        EXPERIMENTS[name] = Experiment(name, criterion, description, params, fn)
        return fn
    return register


def make_config(name: str, overrides: Mapping[str, Any] | None = None, seed: int = DEFAULT_SEED,
                output: str | None = None) -> RunConfig:
    """Fill defaults, parse string values and validate ids and tolerances."""
    if name not in EXPERIMENTS:
        raise ConfigurationError(f"unknown experiment {name!r}; known: {', '.join(EXPERIMENTS)}")
    exp = EXPERIMENTS[name]
    overrides = dict(overrides or {})
    unknown = set(overrides) - set(exp.params)
    if unknown:
        raise ConfigurationError(f"unknown parameter(s) for {name}: {', '.join(sorted(unknown))}")
    params = {}
    for key, p in exp.params.items():
        try:
            params[key] = p.parse(overrides[key]) if key in overrides else p.default
        except ValueError as exc:
            raise ConfigurationError(f"bad value for {key}: {exc}") from None
    _validate(params)
    return RunConfig(name, params, int(seed), output)


def _validate(params: Mapping[str, Any]):
    for key, val in params.items():
        if key.endswith("tol") and not (isinstance(val, (int, float)) and val > 0):
            raise ConfigurationError(f"tolerance {key} must be positive, got {val!r}")
        if key in ("T", "samples", "grid", "rays", "N") and not val > 0:
            raise ConfigurationError(f"{key} must be positive, got {val!r}")
    for sid in params.get("case", ()) if isinstance(params.get("case"), tuple) else ():
        if sid not in SUBMETRY_IDS:
            raise ConfigurationError(f"unknown submetry {sid!r}; known: {', '.join(SUBMETRY_IDS)}")
    if "space" in params and params["space"] not in SPACE_IDS:
        raise ConfigurationError(f"unknown space {params['space']!r}; known: {', '.join(SPACE_IDS)}")


# ---------------------------------------------------------------------------
# bundles

def jsonable(x):
    """Recursively convert to JSON-ready values (exact values become strings)."""
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return jsonable(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, PolyFunction):
        return x.to_string()
    return x


@dataclass
class Bundle:
    experiment: str
    params: dict
    seed: int
    reports: list[dict] = field(default_factory=list)
    csv: dict[str, str] = field(default_factory=dict)
    dat: dict[str, str] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.reports) and all(r["pass"] for r in self.reports)

    def add(self, **report) -> dict:
        report = jsonable(report)
        report["pass"] = bool(report["pass"])
        self.reports.append(report)
        return report

    def document(self) -> dict:
        return jsonable({"experiment": self.experiment, "seed": self.seed, "params": self.params,
                         "pass": self.passed, "reports": self.reports})

    def summary(self) -> dict:
        return {"experiment": self.experiment, "seed": self.seed, "pass": self.passed,
                "reports": len(self.reports), "failed": sum(not r["pass"] for r in self.reports)}

    def write(self, outdir: str) -> list[str]:
        """Write ``<experiment>.json``, CSV and data files; return the paths written."""
        os.makedirs(outdir, exist_ok=True)
        paths = [os.path.join(outdir, f"{self.experiment}.json")]
        _write_text(paths[0], dumps(self.document()))
        for name, text in sorted({**self.csv, **self.dat}.items()):
            path = os.path.join(outdir, name)
            os.makedirs(os.path.dirname(path), exist_ok=True)
            _write_text(path, text)
            paths.append(path)
        return paths


def dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _write_text(path: str, text: str):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def data_file(header: str, rows) -> str:
    lines = ["# " + header]
    lines += [" ".join(repr(float(v)) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def write_summary(bundles: list[Bundle], outdir: str) -> dict:
    summary = {"pass": all(b.passed for b in bundles),
               "experiments": [b.summary() for b in sorted(bundles, key=lambda b: b.experiment)]}
    os.makedirs(outdir, exist_ok=True)
    _write_text(os.path.join(outdir, "summary.json"), dumps(summary))
    return summary


def run_experiment(config: RunConfig) -> Bundle:
    return EXPERIMENTS[config.experiment].run(config)


def _run_named(args) -> Bundle:
    name, seed = args
    return run_experiment(make_config(name, seed=seed))


def run_many(names, seed: int = DEFAULT_SEED, jobs: int = 1) -> list[Bundle]:
    """Run experiments with default parameters in a process pool; results sorted by name."""
    names = sorted(names)
    if jobs <= 1:
        bundles = [_run_named((n, seed)) for n in names]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            bundles = list(pool.map(_run_named, [(n, seed) for n in names]))
    return sorted(bundles, key=lambda b: b.experiment)


def acceptance_experiments() -> list[str]:
    return [e.name for e in sorted(EXPERIMENTS.values(), key=lambda e: e.criterion or 99) if e.criterion]


# ---------------------------------------------------------------------------
# catalog rays

def latitude_ray(phi: float):
    """Point at colatitude ``phi`` on S^2 and the unit normal toward the north pole."""
    p = np.array([np.sin(phi), 0.0, np.cos(phi)])
    v = np.array([-np.cos(phi), 0.0, np.sin(phi)])
    return p, v


def clifford_ray(phi: float):
    """Point on the Clifford torus T_phi and the unit normal toward the core circle |x1,x2| = 1."""
    p = np.array([np.cos(phi), 0.0, np.sin(phi), 0.0])
    v = np.array([np.sin(phi), 0.0, -np.cos(phi), 0.0])
    return p, v


def hopf_ray(leaf, rng: np.random.Generator):
    """Point on the Hopf fiber over ``leaf`` and a random unit horizontal direction."""
    sigma = get_submetry("s3-hopf")
    p = sigma.point_on_leaf(leaf)
    w = rng.standard_normal(3)
    v = horizontal_lift(sigma, p, w)
    return p, v / np.linalg.norm(v)


def _lattice(first_pos: float, first_neg: float, step: float, T: float):
    pos = np.arange(first_pos, T, step)
    neg = -np.arange(-first_neg, T, step)
    return pos, neg


def _spectrum_error(spec, pos, neg) -> float:
    if len(spec.positive) != len(pos) or len(spec.negative) != len(neg):
        return math.inf
    if np.any(spec.positive_mult != 1) or np.any(spec.negative_mult != 1):
        return math.inf
    errs = [np.max(np.abs(spec.positive - pos), initial=0.0), np.max(np.abs(spec.negative - neg), initial=0.0)]
    return float(max(errs))


def trace_report(case: str, phi, direct: float, tr, tol: float, expected: float | None = None) -> dict:
    target = direct if expected is None else expected
    ok = abs(tr.accelerated - target) <= tol and abs(direct - target) <= tol
    return {"case": case, "phi": phi, "trace_direct": direct, "trace_series_raw": tr.raw,
            "trace_series_accel": tr.accelerated, "tail_bound": tr.tail_bound, "pass": ok}


# ---------------------------------------------------------------------------
# focal experiments

@experiment("euler-identity", 1, "Euler's cot series: raw symmetric sum and digamma-completed sum",
            phi=Param("angles", (math.pi / 6, math.pi / 4, math.pi / 3, 1.0), "angles in (0, pi)"),
            N=Param("int", 2000, "symmetric truncation"),
            raw_tol=Param("float", 1e-3), accel_tol=Param("float", 1e-8))
def _euler(cfg: RunConfig) -> Bundle:
    b = Bundle(cfg.experiment, dict(cfg.params), cfg.seed)
    phis = cfg["phi"] if isinstance(cfg["phi"], tuple) else (cfg["phi"],)
    rows = []
    for phi in phis:
        e = euler_series(phi, cfg["N"])
        ok = e.raw_residual <= cfg["raw_tol"] and e.accelerated_residual <= cfg["accel_tol"]
        b.add(case="euler", **e.to_dict(), **{"pass": ok})
        rows.append((phi, e.raw_residual, e.accelerated_residual))
    b.dat["euler-identity.dat"] = data_file("phi raw_residual accelerated_residual", rows)
    return b


@experiment("latitude-trace", 2, "focal spectra and reciprocal focal sums of latitude circles on S^2",
            grid=Param("int", 20, "number of colatitudes in (0.1, pi - 0.1)"),
            T=Param("float", DEFAULT_WINDOW, "scan window"),
            backend=Param("str", "closed", "Jacobi backend: closed or ode"),
            spectrum_tol=Param("float", 1e-8), trace_tol=Param("float", 1e-6))
def _latitude_trace(cfg: RunConfig) -> Bundle:
    b = Bundle(cfg.experiment, dict(cfg.params), cfg.seed)
    sigma = get_submetry("s2-latitude")
    rows = []
    for i, phi in enumerate(np.linspace(0.1, np.pi - 0.1, cfg["grid"])):
        p, v = latitude_ray(phi)
        chart = sigma.fiber_chart(p)
        direct = shape_operator(chart, p, v).trace
        spec = focal_spectrum(chart, p, v, cfg["T"], backend=cfg["backend"])
        pos, neg = _lattice(phi, phi - np.pi, np.pi, cfg["T"])
        err = _spectrum_error(spec, pos, neg)
        tr = trace_from_focal(spec)
        rep = trace_report("s2-latitude", phi, direct, tr, cfg["trace_tol"], expected=1 / np.tan(phi))
        rep["spectrum_error"] = err
        rep["pass"] = rep["pass"] and err <= cfg["spectrum_tol"]
        b.add(**rep)
        b.csv[f"spectra/latitude-{i:02d}.csv"] = spec.to_csv()
        rows.append((phi, direct, tr.accelerated, tr.accelerated - direct, err))
    b.dat["latitude-trace.dat"] = data_file("phi trace_direct trace_accel residual spectrum_error", rows)
    return b


@experiment("clifford-trace", 3, "reciprocal focal sums on Clifford tori and Hopf fibers of S^3",
            grid=Param("int", 20, "number of radii in (0.1, pi/2 - 0.1)"),
            T=Param("float", DEFAULT_WINDOW), hopf_leaves=Param("int", 6),
            trace_tol=Param("float", 1e-6), minimal_tol=Param("float", 1e-8),
            spectrum_tol=Param("float", 1e-8))
def _clifford_trace(cfg: RunConfig) -> Bundle:
    b = Bundle(cfg.experiment, dict(cfg.params), cfg.seed)
    rng = cfg.rng()
    sigma = get_submetry("s3-clifford")
    rows = []
    phis = list(np.linspace(0.1, np.pi / 2 - 0.1, cfg["grid"]))
    for i, phi in enumerate(phis + [np.pi / 4]):
        p, v = clifford_ray(phi)
        chart = sigma.fiber_chart(p)
        direct = shape_operator(chart, p, v).trace
        spec = focal_spectrum(chart, p, v, cfg["T"])
        pos, neg = _lattice(phi, phi - np.pi / 2, np.pi / 2, cfg["T"])
        err = _spectrum_error(spec, pos, neg)
        tr = trace_from_focal(spec)
        minimal = i == len(phis)
        tol = cfg["minimal_tol"] if minimal else cfg["trace_tol"]
        rep = trace_report("s3-clifford-minimal" if minimal else "s3-clifford", phi, direct, tr, tol,
                           expected=1 / np.tan(phi) - np.tan(phi))
        rep["spectrum_error"] = err
        rep["pass"] = rep["pass"] and err <= cfg["spectrum_tol"]
        b.add(**rep)
        b.csv[f"spectra/clifford-{i:02d}.csv"] = spec.to_csv()
        rows.append((phi, direct, tr.accelerated, tr.accelerated - direct))
    hopf = get_submetry("s3-hopf")
    for j, leaf in enumerate(hopf.sample_leaves(cfg["hopf_leaves"], rng)):
        p, v = hopf_ray(leaf, rng)
        chart = hopf.fiber_chart(p)
        direct = shape_operator(chart, p, v).trace
        spec = focal_spectrum(chart, p, v, cfg["T"])
        tr = trace_from_focal(spec)
        b.add(**trace_report("s3-hopf", None, direct, tr, cfg["minimal_tol"], expected=0.0), leaf=leaf)
        b.csv[f"spectra/hopf-{j:02d}.csv"] = spec.to_csv()
    b.dat["clifford-trace.dat"] = data_file("phi trace_direct trace_accel residual", rows)
    return b


@experiment("basic-focal", 4, "focal spectra agree at matched points of one regular fiber",
            T=Param("float", DEFAULT_WINDOW), leaves=Param("int", 4), tol=Param("float", 1e-8))
def _basic_focal(cfg: RunConfig) -> Bundle:
    b = Bundle(cfg.experiment, dict(cfg.params), cfg.seed)
    rng = cfg.rng()
    lat = get_submetry("s2-latitude")
    for z in np.linspace(-0.8, 0.8, cfg["leaves"]):
        chart = lat.chart_for_leaf(z)
        p1, p2 = chart.bases[0], chart.point(rng.uniform(0, 2 * np.pi, 1))
        for w in (1.0, -1.0):
            v1 = horizontal_lift(lat, p1, [w])
            scale = np.linalg.norm(v1)
            v2 = horizontal_lift(lat, p2, [w]) / scale
            rep = basic_focal_check(lat, z, (p1, v1 / scale), (p2, v2), cfg["T"])
            b.add(case="s2-latitude", leaf=z, d_rho=rep.d_rho[0], distance=rep.distance, counts=rep.counts,
                  **{"pass": rep.passes(cfg["tol"])})
    hopf = get_submetry("s3-hopf")
    for leaf in hopf.sample_leaves(cfg["leaves"], rng):
        chart = hopf.chart_for_leaf(leaf)
        p1, p2 = chart.bases[0], chart.point(rng.uniform(0, 2 * np.pi, 1))
        w = rng.standard_normal(3)
        v1 = horizontal_lift(hopf, p1, w)
        scale = np.linalg.norm(v1)
        v2 = horizontal_lift(hopf, p2, w) / scale
        rep = basic_focal_check(hopf, leaf, (p1, v1 / scale), (p2, v2), cfg["T"])
        b.add(case="s3-hopf", leaf=leaf, d_rho=rep.d_rho[0], distance=rep.distance, counts=rep.counts,
              **{"pass": rep.passes(cfg["tol"])})
    return b


@experiment("focal-spectrum", None, "focal spectrum of one catalog ray (CSV) with its reciprocal sum",
            ray=Param("str", "latitude", "latitude, clifford or hopf"),
            phi=Param("angle", math.pi / 3, "colatitude or torus radius"),
            T=Param("float", DEFAULT_WINDOW), backend=Param("str", "closed"), trace_tol=Param("float", 1e-6))
def _focal_spectrum(cfg: RunConfig) -> Bundle:
    b = Bundle(cfg.experiment, dict(cfg.params), cfg.seed)
    kind, phi = cfg["ray"], cfg["phi"]
    if kind == "latitude":
        sigma, (p, v) = get_submetry("s2-latitude"), latitude_ray(phi)
    elif kind == "clifford":
        sigma, (p, v) = get_submetry("s3-clifford"), clifford_ray(phi)
    elif kind == "hopf":
        sigma = get_submetry("s3-hopf")
        p, v = hopf_ray(np.array([np.cos(phi), np.sin(phi), 0.0]), cfg.rng())
    else:
        raise ConfigurationError(f"unknown ray {kind!r}; known: latitude, clifford, hopf")
    chart = sigma.fiber_chart(p)
    direct = shape_operator(chart, p, v).trace
    spec = focal_spectrum(chart, p, v, cfg["T"], backend=cfg["backend"])
    tr = trace_from_focal(spec)
    b.add(**trace_report(sigma.id, phi, direct, tr, cfg["trace_tol"]),
          tail=spec.tail.to_dict() if spec.tail else None, warnings=spec.warnings)
    b.csv[f"spectra/{kind}.csv"] = spec.to_csv()
    return b


# ---------------------------------------------------------------------------
# submetry experiments

@experiment("basic-mean", 5, "push-forward of the fiber mean curvature is constant on each fiber",
            case=Param("strs", ("s2-latitude", "s2-fold", "s3-clifford", "s3-hopf")),
            leaves=Param("int", 3), samples=Param("int", 100), tol=Param("float", 1e-6))
def _basic_mean(cfg: RunConfig) -> Bundle:
    b = Bundle(cfg.experiment, dict(cfg.params), cfg.seed)
    rng = cfg.rng()
    for sid in cfg["case"]:
        sigma = get_submetry(sid)
        for leaf in sigma.regular_leaves(cfg["leaves"], rng):
            rep = basic_mean_curvature_report(sigma, leaf, cfg["samples"], rng)
            b.add(**rep.to_json(cfg["tol"]), leaf=leaf)
    return b


def _monomials(space, degree: int):
    n = space.ambient_dim
    for d in range(degree + 1):
        for combo in combinations_with_replacement(range(n), d):
            e = [0] * n
            for i in combo:
                e[i] += 1
            yield reduce_canonical(space, Poly.monomial(e))


@experiment("avg-commute", 6, "fiberwise averaging commutes with the Laplacian",
            case=Param("strs", ("s2-latitude", "s2-fold", "s3-hopf")),
            degree=Param("int", 6, "monomial degree for exact backends"),
            grid=Param("int", 500, "grid points for the numeric backend"),
            functions=Param("strs", ("x1^2 x3", "x1 x2 x3 x4", "x1^3 x2 - 2 x3 x4^2")),
            tol=Param("float", 1e-8))
def _avg_commute(cfg: RunConfig) -> Bundle:
    b = Bundle(cfg.experiment, dict(cfg.params), cfg.seed)
    rng = cfg.rng()
    for sid in cfg["case"]:
        sigma = get_submetry(sid)
        if sigma.has_exact_average:
            fs = list(_monomials(sigma.space, cfg["degree"]))
            reps = [commutator_residual(f, sigma, backend="exact") for f in fs]
            zero = all(r.identity.is_zero() for r in reps)
            b.add(case=sid, backend="exact", functions=len(fs), degree=cfg["degree"],
                  max_residual=max(r.residual for r in reps), exact_zero=zero, **{"pass": zero})
        else:
            grid = sigma.space.random_points(cfg["grid"], rng)
            for text in cfg["functions"]:
                f = PolyFunction.parse(sigma.space, text)
                rep = commutator_residual(f, sigma, grid=grid, backend="numeric")
                b.add(case=sid, backend="numeric", function=f, grid=len(grid), max_residual=rep.residual,
                      **{"pass": rep.residual <= cfg["tol"]})
    return b


@experiment("quotient-construction", 9, "Gram matrix of gradients, quotient length and equidistance",
            samples=Param("int", 50), length_tol=Param("float", 1e-10), fiber_tol=Param("float", 1e-10),
            equidistance_tol=Param("float", 1e-8))
def _quotient(cfg: RunConfig) -> Bundle:
    b = Bundle(cfg.experiment, dict(cfg.params), cfg.seed)
    rng = cfg.rng()
    for sid, alg in (("s2-latitude", "s2-zonal"), ("s2-fold", "s2-even-zonal"), ("s3-hopf", "s3-hopf")):
        sigma = get_submetry(sid)
        algebra = algebra_from(sigma.space.id, alg)
        gram = gram_gradients(sigma.rho)
        members = all(algebra.contains(e) for row in gram for e in row)
        spreads = [induced_metric_check(sigma.rho, sigma, leaf, cfg["samples"], rng).spread
                   for leaf in sigma.regular_leaves(4, rng)]
        rep = {"case": sid, "check": "gram", "gram": [[e for e in row] for row in gram],
               "members": members, "fiber_spread": max(spreads)}
        ok = members and max(spreads) <= cfg["fiber_tol"]
        if not sigma.has_exact_average:
            # rationalize sampled Gram entries and test them exactly
            pts = sigma.space.random_points(200, rng)
            fitted_ok = True
            worst = 0.0
            for row in gram:
                for e in row:
                    fit, dev, res = fit_polyfunction(sigma.space, pts, e(pts), max(e.degree(), 0))
                    worst = max(worst, dev)
                    fitted_ok &= fit == e and algebra.contains(fit)
            rep.update(rationalized_members=fitted_ok, coefficient_deviation=worst)
            ok = ok and fitted_ok
        b.add(**rep, **{"pass": ok})
    for sid, expected in (("s2-latitude", math.pi), ("s2-fold", math.pi / 2)):
        sigma = get_submetry(sid)
        length = quotient_length(sigma.rho[0], sigma)
        b.add(case=sid, check="quotient-length", length=length, expected=expected,
              error=length - expected, **{"pass": abs(length - expected) <= cfg["length_tol"]})
    lat = get_submetry("s2-latitude")
    for z1, z2 in ((0.2, 0.7), (-0.5, 0.3), (0.9, -0.9)):
        lo, hi = equidistance_check(lat, z1, z2, 40, rng)
        expected = abs(math.acos(z1) - math.acos(z2))
        b.add(case="s2-latitude", check="equidistance", leaves=(z1, z2), min=lo, max=hi, spread=hi - lo,
              expected=expected,
              **{"pass": hi - lo <= cfg["equidistance_tol"] and abs(lo - expected) <= cfg["equidistance_tol"]})
    hopf = get_submetry("s3-hopf")
    leaves = hopf.sample_leaves(6, rng)
    for a, c in ((0, 1), (2, 5), (3, 4)):
        lo, hi = equidistance_check(hopf, leaves[a], leaves[c], 40, rng)
        # leaf space is the sphere of radius 1/2
        expected = 0.5 * math.acos(float(np.clip(leaves[a] @ leaves[c], -1, 1)))
        b.add(case="s3-hopf", check="equidistance", leaves=(leaves[a], leaves[c]), min=lo, max=hi,
              spread=hi - lo, expected=expected,
              **{"pass": hi - lo <= cfg["equidistance_tol"] and abs(lo - expected) <= cfg["equidistance_tol"]})
    return b


# ---------------------------------------------------------------------------
# algebra experiments

@experiment("reynolds", 7, "Reynolds operator is A-linear and matches fiber averaging",
            algebra=Param("strs", ("z", "z^2")), degree=Param("int", 4))
def _reynolds(cfg: RunConfig) -> Bundle:
    b = Bundle(cfg.experiment, dict(cfg.params), cfg.seed)
    s2 = get_space("s2")
    d = cfg["degree"]
    basis = [f for f in harmonic_basis(s2, harmonic_eigenvalue(d, 3))]
    big = harmonic_eigenvalue(2 * d, 3)
    averages = {"z": get_submetry("s2-latitude"), "z^2": get_submetry("s2-fold")}
    for gen in cfg["algebra"]:
        alg = algebra_from("s2", (gen,))
        pairs = bad = 0
        for a in alg.filtration(d):
            for f in basis:
                pairs += 1
                if reynolds(alg, a * f, big) != a * reynolds(alg, f, big):
                    bad += 1
        b.add(case=f"<{gen}>", check="module-property", pairs=pairs, failures=bad, **{"pass": bad == 0})
        x2 = PolyFunction.parse(s2, "x^2")
        r = reynolds(alg, x2, big)
        expected = PolyFunction.parse(s2, "1/2 - 1/2 z^2")
        rep = {"case": f"<{gen}>", "check": "reynolds(x^2)", "value": r, "expected": expected}
        ok = r == expected
        if gen in averages:
            avg = average_function(x2, averages[gen])
            rep["average"] = avg
            ok = ok and avg == r
        b.add(**rep, **{"pass": ok})
    return b


@experiment("laplacian-closure", 8, "closure certificates and the maximality probe on S^2 and S^3",
            degree_bound=Param("int", 6), cutoff=Param("int", 30))
def _laplacian_closure(cfg: RunConfig) -> Bundle:
    b = Bundle(cfg.experiment, dict(cfg.params), cfg.seed)
    rng = cfg.rng()
    for name in ("s2-zonal", "s2-even-zonal", "s3-hopf"):
        alg = algebra_from(ALGEBRAS[name][0], name)
        cert = check_laplacian_closed(alg, cfg["degree_bound"])
        b.add(case=name, check="closure", closed=cert.closed, certificate=cert.describe(),
              **{"pass": cert.closed})
    cubic = algebra_from("s2", "s2-cubic")
    cert = check_laplacian_closed(cubic, cfg["degree_bound"])
    z = PolyFunction.parse(cubic.space, "z")
    names_z = bool(_ratio(cert.residual, z))
    b.add(case="s2-cubic", check="closure", closed=cert.closed, certificate=cert.describe(),
          residual=cert.residual, **{"pass": (not cert.closed) and names_z})
    lat = get_submetry("s2-latitude")
    probe = maximality_probe(cubic, lat, 6, rng=rng)
    row = probe.first_mismatch()
    exhibits = row is not None and any(_ratio(f, z) for f in row.outside)
    b.add(case="s2-cubic", check="maximality-probe", mismatch_eigenvalue=row.eigenvalue if row else None,
          outside=row.outside if row else [], **{"pass": exhibits})
    for name, sid in (("s2-zonal", "s2-latitude"), ("s2-even-zonal", "s2-fold")):
        alg = algebra_from("s2", name)
        probe = maximality_probe(alg, get_submetry(sid), cfg["cutoff"], rng=rng)
        b.add(case=name, check="maximality-probe", submetry=sid, cutoff=cfg["cutoff"],
              rows=[{"eigenvalue": r.eigenvalue, "dim_basic": r.dim_basic, "dim_algebra": r.dim_algebra}
                    for r in probe.rows],
              **{"pass": probe.agree})
    return b


def _ratio(f: PolyFunction, g: PolyFunction) -> list[Fraction]:
    """``[c]`` if f = c g with c != 0, else ``[]``."""
    if f is None or f.is_zero() or g.is_zero():
        return []
    (lam, h), = g.components if len(g.components) == 1 else ((None, None),)
    if lam is None:
        return []
    e, c0 = next(iter(h.terms.items()))
    c = f.component(lam).ambient.coefficient(e) / c0
    return [c] if c and f == g.scale(c) else []


@experiment("closure", None, "Laplacian-closure certificate of one algebra",
            space=Param("str", "s2"), algebra=Param("strs", ("z^3",)), degree_bound=Param("int", 6))
def _closure(cfg: RunConfig) -> Bundle:
    b = Bundle(cfg.experiment, dict(cfg.params), cfg.seed)
    alg = algebra_from(cfg["space"], cfg["algebra"])
    cert = check_laplacian_closed(alg, cfg["degree_bound"])
    b.add(case=alg.name or ", ".join(cfg["algebra"]), space=alg.space.id,
          closed=cert.closed, degree_bound=cert.degree_bound, certificate=cert.describe(),
          failing_generator=cert.failing_index, residual=cert.residual,
          witnesses=[{str(k): v for k, v in w.items()} for w in cert.witnesses], **{"pass": cert.closed})
    return b


@experiment("separation", 10, "catalog quotient maps separate fibers; an even function does not",
            samples=Param("int", 24))
def _separation(cfg: RunConfig) -> Bundle:
    b = Bundle(cfg.experiment, dict(cfg.params), cfg.seed)
    rng = cfg.rng()
    for sid in SUBMETRY_IDS:
        sigma = get_submetry(sid)
        rep = verify_separation(sigma.rho, sigma, cfg["samples"], rng=rng)
        b.add(case=sid, check="separates", margin=rep.margin, pairs=rep.pairs,
              **{"pass": rep.separates and rep.margin > 0})
    lat = get_submetry("s2-latitude")
    z2 = [PolyFunction.parse(lat.space, "z^2")]
    rep = verify_separation(z2, lat, cfg["samples"], rng=rng)
    leaves = rep.violation_leaves
    antipodal = leaves is not None and abs(leaves[0] + leaves[1]) < 1e-12 and abs(leaves[0]) > 1e-12
    b.add(case="s2-latitude", check="z^2 fails", separates=rep.separates, witness_leaves=leaves,
          witness_points=rep.violation, **{"pass": (not rep.separates) and antipodal})
    return b


# ---------------------------------------------------------------------------
# numerical hygiene

def random_jacobi_system(n: int, rng: np.random.Generator) -> JacobiSystem:
    """Lagrangian family with E(0) = I and a random symmetric E'(0)."""
    s = rng.standard_normal((n, n))
    return JacobiSystem(np.eye(n), 0.5 * (s + s.T))


def _focal_cases():
    lat, cl, hopf = get_submetry("s2-latitude"), get_submetry("s3-clifford"), get_submetry("s3-hopf")
    yield "s2-latitude", lat.fiber_chart(latitude_ray(1.0)[0]), *latitude_ray(1.0)
    yield "s3-clifford", cl.fiber_chart(clifford_ray(0.4)[0]), *clifford_ray(0.4)
    p, v = hopf_ray(np.array([0.0, 0.6, 0.8]), np.random.default_rng(1))
    yield "s3-hopf", hopf.fiber_chart(p), p, v
    s3 = get_space("s3")
    e1 = np.array([1.0, 0, 0, 0])
    yield "s3-point", RotationChart(s3, [e1], []), e1, np.array([0, 1.0, 0, 0])


@experiment("hygiene", 11, "backend agreement, gradients, multiplicities and exact eigen identities",
            rays=Param("int", 50), T=Param("float", 10.0), degree=Param("int", 8),
            backend_tol=Param("float", 1e-9), gradient_tol=Param("float", 1e-6))
def _hygiene(cfg: RunConfig) -> Bundle:
    b = Bundle(cfg.experiment, dict(cfg.params), cfg.seed)
    rng = cfg.rng()
    ts = np.linspace(-cfg["T"], cfg["T"], 201)
    worst = 0.0
    for k in range(cfg["rays"]):
        space = get_space(SPACE_IDS[k % len(SPACE_IDS)])
        p = space.random_point(rng)
        ray = GeodesicRay(space, p, space.random_unit_tangent(p, rng))
        system = random_jacobi_system(space.intrinsic_dim - 1, rng)
        e1 = jacobi_fundamental(space, ray, system, cfg["T"], backend="closed")(ts)
        e2 = jacobi_fundamental(space, ray, system, cfg["T"], backend="ode")(ts)
        scale = max(1.0, float(np.max(np.abs(e1))))
        worst = max(worst, float(np.max(np.abs(e1 - e2))) / scale,
                    float(np.max(np.abs(np.linalg.det(e1) - np.linalg.det(e2)))) / scale ** e1.shape[-1])
    b.add(check="jacobi-backends", rays=cfg["rays"], max_difference=worst,
          **{"pass": worst <= cfg["backend_tol"]})

    worst, h = 0.0, 1e-5
    for k in range(40):
        space = get_space(SPACE_IDS[k % len(SPACE_IDS)])
        basis = harmonic_basis(space, 12)
        f = sum((g.scale(Fraction(int(c), 7)) for g, c in zip(basis, rng.integers(-7, 8, len(basis)))),
                PolyFunction(space))
        p = space.random_point(rng)
        w = space.random_unit_tangent(p, rng)
        ray = GeodesicRay(space, p, w)
        fd = (f(ray.at(h)[None, :])[0] - f(ray.at(-h)[None, :])[0]) / (2 * h)
        worst = max(worst, abs(float(gradient(f)(p[None, :])[0] @ w) - fd))
    b.add(check="gradient-vs-fd", samples=40, max_difference=worst, **{"pass": worst <= cfg["gradient_tol"]})

    for name, chart, p, v in _focal_cases():
        r = normal_ray(chart, p, v)
        system = l_jacobi_system(r, shape_operator(chart, p, v))
        sol = jacobi_fundamental(chart.space, r, system, DEFAULT_WINDOW)
        spec = focal_spectrum(chart, p, v, DEFAULT_WINDOW)
        orders = [det_zero_order(sol, t) for t in spec.positive[:4]]
        ok = all(abs(o - m) < 0.05 for o, m in zip(orders, spec.positive_mult[:4]))
        b.add(check="multiplicity-vs-zero-order", case=name, roots=spec.positive[:4],
              multiplicities=spec.positive_mult[:4], zero_orders=orders, **{"pass": ok})

    for sid in ("s2", "s3", "s4"):
        space = get_space(sid)
        count = bad = 0
        for lam in spectrum(space, harmonic_eigenvalue(cfg["degree"], space.ambient_dim)):
            for f in eigenspace_basis(space, lam):
                count += 1
                d = ambient_laplacian(space, f.ambient) - f.ambient.scale(lam)
                if not (d.is_zero() or reduce_canonical(space, d).is_zero()):
                    bad += 1
        b.add(check="eigen-identities", case=sid, degree=cfg["degree"], functions=count, failures=bad,
              **{"pass": bad == 0})
    return b


# ---------------------------------------------------------------------------
# listing

def catalog_text() -> str:
    from .submetry import get_submetry as _get

    lines = ["spaces:"]
    for sid in SPACE_IDS:
        sp = get_space(sid)
        dims = " x ".join(f"S^{n}" for n in sp.factor_dims)
        lines.append(f"  {sid}: {dims} in R^{sp.ambient_dim} ({', '.join(sp.names)})")
    lines.append("submetries:")
    for sid in SUBMETRY_IDS:
        s = _get(sid)
        lines.append(f"  {sid}: {s.description}; rho = {'; '.join(s.rho_strings)}")
    lines.append("algebras:")
    for name, (sid, gens) in ALGEBRAS.items():
        lines.append(f"  {name}: {', '.join(gens)}    [{sid}]")
    lines.append("experiments:")
    for e in EXPERIMENTS.values():
        tag = f"criterion {e.criterion}" if e.criterion else "utility"
        lines.append(f"  {e.name}: {e.description} [{tag}]")
        for key, p in e.params.items():
            default = ",".join(map(str, p.default)) if isinstance(p.default, tuple) else p.default
            lines.append(f"      --{key} (default {default})" + (f"  {p.help}" if p.help else ""))
    return "\n".join(lines) + "\n"
