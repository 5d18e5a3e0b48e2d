"""Command line runner: ``catalog``, ``run`` and ``baseline``.

Exit status is 0 when every report passes, 1 when a report fails or a
baseline drifted, and 2 for usage errors.
"""
from __future__ import annotations

import argparse
import configparser
import json
import math
import os
import sys

from .config import DEFAULT_SEED
from .errors import ConfigurationError, SubmetryLabError
from .experiments import (
    EXPERIMENTS,
    acceptance_experiments,
    catalog_text,
    dumps,
    make_config,
    run_experiment,
    run_many,
    write_summary,
)

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="submetrylab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("catalog", help="list spaces, submetries, algebras and experiments")
    run = sub.add_parser("run", help="run an experiment (or 'all'); extra --key value pairs set parameters")
    run.add_argument("experiment")
    run.add_argument("--config", help="INI file with one section per experiment and an optional [run] section")
    run.add_argument("--out", help="output directory (default: submetrylab-out)")
    run.add_argument("--seed", type=int)
    run.add_argument("--jobs", type=int, help="worker processes for 'run all'")
    base = sub.add_parser("baseline", help="compare a report bundle with a stored baseline")
    base.add_argument("bundle", help="bundle directory or a single report JSON file")
    base.add_argument("file", help="baseline file")
    base.add_argument("--init", action="store_true", help="write the baseline from the bundle")
    base.add_argument("--abs-tol", type=float, default=1e-9)
    base.add_argument("--rel-tol", type=float, default=1e-9)
    return ap


def _pairs(extra: list[str]) -> dict[str, str]:
    out, i = {}, 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--") or len(tok) == 2:
            raise UsageError(f"unexpected argument {tok!r}")
        key, eq, val = tok[2:].partition("=")
        if not eq:
            if i + 1 >= len(extra):
                raise UsageError(f"missing value for --{key}")
            i += 1
            val = extra[i]
        out[key.replace("-", "_")] = val
        i += 1
    return out


def _read_config(path: str | None) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(default_section="__none__", interpolation=None)
    cp.optionxform = str
    if path:
        if not os.path.exists(path):
            raise UsageError(f"config file {path} not found")
        cp.read(path)
        for section in cp.sections():
            if section != "run" and section not in EXPERIMENTS:
                raise UsageError(f"config section [{section}] is not an experiment")
    return cp


def cmd_run(args, extra: list[str]) -> int:
    cp = _read_config(args.config)
    runsec = dict(cp["run"]) if cp.has_section("run") else {}
    seed = args.seed if args.seed is not None else int(runsec.get("seed", DEFAULT_SEED))
    out = args.out or runsec.get("out", "submetrylab-out")
    jobs = args.jobs if args.jobs is not None else int(runsec.get("jobs", 1))
    flags = _pairs(extra)
    if args.experiment == "all":
        if flags:
            raise UsageError("per-experiment flags are not accepted with 'all'; use a config file")
        names = acceptance_experiments()
        if any(cp.has_section(n) for n in names):
            bundles = [run_experiment(make_config(n, dict(cp[n]) if cp.has_section(n) else {}, seed))
                       for n in names]
        else:
            bundles = run_many(names, seed, jobs)
    else:
        if args.experiment not in EXPERIMENTS:
            raise UsageError(f"unknown experiment {args.experiment!r}; see 'submetrylab catalog'")
        params = dict(cp[args.experiment]) if cp.has_section(args.experiment) else {}
        params.update(flags)  # flags win over the config file
        bundles = [run_experiment(make_config(args.experiment, params, seed, out))]
    for b in bundles:
        b.write(out)
        failed = sum(not r["pass"] for r in b.reports)
        status = "PASS" if b.passed else "FAIL"
        print(f"{status} {b.experiment}: {len(b.reports) - failed}/{len(b.reports)} reports pass")
    summary = write_summary(bundles, out)
    print(f"summary: {'PASS' if summary['pass'] else 'FAIL'} (seed {seed}) -> {os.path.join(out, 'summary.json')}")
    return EXIT_PASS if summary["pass"] else EXIT_FAIL


# ---------------------------------------------------------------------------
# baselines

def load_bundle(path: str) -> dict[str, object]:
    """``{file name: parsed JSON}`` for a bundle directory or a single JSON file."""
    if os.path.isdir(path):
        names = sorted(n for n in os.listdir(path) if n.endswith(".json"))
        if not names:
            raise UsageError(f"no JSON reports in {path}")
        return {n: _load_json(os.path.join(path, n)) for n in names}
    if os.path.isfile(path):
        return {os.path.basename(path): _load_json(path)}
    raise UsageError(f"bundle {path} not found")


def _load_json(path: str):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def diff_documents(base, new, path: str = "", abs_tol: float = 1e-9, rel_tol: float = 1e-9,
                   field_tols: dict | None = None) -> list[str]:
    """Field paths where ``new`` drifts from ``base``; floats within tolerance, all else exact."""
    field_tols = field_tols or {}
    if isinstance(base, dict) and isinstance(new, dict):
        out = []
        for k in sorted(set(base) | set(new)):
            p = f"{path}.{k}" if path else k
            if k not in base or k not in new:
                out.append(f"{p}: {'added' if k not in base else 'missing'}")
            else:
                out += diff_documents(base[k], new[k], p, abs_tol, rel_tol, field_tols)
        return out
    if isinstance(base, list) and isinstance(new, list):
        if len(base) != len(new):
            return [f"{path}: length {len(base)} -> {len(new)}"]
        out = []
        for i, (a, b) in enumerate(zip(base, new)):
            out += diff_documents(a, b, f"{path}[{i}]", abs_tol, rel_tol, field_tols)
        return out
    if isinstance(base, float) or isinstance(new, float):
        if isinstance(base, (int, float)) and isinstance(new, (int, float)) and not isinstance(base, bool) \
                and not isinstance(new, bool):
            leaf = path.rsplit(".", 1)[-1].split("[")[0]
            tol = field_tols.get(leaf, abs_tol + rel_tol * abs(base))
            if math.isclose(base, new, rel_tol=0.0, abs_tol=tol):
                return []
    elif type(base) is type(new) and base == new:
        return []
    return [f"{path}: {base!r} -> {new!r}"]


def cmd_baseline(args) -> int:
    bundle = load_bundle(args.bundle)
    if args.init:
        doc = {"abs_tol": args.abs_tol, "rel_tol": args.rel_tol, "field_tolerances": {}, "documents": bundle}
        with open(args.file, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(dumps(doc))
        print(f"baseline written to {args.file} ({len(bundle)} documents)")
        return EXIT_PASS
    if not os.path.exists(args.file):
        raise UsageError(f"baseline {args.file} not found (use --init to create it)")
    base = _load_json(args.file)
    diffs = diff_documents(base["documents"], bundle, "", base.get("abs_tol", args.abs_tol),
                           base.get("rel_tol", args.rel_tol), base.get("field_tolerances"))
    for d in diffs:
        print(d)
    print(f"{len(diffs)} drifted field(s)")
    return EXIT_FAIL if diffs else EXIT_PASS


def main(argv: list[str] | None = None) -> int:
    ap = _parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args, extra = ap.parse_known_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "catalog":
            if extra:
                raise UsageError(f"unexpected arguments {extra}")
            sys.stdout.write(catalog_text())
            return EXIT_PASS
        if args.command == "run":
            return cmd_run(args, extra)
        if extra:
            raise UsageError(f"unexpected arguments {extra}")
        return cmd_baseline(args)
    except (UsageError, ConfigurationError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SubmetryLabError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
