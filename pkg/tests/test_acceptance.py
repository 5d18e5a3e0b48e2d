"""The eleven acceptance criteria, one named experiment each, at their stated tolerances.

Each test prints a single ``criterion N PASS|FAIL`` line.
"""
import time

import pytest

from submetrylab.experiments import EXPERIMENTS, acceptance_experiments, make_config, run_experiment

# runtime budgets in seconds, where one is stated
BUDGET = {1: 1.0, 2: 10.0}

CRITERIA = acceptance_experiments()


def test_every_criterion_has_an_experiment():
    assert [EXPERIMENTS[n].criterion for n in CRITERIA] == list(range(1, 12))


@pytest.mark.parametrize("name", CRITERIA)
def test_criterion(name, capsys):
    number = EXPERIMENTS[name].criterion
    start = time.perf_counter()
    bundle = run_experiment(make_config(name, {}))
    elapsed = time.perf_counter() - start
    failed = [r for r in bundle.reports if not r["pass"]]
    in_budget = elapsed < BUDGET.get(number, float("inf"))
    ok = bundle.passed and in_budget and bool(bundle.reports)
    with capsys.disabled():
        print(f"\ncriterion {number:2d} {'PASS' if ok else 'FAIL'} {name}: "
              f"{len(bundle.reports) - len(failed)}/{len(bundle.reports)} reports, {elapsed:.2f} s")
    assert not failed, failed
    assert in_budget, f"{name} took {elapsed:.2f} s, budget {BUDGET[number]} s"
