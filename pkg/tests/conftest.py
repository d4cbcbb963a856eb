from __future__ import annotations

import numpy as np
import pytest

from road_admm.costs import LeastSquaresCost
from road_admm.engine import Problem
from road_admm.operators import build_topology


def chain2_problem() -> Problem:
    """Two agents on one edge, f1 = x^2/2 and f2 = (x-2)^2/2, so x* = 1."""
    t = build_topology(2, 1, [(0, 1)])
    costs = [LeastSquaresCost([[1.0]], [0.0]), LeastSquaresCost([[1.0]], [2.0])]
    return Problem.build(t, costs)


@pytest.fixture
def chain2():
    return chain2_problem()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    """One line per acceptance criterion, taken from the ``acceptance`` property each test records."""
    lines = {}
    for reports in terminalreporter.stats.values():
        for rep in reports:
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py::" not in nodeid or getattr(rep, "when", None) != "call":
                continue
            props = dict(getattr(rep, "user_properties", []))
            crit = nodeid.split("::")[-1].split("_")[1].upper()
            verdict = "PASS" if rep.passed else "FAIL"
            lines[crit] = f"{crit:<4} {verdict}  {props.get('acceptance', '')}"
    if lines:
        terminalreporter.section("acceptance criteria")
        for crit in sorted(lines, key=lambda c: int(c[1:])):
            terminalreporter.write_line(lines[crit])
