"""Grid sweeps over algorithm, penalty and noise intensity."""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import replace
from typing import Iterable, Sequence

from ..exceptions import ValidationError
from .config import ExperimentConfig
from .experiment import run_experiment

SWEEP_HEADER = ("algo", "c", "mu_b", "c_value", "final_gap", "plateau", "iters_to_1e-4", "flags")
SWEEP_TOL = 1e-4


def sweep(base: ExperimentConfig, algos: Sequence[str] = ("admm", "road"), cs: Sequence = ("opt",),
          mu_bs: Sequence[float] = (0.0, 0.5, 1.0)) -> list[dict]:
    """Run every ``(algo, c, mu_b)`` cell. A cell with ``mu_b = 0`` is the error-free baseline
    (no unreliable agents), not zero-mean noise."""
    grid = list(itertools.product(algos, cs, mu_bs))
    if not grid:
        raise ValidationError("sweep grid is empty")
    rows = []
    for algo, c, mu in grid:
        cfg = replace(base, algo=algo, c=c, mu_b=float(mu))
        if float(mu) == 0.0:
            cfg = replace(cfg, unreliable=0)
        res = run_experiment(cfg, check_bounds=False)
        tr = res.trace
        it = tr.iterations_to(SWEEP_TOL)
        rows.append({
            "algo": algo, "c": c, "mu_b": float(mu), "c_value": res.instance.c,
            "final_gap": tr.f_gap[-1], "plateau": tr.plateau(),
            "iters_to_1e-4": "" if it is None else it, "flags": tr.flags[-1],
        })
    return rows


def sweep_csv(rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for row in rows:
        w.writerow([row[h] if not isinstance(row[h], float) else format(row[h], ".17g") for h in SWEEP_HEADER])
    return buf.getvalue()
