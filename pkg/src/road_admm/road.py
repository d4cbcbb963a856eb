"""Robust ADMM: per-neighbour cumulative deviation tests with value substitution.

Agent ``i`` accumulates ``||x_i^t - z_j^t||`` for each neighbour ``j`` (its own true value against
what ``j`` broadcast). Once the sum exceeds ``U`` the arc ``(i, j)`` is flagged for good and,
from the next round on, agent ``i`` uses its own value wherever it would have used ``z_j``.
Links are never removed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .engine import AdmmConfig, NetworkState, Problem, Trace, _Recorder, initial_state, step, verify_lemma1
from .errors import ErrorModel
from .exceptions import ValidationError


@dataclass(frozen=True)
class DeviationTracker:
    """``stats[i, j]`` is agent ``i``'s cumulative deviation from neighbour ``j``; zero off the arcs."""

    stats: np.ndarray
    flagged: np.ndarray

    @classmethod
    def empty(cls, D: int) -> "DeviationTracker":
        return cls(np.zeros((D, D)), np.zeros((D, D), dtype=bool))

    @property
    def flagged_arcs(self) -> list[tuple[int, int]]:
        return [(int(i), int(j)) for i, j in zip(*np.nonzero(self.flagged))]

    def updated(self, topology, x: np.ndarray, z: np.ndarray, U: float
                ) -> tuple["DeviationTracker", list[tuple[int, int, float]]]:
        stats = self.stats.copy()
        for i, j in topology.arcs:
            stats[i, j] += float(np.linalg.norm(x[i] - z[j]))
        new = (stats > U) & ~self.flagged
        events = [(int(i), int(j), float(stats[i, j])) for i, j in zip(*np.nonzero(new))]
        return DeviationTracker(stats, self.flagged | new), events


def road_step(state: NetworkState, tracker: DeviationTracker, problem: Problem, config: AdmmConfig,
              error_model: ErrorModel | None, U: float) -> tuple[NetworkState, DeviationTracker, list]:
    """One robust round; returns the new state, the updated tracker and this round's new flags."""
    if not U > 0:
        raise ValidationError(f"threshold U must be positive, got {U}")
    flagged = tracker.flagged if tracker.flagged.any() else None
    nxt = step(state, problem, config, error_model, flagged=flagged)
    tracker, events = tracker.updated(problem.topology, nxt.x, nxt.z, U)
    return nxt, tracker, events


def run_road(problem: Problem, config: AdmmConfig, error_model: ErrorModel | None, U: float,
             recorder: Callable[[NetworkState], None] | None = None, x0: np.ndarray | None = None) -> Trace:
    """Robust run. The closed-form identity check is reported only while no arc is flagged,
    since substitution changes the iteration it describes."""
    rec = _Recorder(problem, config, recorder, "road")
    state = initial_state(problem, config.c, x0)
    tracker = DeviationTracker.empty(problem.D)
    rec.record(state, math.nan, 0, tracker.stats)
    worst = math.nan
    for _ in range(config.T):
        active = bool(tracker.flagged.any())
        nxt, tracker, events = road_step(state, tracker, problem, config, error_model, U)
        for i, j, s in events:
            rec.trace.flag_events.append((nxt.k, i, j, s, U))
        if config.verify_identities and not active:
            res = verify_lemma1(nxt, state, state.zsum, problem.costs, problem.operators, config.c)
            worst = res if math.isnan(worst) else max(worst, res)
        state = nxt
        if rec.due(state.k):
            rec.record(state, worst, int(tracker.flagged.sum()), tracker.stats)
            worst = math.nan
    rec.trace.final_state = state
    rec.trace.final_tracker = tracker
    return rec.trace


def global_deviation(trace: Trace, operators) -> np.ndarray:
    """Diagnostic ``Z(k) = sum_{t<=k} ||Q z^t||`` over the recorded rounds ``t >= 1``."""
    vals = [float(np.linalg.norm(operators.Q @ z.ravel())) for z in trace.z[1:]]
    return np.concatenate([[0.0], np.cumsum(vals)])
