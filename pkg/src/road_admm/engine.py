"""Synchronous decentralized ADMM with erroneous broadcasts.

Each round every agent solves its local x-update from the values broadcast in the previous
round, broadcasts ``z = x + e`` and updates its multiplier with the freshly broadcast values.
States are held as ``(D, N)`` arrays; ``stacked`` views are agent-major vectors of length ``D*N``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .costs import LocalCost, centralized_minimizer, stacked_gradient, x_update_solve
from .errors import ErrorModel, none_model, sample_error
from .exceptions import SolverDivergence, ValidationError
from .operators import ConsensusOperators, Topology, build_operators

TRACE_HEADER = ("k", "f_gap", "consensus_violation", "g_dist", "lemma1_residual", "flags", "plateau_window")
PLATEAU_FRACTION = 0.2


@dataclass(frozen=True)
class AdmmConfig:
    c: float
    T: int
    record_every: int = 1
    verify_identities: bool = True

    def __post_init__(self):
        if not (self.c > 0 and math.isfinite(self.c)):
            raise ValidationError(f"penalty c must be positive and finite, got {self.c}")
        if int(self.T) != self.T or self.T < 0:
            raise ValidationError(f"iteration budget T must be a nonnegative integer, got {self.T}")
        if int(self.record_every) != self.record_every or self.record_every < 1:
            raise ValidationError(f"record_every must be a positive integer, got {self.record_every}")


@dataclass
class Problem:
    """Topology, operators and local costs, plus the centralized optimum."""

    topology: Topology
    operators: ConsensusOperators
    costs: list[LocalCost]
    x_star: np.ndarray
    f_star: float

    @classmethod
    def build(cls, topology: Topology, costs: Sequence[LocalCost], x_star: np.ndarray | None = None) -> "Problem":
        costs = list(costs)
        if len(costs) != topology.D:
            raise ValidationError(f"{len(costs)} costs for {topology.D} agents")
        if any(f.dim != topology.N for f in costs):
            raise ValidationError(f"every cost must act on R^{topology.N}")
        if x_star is None:
            x_star = centralized_minimizer(costs, topology.N)
        f_star = float(sum(f.evaluate(x_star) for f in costs))
        return cls(topology, build_operators(topology), costs, np.asarray(x_star, dtype=float), f_star)

    @property
    def D(self) -> int:
        return self.topology.D

    @property
    def N(self) -> int:
        return self.topology.N

    @property
    def x_star_stacked(self) -> np.ndarray:
        return np.tile(self.x_star, self.D)

    def objective(self, x: np.ndarray) -> float:
        """``sum_i f_i(x_i)`` for a ``(D, N)`` state."""
        return float(sum(f.evaluate(x[i]) for i, f in enumerate(self.costs)))

    def gradient_at_star(self) -> np.ndarray:
        return stacked_gradient(self.costs, self.x_star_stacked)


@dataclass(frozen=True)
class NetworkState:
    k: int
    x: np.ndarray
    alpha: np.ndarray
    z: np.ndarray
    e: np.ndarray
    r: np.ndarray
    zsum: np.ndarray  # sum of z^s for s <= k, stacked
    z_prev: np.ndarray | None = None


@dataclass(frozen=True)
class GMetric:
    """``||(r, x)||_G^2 = c ||r||^2 + (c/2) x^T L_+ x``."""

    c: float
    L_plus: np.ndarray

    def matrix(self) -> np.ndarray:
        n = self.L_plus.shape[0]
        G = np.zeros((2 * n, 2 * n))
        G[:n, :n] = self.c * np.eye(n)
        G[n:, n:] = 0.5 * self.c * self.L_plus
        return G


def g_norm_sq(metric: GMetric, r_part: np.ndarray, x_part: np.ndarray) -> float:
    r_part = np.ravel(r_part)
    x_part = np.ravel(x_part)
    n = metric.L_plus.shape[0]
    if r_part.shape != (n,) or x_part.shape != (n,):
        raise ValidationError(f"G-norm expects two vectors of length {n}, got {r_part.shape} and {x_part.shape}")
    return float(metric.c * (r_part @ r_part) + 0.5 * metric.c * (x_part @ (metric.L_plus @ x_part)))


def initial_state(problem: Problem, c: float, x0: np.ndarray | None = None) -> NetworkState:
    """``x^0`` (default 0), ``e^0 = 0``, ``alpha^0 = c L_- z^0`` and ``r^0 = Q z^0``.

    With the default start ``alpha^0 = 0``; the general form keeps the multiplier equal to
    ``c L_-`` times the running sum of broadcasts for any start.
    """
    D, N = problem.D, problem.N
    x = np.zeros((D, N)) if x0 is None else np.array(x0, dtype=float).reshape(D, N)
    z = x.copy()
    zs = z.ravel().copy()
    ops = problem.operators
    alpha = (c * ops.L_minus @ zs).reshape(D, N)
    return NetworkState(k=0, x=x, alpha=alpha, z=z, e=np.zeros((D, N)), r=ops.Q @ zs, zsum=zs)


def _neighbor_sum(values: np.ndarray, nbrs: Sequence[int], own: np.ndarray, flagged_row) -> np.ndarray:
    s = np.zeros_like(own)
    for j in nbrs:
        s = s + (own if flagged_row is not None and flagged_row[j] else values[j])
    return s


def step(state: NetworkState, problem: Problem, config: AdmmConfig, error_model: ErrorModel | None = None,
         flagged: np.ndarray | None = None) -> NetworkState:
    """One synchronous round.

    ``flagged[i, j]`` (optional) makes agent ``i`` use its own value in place of neighbour ``j``'s
    broadcast, both in the x-update and in the multiplier update.
    """
    if error_model is None:
        error_model = none_model()
    t, c = problem.topology, config.c
    nbrs, deg = t.neighbors, t.degrees
    k1 = state.k + 1
    D, N = problem.D, problem.N
    x_new = np.zeros((D, N))
    for i in range(D):
        row = None if flagged is None else flagged[i]
        ns = _neighbor_sum(state.z, nbrs[i], state.x[i], row)
        try:
            x_new[i] = x_update_solve(problem.costs[i], int(deg[i]), c, state.alpha[i], ns, state.z[i],
                                      x0=state.x[i])
        except SolverDivergence as exc:
            raise SolverDivergence(f"agent {i}, iteration {k1}: {exc}", agent=i, iteration=k1) from exc
    e = sample_error(error_model, k1, x_new)
    z_new = x_new + e
    alpha_new = np.zeros_like(state.alpha)
    for i in range(D):
        row = None if flagged is None else flagged[i]
        ns = _neighbor_sum(z_new, nbrs[i], x_new[i], row)
        alpha_new[i] = state.alpha[i] + c * (deg[i] * z_new[i] - ns)
    zs = z_new.ravel()
    ops = problem.operators
    return NetworkState(k=k1, x=x_new, alpha=alpha_new, z=z_new, e=e, r=state.r + ops.Q @ zs,
                        zsum=state.zsum + zs, z_prev=state.z)


def verify_lemma1(state_next: NetworkState, state: NetworkState, history_sum: np.ndarray,
                  costs: Sequence[LocalCost], operators: ConsensusOperators, c: float) -> float:
    """Relative residual of the closed form of the x-update in terms of the broadcast history.

    ``history_sum`` is the sum of all broadcasts ``z^s`` for ``s <= k``.
    """
    x1 = state_next.x.ravel()
    Winv = 1.0 / np.diag(operators.W)
    g = stacked_gradient(costs, x1)
    res = (x1 + Winv * g / (2.0 * c) - 0.5 * Winv * (operators.L_plus @ state.z.ravel())
           + 0.5 * Winv * (operators.L_minus @ history_sum))
    return float(np.linalg.norm(res) / (np.linalg.norm(x1) + 1.0))


def verify_lemma2_4(state: NetworkState, operators: ConsensusOperators, c: float, r_star: np.ndarray,
                    x_star: np.ndarray, costs: Sequence[LocalCost]) -> float:
    """Relative residual of the optimality-gap identity linking consecutive broadcasts,
    the error, the auxiliary sequence and the gradient difference."""
    if state.z_prev is None:
        raise ValidationError("identity needs a state produced by at least one step")
    D = state.x.shape[0]
    xs = np.tile(np.ravel(x_star), D) if np.size(x_star) != state.x.size else np.ravel(x_star)
    terms = [
        0.5 * operators.L_plus @ (state.z.ravel() - state.z_prev.ravel()),
        -operators.W @ state.e.ravel(),
        operators.Q @ (state.r - r_star),
        (stacked_gradient(costs, state.x.ravel()) - stacked_gradient(costs, xs)) / (2.0 * c),
    ]
    total = sum(terms)
    return float(np.linalg.norm(total) / (1.0 + sum(np.linalg.norm(t) for t in terms)))


@dataclass
class Trace:
    """Recorded iterates and per-round diagnostics of one run."""

    c: float
    T: int
    record_every: int
    ks: list[int] = field(default_factory=list)
    x: list[np.ndarray] = field(default_factory=list)
    z: list[np.ndarray] = field(default_factory=list)
    e: list[np.ndarray] = field(default_factory=list)
    r: list[np.ndarray] = field(default_factory=list)
    f_gap: list[float] = field(default_factory=list)
    consensus_violation: list[float] = field(default_factory=list)
    g_dist: list[float] = field(default_factory=list)
    lemma1_residual: list[float] = field(default_factory=list)
    flags: list[int] = field(default_factory=list)
    flag_events: list[tuple[int, int, int, float, float]] = field(default_factory=list)
    deviation_stats: list[np.ndarray] = field(default_factory=list)
    r_star: np.ndarray | None = None
    final_state: NetworkState | None = None
    final_tracker: object | None = None
    algorithm: str = "admm"

    def __len__(self) -> int:
        return len(self.ks)

    @property
    def consecutive(self) -> bool:
        return self.record_every == 1

    def abs_gap(self) -> np.ndarray:
        return np.abs(np.asarray(self.f_gap))

    def plateau_mask(self) -> np.ndarray:
        ks = np.asarray(self.ks)
        if self.T == 0:
            return np.ones_like(ks, dtype=bool)
        width = max(1, int(round(PLATEAU_FRACTION * self.T)))
        return ks > self.T - width

    def plateau(self) -> float:
        """Median absolute objective gap over the last 20% of iterations."""
        return float(np.median(self.abs_gap()[self.plateau_mask()]))

    def iterations_to(self, tol: float) -> int | None:
        """First ``k`` from which the absolute gap stays below ``tol``; ``None`` if never."""
        gap = self.abs_gap()
        above = np.nonzero(gap >= tol)[0]
        if len(above) == 0:
            return self.ks[0]
        last = above[-1]
        return None if last + 1 >= len(gap) else self.ks[last + 1]

    def running_average_gap(self, problem: Problem) -> np.ndarray:
        """``f(x_hat_T) - f*`` with ``x_hat_T`` the average of ``x^1..x^T`` (entry 0 uses ``x^0``)."""
        out = [self.f_gap[0]]
        acc = np.zeros_like(self.x[0])
        for n, xk in enumerate(self.x[1:], start=1):
            acc = acc + xk
            out.append(problem.objective(acc / n) - problem.f_star)
        return np.asarray(out)

    def rows(self) -> list[tuple]:
        window = self.plateau_mask()
        return [(k, self.f_gap[n], self.consensus_violation[n], self.g_dist[n], self.lemma1_residual[n],
                 self.flags[n], int(window[n])) for n, k in enumerate(self.ks)]

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for row in self.rows():
            w.writerow([row[0]] + [_fmt(v) for v in row[1:5]] + [row[5], row[6]])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def flag_events_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("k", "i", "j", "statistic", "U"))
        for k, i, j, s, U in self.flag_events:
            w.writerow((k, i, j, _fmt(s), _fmt(U)))
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


class _Recorder:
    """Collects trace rows; shared by the plain and the robust loops."""

    def __init__(self, problem: Problem, config: AdmmConfig, callback: Callable | None, algorithm: str):
        from .theory import compute_r_star

        self.problem = problem
        self.config = config
        self.callback = callback
        ops = problem.operators
        self.metric = GMetric(config.c, ops.L_plus)
        self.xs = problem.x_star_stacked
        self.r_star = compute_r_star(ops, problem.gradient_at_star(), config.c)
        self.trace = Trace(c=config.c, T=config.T, record_every=config.record_every,
                           r_star=self.r_star, algorithm=algorithm)

    def record(self, state: NetworkState, identity_residual: float, n_flags: int = 0, stats: np.ndarray | None = None):
        tr, p = self.trace, self.problem
        tr.ks.append(state.k)
        tr.x.append(state.x.copy())
        tr.z.append(state.z.copy())
        tr.e.append(state.e.copy())
        tr.r.append(state.r.copy())
        tr.f_gap.append(p.objective(state.x) - p.f_star)
        tr.consensus_violation.append(float(np.linalg.norm(p.operators.Q @ state.x.ravel())))
        tr.g_dist.append(g_norm_sq(self.metric, state.r - self.r_star, state.z.ravel() - self.xs))
        tr.lemma1_residual.append(identity_residual)
        tr.flags.append(n_flags)
        if stats is not None:
            tr.deviation_stats.append(stats.copy())
        if self.callback is not None:
            self.callback(state)

    def due(self, k: int) -> bool:
        return k % self.config.record_every == 0 or k == self.config.T


def run(problem: Problem, config: AdmmConfig, error_model: ErrorModel | None = None,
        recorder: Callable[[NetworkState], None] | None = None, x0: np.ndarray | None = None) -> Trace:
    """Run ``config.T`` rounds and return the recorded trace (always including ``k = 0``)."""
    rec = _Recorder(problem, config, recorder, "admm")
    state = initial_state(problem, config.c, x0)
    rec.record(state, math.nan)
    worst = math.nan
    for _ in range(config.T):
        nxt = step(state, problem, config, error_model)
        if config.verify_identities:
            res = verify_lemma1(nxt, state, state.zsum, problem.costs, problem.operators, config.c)
            worst = res if math.isnan(worst) else max(worst, res)
        state = nxt
        if rec.due(state.k):
            rec.record(state, worst)
            worst = math.nan
    rec.trace.final_state = state
    return rec.trace
