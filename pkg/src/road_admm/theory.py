"""Convergence constants, feasibility conditions and trace-level bound checks.

``spectra`` arguments are the dictionaries produced by :func:`road_admm.operators.build_operators`:
raw ``(smallest nonzero, largest)`` eigenvalues of ``W``, ``L_plus``, ``L_minus`` and ``Q``.
Every formula squares them exactly where the corresponding bound does, and nowhere else.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .exceptions import ConditionInfeasible, DomainError, InconsistentSystem, MissingFields, ValidationError

Spectra = Mapping[str, Sequence[float]]

DEFAULT_B = 0.1
DEFAULT_LAMBDA4 = 2.0
LAMBDA2_GRID = tuple(np.geomspace(1.01, 100.0, 100))
B_GRID = tuple(np.round(np.arange(0.05, 0.901, 0.05), 2))
REPORT_RTOL = 1e-7
REPORT_ATOL = 1e-12


def _sq(spectra: Spectra) -> dict[str, float]:
    return {
        "a": spectra["L_plus"][0] ** 2,  # sigma_min^2(L_plus)
        "m": spectra["L_plus"][1] ** 2,  # sigma_max^2(L_plus)
        "q": spectra["Q"][0] ** 2,  # sigma_min^2(Q)
        "w": spectra["W"][1] ** 2,  # sigma_max^2(W)
    }


def _check_lambdas(**lams: float) -> None:
    for name, val in lams.items():
        if not val > 1.0:
            raise DomainError(f"{name} must exceed 1, got {val}")


def delta_branches(l1: float, l2: float, l3: float, c: float, v: float, L: float,
                   spectra: Spectra) -> tuple[float, float]:
    """The two arguments of the minimum defining the general contraction parameter."""
    _check_lambdas(lambda1=l1, lambda2=l2, lambda3=l3)
    if not (c > 0 and v > 0 and L > 0):
        raise DomainError(f"c, v and L must be positive, got c={c}, v={v}, L={L}")
    s = _sq(spectra)
    first = (l1 - 1) * (l2 - 1) * s["q"] * s["a"] / (l1 * l2 * s["m"])
    second = 4 * v * (l2 - 1) * (l3 - 1) * s["q"] / (
        l1 * l2 * (l3 - 1) * L ** 2 + c ** 2 * l3 * (l2 - 1) * s["m"] * s["q"])
    return first, second


def delta_general(l1: float, l2: float, l3: float, c: float, v: float, L: float, spectra: Spectra) -> float:
    return min(delta_branches(l1, l2, l3, c, v, L, spectra))


def tuned_delta(l2: float, v: float, L: float, spectra: Spectra) -> float:
    _check_lambdas(lambda2=l2)
    s = _sq(spectra)
    return (l2 - 1) / l2 * 2 * v * s["q"] * s["a"] / (L ** 2 * s["a"] + 2 * v * s["m"])


def optimal_lambda1(v: float, L: float, spectra: Spectra) -> float:
    s = _sq(spectra)
    return 1 + 2 * v * s["m"] / (L ** 2 * s["a"])


def optimal_lambda3(beta: float, l1: float, v: float, L: float, spectra: Spectra) -> float:
    s = _sq(spectra)
    return 1 + math.sqrt((L ** 2 * s["a"] + 2 * v * s["m"]) / (beta * l1 * L ** 2 * v * s["a"]))


def optimal_c(l1: float, l2: float, l3: float, L: float, spectra: Spectra) -> float:
    s = _sq(spectra)
    return math.sqrt(l1 * l2 * (l3 - 1) * L ** 2 / (l3 * (l2 - 1) * s["m"] * s["q"]))


def beta_caps(b: float, delta: float, l4: float, spectra: Spectra) -> tuple[float, float]:
    """The two admissible upper limits on ``beta``."""
    s = _sq(spectra)
    t = 1 - 1 / l4
    cap1 = b * (1 + delta) * s["a"] * t / (4 * b * s["a"] * t + 16 * s["w"])
    cap2 = ((1 - b) * (1 + delta) * s["a"] - s["m"]) / (4 * s["m"] + 4 * (1 - b) * s["a"])
    return cap1, cap2


def penalty_P(c: float, delta: float, l2: float, l3: float, spectra: Spectra) -> float:
    s = _sq(spectra)
    return c ** 2 * delta * l2 * s["w"] / s["q"] + c ** 2 * delta * l3 * s["m"] / 4


def assemble_BC(beta: float, b: float, delta: float, l4: float, P: float, c: float,
                spectra: Spectra) -> dict[str, float]:
    s = _sq(spectra)
    denom = (1 - b) * (1 + delta - 4 * beta) * s["a"]
    return {
        "B": (1 + 4 * beta) * s["m"] / denom,
        "C": (4 * P + 2 / beta) / (c ** 2 * denom) + b * (l4 - 1) / (1 - b),
        "A1": 4 / ((1 - b) * s["a"]),
        "A2": 4 / ((1 + 4 * beta) * s["m"]),
    }


def rate_condition(b: float, delta: float, spectra: Spectra) -> bool:
    s = _sq(spectra)
    return (1 - b) * (1 + delta) * s["a"] > s["m"]


def network_condition_rhs(spectra: Spectra, v: float, L: float, l2: float) -> float:
    _check_lambdas(lambda2=l2)
    sq = (l2 - 1) / l2 * _sq(spectra)["q"]
    return 4 * v / (math.sqrt((L ** 2 + 2 * v) ** 2 + 16 * v ** 2 * sq) - L ** 2 + 2 * v)


def spectral_ratio(spectra: Spectra) -> float:
    s = _sq(spectra)
    return s["a"] / s["m"]


def check_condition9(spectra: Spectra, v: float, L: float, l2: float) -> bool:
    return spectral_ratio(spectra) > network_condition_rhs(spectra, v, L, l2)


def network_condition_cap(v: float, L: float) -> float:
    """Claimed uniform upper bound on the right-hand side of the network condition."""
    return 4 * v / ((math.sqrt(2) - 1) * L ** 2 + (2 * math.sqrt(2) + 2) * v)


def road_threshold(spectra: Spectra, V1: float, V2: float, c: float) -> float:
    if not (V1 > 0 and V2 > 0 and c > 0):
        raise DomainError(f"V1, V2 and c must be positive, got {V1}, {V2}, {c}")
    return (spectra["L_plus"][1] * V1 ** 2 + 2 * V2 ** 2 / (spectra["L_minus"][0] * c ** 2) + 4) / (2 * math.sqrt(2))


def consensus_bound(spectra: Spectra, V1: float, V2: float, c: float, T: int) -> float:
    return (spectra["L_plus"][1] * V1 ** 2 + 2 * V2 ** 2 / (spectra["L_minus"][0] * c ** 2) + 4) / (4 * T)


@dataclass
class TheoryConstants:
    lambda1: float
    lambda2: float
    lambda3: float
    lambda4: float
    b: float
    beta: float
    delta: float
    P: float
    A1: float
    A2: float
    B: float
    C: float
    c_opt: float
    cap1: float
    cap2: float
    feasible: bool
    rate_condition: bool
    network_condition: bool
    A: float | None = None
    U: float | None = None
    v: float | None = None
    L: float | None = None
    spectra: dict = field(default_factory=dict)

    @property
    def c(self) -> float:
        return self.c_opt

    def to_dict(self) -> dict:
        d = asdict(self)
        d["spectra"] = {k: list(map(float, val)) for k, val in self.spectra.items()}
        return d


def _assemble(l2: float, b: float, l4: float, v: float, L: float, spectra: Spectra,
              beta: float | None = None) -> dict:
    delta = tuned_delta(l2, v, L, spectra)
    l1 = optimal_lambda1(v, L, spectra)
    cap1, cap2 = beta_caps(b, delta, l4, spectra)
    if beta is None:
        beta = min(cap1, cap2) if cap2 > 0 else cap1
    l3 = optimal_lambda3(beta, l1, v, L, spectra)
    c = optimal_c(l1, l2, l3, L, spectra)
    P = penalty_P(c, delta, l2, l3, spectra)
    out = dict(lambda1=l1, lambda2=l2, lambda3=l3, lambda4=l4, b=b, beta=beta, delta=delta, P=P,
               c_opt=c, cap1=cap1, cap2=cap2, rate_condition=rate_condition(b, delta, spectra))
    out.update(assemble_BC(beta, b, delta, l4, P, c, spectra))
    return out


def optimal_params(spectra: Spectra, v: float, L: float, b: float = DEFAULT_B, lambda4: float = DEFAULT_LAMBDA4,
                   lambda2_grid: Sequence[float] = LAMBDA2_GRID, strict: bool = True,
                   scan_b: bool = True) -> TheoryConstants:
    """Parameter choice giving the linear rate ``B``.

    ``lambda2`` is taken from the grid to maximise the contraction parameter among values
    satisfying the network condition at the given ``b``; if none does, ``b`` is scanned and the
    feasible pair with the smallest ``B`` wins. Without any feasible pair, ``strict`` raises
    :class:`ConditionInfeasible`; otherwise constants are still assembled at ``b`` and the
    largest grid ``lambda2`` with ``feasible=False`` (``c_opt`` remains usable as a penalty).
    """
    if not 0 < b < 1:
        raise DomainError(f"b must lie in (0, 1), got {b}")
    _check_lambdas(lambda4=lambda4)
    if not (v > 0 and L > 0):
        raise DomainError(f"v and L must be positive, got v={v}, L={L}")
    grid = sorted(float(l) for l in lambda2_grid)
    network_ok = any(check_condition9(spectra, v, L, l2) for l2 in grid)

    def best_for(bb):
        feas = [l2 for l2 in grid if rate_condition(bb, tuned_delta(l2, v, L, spectra), spectra)]
        if not feas:
            return None
        # the contraction parameter grows with lambda2, so the largest feasible value maximises it
        cand = _assemble(max(feas), bb, lambda4, v, L, spectra)
        return cand if cand["beta"] > 0 and cand["cap2"] > 0 else None

    chosen = best_for(b)
    if chosen is None and scan_b:
        cands = [c for c in (best_for(bb) for bb in B_GRID) if c is not None]
        if cands:
            chosen = min(cands, key=lambda c: c["B"])
    if chosen is None and network_ok:
        l2 = grid[-1]
        delta = tuned_delta(l2, v, L, spectra)
        s = _sq(spectra)
        b_max = 1 - s["m"] / ((1 + delta) * s["a"])
        if b_max > 0:
            chosen = _assemble(l2, 0.5 * b_max, lambda4, v, L, spectra)
    feasible = chosen is not None
    if not feasible:
        if strict:
            raise ConditionInfeasible(
                f"spectral ratio {spectral_ratio(spectra):.4g} is below the required "
                f"{min(network_condition_rhs(spectra, v, L, l2) for l2 in grid):.4g} for every lambda2 on the grid")
        chosen = _assemble(grid[-1], b, lambda4, v, L, spectra)
    return TheoryConstants(feasible=feasible, network_condition=network_ok, v=v, L=L,
                           spectra={k: tuple(val) for k, val in spectra.items()}, **chosen)


def compute_r_star(operators, grad_at_xstar: np.ndarray, c: float, tol: float = 1e-8) -> np.ndarray:
    """Minimum-norm ``r*`` with ``Q r* = -(1/2c) grad f(x*)``."""
    g = np.ravel(grad_at_xstar).astype(float)
    D, N = operators.topology.D, operators.topology.N
    consensus = g.reshape(D, N).sum(axis=0)
    if np.linalg.norm(consensus) > tol * max(1.0, np.linalg.norm(g)):
        raise InconsistentSystem(
            f"gradient has a consensus component of norm {np.linalg.norm(consensus):.3e}")
    return -operators.Q_pinv @ g / (2.0 * c)


@dataclass
class BoundReport:
    """Per-iteration ``slack = bound - measured`` for one inequality."""

    name: str
    ks: np.ndarray
    bound: np.ndarray
    measured: np.ndarray
    rtol: float = REPORT_RTOL
    atol: float = REPORT_ATOL

    @property
    def slack(self) -> np.ndarray:
        return self.bound - self.measured

    @property
    def tolerance(self) -> np.ndarray:
        scale = np.maximum(np.abs(self.bound), np.abs(self.measured))
        return self.rtol * scale + self.atol

    @property
    def relative_slack(self) -> np.ndarray:
        scale = np.maximum(np.abs(self.bound), np.abs(self.measured))
        return self.slack / np.maximum(scale, self.atol)

    @property
    def min_slack(self) -> float:
        return float(np.min(self.slack)) if len(self.ks) else math.inf

    @property
    def min_relative_slack(self) -> float:
        return float(np.min(self.relative_slack)) if len(self.ks) else math.inf

    @property
    def violations(self) -> np.ndarray:
        return self.slack < -self.tolerance

    @property
    def violated(self) -> bool:
        return bool(np.any(self.violations))

    @property
    def first_violation(self) -> int | None:
        idx = np.nonzero(self.violations)[0]
        return int(self.ks[idx[0]]) if len(idx) else None

    def summary(self) -> dict:
        return {"name": self.name, "checked": int(len(self.ks)), "min_slack": self.min_slack,
                "min_relative_slack": self.min_relative_slack, "violated": self.violated,
                "first_violation": self.first_violation}


def _report(name, ks, bound, measured) -> BoundReport:
    return BoundReport(name, np.asarray(ks, dtype=int), np.asarray(bound, dtype=float),
                       np.asarray(measured, dtype=float))


def _require_consecutive(trace, need_errors=True):
    if not trace.ks or not trace.consecutive:
        raise MissingFields("bound checks need every iteration recorded (record_every=1)")
    if not (trace.z and trace.r and trace.x) or (need_errors and not trace.e):
        raise MissingFields("trace lacks x, z, r or e records")


def _g(c, L_plus, r, x):
    return float(c * (r @ r) + 0.5 * c * (x @ (L_plus @ x)))


def linear_initial_term(trace, constants: TheoryConstants, r_star, x_star, variant: str = "A2") -> float:
    D = trace.z[0].shape[0]
    xs = np.tile(np.ravel(x_star), D)
    dz = trace.z[0].ravel() - xs
    dr = trace.r[0] - r_star
    return float(dz @ dz + getattr(constants, variant) * (dr @ dr))


def contraction_report(trace, constants: TheoryConstants, r_star, x_star, operators) -> dict[str, BoundReport]:
    """Single-step G-norm inequality and the accumulated linear bound on ``||z^k - z*||^2``.

    The accumulated bound is checked with both ``A1`` and ``A2`` weighting the initial
    auxiliary-sequence distance.
    """
    _require_consecutive(trace)
    if not math.isclose(trace.c, constants.c_opt, rel_tol=1e-12):
        raise ValidationError(f"trace ran with c={trace.c} but the constants assume c={constants.c_opt}")
    c = trace.c
    Lp, Q, W = operators.L_plus, operators.Q, operators.W
    D = trace.z[0].shape[0]
    xs = np.tile(np.ravel(x_star), D)
    dl, P = constants.delta, constants.P
    ks, b2, m2 = [], [], []
    for n in range(1, len(trace.ks)):
        z1, z0 = trace.z[n].ravel(), trace.z[n - 1].ravel()
        e = trace.e[n].ravel()
        x1, r1, r0 = trace.x[n].ravel(), trace.r[n], trace.r[n - 1]
        s = c * Lp @ (z1 - z0) + 2 * c * Q @ (r1 - r_star) + 2 * c * W @ (x1 - xs)
        prev = _g(c, Lp, r0 - r_star, z0 - xs)
        ks.append(trace.ks[n])
        b2.append((prev + P * (e @ e) + e @ s) / (1 + dl))
        m2.append(_g(c, Lp, r1 - r_star, z1 - xs))
    out = {"single_step": _report("single_step", ks, b2, m2)}
    zd = [float(np.sum((z.ravel() - xs) ** 2)) for z in trace.z]
    esq = [float(np.sum(e ** 2)) for e in trace.e]
    for variant in ("A2", "A1"):
        acc = linear_initial_term(trace, constants, r_star, x_star, variant)
        bounds = [acc]
        for n in range(1, len(trace.ks)):
            acc = constants.B * acc + constants.C * esq[n]
            bounds.append(acc)
        out[f"linear_{variant}"] = _report(f"linear_{variant}", trace.ks, bounds, zd)
    return out


def contraction_factors(trace, floor: float = 1e-12) -> np.ndarray:
    """Ratios of consecutive G-distances, skipping steps whose start is below ``floor`` times the initial one."""
    g = np.asarray(trace.g_dist)
    ref = g[0] if g[0] > 0 else g.max()
    keep = g[:-1] > floor * ref
    return g[1:][keep] / g[:-1][keep]


def convex_report(trace, operators, c: float, x_star) -> dict[str, BoundReport]:
    """Last-iterate and averaged objective bounds measured against ``p = (0, x*)``."""
    _require_consecutive(trace)
    if not math.isclose(trace.c, c, rel_tol=1e-12):
        raise ValidationError(f"trace ran with c={trace.c}, checker given c={c}")
    Lp, Q = operators.L_plus, operators.Q
    D = trace.x[0].shape[0]
    xs = np.tile(np.ravel(x_star), D)
    m = operators.spectra["L_plus"][1] ** 2
    lmin = operators.spectra["L_minus"][0]
    p0 = _g(c, Lp, trace.r[0], trace.x[0].ravel() - xs)
    ks, b5, b6, m6 = [], [], [], []
    gap_sum, err_sum = 0.0, 0.0
    for n in range(1, len(trace.ks)):
        T = trace.ks[n]
        e = trace.e[n].ravel()
        gap_sum += trace.f_gap[n]
        err_sum += m / (2 * lmin) * (e @ e) + e @ (2 * Q @ trace.r[n])
        ks.append(T)
        b5.append(_g(c, Lp, trace.r[n - 1], trace.z[n - 1].ravel() - xs))
        b6.append(p0 / T + c / T * err_sum)
        m6.append(gap_sum / T)
    return {"last_iterate": _report("last_iterate", ks, b5, trace.f_gap[1:]),
            "averaged": _report("averaged", ks, b6, m6)}


def p0_distance(trace, operators, c: float, x_star) -> float:
    D = trace.x[0].shape[0]
    xs = np.tile(np.ravel(x_star), D)
    return _g(c, operators.L_plus, trace.r[0], trace.x[0].ravel() - xs)


def consensus_report(trace, operators, V1: float, V2: float, c: float) -> BoundReport:
    """Average consensus violation against its error-free bound."""
    _require_consecutive(trace, need_errors=False)
    cv = np.asarray(trace.consensus_violation)
    ks = np.asarray(trace.ks[1:])
    lhs = np.cumsum(cv[1:]) / ks
    rhs = np.array([consensus_bound(operators.spectra, V1, V2, c, T) for T in ks])
    return _report("consensus", ks, rhs, lhs)


def theorem5_report(trace, problem, U: float, E: int | None = None) -> BoundReport:
    """Running-average objective gap of a robust run against its ``O(1/T)`` bound."""
    _require_consecutive(trace, need_errors=False)
    ops = problem.operators
    E = problem.topology.E if E is None else E
    c = trace.c
    m = ops.spectra["L_plus"][1] ** 2
    lmin2 = ops.spectra["L_minus"][0] ** 2
    p0 = p0_distance(trace, ops, c, problem.x_star)
    extra = 8 * c * m / lmin2 * E ** 2 * U ** 2
    avg_gap = trace.running_average_gap(problem)[1:]
    ks = np.asarray(trace.ks[1:])
    return _report("robust_average", ks, (p0 + extra) / ks, avg_gap)


@dataclass
class ScheduleResult:
    satisfied: list[str]
    reports: dict[str, BoundReport]
    radius: float | None = None

    @property
    def violated(self) -> bool:
        return any(r.violated for r in self.reports.values())


def corollary1_monitor(trace, constants: TheoryConstants, r_star, x_star, error_model=None) -> ScheduleResult:
    """Classify the error schedule against the three exactness/neighbourhood conditions and
    check the conclusion of each satisfied one on ``||z^k - z*||^2``."""
    from .errors import Bounded, LinearDecay, NoError

    _require_consecutive(trace)
    B, C = constants.B, constants.C
    D = trace.z[0].shape[0]
    xs = np.tile(np.ravel(x_star), D)
    zd = np.array([float(np.sum((z.ravel() - xs) ** 2)) for z in trace.z])
    esq = np.array([float(np.sum(e ** 2)) for e in trace.e])
    rd = np.array([float(np.sum((r - r_star) ** 2)) for r in trace.r])
    ks = np.asarray(trace.ks)
    Bk = B ** ks.astype(float)
    kind = None if error_model is None or error_model.is_error_free else error_model.kind
    error_free = kind is None and not np.any(esq)
    satisfied: list[str] = []
    reports: dict[str, BoundReport] = {}
    radius = None

    if error_free or isinstance(kind, (NoError, Bounded)):
        e_cap = 0.0 if error_free or isinstance(kind, NoError) else kind.e_cap
        satisfied.append("bounded")
        radius = C * e_cap / (1 - B) if B < 1 else math.inf
        for variant in ("A2", "A1"):
            A = linear_initial_term(trace, constants, r_star, x_star, variant)
            geo = (1 - Bk) / (1 - B) if B != 1 else ks.astype(float)
            reports[f"bounded_{variant}"] = _report(f"bounded_{variant}", ks, Bk * A + C * e_cap * geo, zd)
    if error_free or (isinstance(kind, LinearDecay) and 0 < kind.R < B):
        satisfied.append("linear_decay")
        term = 0.0 if error_free else C * kind.e0 * kind.R / (B - kind.R)
        for variant in ("A2", "A1"):
            A = linear_initial_term(trace, constants, r_star, x_star, variant)
            reports[f"linear_decay_{variant}"] = _report(f"linear_decay_{variant}", ks, Bk * (A + term), zd)
    cap_ok = bool(np.all(C * esq[1:] <= B * (constants.A1 - constants.A2) * rd[:-1]))
    if error_free or cap_ok:
        satisfied.append("per_step_cap")
        A = linear_initial_term(trace, constants, r_star, x_star, "A1")
        reports["per_step_cap"] = _report("per_step_cap", ks, Bk * A, zd)
    return ScheduleResult(satisfied, reports, radius)
