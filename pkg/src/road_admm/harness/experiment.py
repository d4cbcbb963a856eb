"""Build instances from a configuration, run them and write the output files."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..costs import GlobalCostProfile, estimate_constants
from ..engine import AdmmConfig, Problem, Trace, run
from ..errors import Bounded, ErrorModel, Gaussian, LinearDecay, NoError, pick_unreliable
from ..operators import (Topology, build_topology, complete_topology, path_topology, random_connected_topology,
                         ring_topology, star_topology)
from ..road import run_road
from ..theory import (BoundReport, TheoryConstants, check_condition9, contraction_report, convex_report,
                      corollary1_monitor, consensus_report, optimal_params, road_threshold, theorem5_report)
from .config import ExperimentConfig
from .data import synth_regression, synth_svm

log = logging.getLogger(__name__)

IDENTITY_TOL = 1e-8


def make_topology(cfg: ExperimentConfig) -> Topology:
    D, N = cfg.agents, (3 if cfg.problem == "svm" else cfg.dim)
    if cfg.topology == "random":
        return random_connected_topology(D, N, cfg.edge_prob, cfg.topology_seed)
    if cfg.topology == "path":
        return path_topology(D, N)
    if cfg.topology == "ring":
        return ring_topology(D, N)
    if cfg.topology == "complete":
        return complete_topology(D, N)
    if cfg.topology == "star":
        return star_topology(D, N)
    return build_topology(D, N, cfg.edges)


def make_error_model(cfg: ExperimentConfig, topology: Topology) -> ErrorModel:
    if cfg.unreliable == 0 or cfg.errors == "none":
        return ErrorModel()
    bad = pick_unreliable(cfg.agents, cfg.unreliable, cfg.error_seed, topology)
    kind = {
        "gaussian": lambda: Gaussian(cfg.mu_b, cfg.sigma_b),
        "bounded": lambda: Bounded(cfg.e_cap),
        "linear_decay": lambda: LinearDecay(cfg.e0, cfg.rate),
    }.get(cfg.errors, NoError)()
    return ErrorModel(unreliable_set=bad, kind=kind, rng_seed=cfg.error_seed)


@dataclass
class Instance:
    problem: Problem
    profile: GlobalCostProfile
    constants: TheoryConstants | None
    c: float


def build_instance(cfg: ExperimentConfig) -> Instance:
    cfg.validate()
    topology = make_topology(cfg)
    if cfg.problem == "regression":
        data = synth_regression(cfg.seed, cfg.agents, cfg.dim)
        costs = data.costs()
        H, _ = data.normal_equations()
        log.info("normal-equations condition number %.3g", np.linalg.cond(H))
    else:
        costs = synth_svm(cfg.seed, D=cfg.agents).costs(cfg.svm_reg, cfg.svm_smoothing)
    problem = Problem.build(topology, costs)
    profile = estimate_constants(costs, problem.operators, problem.x_star)
    constants = None
    if profile.v > 0:
        constants = optimal_params(problem.operators.spectra, profile.v, profile.L, strict=False)
    c = constants.c_opt if cfg.c_is_opt else float(cfg.c)
    if constants is not None:
        constants.U = road_threshold(problem.operators.spectra, profile.V1, profile.V2, c)
    return Instance(problem, profile, constants, c)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    instance: Instance
    error_model: ErrorModel
    trace: Trace
    U: float | None
    reports: dict[str, BoundReport] = field(default_factory=dict)
    identity_max: float = math.nan

    @property
    def violated(self) -> list[str]:
        bad = [name for name, r in self.reports.items() if r.violated]
        if self.identity_max > IDENTITY_TOL:
            bad.append("closed_form_identity")
        return bad


def applicable_reports(result_trace: Trace, inst: Instance, error_model: ErrorModel, algo: str,
                       U: float | None) -> dict[str, BoundReport]:
    """Every bound whose hypotheses the run satisfies."""
    p, c = inst.problem, inst.c
    reports: dict[str, BoundReport] = {}
    if not result_trace.consecutive or len(result_trace) < 2:
        return reports
    substituted = algo == "road" and any(result_trace.flags)
    if not substituted:
        reports.update(convex_report(result_trace, p.operators, c, p.x_star))
    if algo == "road" and U is not None:
        reports["robust_average"] = theorem5_report(result_trace, p, U)
    if error_model.is_error_free and not substituted:
        reports["consensus"] = consensus_report(result_trace, p.operators, inst.profile.V1, inst.profile.V2, c)
    K = inst.constants
    if K is not None and K.feasible and math.isclose(c, K.c_opt) and not substituted:
        reports.update(contraction_report(result_trace, K, result_trace.r_star, p.x_star, p.operators))
        cor = corollary1_monitor(result_trace, K, result_trace.r_star, p.x_star, error_model)
        reports.update({f"schedule_{k}": r for k, r in cor.reports.items()})
    return reports


def run_experiment(cfg: ExperimentConfig, check_bounds: bool = True) -> ExperimentResult:
    inst = build_instance(cfg)
    p = inst.problem
    error_model = make_error_model(cfg, p.topology)
    acfg = AdmmConfig(c=inst.c, T=cfg.T, record_every=cfg.record_every)
    U = road_threshold(p.operators.spectra, inst.profile.V1, inst.profile.V2, inst.c)
    if cfg.algo == "road":
        trace = run_road(p, acfg, error_model, U)
    else:
        trace = run(p, acfg, error_model)
    res = [v for v in trace.lemma1_residual if not math.isnan(v)]
    result = ExperimentResult(cfg, inst, error_model, trace, U, identity_max=max(res) if res else 0.0)
    if check_bounds:
        result.reports = applicable_reports(trace, inst, error_model, cfg.algo, U)
    return result


def _fmt(v) -> str:
    return format(float(v), ".17g")


def reports_csv(reports: dict[str, BoundReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("bound", "k", "bound_value", "measured", "slack", "violated"))
    for name in sorted(reports):
        r = reports[name]
        for k, b, m, s, bad in zip(r.ks, r.bound, r.measured, r.slack, r.violations):
            w.writerow((name, int(k), _fmt(b), _fmt(m), _fmt(s), int(bad)))
    return buf.getvalue()


def plot_data_csv(result: ExperimentResult) -> str:
    tr = result.trace
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("series", "k", "value"))
    series = {
        "f_gap": tr.f_gap,
        "running_average_gap": tr.running_average_gap(result.instance.problem),
        "consensus_violation": tr.consensus_violation,
        "g_dist": tr.g_dist,
        "flags": tr.flags,
    }
    for name, values in series.items():
        for k, v in zip(tr.ks, values):
            w.writerow((name, k, _fmt(v)))
    return buf.getvalue()


def constants_json(inst: Instance, U: float | None = None) -> str:
    ops = inst.problem.operators
    out = {
        "c": inst.c,
        "profile": {"v": inst.profile.v, "L": inst.profile.L, "V1": inst.profile.V1, "V2": inst.profile.V2},
        "spectra": {k: list(map(float, v)) for k, v in ops.spectra.items()},
        "U": U,
        "edges": inst.problem.topology.E,
        "x_star": inst.problem.x_star.tolist(),
        "f_star": inst.problem.f_star,
        "theory": None if inst.constants is None else inst.constants.to_dict(),
    }
    if inst.constants is not None:
        out["network_condition_holds"] = check_condition9(ops.spectra, inst.profile.v, inst.profile.L,
                                                        inst.constants.lambda2)
    return json.dumps(out, indent=2, sort_keys=True, default=float) + "\n"


def write_outputs(result: ExperimentResult, outdir: str | Path, stem: str | None = None) -> dict[str, Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    stem = stem or f"{result.config.problem}_{result.config.algo}"
    paths = {
        "trace": outdir / f"{stem}_trace.csv",
        "constants": outdir / f"{stem}_constants.json",
        "bounds": outdir / f"{stem}_bounds.csv",
        "plot": outdir / f"{stem}_plot_data.csv",
    }
    result.trace.to_csv(paths["trace"])
    paths["constants"].write_text(constants_json(result.instance, result.U))
    paths["bounds"].write_text(reports_csv(result.reports))
    paths["plot"].write_text(plot_data_csv(result))
    if result.trace.algorithm == "road":
        paths["flags"] = outdir / f"{stem}_flags.csv"
        result.trace.flag_events_csv(paths["flags"])
    return paths
