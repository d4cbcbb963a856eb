"""Command-line entry point.

Exit codes: 0 success, 2 invalid input, 3 a checked bound was violated (``verify`` only),
1 any other failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..exceptions import RoadAdmmError, ValidationError
from ..theory import check_condition9, network_condition_rhs, network_condition_cap, spectral_ratio
from .config import ALGORITHMS, ERROR_KINDS, TOPOLOGIES, ExperimentConfig
from .experiment import build_instance, constants_json, run_experiment, write_outputs
from .sweep import sweep, sweep_csv

log = logging.getLogger("road_admm")

EXIT_OK, EXIT_FAIL, EXIT_INVALID, EXIT_VIOLATION = 0, 1, 2, 3


def _parse_edges(text: str) -> list[list[int]]:
    try:
        return [[int(a), int(b)] for a, b in (pair.split("-") for pair in text.split(",") if pair)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"edges must look like '0-1,1-2', got {text!r}") from None


def _penalty(text: str):
    if text.lower() == "opt":
        return "opt"
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"c must be a number or 'opt', got {text!r}") from None


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON file with ExperimentConfig keys; flags override it")
    p.add_argument("--agents", type=int, dest="agents")
    p.add_argument("--dim", type=int, help="local dimension (regression only)")
    p.add_argument("--topology", choices=TOPOLOGIES)
    p.add_argument("--edge-prob", type=float, dest="edge_prob")
    p.add_argument("--topology-seed", type=int, dest="topology_seed")
    p.add_argument("--edges", type=_parse_edges, help="explicit edges, e.g. 0-1,1-2 (with --topology edges)")
    p.add_argument("--seed", type=int, help="dataset seed")
    p.add_argument("--c", type=_penalty, help="penalty parameter or 'opt'")
    p.add_argument("--T", type=int, help="number of iterations")
    p.add_argument("--algo", choices=ALGORITHMS)
    p.add_argument("--errors", choices=ERROR_KINDS)
    p.add_argument("--unreliable", type=int)
    p.add_argument("--mu-b", type=float, dest="mu_b")
    p.add_argument("--sigma-b", type=float, dest="sigma_b")
    p.add_argument("--e-cap", type=float, dest="e_cap")
    p.add_argument("--e0", type=float)
    p.add_argument("--rate", type=float, help="decay rate R of linear_decay errors")
    p.add_argument("--error-seed", type=int, dest="error_seed")
    p.add_argument("--svm-reg", type=float, dest="svm_reg")
    p.add_argument("--svm-smoothing", type=float, dest="svm_smoothing")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")


CONFIG_KEYS = ("agents", "dim", "topology", "edge_prob", "topology_seed", "edges", "seed", "c", "T", "algo",
               "errors", "unreliable", "mu_b", "sigma_b", "e_cap", "e0", "rate", "error_seed", "svm_reg",
               "svm_smoothing")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="road-admm", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in [("regression", "decentralized least-squares regression"),
                           ("svm", "decentralized smoothed-hinge classification"),
                           ("verify", "run an experiment and fail with exit code 3 on any bound violation"),
                           ("theory", "print convergence constants and the network-condition verdict"),
                           ("sweep", "grid over algorithm, penalty and noise intensity")]:
        p = sub.add_parser(name, help=helptext)
        _common(p)
        if name in ("verify", "theory", "sweep"):
            p.add_argument("--problem", choices=("regression", "svm"), default="regression")
        if name == "sweep":
            p.add_argument("--algos", default="admm,road")
            p.add_argument("--cs", default="opt", help="comma-separated penalties, 'opt' allowed")
            p.add_argument("--mu-bs", default="0,0.5,1", dest="mu_bs")
    return parser


def config_from_args(args, problem: str) -> ExperimentConfig:
    overrides = {k: getattr(args, k) for k in CONFIG_KEYS if getattr(args, k, None) is not None}
    overrides["problem"] = problem
    if args.config is not None:
        return ExperimentConfig.from_json(args.config, overrides).validate()
    return ExperimentConfig.from_dict(overrides).validate()


def _cmd_run(args, problem: str, strict: bool) -> int:
    cfg = config_from_args(args, problem)
    result = run_experiment(cfg)
    paths = write_outputs(result, args.out)
    tr = result.trace
    print(f"{cfg.problem}/{cfg.algo}: c={result.instance.c:.6g} T={cfg.T} final gap={tr.f_gap[-1]:.6g} "
          f"plateau={tr.plateau():.6g} flagged arcs={tr.flags[-1]}")
    for name in sorted(result.reports):
        r = result.reports[name]
        print(f"  {name:<24} min slack {r.min_slack: .3e}  {'VIOLATED' if r.violated else 'ok'}")
    print(f"  closed-form identity max residual {result.identity_max:.3e}")
    print("wrote " + ", ".join(str(p) for p in paths.values()))
    if strict and result.violated:
        print("violated: " + ", ".join(result.violated), file=sys.stderr)
        return EXIT_VIOLATION
    return EXIT_OK


def _cmd_theory(args) -> int:
    cfg = config_from_args(args, args.problem)
    inst = build_instance(cfg)
    spectra = inst.problem.operators.spectra
    prof = inst.profile
    print(f"agents={inst.problem.D} edges={inst.problem.topology.E} v={prof.v:.6g} L={prof.L:.6g} "
          f"V1={prof.V1:.6g} V2={prof.V2:.6g}")
    for name, (lo, hi) in spectra.items():
        print(f"  {name:<8} sigma_min={lo:.6g} sigma_max={hi:.6g}")
    K = inst.constants
    if K is None:
        print("cost is not strongly convex: linear-rate constants are undefined")
    else:
        ratio = spectral_ratio(spectra)
        rhs = network_condition_rhs(spectra, prof.v, prof.L, K.lambda2)
        verdict = check_condition9(spectra, prof.v, prof.L, K.lambda2)
        print(f"network condition: ratio {ratio:.6g} vs required {rhs:.6g} -> {'holds' if verdict else 'fails'}")
        print(f"claimed uniform bound on the requirement: {network_condition_cap(prof.v, prof.L):.6g}")
        for key, val in K.to_dict().items():
            if key != "spectra":
                print(f"  {key:<11} {val}")
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / f"{cfg.problem}_theory_constants.json"
    path.write_text(constants_json(inst, K.U if K is not None else None))
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = config_from_args(args, args.problem)
    algos = [a for a in args.algos.split(",") if a]
    cs = [_penalty(c) for c in args.cs.split(",") if c]
    mus = [float(m) for m in args.mu_bs.split(",") if m]
    if not (algos and cs and mus):
        raise ValidationError("sweep grid is empty")
    bad = set(algos) - set(ALGORITHMS)
    if bad:
        raise ValidationError(f"unknown algorithms {sorted(bad)}")
    text = sweep_csv(sweep(cfg, algos, cs, mus))
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / f"{cfg.problem}_sweep.csv"
    path.write_text(text)
    sys.stdout.write(text)
    print(f"wrote {path}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command in ("regression", "svm"):
            return _cmd_run(args, args.command, strict=False)
        if args.command == "verify":
            return _cmd_run(args, args.problem, strict=True)
        if args.command == "theory":
            return _cmd_theory(args)
        return _cmd_sweep(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except RoadAdmmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


cli_main = main

if __name__ == "__main__":
    sys.exit(main())
