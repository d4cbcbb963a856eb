"""Seeded synthetic datasets for the regression and classification experiments."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..costs import LeastSquaresCost, SmoothedHingeSvmCost
from ..exceptions import ValidationError


@dataclass(frozen=True)
class RegressionInstance:
    B: np.ndarray  # (D, N, N) measurement matrices
    y: np.ndarray  # (D, N) noisy measurements
    x_true: np.ndarray

    def costs(self) -> list[LeastSquaresCost]:
        return [LeastSquaresCost(B, y) for B, y in zip(self.B, self.y)]

    def normal_equations(self) -> tuple[np.ndarray, np.ndarray]:
        H = np.einsum("dij,dik->jk", self.B, self.B)
        g = np.einsum("dij,di->j", self.B, self.y)
        return H, g


def synth_regression(seed: int, D: int = 10, N: int = 3, noise: float = 1.0) -> RegressionInstance:
    """Gaussian measurement matrices, a Gaussian ground truth and unit Gaussian measurement noise."""
    rng = np.random.default_rng(seed)
    x_true = rng.standard_normal(N)
    B = rng.standard_normal((D, N, N))
    y = np.einsum("dij,j->di", B, x_true) + noise * rng.standard_normal((D, N))
    return RegressionInstance(B=B, y=y, x_true=x_true)


@dataclass(frozen=True)
class SvmInstance:
    features: np.ndarray  # (n, 2)
    labels: np.ndarray  # (n,)
    shards: tuple[np.ndarray, ...]  # per-agent sample indices

    def costs(self, reg_weight: float = 1.0, smoothing: float = 0.1) -> list[SmoothedHingeSvmCost]:
        return [SmoothedHingeSvmCost(self.features[idx], self.labels[idx], reg_weight, smoothing)
                for idx in self.shards]


def synth_svm(seed: int, n_samples: int = 1000, D: int = 10, center: float = 2.8) -> SvmInstance:
    """Two unit-covariance Gaussian classes split so every agent holds equally many of each."""
    if n_samples % (2 * D):
        raise ValidationError(f"{n_samples} samples cannot be split into {D} balanced shards")
    rng = np.random.default_rng(seed)
    half = n_samples // 2
    pos = rng.standard_normal((half, 2)) + center
    neg = rng.standard_normal((half, 2))
    features = np.vstack([pos, neg])
    labels = np.concatenate([np.ones(half), -np.ones(half)])
    per = half // D
    shards = tuple(np.concatenate([np.arange(a * per, (a + 1) * per), half + np.arange(a * per, (a + 1) * per)])
                   for a in range(D))
    return SvmInstance(features=features, labels=labels, shards=shards)


@dataclass(frozen=True)
class QuadraticInstance:
    """Least-squares costs with prescribed Hessian spectra on a seeded connected graph."""

    topology: object
    B: np.ndarray
    y: np.ndarray
    curvature: float

    def costs(self) -> list[LeastSquaresCost]:
        return [LeastSquaresCost(B, y) for B, y in zip(self.B, self.y)]


def synth_quadratic(seed: int, D: int, N: int = 2, curvature: float = 1.0, edge_prob: float = 0.5,
                    topology=None) -> QuadraticInstance:
    """Each ``B_i = Q_i diag(sqrt(s_i))`` with orthogonal ``Q_i`` and ``s_i ~ U[curvature/2, curvature]``,
    so every local Hessian has its spectrum in that interval."""
    from ..operators import random_connected_topology

    rng = np.random.default_rng(seed)
    if topology is None:
        topology = random_connected_topology(D, N, edge_prob, seed=int(rng.integers(2**31)))
    Bs, ys = [], []
    for _ in range(D):
        Qm, _ = np.linalg.qr(rng.standard_normal((N, N)))
        s = rng.uniform(0.5 * curvature, curvature, N)
        B = Qm @ np.diag(np.sqrt(s)) @ Qm.T
        Bs.append(B)
        ys.append(B @ rng.standard_normal(N))
    return QuadraticInstance(topology, np.array(Bs), np.array(ys), curvature)


def synth_network_condition_instance(seed: int, max_tries: int = 500, N: int = 2, max_agents: int = 12):
    """Rejection-sample a quadratic instance whose network condition holds for some ``lambda2``.

    Returns ``(instance, problem, profile, constants)`` with strictly feasible constants.
    """
    from ..costs import estimate_constants
    from ..engine import Problem
    from ..exceptions import ConditionInfeasible
    from ..theory import optimal_params

    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        D = int(rng.integers(2, max_agents + 1))
        curvature = float(10 ** rng.uniform(-2, 1))
        inst = synth_quadratic(int(rng.integers(2**31)), D, N, curvature)
        problem = Problem.build(inst.topology, inst.costs())
        profile = estimate_constants(problem.costs, problem.operators, problem.x_star, n_samples=200)
        try:
            constants = optimal_params(problem.operators.spectra, profile.v, profile.L, strict=True)
        except ConditionInfeasible:
            continue
        return inst, problem, profile, constants
    raise RuntimeError(f"no instance satisfying the network condition in {max_tries} draws")
