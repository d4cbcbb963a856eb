"""Local cost functions, the per-agent x-update solve and global cost constants.

Strong convexity is measured with the convention ``f(x) >= f(y) + <grad f(y), x - y> + v*||x - y||^2``
(no one-half factor), so a cost whose Hessian is bounded below by ``m*I`` has modulus
``v = m / 2``.
"""

from __future__ import annotations

import csv
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .exceptions import NotStronglyConvex, SolverDivergence, ValidationError

RESOLVE_RTOL = 1e-9
NEWTON_MAX_ITER = 100
ARMIJO_FACTOR = 0.5
ARMIJO_SLOPE = 1e-4


class LocalCost(ABC):
    """Smooth convex cost held by a single agent."""

    dim: int

    @abstractmethod
    def evaluate(self, x: np.ndarray) -> float: ...

    @abstractmethod
    def gradient(self, x: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def hessian(self, x: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def curvature_bounds(self) -> tuple[float, float]:
        """Global lower and upper bounds on the Hessian spectrum."""

    def gradient_batch(self, X: np.ndarray) -> np.ndarray:
        """Gradients at each row of ``X``; subclasses vectorise this."""
        return np.stack([self.gradient(x) for x in X])

    def resolve(self, a: float, b: np.ndarray, x0: np.ndarray | None = None) -> np.ndarray:
        """Solve ``grad f(x) + a*x = b`` for ``a > 0`` by damped Newton on the strongly convex
        function ``f(x) + a/2*||x||^2 - <b, x>``."""
        b = np.asarray(b, dtype=float)
        x = np.zeros(self.dim) if x0 is None else np.array(x0, dtype=float)
        tol = RESOLVE_RTOL * (1.0 + np.linalg.norm(b))

        def phi(u):
            return self.evaluate(u) + 0.5 * a * (u @ u) - b @ u

        for _ in range(NEWTON_MAX_ITER):
            g = self.gradient(x) + a * x - b
            if np.linalg.norm(g) <= tol:
                return x
            H = self.hessian(x) + a * np.eye(self.dim)
            step = -np.linalg.solve(H, g)
            slope = g @ step
            t, f0 = 1.0, phi(x)
            while phi(x + t * step) > f0 + ARMIJO_SLOPE * t * slope and t > 1e-12:
                t *= ARMIJO_FACTOR
            x = x + t * step
        g = self.gradient(x) + a * x - b
        if np.linalg.norm(g) <= tol:
            return x
        raise SolverDivergence(
            f"Newton solve stalled with residual {np.linalg.norm(g):.3e} (target {tol:.3e})")


class LeastSquaresCost(LocalCost):
    """``f(x) = 1/2 * ||y - B x||^2``."""

    def __init__(self, B: np.ndarray, y: np.ndarray):
        B = np.atleast_2d(np.asarray(B, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if B.shape[0] != y.shape[0]:
            raise ValidationError(f"B has {B.shape[0]} rows but y has length {y.shape[0]}")
        self.B = B
        self.y = y
        self.dim = B.shape[1]
        self._BtB = B.T @ B
        self._Bty = B.T @ y

    def evaluate(self, x):
        res = self.y - self.B @ x
        return 0.5 * float(res @ res)

    def gradient(self, x):
        return self._BtB @ x - self._Bty

    def gradient_batch(self, X):
        return X @ self._BtB.T - self._Bty

    def hessian(self, x):
        return self._BtB.copy()

    def curvature_bounds(self):
        eig = np.linalg.eigvalsh(self._BtB)
        return max(float(eig[0]), 0.0), float(eig[-1])

    def resolve(self, a, b, x0=None):
        return np.linalg.solve(self._BtB + a * np.eye(self.dim), self._Bty + np.asarray(b, dtype=float))


def huber_hinge(t: np.ndarray, mu: float) -> np.ndarray:
    """Smoothed ``max(0, t)``: quadratic on ``[0, mu]``, linear beyond."""
    t = np.asarray(t, dtype=float)
    return np.where(t <= 0.0, 0.0, np.where(t < mu, t * t / (2.0 * mu), t - 0.5 * mu))


def huber_hinge_d1(t, mu):
    return np.clip(np.asarray(t, dtype=float) / mu, 0.0, 1.0)


def huber_hinge_d2(t, mu):
    t = np.asarray(t, dtype=float)
    return np.where((t > 0.0) & (t < mu), 1.0 / mu, 0.0)


class SmoothedHingeSvmCost(LocalCost):
    """``1/2 ||w||^2 + C * sum_j h_mu(1 - y_j (w^T a_j + b))`` over the local samples.

    The variable is laid out as ``x = (w, b)``, so ``dim = features + 1``.
    """

    def __init__(self, features: np.ndarray, labels: np.ndarray, reg_weight: float = 1.0,
                 smoothing: float = 0.1):
        features = np.atleast_2d(np.asarray(features, dtype=float))
        labels = np.asarray(labels, dtype=float).ravel()
        if features.shape[0] != labels.shape[0]:
            raise ValidationError("features and labels differ in length")
        if not np.all(np.isin(labels, (-1.0, 1.0))):
            raise ValidationError("labels must be +1 or -1")
        if smoothing <= 0:
            raise ValidationError(f"smoothing must be positive, got {smoothing}")
        if reg_weight < 0:
            raise ValidationError(f"reg_weight must be nonnegative, got {reg_weight}")
        self.features = features
        self.labels = labels
        self.C = float(reg_weight)
        self.mu = float(smoothing)
        self.dim = features.shape[1] + 1
        # row j is y_j * (a_j, 1), so the margin argument is 1 - Y @ x
        self._Y = labels[:, None] * np.hstack([features, np.ones((len(labels), 1))])
        self._reg = np.ones(self.dim)
        self._reg[-1] = 0.0

    def evaluate(self, x):
        t = 1.0 - self._Y @ x
        return 0.5 * float((self._reg * x) @ x) + self.C * float(huber_hinge(t, self.mu).sum())

    def gradient(self, x):
        t = 1.0 - self._Y @ x
        return self._reg * x - self.C * (self._Y.T @ huber_hinge_d1(t, self.mu))

    def gradient_batch(self, X):
        T = 1.0 - X @ self._Y.T
        return X * self._reg - self.C * (huber_hinge_d1(T, self.mu) @ self._Y)

    def hessian(self, x):
        t = 1.0 - self._Y @ x
        w = huber_hinge_d2(t, self.mu)
        return np.diag(self._reg) + self.C * (self._Y.T * w) @ self._Y

    def curvature_bounds(self):
        A = self._Y.T @ self._Y
        return 0.0, 1.0 + self.C / self.mu * float(np.linalg.eigvalsh(A)[-1])


def load_svm_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Read rows ``feature_1, ..., feature_n, label``; a non-numeric first row is treated as a header."""
    rows = []
    with open(path, newline="") as fh:
        for n, row in enumerate(csv.reader(fh)):
            if not row:
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                if n == 0:
                    continue
                raise ValidationError(f"{path}: non-numeric value on line {n + 1}")
    if not rows:
        raise ValidationError(f"{path}: no samples")
    data = np.asarray(rows)
    return data[:, :-1], data[:, -1]


def x_update_solve(cost: LocalCost, degree: int, c: float, alpha_i: np.ndarray,
                   neighbor_sum: np.ndarray, z_self: np.ndarray, x0: np.ndarray | None = None) -> np.ndarray:
    """Solve ``grad f_i(x) + alpha_i + 2 c d_i x = c d_i z_self + c * neighbor_sum``."""
    if c <= 0:
        raise ValidationError(f"penalty c must be positive, got {c}")
    if degree < 1:
        raise ValidationError(f"agent degree must be at least 1, got {degree}")
    a = 2.0 * c * degree
    b = c * degree * z_self + c * neighbor_sum - alpha_i
    x = cost.resolve(a, b, x0)
    res = np.linalg.norm(cost.gradient(x) + a * x - b)
    if not res <= RESOLVE_RTOL * (1.0 + np.linalg.norm(b)):
        raise SolverDivergence(f"x-update residual {res:.3e} exceeds tolerance")
    return x


@dataclass(frozen=True)
class GlobalCostProfile:
    v: float
    L: float
    V1: float
    V2: float


def stacked_gradient(costs: Sequence[LocalCost], x: np.ndarray) -> np.ndarray:
    """Gradient of ``sum_i f_i(x_i)`` at a stacked vector."""
    N = costs[0].dim
    return np.concatenate([f.gradient(x[i * N:(i + 1) * N]) for i, f in enumerate(costs)])


def total_cost(costs: Sequence[LocalCost], x: np.ndarray) -> float:
    """``sum_i f_i(x)`` for a common ``x``."""
    return float(sum(f.evaluate(x) for f in costs))


def centralized_minimizer(costs: Sequence[LocalCost], N: int | None = None, tol: float = 1e-10) -> np.ndarray:
    """Minimiser of ``sum_i f_i`` over a common variable."""
    if not costs:
        raise ValidationError("need at least one cost")
    N = costs[0].dim if N is None else N
    if any(f.dim != N for f in costs):
        raise ValidationError("costs disagree on the variable dimension")
    if all(isinstance(f, LeastSquaresCost) for f in costs):
        H = sum(f._BtB for f in costs)
        g = sum(f._Bty for f in costs)
        return np.linalg.solve(H, g)

    def grad(x):
        return sum(f.gradient(x) for f in costs)

    def value(x):
        return total_cost(costs, x)

    x = np.zeros(N)
    for _ in range(10 * NEWTON_MAX_ITER):
        g = grad(x)
        if np.linalg.norm(g) <= tol:
            return x
        H = sum(f.hessian(x) for f in costs)
        # a tiny ridge keeps the Newton system solvable on flat pieces
        step = -np.linalg.solve(H + 1e-12 * np.eye(N), g)
        slope = g @ step
        if slope >= 0:
            step, slope = -g, -(g @ g)
        t, f0 = 1.0, value(x)
        while value(x + t * step) > f0 + ARMIJO_SLOPE * t * slope and t > 1e-14:
            t *= ARMIJO_FACTOR
        x = x + t * step
    if np.linalg.norm(grad(x)) <= tol:
        return x
    raise SolverDivergence(f"centralized Newton stalled at gradient norm {np.linalg.norm(grad(x)):.3e}")


def estimate_constants(costs: Sequence[LocalCost], operators=None, x_star: np.ndarray | None = None,
                       n_samples: int = 10_000, margin: float = 1.1, seed: int = 0,
                       require_strong_convexity: bool = False) -> GlobalCostProfile:
    """Strong convexity, smoothness and the bounds ``V1``, ``V2`` used by the robust threshold.

    ``V1`` is twice the norm of the stacked optimum ``1 (x) x*``. ``V2`` is ``margin`` times the
    largest stacked gradient norm seen at ``n_samples`` uniform points of the radius-``V1`` ball,
    plus the origin and the stacked optimum.
    """
    if not costs:
        raise ValidationError("need at least one cost")
    D, N = len(costs), costs[0].dim
    bounds = [f.curvature_bounds() for f in costs]
    v = 0.5 * min(lo for lo, _ in bounds)
    L = max(hi for _, hi in bounds)
    if require_strong_convexity and v <= 0:
        raise NotStronglyConvex("sum of local costs is not strongly convex under the local-bound estimate")
    if x_star is None:
        x_star = centralized_minimizer(costs, N)
    stacked_star = np.tile(x_star, D)
    V1 = 2.0 * float(np.linalg.norm(stacked_star))
    if V1 == 0.0:
        V1 = 1.0
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((n_samples, D * N))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = V1 * rng.random(n_samples) ** (1.0 / (D * N))
    pts = np.vstack([dirs * radii[:, None], np.zeros(D * N), stacked_star])
    sq = np.zeros(len(pts))
    for i, f in enumerate(costs):
        G = f.gradient_batch(pts[:, i * N:(i + 1) * N])
        sq += np.einsum("ij,ij->i", G, G)
    V2 = margin * math.sqrt(float(sq.max()))
    return GlobalCostProfile(v=v, L=L, V1=V1, V2=V2)
