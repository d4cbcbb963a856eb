"""Error injection for unreliable agents.

Every draw comes from a counter-based Philox stream keyed by ``(seed, k, agent)``, so a
sample depends only on those three numbers and never on evaluation order.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Union

import numpy as np

from .exceptions import MajorityViolated, ValidationError

# agent slot used for draws shared by all agents in a round (e.g. the bounded magnitude)
_SHARED = 2**63 - 1


@dataclass(frozen=True)
class NoError:
    pass


@dataclass(frozen=True)
class Gaussian:
    mu_b: float
    sigma_b: float

    def __post_init__(self):
        if self.sigma_b < 0:
            raise ValidationError(f"sigma_b must be nonnegative, got {self.sigma_b}")


@dataclass(frozen=True)
class Bounded:
    """``||e^k||^2 = e_cap * u_k`` with ``u_k ~ U(0, 1)``."""

    e_cap: float

    def __post_init__(self):
        if self.e_cap < 0:
            raise ValidationError(f"e_cap must be nonnegative, got {self.e_cap}")


@dataclass(frozen=True)
class LinearDecay:
    """``||e^k||^2 = e0 * R**k`` along a direction fixed at ``k = 0``."""

    e0: float
    R: float

    def __post_init__(self):
        if self.e0 < 0:
            raise ValidationError(f"e0 must be nonnegative, got {self.e0}")
        if not 0.0 <= self.R:
            raise ValidationError(f"R must be nonnegative, got {self.R}")


@dataclass(frozen=True)
class Scripted:
    """Explicit errors: ``table[k][agent]`` is that agent's error vector at round ``k``."""

    table: Mapping[int, Mapping[int, np.ndarray]]

    def agents(self) -> set[int]:
        return {a for row in self.table.values() for a in row}


ErrorKind = Union[NoError, Gaussian, Bounded, LinearDecay, Scripted]


@dataclass(frozen=True)
class ErrorModel:
    unreliable_set: frozenset[int] = frozenset()
    kind: ErrorKind = field(default_factory=NoError)
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "unreliable_set", frozenset(int(a) for a in self.unreliable_set))
        if any(a < 0 for a in self.unreliable_set):
            raise ValidationError("agent ids must be nonnegative")
        if isinstance(self.kind, Scripted):
            extra = self.kind.agents() - self.unreliable_set
            if extra:
                raise ValidationError(f"scripted errors for reliable agents {sorted(extra)}")

    @property
    def is_error_free(self) -> bool:
        return isinstance(self.kind, NoError) or not self.unreliable_set


def none_model() -> ErrorModel:
    return ErrorModel()


def _rng(seed: int, k: int, agent: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, k, agent]))


def _unit_direction(seed: int, k: int, agents: list[int], N: int) -> dict[int, np.ndarray]:
    draws = {a: _rng(seed, k, a).standard_normal(N) for a in agents}
    total = math.sqrt(sum(float(g @ g) for g in draws.values()))
    return {a: g / total for a, g in draws.items()}


def sample_error(model: ErrorModel, k: int, x: np.ndarray) -> np.ndarray:
    """Error ``e^k`` shaped like the ``(D, N)`` state ``x``; rows outside the unreliable set are zero."""
    if k < 0:
        raise ValidationError(f"iteration index must be nonnegative, got {k}")
    D, N = x.shape
    e = np.zeros((D, N))
    agents = sorted(a for a in model.unreliable_set if a < D)
    if model.is_error_free or not agents:
        return e
    kind, seed = model.kind, model.rng_seed
    if isinstance(kind, Gaussian):
        for a in agents:
            e[a] = _rng(seed, k, a).normal(kind.mu_b, kind.sigma_b, N)
    elif isinstance(kind, Bounded):
        u = _rng(seed, k, _SHARED).random()
        scale = math.sqrt(kind.e_cap * u)
        for a, d in _unit_direction(seed, k, agents, N).items():
            e[a] = scale * d
    elif isinstance(kind, LinearDecay):
        scale = math.sqrt(kind.e0 * kind.R ** k)
        for a, d in _unit_direction(seed, 0, agents, N).items():
            e[a] = scale * d
    elif isinstance(kind, Scripted):
        for a, vec in kind.table.get(k, {}).items():
            if a < D:
                e[a] = np.asarray(vec, dtype=float).reshape(N)
    else:
        raise ValidationError(f"unknown error kind {kind!r}")
    return e


def check_majority(topology, unreliable: Iterable[int]) -> None:
    """Raise :class:`MajorityViolated` unless every agent has a strict majority of reliable neighbours."""
    bad = set(unreliable)
    for i, nbrs in enumerate(topology.neighbors):
        reliable = sum(1 for j in nbrs if j not in bad)
        if 2 * reliable <= len(nbrs):
            raise MajorityViolated(
                f"agent {i} has {reliable} reliable neighbours out of {len(nbrs)}")


def pick_unreliable(D: int, m: int, seed: int, topology=None, max_tries: int = 1000) -> frozenset[int]:
    """Seeded ``m``-subset of ``range(D)``; with a topology, redraw until the majority rule holds."""
    if not 0 <= m <= D:
        raise ValidationError(f"need 0 <= m <= D, got m={m}, D={D}")
    rng = np.random.default_rng(seed)
    last_error = None
    for _ in range(max_tries if topology is not None else 1):
        chosen = frozenset(int(a) for a in rng.choice(D, size=m, replace=False))
        if topology is None:
            return chosen
        try:
            check_majority(topology, chosen)
            return chosen
        except MajorityViolated as exc:
            last_error = exc
    raise MajorityViolated(f"no {m}-subset with reliable majorities in {max_tries} draws ({last_error})")


def load_scripted_csv(path: str | Path) -> Scripted:
    """Read rows ``k, agent, e_1, ..., e_N``; a non-numeric first row is treated as a header."""
    table: dict[int, dict[int, np.ndarray]] = {}
    with open(path, newline="") as fh:
        for n, row in enumerate(csv.reader(fh)):
            if not row:
                continue
            try:
                k, agent = int(row[0]), int(row[1])
                vec = np.array([float(v) for v in row[2:]])
            except (ValueError, IndexError):
                if n == 0:
                    continue
                raise ValidationError(f"{path}: malformed row on line {n + 1}")
            table.setdefault(k, {})[agent] = vec
    return Scripted(table)


def scripted_model(table: Mapping[int, Mapping[int, Iterable[float]]] | Scripted, seed: int = 0) -> ErrorModel:
    kind = table if isinstance(table, Scripted) else Scripted(
        {int(k): {int(a): np.asarray(v, dtype=float) for a, v in row.items()} for k, row in table.items()})
    return ErrorModel(unreliable_set=frozenset(kind.agents()), kind=kind, rng_seed=seed)
