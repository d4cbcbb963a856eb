"""Experiment configuration with JSON loading and validation."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

from ..exceptions import ValidationError

TOPOLOGIES = ("random", "path", "ring", "complete", "star", "edges")
PROBLEMS = ("regression", "svm")
ALGORITHMS = ("admm", "road")
ERROR_KINDS = ("none", "gaussian", "bounded", "linear_decay")
DEFAULT_T = {"regression": 300, "svm": 500}
DEFAULT_C = {"regression": "opt", "svm": 0.35}


@dataclass
class ExperimentConfig:
    problem: str = "regression"
    topology: str = "random"
    agents: int = 10
    dim: int = 3
    edge_prob: float = 0.5
    topology_seed: int = 1
    edges: list[list[int]] = field(default_factory=list)
    c: float | str | None = None
    T: int | None = None
    algo: str = "admm"
    errors: str = "gaussian"
    unreliable: int = 0
    mu_b: float = 1.0
    sigma_b: float = 1.5
    e_cap: float = 1.0
    e0: float = 1.0
    rate: float = 0.5
    seed: int = 1
    error_seed: int = 0
    svm_reg: float = 1.0
    svm_smoothing: float = 0.1
    record_every: int = 1
    output: str | None = None

    def __post_init__(self):
        if self.T is None:
            self.T = DEFAULT_T.get(self.problem, 300)
        if self.c is None:
            self.c = DEFAULT_C.get(self.problem, "opt")

    @property
    def c_is_opt(self) -> bool:
        return isinstance(self.c, str) and self.c.lower() == "opt"

    def validate(self) -> "ExperimentConfig":
        if self.problem not in PROBLEMS:
            raise ValidationError(f"problem must be one of {PROBLEMS}, got {self.problem!r}")
        if self.topology not in TOPOLOGIES:
            raise ValidationError(f"topology must be one of {TOPOLOGIES}, got {self.topology!r}")
        if self.algo not in ALGORITHMS:
            raise ValidationError(f"algo must be one of {ALGORITHMS}, got {self.algo!r}")
        if self.errors not in ERROR_KINDS:
            raise ValidationError(f"errors must be one of {ERROR_KINDS}, got {self.errors!r}")
        if self.agents < 2:
            raise ValidationError(f"need at least 2 agents, got {self.agents}")
        if self.dim < 1:
            raise ValidationError(f"dim must be positive, got {self.dim}")
        if not 0 <= self.unreliable <= self.agents:
            raise ValidationError(f"unreliable must lie in [0, {self.agents}], got {self.unreliable}")
        if self.T < 0:
            raise ValidationError(f"T must be nonnegative, got {self.T}")
        if isinstance(self.c, str):
            if not self.c_is_opt:
                try:
                    self.c = float(self.c)
                except ValueError:
                    raise ValidationError(f"c must be a positive number or 'opt', got {self.c!r}") from None
        if not self.c_is_opt and not float(self.c) > 0:
            raise ValidationError(f"c must be positive, got {self.c}")
        if self.c_is_opt and self.problem == "svm":
            raise ValidationError("the optimal penalty needs a strongly convex cost; pass a numeric c for svm")
        if self.topology == "edges" and not self.edges:
            raise ValidationError("topology 'edges' needs an explicit edge list")
        return self

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown configuration keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path: str | Path, overrides: dict[str, Any] | None = None) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ValidationError(f"config {path} must hold a JSON object")
        data.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return cls.from_dict(data)
