"""Experiment configuration and its YAML form.

Config files are key-value trees; every key is optional except where noted::

    scenario: medium          # preset name or path to a scenario YAML
    policy: xslice            # xslice | single | nvs | prop
    rounds: 2000
    seed: 7
    out: runs/medium-xslice   # run directory
    transport: inproc         # inproc | socket
    deadline_ms: null         # null = lock-step
    warmup_rounds: 500        # excluded from summary windows
    events: ["arrival:1000:slice=1,rate=100"]
    agent: {hidden: 32, gcn_layers: 3, embedding: 12, sigma0: 0.2}
    hyper: {lr: 0.005, gamma: 0.95, lam: 0.2, clip: 0.2, epochs: 16, minibatch: 10}
    weights_case: A           # slice-weight preset (A-D), optional
    perturb: tp+              # weight perturbation, optional
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from ..core import ConfigurationError
from ..ppo import AgentConfig, Hyper

POLICIES = ("xslice", "single", "nvs", "prop")
TRANSPORTS = ("inproc", "socket")
MAX_DEADLINE_MS = 1000.0

_AGENT_KEYS = {f.name for f in dataclasses.fields(AgentConfig)} - {"seed", "hyper"}
_HYPER_KEYS = {f.name for f in dataclasses.fields(Hyper)}


@dataclass
class ExperimentConfig:
    scenario: str = "medium"
    policy: str = "xslice"
    rounds: int = 2000
    seed: int = 0
    out: str = "runs/run"
    transport: str = "inproc"
    deadline_ms: float | None = None
    warmup_rounds: int = 500
    events: list[str] = field(default_factory=list)
    agent: dict[str, Any] = field(default_factory=dict)
    hyper: dict[str, Any] = field(default_factory=dict)
    weights_case: str | None = None
    perturb: str | None = None
    init_checkpoint: str | None = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.policy not in POLICIES:
            raise ConfigurationError(f"policy: unknown {self.policy!r}; choose from {POLICIES}")
        if self.transport not in TRANSPORTS:
            raise ConfigurationError(f"transport: unknown {self.transport!r}")
        if self.rounds <= 0:
            raise ConfigurationError("rounds: must be positive")
        if self.warmup_rounds < 0:
            raise ConfigurationError("warmup_rounds: must be nonnegative")
        if self.deadline_ms is not None and not 0 < self.deadline_ms <= MAX_DEADLINE_MS:
            raise ConfigurationError(f"deadline_ms: must lie in (0, {MAX_DEADLINE_MS:g}]")
        bad = set(self.agent) - _AGENT_KEYS
        if bad:
            raise ConfigurationError(f"agent: unknown keys {sorted(bad)}")
        bad = set(self.hyper) - _HYPER_KEYS
        if bad:
            raise ConfigurationError(f"hyper: unknown keys {sorted(bad)}")

    def agent_config(self) -> AgentConfig:
        hyper = dict(self.hyper)
        if "adam_betas" in hyper:
            hyper["adam_betas"] = tuple(hyper["adam_betas"])
        return AgentConfig(seed=self.seed, hyper=Hyper(**hyper), **self.agent)

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigurationError("config: expected a mapping")
        known = {f.name for f in dataclasses.fields(cls)}
        bad = set(d) - known
        if bad:
            raise ConfigurationError(f"config: unknown keys {sorted(bad)}")
        return cls(**d)


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"{path}: {exc}") from None
    return ExperimentConfig.from_dict(data or {})


def dump_config(cfg: ExperimentConfig, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False))
