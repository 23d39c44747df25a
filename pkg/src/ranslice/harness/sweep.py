"""Hyperparameter sweeps over the agent's network sizes."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..core import ConfigurationError
from .config import ExperimentConfig
from .runner import run_experiment

log = logging.getLogger(__name__)

SWEEP_PARAMS = ("hidden", "gcn_layers", "embedding")


@dataclass
class SweepRow:
    param: str
    value: int
    ok: bool
    mean: float = float("nan")
    p50: float = float("nan")
    p95: float = float("nan")
    out: str = ""
    error: str = ""


def _one(base: ExperimentConfig, param: str, value: int) -> SweepRow:
    cfg = base.replace(agent={**base.agent, param: value},
                       out=str(Path(base.out) / f"{param}={value}"))
    try:
        res = run_experiment(cfg)
    except (ConfigurationError, ValueError, RuntimeError) as exc:
        log.warning("sweep %s=%s failed: %s", param, value, exc)
        return SweepRow(param, value, False, out=cfg.out, error=str(exc))
    s = res.summary
    return SweepRow(param, value, True, s["regret"], s["regret_p50"], s["regret_p95"], cfg.out)


def sweep(param: str, values: Sequence[int], base: ExperimentConfig,
          parallel: bool = False) -> list[SweepRow]:
    """One run per value with the base config's seed; failures are recorded, not raised."""
    if param not in SWEEP_PARAMS:
        raise ConfigurationError(f"sweep: unknown parameter {param!r}; choose from {SWEEP_PARAMS}")
    if base.policy != "xslice":
        raise ConfigurationError("sweep: network sizes only apply to the xslice policy")
    values = [int(v) for v in values]
    if any(v <= 0 for v in values):
        raise ConfigurationError("sweep: values must be positive")
    if not parallel:
        return [_one(base, param, v) for v in values]
    with ProcessPoolExecutor() as pool:
        return list(pool.map(_one, [base] * len(values), [param] * len(values), values))


def format_sweep(rows: Sequence[SweepRow]) -> str:
    lines = [f"{'param':<11}{'value':>6}{'mean':>10}{'p50':>10}{'p95':>10}  status"]
    for r in rows:
        status = "ok" if r.ok else f"failed: {r.error}"
        nums = "".join(f"{x:>10.4f}" if np.isfinite(x) else f"{'-':>10}"
                       for x in (r.mean, r.p50, r.p95))
        lines.append(f"{r.param:<11}{r.value:>6}{nums}  {status}")
    return "\n".join(lines) + "\n"
