"""Reference slicing policies: single shared slice, NVS time multiplexing, demand-proportional.

Every policy exposes ``decide(report, rnd) -> Allocation`` so the xApp endpoint
can drive it exactly like the learning agent.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import (Allocation, InfeasibleConfigurationError, KpmRecord, SliceSpec,
                   group_by_slice, integerize)


def single_slice_alloc(n_rb: int, k: int | None = None) -> Allocation:
    """The whole band as one bandwidth part shared by every session."""
    return Allocation((0,), (int(n_rb),), shared=True)


@dataclass
class NvsState:
    requested: np.ndarray
    avg: np.ndarray
    beta: float = 0.1
    floor: float = 0.1

    @classmethod
    def fresh(cls, k: int, beta: float = 0.1, floor: float = 0.1) -> "NvsState":
        return cls(np.zeros(k), np.zeros(k), beta, floor)

    def priorities(self) -> np.ndarray:
        return self.requested / np.maximum(self.avg, self.floor)

    def update(self, achieved: Sequence[float]) -> None:
        self.avg = (1.0 - self.beta) * self.avg + self.beta * np.asarray(achieved, dtype=float)


def nvs_alloc(state: NvsState, n_rb: int, keep_prb: int = 5) -> Allocation:
    """Whole band (minus ``keep_prb`` per other slice) to the highest-priority slice.

    Ties go to the lowest slice id. On narrow bands the keep-alive shrinks so the
    winner still ends up with the largest grant.
    """
    k = state.requested.shape[0]
    if n_rb < k:
        raise InfeasibleConfigurationError(f"N_rb={n_rb} cannot give {k} slices a PRB each")
    winner = int(np.argmax(state.priorities()))
    keep = max(1, min(keep_prb, (n_rb - 1) // k)) if k > 1 else 0
    sizes = np.full(k, keep, dtype=np.int64)
    sizes[winner] = n_rb - keep * (k - 1)
    return Allocation.from_sizes(sizes)


def requested_throughput(specs: Sequence[SliceSpec], kpms: Sequence[KpmRecord]) -> np.ndarray:
    groups = group_by_slice(kpms, len(specs))
    return np.array([s.throughput_demand * len(g) for s, g in zip(specs, groups)], dtype=float)


def achieved_throughput(k: int, kpms: Sequence[KpmRecord]) -> np.ndarray:
    out = np.zeros(k)
    for rec in kpms:
        out[rec.slice_id] += rec.throughput
    return out


def prop_demand_alloc(specs: Sequence[SliceSpec], kpms: Sequence[KpmRecord], n_rb: int,
                      min_prb: int = 1) -> Allocation:
    return integerize(requested_throughput(specs, kpms), n_rb, min_prb)


# -- policy objects driven by the xApp endpoint ---------------------------


class SingleSlicePolicy:
    name = "single"

    def __init__(self, specs: Sequence[SliceSpec], n_rb: int):
        self.alloc = single_slice_alloc(n_rb, len(specs))

    def decide(self, report: Sequence[KpmRecord], rnd: int) -> Allocation:
        return self.alloc


@dataclass
class NvsPolicy:
    specs: Sequence[SliceSpec]
    n_rb: int
    beta: float = 0.1
    floor: float = 0.1
    keep_prb: int = 5
    pure: bool = False
    state: NvsState = field(init=False)
    name: str = "nvs"

    def __post_init__(self):
        self.state = NvsState.fresh(len(self.specs), self.beta, self.floor)
        self._started = False

    def decide(self, report: Sequence[KpmRecord], rnd: int) -> Allocation:
        # the report carries the outcome of the previous round
        if self._started:
            self.state.update(achieved_throughput(len(self.specs), report))
        self._started = True
        self.state.requested = requested_throughput(self.specs, report)
        return nvs_alloc(self.state, self.n_rb, 1 if self.pure else self.keep_prb)


class PropDemandPolicy:
    name = "prop"

    def __init__(self, specs: Sequence[SliceSpec], n_rb: int, min_prb: int = 1):
        self.specs, self.n_rb, self.min_prb = specs, n_rb, min_prb

    def decide(self, report: Sequence[KpmRecord], rnd: int) -> Allocation:
        return prop_demand_alloc(self.specs, report, self.n_rb, self.min_prb)
