"""Shared domain types plus the regret, utilization and reward arithmetic.

Units everywhere: throughput in Mbps, delay in ms, BLER as a fraction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

SCHEDULERS = ("proportional-fair", "round-robin", "max-throughput", "earliest-deadline-first")

# Default regret weights (throughput, delay, reliability) and the utilization offset C.
DEFAULT_WEIGHTS = (1.0, 0.8, 2.0)
DEFAULT_C = 0.0


class DemandSpecError(ValueError):
    """A slice demand triple is outside its domain."""


class ConfigurationError(ValueError):
    """Inconsistent configuration, e.g. weight count mismatch."""


class DegenerateAllocationError(ValueError):
    """A slice holds zero PRBs while the utilization constant is zero."""


class InfeasibleConfigurationError(ValueError):
    """The PRB budget cannot honour the per-slice floor."""


@dataclass(frozen=True)
class SliceSpec:
    id: int
    throughput_demand: float
    delay_demand: float
    bler_demand: float
    weight_tp: float = DEFAULT_WEIGHTS[0]
    weight_delay: float = DEFAULT_WEIGHTS[1]
    weight_rel: float = DEFAULT_WEIGHTS[2]
    scheduler: str = "proportional-fair"
    name: str = ""

    def __post_init__(self):
        if not (self.throughput_demand > 0 and self.delay_demand > 0):
            raise DemandSpecError(
                f"slice {self.id}: throughput and delay demands must be > 0")
        if not 0 < self.bler_demand <= 1:
            raise DemandSpecError(f"slice {self.id}: bler demand must lie in (0, 1]")
        if min(self.weight_tp, self.weight_delay, self.weight_rel) < 0:
            raise DemandSpecError(f"slice {self.id}: regret weights must be nonnegative")
        if self.scheduler not in SCHEDULERS:
            raise DemandSpecError(f"slice {self.id}: unknown scheduler {self.scheduler!r}")

    @property
    def weights(self) -> tuple[float, float, float]:
        return (self.weight_tp, self.weight_delay, self.weight_rel)


@dataclass(frozen=True)
class KpmRecord:
    """Per-session measurements for one reporting round."""

    session_id: int
    slice_id: int
    throughput: float
    delay: float
    bler: float
    prbs_used: int = 0
    pusch_snr: float = 0.0
    phr: float = 0.0
    mcs: int = 0
    current_tbs: int = 0
    scheduled_rbs: int = 0


@dataclass(frozen=True)
class Allocation:
    """Contiguous per-slice PRB grants (the bandwidth-part command).

    ``shared`` marks the single-BWP mode where one grant covers every session.
    """

    starts: tuple[int, ...]
    sizes: tuple[int, ...]
    shared: bool = False

    @classmethod
    def from_sizes(cls, sizes: Sequence[int], shared: bool = False) -> "Allocation":
        sizes = tuple(int(n) for n in sizes)
        starts = tuple(int(s) for s in np.concatenate(([0], np.cumsum(sizes)[:-1])))
        return cls(starts, sizes, shared)

    @property
    def total(self) -> int:
        return sum(self.sizes)

    def check(self, n_rb: int, min_prb: int = 1) -> None:
        if len(self.starts) != len(self.sizes) or not self.sizes:
            raise ConfigurationError("allocation needs one (start, size) pair per slice")
        if self.shared and len(self.sizes) != 1:
            raise ConfigurationError("a shared allocation carries exactly one grant")
        end = 0
        for s, n in zip(self.starts, self.sizes):
            if n < min_prb:
                raise ConfigurationError(f"grant of {n} PRBs is below the floor {min_prb}")
            if s < end:
                raise ConfigurationError("grants overlap or are not ascending")
            end = s + n
        if end > n_rb:
            raise ConfigurationError(f"grants end at PRB {end} beyond N_rb={n_rb}")


@dataclass(frozen=True)
class RegretBreakdown:
    per_slice: tuple[tuple[float, float, float], ...]
    total: float
    utilization: float
    reward: float
    normalized_reward: float
    per_slice_weighted: tuple[float, ...] = field(default=())


def throughput_regret_term(demand: float, achieved: float) -> float:
    if demand <= 0:
        raise DemandSpecError("throughput demand must be > 0")
    return max((demand - achieved) / demand, 0.0)


def slice_regret(spec: SliceSpec, kpms: Sequence[KpmRecord]) -> tuple[float, float, float]:
    """Summed normalized deficits of one slice's sessions."""
    r_p = r_d = r_r = 0.0
    for rec in kpms:
        r_p += max((spec.throughput_demand - rec.throughput) / spec.throughput_demand, 0.0)
        r_d += max((rec.delay - spec.delay_demand) / spec.delay_demand, 0.0)
        r_r += max((rec.bler - spec.bler_demand) / spec.bler_demand, 0.0)
    return (r_p, r_d, r_r)


def weighted_slice_regret(spec: SliceSpec, triple: Sequence[float]) -> float:
    return spec.weight_tp * triple[0] + spec.weight_delay * triple[1] + spec.weight_rel * triple[2]


def total_regret(specs: Sequence[SliceSpec], per_slice: Sequence[Sequence[float]]) -> float:
    if len(specs) != len(per_slice):
        raise ConfigurationError(
            f"{len(per_slice)} regret triples for {len(specs)} slices")
    return float(sum(weighted_slice_regret(s, t) for s, t in zip(specs, per_slice)))


def utilization(sizes: Sequence[int] | Allocation, c: float = DEFAULT_C) -> float:
    if isinstance(sizes, Allocation):
        sizes = sizes.sizes
    total = 0.0
    for n in sizes:
        if n + c <= 0:
            raise DegenerateAllocationError("zero PRBs with C = 0 makes utilization unbounded")
        total += 1.0 / (n + c)
    return total


def reward(regret: float, util: float, r_max: float) -> tuple[float, float]:
    raw = util - regret
    clipped = min(max(raw, -r_max), r_max)
    return raw, clipped / r_max


def group_by_slice(kpms: Sequence[KpmRecord], k: int) -> list[list[KpmRecord]]:
    groups: list[list[KpmRecord]] = [[] for _ in range(k)]
    for rec in kpms:
        if not 0 <= rec.slice_id < k:
            raise ConfigurationError(f"record for unknown slice {rec.slice_id}")
        groups[rec.slice_id].append(rec)
    return groups


def evaluate(specs: Sequence[SliceSpec], kpms: Sequence[KpmRecord], sizes: Sequence[int],
             c: float = DEFAULT_C, r_max: float | None = None) -> RegretBreakdown:
    """Regret, utilization and reward of one round in a single pass."""
    groups = group_by_slice(kpms, len(specs))
    triples = tuple(slice_regret(s, g) for s, g in zip(specs, groups))
    weighted = tuple(weighted_slice_regret(s, t) for s, t in zip(specs, triples))
    r = float(sum(weighted))
    u = utilization(sizes, c)
    raw, norm = reward(r, u, float(len(specs)) if r_max is None else r_max)
    return RegretBreakdown(triples, r, u, raw, norm, weighted)


def _largest_remainder(quotas: np.ndarray, total: int) -> np.ndarray:
    base = np.floor(quotas).astype(np.int64)
    short = int(total - base.sum())
    if short > 0:
        rem = quotas - base
        # stable sort keeps the lowest slice id first among equal remainders
        order = np.argsort(-rem, kind="stable")
        base[order[:short]] += 1
    return base


def action_to_allocation(ratios: Sequence[float], n_rb: int, min_prb: int = 1) -> Allocation:
    """Map per-slice PRB ratios to contiguous grants honouring the PRB budget."""
    ratios = np.clip(np.asarray(ratios, dtype=np.float64), 0.0, 1.0)
    k = ratios.shape[0]
    if k < 1:
        raise ConfigurationError("need at least one slice")
    if n_rb < k * min_prb:
        raise InfeasibleConfigurationError(
            f"N_rb={n_rb} cannot give {k} slices at least {min_prb} PRBs each")
    sizes = np.maximum(min_prb, np.floor(ratios * n_rb + 0.5).astype(np.int64))
    if sizes.sum() > n_rb:
        extra = (sizes - min_prb).astype(np.float64)
        spare = n_rb - k * min_prb
        quotas = extra * spare / extra.sum()
        sizes = min_prb + _largest_remainder(quotas, spare)
    return Allocation.from_sizes(sizes)


def equal_split(k: int, n_rb: int, min_prb: int = 1) -> Allocation:
    return action_to_allocation(np.full(k, 1.0 / k), n_rb, min_prb)


def integerize(weights: Sequence[float], n_rb: int, min_prb: int = 1) -> Allocation:
    """Split the whole band proportionally to ``weights`` (largest remainder, floored)."""
    w = np.asarray(weights, dtype=np.float64)
    k = w.shape[0]
    if n_rb < k * min_prb:
        raise InfeasibleConfigurationError(
            f"N_rb={n_rb} cannot give {k} slices at least {min_prb} PRBs each")
    if w.sum() <= 0:
        w = np.ones(k)
    pinned = np.zeros(k, dtype=bool)
    while True:
        free = n_rb - min_prb * pinned.sum()
        quotas = np.where(pinned, 0.0, w) / w[~pinned].sum() * free
        low = ~pinned & (quotas < min_prb)
        if not low.any():
            break
        pinned |= low
    sizes = _largest_remainder(quotas, free)
    sizes[pinned] = min_prb
    return Allocation.from_sizes(sizes)
