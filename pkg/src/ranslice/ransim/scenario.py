"""Scenario description: slices, session templates, radio constants and traffic presets.

Scenario files are YAML key-value trees::

    seed: 7
    rounds: 2000
    round_ms: 100
    n_rb: 106
    traffic_class: medium
    radio: {dl_fraction: 0.7, overhead: 0.14, layers: 1, ...}
    slices:
      - {id: 0, name: embb, throughput_demand: 80, delay_demand: 100,
         bler_demand: 0.1, weights: [1, 0.8, 2], scheduler: proportional-fair}
    sessions:
      - {id: 0, slice: 0, mean_snr_db: 22, arrival: 0, departure: null,
         profile: [[0, 120.0], [310, 95.5]]}

The README lists every key with its unit and default.
"""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from ..core import ConfigurationError, SliceSpec

TRAFFIC_CLASSES = {
    "light": (20.0, 80.0),
    "medium": (80.0, 160.0),
    "intensive": (160.0, 220.0),
}


class ScenarioError(ConfigurationError):
    """A scenario file or dict failed validation. ``where`` names the field."""

    def __init__(self, where: str, msg: str):
        super().__init__(f"{where}: {msg}")
        self.where = where


@dataclass
class SessionTemplate:
    id: int
    slice: int
    mean_snr_db: float
    profile: list[tuple[int, float]]
    arrival: int = 0
    departure: int | None = None
    correlation: float = 0.9
    noise_db: float = 1.5

    def rate_at(self, rnd: int) -> float:
        rate = 0.0
        for start, r in self.profile:
            if start <= rnd:
                rate = r
            else:
                break
        return rate

    def active_at(self, rnd: int) -> bool:
        return self.arrival <= rnd and (self.departure is None or rnd < self.departure)


@dataclass
class RadioConfig:
    dl_fraction: float = 0.7
    overhead: float = 0.14
    layers: int = 1
    bler_offset_db: float = -8.0
    discard_ms: float = 1000.0
    delay_cap_ms: float = 1000.0
    proc_delay_ms: float = 1.0
    pf_beta: float = 0.5


@dataclass
class Scenario:
    seed: int
    rounds: int
    slices: list[SliceSpec]
    sessions: list[SessionTemplate]
    round_ms: float = 100.0
    n_rb: int = 106
    min_prb: int = 1
    traffic_class: str = "custom"
    radio: RadioConfig = field(default_factory=RadioConfig)

    def __post_init__(self):
        self.validate()

    @property
    def k(self) -> int:
        return len(self.slices)

    def validate(self) -> None:
        if self.round_ms <= 0 or abs(self.round_ms / 0.5 - round(self.round_ms / 0.5)) > 1e-9:
            raise ScenarioError("round_ms", "must be a positive multiple of the 0.5 ms slot")
        if self.n_rb < self.k * self.min_prb:
            raise ScenarioError("n_rb", f"{self.n_rb} PRBs cannot host {self.k} slices")
        for i, s in enumerate(self.slices):
            if s.id != i:
                raise ScenarioError(f"slices[{i}].id", "slice ids must be 0..K-1 in order")
        seen = set()
        for i, t in enumerate(self.sessions):
            if t.id in seen:
                raise ScenarioError(f"sessions[{i}].id", f"duplicate session id {t.id}")
            seen.add(t.id)
            if not 0 <= t.slice < self.k:
                raise ScenarioError(f"sessions[{i}].slice", f"unknown slice {t.slice}")
            if t.departure is not None and t.departure < t.arrival:
                raise ScenarioError(f"sessions[{i}].departure", "must not precede arrival")
            if not 0 <= t.correlation < 1:
                raise ScenarioError(f"sessions[{i}].correlation", "must lie in [0, 1)")
            starts = [p[0] for p in t.profile]
            if starts != sorted(starts):
                raise ScenarioError(f"sessions[{i}].profile", "change points must ascend")

    @property
    def delay_ceiling_ms(self) -> float:
        """Largest delay a session can report: the cap or the discard timer."""
        return min(self.radio.delay_cap_ms, self.radio.discard_ms)

    def regret_bound(self) -> float:
        """Upper bound of |u - r| over the scenario, used as the reward scale.

        Sums each session's worst case (nothing delivered, delay at the
        ceiling, every block failed) and never falls below K, the best
        utilization.
        """
        total = 0.0
        for t in self.sessions:
            s = self.slices[t.slice]
            total += (s.weight_tp
                      + s.weight_delay * max(self.delay_ceiling_ms - s.delay_demand, 0.0)
                      / s.delay_demand
                      + s.weight_rel * (1.0 - s.bler_demand) / s.bler_demand)
        return max(float(self.k), total)

    def session(self, sid: int) -> SessionTemplate:
        for t in self.sessions:
            if t.id == sid:
                return t
        raise ScenarioError("session", f"unknown session id {sid}")

    def copy(self) -> "Scenario":
        return copy.deepcopy(self)

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        return {
            "seed": self.seed,
            "rounds": self.rounds,
            "round_ms": self.round_ms,
            "n_rb": self.n_rb,
            "min_prb": self.min_prb,
            "traffic_class": self.traffic_class,
            "radio": asdict(self.radio),
            "slices": [
                {"id": s.id, "name": s.name, "throughput_demand": s.throughput_demand,
                 "delay_demand": s.delay_demand, "bler_demand": s.bler_demand,
                 "weights": list(s.weights), "scheduler": s.scheduler}
                for s in self.slices
            ],
            "sessions": [
                {"id": t.id, "slice": t.slice, "mean_snr_db": t.mean_snr_db,
                 "arrival": t.arrival, "departure": t.departure,
                 "correlation": t.correlation, "noise_db": t.noise_db,
                 "profile": [[int(a), float(r)] for a, r in t.profile]}
                for t in self.sessions
            ],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Scenario":
        if not isinstance(d, dict):
            raise ScenarioError("<root>", "expected a mapping")
        radio_d = d.get("radio", {}) or {}
        try:
            radio = RadioConfig(**radio_d)
        except TypeError as exc:
            raise ScenarioError("radio", str(exc)) from None
        slices = []
        for i, s in enumerate(_req(d, "slices", "<root>")):
            where = f"slices[{i}]"
            w = s.get("weights", [1.0, 0.8, 2.0])
            if len(w) != 3:
                raise ScenarioError(f"{where}.weights", "need three weights (tp, delay, rel)")
            try:
                slices.append(SliceSpec(
                    id=int(s.get("id", i)), name=str(s.get("name", "")),
                    throughput_demand=float(_req(s, "throughput_demand", where)),
                    delay_demand=float(_req(s, "delay_demand", where)),
                    bler_demand=float(_req(s, "bler_demand", where)),
                    weight_tp=float(w[0]), weight_delay=float(w[1]), weight_rel=float(w[2]),
                    scheduler=str(s.get("scheduler", "proportional-fair"))))
            except ValueError as exc:
                raise ScenarioError(where, str(exc)) from None
        sessions = []
        for i, t in enumerate(d.get("sessions", []) or []):
            where = f"sessions[{i}]"
            try:
                profile = [(int(a), float(r)) for a, r in _req(t, "profile", where)]
                sessions.append(SessionTemplate(
                    id=int(t.get("id", i)), slice=int(_req(t, "slice", where)),
                    mean_snr_db=float(_req(t, "mean_snr_db", where)), profile=profile,
                    arrival=int(t.get("arrival", 0)),
                    departure=None if t.get("departure") is None else int(t["departure"]),
                    correlation=float(t.get("correlation", 0.9)),
                    noise_db=float(t.get("noise_db", 1.5))))
            except (TypeError, ValueError) as exc:
                raise ScenarioError(where, str(exc)) from None
        try:
            return cls(seed=int(d.get("seed", 0)), rounds=int(d.get("rounds", 1000)),
                       slices=slices, sessions=sessions,
                       round_ms=float(d.get("round_ms", 100.0)), n_rb=int(d.get("n_rb", 106)),
                       min_prb=int(d.get("min_prb", 1)),
                       traffic_class=str(d.get("traffic_class", "custom")), radio=radio)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ScenarioError):
                raise
            raise ScenarioError("<root>", str(exc)) from None

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))


def _req(d: dict, key: str, where: str):
    if key not in d:
        raise ScenarioError(f"{where}.{key}", "missing required field")
    return d[key]


def load_scenario(path: str | Path) -> Scenario:
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else str(path)
        raise ScenarioError(where, getattr(exc, "problem", None) or str(exc)) from None
    return Scenario.from_dict(data)


# -- presets -------------------------------------------------------------

def default_slices(traffic_class: str = "medium") -> list[SliceSpec]:
    """eMBB-, URLLC- and mMTC-like demand triples with the default regret weights."""
    low = TRAFFIC_CLASSES.get(traffic_class, TRAFFIC_CLASSES["medium"])[0]
    return [
        SliceSpec(0, throughput_demand=low, delay_demand=100.0, bler_demand=0.1, name="embb"),
        SliceSpec(1, throughput_demand=low / 2, delay_demand=30.0, bler_demand=0.1, name="urllc"),
        SliceSpec(2, throughput_demand=low / 4, delay_demand=250.0, bler_demand=0.2, name="mmtc"),
    ]


def demand_profile(rng: np.random.Generator, lo: float, hi: float, rounds: int,
                   mean_gap: float = 100.0) -> list[tuple[int, float]]:
    """Uniform rate draws re-drawn at Poisson-spaced change points."""
    steps = [(0, float(rng.uniform(lo, hi)))]
    t = 0
    while True:
        t += 1 + int(rng.exponential(mean_gap))
        if t >= rounds:
            return steps
        steps.append((t, float(rng.uniform(lo, hi))))


# 100 MHz carrier, 4 spatial layers: a 10-phone cell in the 1 Gbps class.
# A 200 ms PDCP-style discard timer bounds queues so the cell recovers from
# overload within a couple of rounds.
_PRESET = dict(n_rb=273, radio=RadioConfig(layers=4, dl_fraction=0.8, discard_ms=200.0))
PRESET_RADIO = {"light": _PRESET, "medium": _PRESET, "intensive": _PRESET}

SESSION_SLICES = (0, 0, 0, 0, 1, 1, 1, 2, 2, 2)


def preset(traffic_class: str, seed: int = 0, rounds: int = 2000,
           n_sessions: int = 10) -> Scenario:
    """The evaluation scenario: ``n_sessions`` demand-dynamic sessions over three slices."""
    if traffic_class not in TRAFFIC_CLASSES:
        raise ScenarioError("traffic_class", f"unknown preset {traffic_class!r}")
    lo, hi = TRAFFIC_CLASSES[traffic_class]
    rng = np.random.default_rng([seed, 0x5CE7])
    sessions = []
    for i in range(n_sessions):
        sessions.append(SessionTemplate(
            id=i, slice=SESSION_SLICES[i % len(SESSION_SLICES)],
            mean_snr_db=float(rng.uniform(16.0, 28.0)),
            profile=demand_profile(rng, lo, hi, rounds)))
    extra = PRESET_RADIO[traffic_class]
    return Scenario(seed=seed, rounds=rounds, slices=default_slices(traffic_class),
                    sessions=sessions, traffic_class=traffic_class,
                    n_rb=extra["n_rb"], radio=replace(extra["radio"]))
