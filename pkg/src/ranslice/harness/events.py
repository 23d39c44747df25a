"""Scenario events and slice-weight presets.

Event grammar (one event per string)::

    arrival:ROUND:slice=K,rate=R[,snr=S][,id=I]
    departure:ROUND:id=I
    demand:ROUND:id=I,rate=R

Rates are Mbps. A demand step holds until the session's next scheduled
change point.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from ..core import DEFAULT_WEIGHTS
from ..ransim import Scenario, ScenarioError, SessionTemplate

EVENT_KINDS = ("arrival", "departure", "demand")
_FIELDS = {
    "arrival": ({"slice", "rate"}, {"snr", "id"}),
    "departure": ({"id"}, set()),
    "demand": ({"id", "rate"}, set()),
}


@dataclass(frozen=True)
class Event:
    kind: str
    round: int
    slice: int | None = None
    rate: float | None = None
    snr: float = 22.0
    id: int | None = None


def parse_event(text: str) -> Event:
    parts = text.strip().split(":", 2)
    if len(parts) < 2 or parts[0] not in EVENT_KINDS:
        raise ScenarioError("event", f"cannot parse {text!r}; expected KIND:ROUND:key=value,...")
    kind = parts[0]
    try:
        rnd = int(parts[1])
    except ValueError:
        raise ScenarioError("event", f"bad round {parts[1]!r} in {text!r}") from None
    if rnd < 0:
        raise ScenarioError("event", f"negative round in {text!r}")
    kv = {}
    if len(parts) == 3 and parts[2]:
        for item in parts[2].split(","):
            key, sep, val = item.partition("=")
            if not sep:
                raise ScenarioError("event", f"expected key=value, got {item!r}")
            kv[key.strip()] = val.strip()
    need, opt = _FIELDS[kind]
    if need - set(kv):
        raise ScenarioError("event", f"{kind} needs {sorted(need - set(kv))}")
    if set(kv) - need - opt:
        raise ScenarioError("event", f"{kind} does not take {sorted(set(kv) - need - opt)}")
    try:
        return Event(kind, rnd,
                     slice=int(kv["slice"]) if "slice" in kv else None,
                     rate=float(kv["rate"]) if "rate" in kv else None,
                     snr=float(kv.get("snr", 22.0)),
                     id=int(kv["id"]) if "id" in kv else None)
    except ValueError as exc:
        raise ScenarioError("event", f"{text!r}: {exc}") from None


def inject_event(scenario: Scenario, event: Event | str) -> Scenario:
    """Return a copy of ``scenario`` with ``event`` applied."""
    ev = parse_event(event) if isinstance(event, str) else event
    sc = scenario.copy()
    if ev.kind == "arrival":
        sid = ev.id if ev.id is not None else max((t.id for t in sc.sessions), default=-1) + 1
        if any(t.id == sid for t in sc.sessions):
            raise ScenarioError("event", f"session id {sid} already exists")
        sc.sessions.append(SessionTemplate(sid, ev.slice, ev.snr, [(ev.round, ev.rate)],
                                           arrival=ev.round))
    else:
        t = sc.session(ev.id)
        if ev.kind == "departure":
            t.departure = max(ev.round, t.arrival)
        else:
            keep = [(a, r) for a, r in t.profile if a != ev.round]
            t.profile = sorted(keep + [(ev.round, ev.rate)])
    sc.validate()
    return sc


# -- slice-weight presets --------------------------------------------------

WEIGHT_CASES = ("A", "B", "C", "D")
PERTURB_DELTA = 0.2
_COMPONENTS = {"tp": "weight_tp", "delay": "weight_delay", "rel": "weight_rel"}


def weights_case(scenario: Scenario, case: str) -> Scenario:
    """Case A: every slice on the base weights. Cases B-D double slice 0, 1 or 2."""
    case = case.upper()
    if case not in WEIGHT_CASES:
        raise ScenarioError("weights_case", f"unknown case {case!r}")
    boosted = WEIGHT_CASES.index(case) - 1
    sc = scenario.copy()
    for i, s in enumerate(sc.slices):
        f = 2.0 if i == boosted else 1.0
        sc.slices[i] = replace(s, weight_tp=f * DEFAULT_WEIGHTS[0],
                               weight_delay=f * DEFAULT_WEIGHTS[1],
                               weight_rel=f * DEFAULT_WEIGHTS[2])
    return sc


def perturb_weights(scenario: Scenario, spec: str, delta: float = PERTURB_DELTA) -> Scenario:
    """Shift one weight component of every slice, e.g. ``"delay-"`` or ``"tp+"``."""
    comp, sign = spec[:-1], spec[-1:]
    if comp not in _COMPONENTS or sign not in "+-" or not sign:
        raise ScenarioError("perturb", f"expected one of tp/delay/rel followed by +/-, got {spec!r}")
    d = delta if sign == "+" else -delta
    sc = scenario.copy()
    attr = _COMPONENTS[comp]
    for i, s in enumerate(sc.slices):
        sc.slices[i] = replace(s, **{attr: getattr(s, attr) + d})
    return sc


def perturbation_specs() -> list[str]:
    return [f"{c}{s}" for c in _COMPONENTS for s in "+-"]
