"""The two endpoint loops: the RAN side drives rounds, the xApp side answers.

Late-command policy (RAN side): the RAN waits up to ``deadline_ms`` for the
command answering the current report. Without one it reuses the allocation
of the previous round, but a command is reused for at most one extra round;
after that the fallback allocation applies. Commands for rounds already
past are dropped. ``deadline_ms=None`` waits indefinitely (lock-step mode,
used for reproducible runs).
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from ..core import Allocation, KpmRecord, SliceSpec
from .messages import (Ack, Bye, DecodeError, KpmReport, SliceCommand, Subscribe, decode,
                       encode, specs_digest)
from .transport import Transport, TransportClosed

log = logging.getLogger(__name__)

FRESH, REUSED, FALLBACK = "fresh", "reused", "fallback"


@dataclass
class RanStatus:
    rounds: int = 0
    fresh: int = 0
    reused: int = 0
    fallback: int = 0
    stale_dropped: int = 0
    reason: str = "done"
    sources: list[str] = field(default_factory=list)


@dataclass
class RoundInfo:
    round: int
    allocation: Allocation
    source: str
    report: list[KpmRecord]


def run_ran_endpoint(env, transport: Transport, deadline_ms: Optional[float], rounds: int,
                     specs: Sequence[SliceSpec], fallback: Allocation,
                     on_round: Callable[[RoundInfo], None] | None = None,
                     report: Sequence[KpmRecord] | None = None) -> RanStatus:
    """Run ``rounds`` rounds of ``env`` under commands arriving on ``transport``."""
    st = RanStatus()
    digest = specs_digest(specs)
    timeout = None if deadline_ms is None else deadline_ms / 1000.0
    report = list(env.reset() if report is None else report)
    prev: Allocation | None = None
    prev_source = FALLBACK
    try:
        transport.send_line(encode(Subscribe(float(env.scenario.round_ms))))
        for rnd in range(rounds):
            transport.send_line(encode(KpmReport(rnd, tuple(report), digest)))
            cmd = _await_command(transport, rnd, timeout, st)
            if cmd is not None:
                alloc, source = cmd.allocation, FRESH
            elif prev is not None and prev_source == FRESH:
                alloc, source = prev, REUSED
            else:
                alloc, source = fallback, FALLBACK
            report = env.step(alloc)
            setattr(st, source, getattr(st, source) + 1)
            st.sources.append(source)
            st.rounds = rnd + 1
            prev, prev_source = alloc, source
            if on_round is not None:
                on_round(RoundInfo(rnd, alloc, source, report))
        transport.send_line(encode(Bye()))
    except TransportClosed as exc:
        st.reason = f"transport closed after {st.rounds} rounds: {exc}"
    except _PeerBye:
        st.reason = f"peer said bye after {st.rounds} rounds"
    return st


class _PeerBye(Exception):
    pass


def _await_command(transport: Transport, rnd: int, timeout: Optional[float],
                   st: RanStatus) -> SliceCommand | None:
    end = None if timeout is None else time.monotonic() + timeout
    while True:
        wait = None if end is None else max(end - time.monotonic(), 0.0)
        line = transport.recv_line(wait)
        if line is None:
            return None
        try:
            msg = decode(line)
        except DecodeError as exc:
            log.warning("RAN: dropping undecodable line: %s", exc)
            continue
        if isinstance(msg, Bye):
            raise _PeerBye()
        if isinstance(msg, SliceCommand):
            if msg.round == rnd:
                return msg
            st.stale_dropped += 1
        if end is not None and time.monotonic() >= end:
            return None


@dataclass
class XappStatus:
    decisions: int = 0
    decode_errors: int = 0
    reason: str = "done"
    decision_us: list[float] = field(default_factory=list)


def run_xapp_endpoint(agent, transport: Transport,
                      on_decision: Callable[[int, Allocation, float], None] | None = None,
                      ack: bool = False) -> XappStatus:
    """Answer every KPM report with a slicing command from ``agent.decide``.

    The decision time runs from the decoded report to the sent command;
    ``agent.after_reply`` (training) runs afterwards and is excluded.
    """
    st = XappStatus()
    after = getattr(agent, "after_reply", None)
    while True:
        try:
            line = transport.recv_line(None)
        except TransportClosed as exc:
            st.reason = f"transport closed: {exc}"
            break
        t0 = time.perf_counter()
        try:
            msg = decode(line)
        except DecodeError as exc:
            st.decode_errors += 1
            log.warning("xApp: skipping undecodable line: %s", exc)
            continue
        if isinstance(msg, Bye):
            st.reason = "peer said bye"
            break
        if not isinstance(msg, KpmReport):
            continue
        alloc = agent.decide(list(msg.records), msg.round)
        try:
            transport.send_line(encode(SliceCommand(msg.round, alloc)))
            if ack:
                transport.send_line(encode(Ack(msg.round)))
        except TransportClosed as exc:
            st.reason = f"transport closed: {exc}"
            break
        dt = (time.perf_counter() - t0) * 1e6
        st.decisions += 1
        st.decision_us.append(dt)
        if on_decision is not None:
            on_decision(msg.round, alloc, dt)
        if after is not None:
            after()
    return st
