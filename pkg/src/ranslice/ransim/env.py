"""Round-based multi-slice RAN: traffic, per-slice MAC scheduling and KPM synthesis.

Timing model. Round ``t`` spans ``[t*T, (t+1)*T)`` ms. Traffic offered in a
round arrives uniformly over it and is stored as one fluid packet
``[bytes, first_arrival_ms, last_arrival_ms]``. A session granted ``p`` PRBs
is served at the constant rate ``p * capacity / T`` for the whole round, so
the byte at FIFO position ``x`` departs at ``max(t*T + x / rate, arrival(x))``.
Mean sojourn of the bytes delivered in a round is integrated exactly from
that piecewise-linear curve.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .. import kernels
from ..core import Allocation, ConfigurationError, KpmRecord
from .channel import (ChannelState, cqi_to_efficiency, prb_capacity, step_channel)
from .scenario import Scenario, SessionTemplate

POLICY_CODES = {
    "proportional-fair": kernels.POLICY_PF,
    "round-robin": kernels.POLICY_RR,
    "max-throughput": kernels.POLICY_MT,
    "earliest-deadline-first": kernels.POLICY_EDF,
}

MAX_TX_POWER_DBM = 23.0


class ProtocolError(ConfigurationError):
    """An allocation does not match the environment's slice layout."""


@dataclass
class SessionState:
    session_id: int
    slice_id: int
    template: SessionTemplate
    channel: ChannelState
    chan_rng: np.random.Generator
    tx_rng: np.random.Generator
    queue: deque = field(default_factory=deque)
    avg_rate: float = 0.0  # PF exponential average, bytes per round
    active: bool = True
    offered: float = 0.0
    delivered: float = 0.0
    dropped: float = 0.0

    @property
    def backlog(self) -> float:
        return float(sum(p[0] for p in self.queue))

    def demand_rate(self, rnd: int) -> float:
        return self.template.rate_at(rnd) if self.active else 0.0


@dataclass
class SessionRound:
    """Raw per-session outcome of one scheduling round."""

    prbs: int = 0
    used: int = 0
    drained: float = 0.0
    delivered: float = 0.0
    blocks: int = 0
    failed: int = 0
    sojourn_sum: float = 0.0
    hol_age: float = 0.0
    dropped: float = 0.0


def bytes_per_round(rate_mbps: float, round_ms: float) -> float:
    return rate_mbps * round_ms * 125.0


def generate_traffic(session: SessionState, rnd: int, round_ms: float) -> float:
    """Enqueue the offered bytes of round ``rnd``; returns the byte count."""
    if not session.active:
        return 0.0
    b = bytes_per_round(session.demand_rate(rnd), round_ms)
    if b > 0:
        t0 = rnd * round_ms
        session.queue.append([b, t0, t0 + round_ms])
        session.offered += b
    return b


def _positive_integral(a: float, b: float, x: float) -> float:
    """Integral of max(a + b*y, 0) for y in [0, x]."""
    if x <= 0:
        return 0.0
    end = a + b * x
    if a >= 0 and end >= 0:
        return 0.5 * x * (a + end)
    if a <= 0 and end <= 0:
        return 0.0
    root = -a / b
    if a > 0:
        return 0.5 * a * root
    return 0.5 * end * (x - root)


def pop_delivered(queue: deque, amount: float, t0: float, rate: float) -> float:
    """Remove ``amount`` bytes from the FIFO head; return their summed sojourn (byte*ms)."""
    total = 0.0
    pos = 0.0
    left = amount
    while left > 1e-9 and queue:
        pkt = queue[0]
        b, s, e = pkt
        x = min(b, left)
        slope = (e - s) / b  # arrival ms per byte inside the packet
        # sojourn(y) = max(t0 + (pos + y)/rate - (s + y*slope), 0)
        total += _positive_integral(t0 + pos / rate - s, 1.0 / rate - slope, x)
        if x >= b - 1e-9:
            queue.popleft()
        else:
            pkt[0] = b - x
            pkt[1] = s + x * slope
        pos += x
        left -= x
    return total


def discard_old(queue: deque, cutoff: float) -> float:
    """Drop queued bytes that arrived before ``cutoff`` ms; return bytes dropped."""
    dropped = 0.0
    while queue:
        b, s, e = queue[0]
        if e <= cutoff:
            dropped += b
            queue.popleft()
        elif s < cutoff:
            cut = b * (cutoff - s) / (e - s)
            queue[0][0] = b - cut
            queue[0][1] = cutoff
            dropped += cut
            break
        else:
            break
    return dropped


def schedule_slice(sessions: list[SessionState], grant: int, policy: str, round_ms: float,
                   cap_bytes: np.ndarray, beta: float, rr_ptr: int = 0,
                   deadline_ms: np.ndarray | None = None):
    """Distribute ``grant`` PRBs among ``sessions``.

    Returns ``(prbs, used, drained, rr_ptr)``, arrays aligned with ``sessions``.
    """
    n = len(sessions)
    if n == 0:
        z = np.zeros(0, dtype=np.int64)
        return z, z, np.zeros(0), rr_ptr
    backlog = np.array([s.backlog for s in sessions], dtype=np.float64)
    avg = np.array([s.avg_rate for s in sessions], dtype=np.float64)
    counts = [len(s.queue) for s in sessions]
    ptr = np.concatenate(([0], np.cumsum(counts))).astype(np.int64)
    flat = [p for s in sessions for p in s.queue]
    pkt = np.array(flat, dtype=np.float64).reshape(-1, 3)
    if deadline_ms is None:
        deadline_ms = np.zeros(n)
    return kernels.schedule_prbs(
        POLICY_CODES[policy], int(grant), np.ascontiguousarray(cap_bytes, dtype=np.float64),
        backlog, avg, float(beta), int(rr_ptr) % n, np.asarray(deadline_ms, dtype=np.float64),
        ptr, np.ascontiguousarray(pkt[:, 0]), np.ascontiguousarray(pkt[:, 1]),
        np.ascontiguousarray(pkt[:, 2]))


def compute_kpm(session: SessionState, res: SessionRound, round_ms: float,
                delay_cap_ms: float = 1000.0, proc_delay_ms: float = 0.0) -> KpmRecord:
    throughput = res.delivered * 8.0 / (round_ms * 1000.0)
    if res.delivered > 1e-9:
        delay = res.sojourn_sum / res.delivered + proc_delay_ms
    elif res.hol_age > 0:
        delay = res.hol_age
    else:
        delay = 0.0
    bler = res.failed / res.blocks if res.blocks else 0.0
    ch = session.channel
    return KpmRecord(
        session_id=session.session_id, slice_id=session.slice_id,
        throughput=throughput, delay=min(delay, delay_cap_ms), bler=bler,
        prbs_used=int(res.used), pusch_snr=float(ch.snr_db),
        phr=float(MAX_TX_POWER_DBM - (30.0 - ch.snr_db)), mcs=int(ch.mcs),
        current_tbs=int(res.blocks), scheduled_rbs=int(res.prbs))


class RanEnv:
    """Single-cell, single-owner round-based environment."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.reset()

    def reset(self) -> list[KpmRecord]:
        sc = self.scenario
        self.round = 0
        self.sessions: dict[int, SessionState] = {}
        self.rr_ptr = [0] * (sc.k + 1)
        self.last_results: dict[int, SessionRound] = {}
        self.dropped_departed = 0.0
        return self.initial_report()

    # -- lifecycle -----------------------------------------------------

    def _spawn(self, t: SessionTemplate) -> SessionState:
        sc = self.scenario
        chan_rng = np.random.default_rng([sc.seed, t.id, 1])
        tx_rng = np.random.default_rng([sc.seed, t.id, 2])
        std = t.noise_db / math.sqrt(1.0 - t.correlation ** 2)
        snr0 = t.mean_snr_db + std * chan_rng.standard_normal()
        ch = ChannelState.at(snr0, t.mean_snr_db, t.correlation, t.noise_db,
                             sc.radio.bler_offset_db)
        return SessionState(t.id, t.slice, t, ch, chan_rng, tx_rng)

    def _apply_lifecycle(self, rnd: int) -> None:
        for t in self.scenario.sessions:
            live = t.active_at(rnd)
            if live and t.id not in self.sessions:
                self.sessions[t.id] = self._spawn(t)
            elif not live and t.id in self.sessions:
                gone = self.sessions.pop(t.id)
                self.dropped_departed += gone.backlog
                gone.queue.clear()
                gone.active = False

    def active_sessions(self) -> list[SessionState]:
        return sorted(self.sessions.values(), key=lambda s: s.session_id)

    def initial_report(self) -> list[KpmRecord]:
        self._apply_lifecycle(self.round)
        return [compute_kpm(s, SessionRound(), self.scenario.round_ms)
                for s in self.active_sessions()]

    # -- one round -----------------------------------------------------

    def capacity_bytes(self, s: SessionState) -> float:
        r = self.scenario.radio
        bits = prb_capacity(cqi_to_efficiency(s.channel.cqi), self.scenario.round_ms,
                            r.dl_fraction, r.overhead, r.layers)
        return float(bits) / 8.0

    def step(self, allocation: Allocation) -> list[KpmRecord]:
        """Run one round under ``allocation`` and return the KPM report."""
        sc = self.scenario
        radio = sc.radio
        if allocation.shared:
            if len(allocation.sizes) != 1:
                raise ProtocolError("shared allocation must carry a single grant")
        elif len(allocation.sizes) != sc.k:
            raise ProtocolError(
                f"allocation has {len(allocation.sizes)} grants for {sc.k} slices")
        allocation.check(sc.n_rb, 1)

        rnd = self.round
        self._apply_lifecycle(rnd)
        sessions = self.active_sessions()
        for s in sessions:
            s.channel = step_channel(s.channel, s.chan_rng, radio.bler_offset_db)
        for s in sessions:
            generate_traffic(s, rnd, sc.round_ms)

        if allocation.shared:
            groups = [(sessions, allocation.sizes[0], "proportional-fair", sc.k)]
        else:
            groups = [([s for s in sessions if s.slice_id == k], allocation.sizes[k],
                       sc.slices[k].scheduler, k) for k in range(sc.k)]

        results: dict[int, SessionRound] = {}
        t0 = rnd * sc.round_ms
        t_end = t0 + sc.round_ms
        slots = int(round(sc.round_ms / 0.5))
        for members, grant, policy, key in groups:
            if not members:
                continue
            cap = np.array([self.capacity_bytes(s) for s in members])
            deadline = np.array([sc.slices[s.slice_id].delay_demand for s in members])
            prbs, used, drained, self.rr_ptr[key] = schedule_slice(
                members, grant, policy, sc.round_ms, cap, radio.pf_beta,
                self.rr_ptr[key], deadline)
            for j, s in enumerate(members):
                res = SessionRound(prbs=int(prbs[j]), used=int(used[j]),
                                   drained=float(drained[j]))
                self._transmit(s, res, cap[j], slots, t0, sc.round_ms)
                res.dropped = discard_old(s.queue, t_end - radio.discard_ms)
                s.dropped += res.dropped
                if s.queue and res.delivered <= 1e-9:
                    res.hol_age = t_end - s.queue[0][1]
                s.avg_rate = (1.0 - radio.pf_beta) * s.avg_rate + radio.pf_beta * res.drained
                results[s.session_id] = res

        self.last_results = results
        self.round += 1
        return [compute_kpm(s, results[s.session_id], sc.round_ms, radio.delay_cap_ms,
                            radio.proc_delay_ms) for s in sessions]

    def _transmit(self, s: SessionState, res: SessionRound, cap: float, slots: int,
                  t0: float, round_ms: float) -> None:
        if res.drained <= 1e-9 or res.prbs == 0:
            return
        per_slot = res.prbs * cap / slots
        res.blocks = min(slots, max(1, math.ceil(res.drained / per_slot - 1e-9)))
        res.failed = int(s.tx_rng.binomial(res.blocks, s.channel.bler_prob))
        ok = 1.0 - res.failed / res.blocks
        res.delivered = res.drained * ok
        if res.delivered <= 1e-9:
            return
        rate = res.prbs * cap * ok / round_ms  # bytes per ms actually delivered
        res.sojourn_sum = pop_delivered(s.queue, res.delivered, t0, rate)
        s.delivered += res.delivered

    # -- bookkeeping -----------------------------------------------------

    def conservation(self, session_id: int) -> tuple[float, float, float, float]:
        """(offered, delivered, queued, dropped) byte totals for a live session."""
        s = self.sessions[session_id]
        return s.offered, s.delivered, s.backlog, s.dropped
