"""Online slicing agent: decision path over immutable snapshots, training on a separate track."""

from __future__ import annotations

import logging
import queue
import threading
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .. import checkpoint
from ..core import Allocation, KpmRecord, SliceSpec, action_to_allocation, evaluate
from ..gcn import FeatureScaler, GraphBatch, build_graph
from .algo import Adam, Hyper, RolloutBuffer, Transition, apply_penalty, sample_action, update, warmup
from .networks import Params, checksum, copy_params, forward, init_params

log = logging.getLogger(__name__)

TRAIN_LOG_COLUMNS = ("round", "reward", "regret", "loss", "actor_loss", "critic_loss",
                     "clip_frac", "sigma_mean", "mu_mean", "ratio_mean", "penalties", "ok")


class SnapshotError(RuntimeError):
    pass


@dataclass(frozen=True)
class Snapshot:
    version: int
    params: Params
    crc: int

    @classmethod
    def of(cls, version: int, params: Params) -> "Snapshot":
        frozen = copy_params(params)
        for arr in frozen.values():
            arr.setflags(write=False)
        return cls(version, frozen, checksum(frozen))

    def verify(self) -> None:
        if checksum(self.params) != self.crc:
            raise SnapshotError(f"snapshot {self.version} failed its checksum")


@dataclass
class AgentConfig:
    seed: int = 0
    hidden: int = 32
    gcn_layers: int = 3
    embedding: int = 12
    shared_encoder: bool = True
    n_max: int = 16
    warmup_states: int = 500
    sigma0: float = 0.2
    async_train: bool = False
    verify_snapshots: bool = True
    hyper: Hyper = field(default_factory=Hyper)

    def gcn_widths(self) -> tuple[int, ...]:
        return (12,) * self.gcn_layers + (self.embedding,)


class XSliceAgent:
    """GCN-encoded PPO agent emitting per-slice PRB ratios.

    ``decide`` runs the policy on the latest snapshot, closes the previous
    transition with the reward measured in ``report`` and queues full
    rollouts for training. In synchronous mode training runs in
    ``after_reply``, which the xApp endpoint calls once the command is sent.
    """

    name = "xslice"

    def __init__(self, specs: Sequence[SliceSpec], n_rb: int, r_max: float,
                 config: AgentConfig | None = None, min_prb: int = 1,
                 scaler: FeatureScaler | None = None, params: Params | None = None):
        self.specs = list(specs)
        self.k = len(self.specs)
        self.n_rb, self.min_prb, self.r_max = n_rb, min_prb, float(r_max)
        self.cfg = config or AgentConfig()
        self.hyper = self.cfg.hyper
        self.scaler = scaler or FeatureScaler(n_rb=n_rb)
        root = np.random.SeedSequence([self.cfg.seed, 0xA6E7])
        init_ss, warm_ss, act_ss, train_ss = root.spawn(4)
        if params is None:
            params = init_params(self.k, np.random.default_rng(init_ss), self.cfg.hidden,
                                 self.cfg.gcn_widths(), self.cfg.shared_encoder, self.cfg.sigma0)
            params = warmup(params, self.cfg.warmup_states, self.k,
                            np.random.default_rng(warm_ss), self.hyper, self.cfg.sigma0,
                            self.cfg.n_max)
        self._act_rng = np.random.default_rng(act_ss)
        self._train_rng = np.random.default_rng(train_ss)
        self._train_params = copy_params(params)
        self._opt = Adam(self._train_params, self.hyper.lr, self.hyper.adam_betas,
                         self.hyper.adam_eps)
        self._snapshot = Snapshot.of(0, self._train_params)
        self.buffer = RolloutBuffer()
        self._pending: tuple[Transition, Allocation] | None = None
        self._prev_report: list[KpmRecord] | None = None
        self._ready: list[RolloutBuffer] = []
        self.train_log: list[dict] = []
        self.updates = 0
        self._queue: queue.Queue | None = None
        self._thread: threading.Thread | None = None
        if self.cfg.async_train:
            self._queue = queue.Queue()
            self._thread = threading.Thread(target=self._train_worker, daemon=True)
            self._thread.start()

    # -- snapshot -------------------------------------------------------

    @property
    def snapshot(self) -> Snapshot:
        return self._snapshot

    def _publish(self, params: Params) -> None:
        # a single reference assignment: readers see the old or the new snapshot
        self._snapshot = Snapshot.of(self._snapshot.version + 1, params)

    # -- decision path --------------------------------------------------

    def decide(self, report: Sequence[KpmRecord], rnd: int) -> Allocation:
        snap = self._snapshot
        if self.cfg.verify_snapshots:
            snap.verify()
        graph = build_graph(report, self.specs, self.cfg.n_max, self.scaler)
        batch = GraphBatch.stack([graph])
        fwd = forward(snap.params, batch)
        mu, sigma, value = fwd.mu[0], fwd.sigma, float(fwd.value[0])
        if self._pending is not None:
            self._close(report, value)
        raw, ratios, logp = sample_action(mu, sigma, self._act_rng)
        alloc = action_to_allocation(ratios, self.n_rb, self.min_prb)
        tr = Transition(batch.a_hat[0], batch.h0[0], batch.pool[0], fwd.state[0], raw, ratios,
                        logp, value, round=rnd)
        self._pending = (tr, alloc)
        self._prev_report = list(report)
        self.last_mu, self.last_sigma = mu, sigma
        return alloc

    def _close(self, report: Sequence[KpmRecord], next_value: float) -> None:
        tr, alloc = self._pending
        br = evaluate(self.specs, report, alloc.sizes, r_max=self.r_max)
        tr.reward = br.normalized_reward
        tr.regret = br.total
        apply_penalty(tr, report, alloc, self.k, self.hyper, self._prev_report)
        if self.buffer.transitions and tr.round != self.buffer.transitions[-1].round + 1:
            self.buffer.clear()  # a gap in rounds breaks the trajectory
        self.buffer.append(tr)
        if len(self.buffer) >= self.hyper.rollout:
            self.buffer.bootstrap = next_value
            full, self.buffer = self.buffer, RolloutBuffer()
            if self._queue is not None:
                self._queue.put(full)
            else:
                self._ready.append(full)

    def after_reply(self) -> None:
        """Run pending synchronous updates (no-op in asynchronous mode)."""
        while self._ready:
            self._train(self._ready.pop(0))

    # -- training path --------------------------------------------------

    def _train(self, buf: RolloutBuffer) -> None:
        new, stats = update(self._train_params, buf, self.hyper, self._opt, self._train_rng)
        if stats.ok:
            self._train_params = new
            self._publish(new)
        else:
            log.warning("update discarded: %s", stats.error)
        self.updates += 1
        trs = buf.transitions
        # policy mean of the updated actor over the rollout's states, per slice
        states = GraphBatch(np.stack([t.a_hat for t in trs]), np.stack([t.h0 for t in trs]),
                            np.stack([t.pool for t in trs]))
        mu = forward(self._train_params, states).mu.mean(axis=0)
        self.train_log.append({
            "round": trs[-1].round,
            "reward": float(np.mean([t.reward for t in trs])),
            "regret": float(np.mean([t.regret for t in trs])),
            "loss": stats.loss, "actor_loss": stats.actor, "critic_loss": stats.critic,
            "clip_frac": stats.clip_frac,
            "sigma_mean": float(np.mean(np.logaddexp(0.0, self._train_params["actor/pre_sigma"]))),
            "mu_mean": float(mu.mean()),
            "mu": [float(m) for m in mu],
            "ratio_mean": float(np.mean(np.stack([t.ratios for t in trs]))),
            "penalties": int(sum(t.penalty for t in trs)),
            "ok": int(stats.ok),
        })

    def _train_worker(self) -> None:
        while True:
            buf = self._queue.get()
            if buf is None:
                self._queue.task_done()
                return
            try:
                self._train(buf)
            finally:
                self._queue.task_done()

    def drain(self) -> None:
        """Block until queued asynchronous updates have finished."""
        if self._queue is not None:
            self._queue.join()
        self.after_reply()

    def close(self) -> None:
        if self._queue is not None and self._thread is not None:
            self._queue.put(None)
            self._thread.join()
            self._thread = None

    # -- persistence ----------------------------------------------------

    def params(self) -> Params:
        return copy_params(self._snapshot.params)

    def save(self, path) -> None:
        meta = {"kind": "xslice", "k": self.k, "n_rb": self.n_rb, "seed": self.cfg.seed,
                "hidden": self.cfg.hidden, "gcn_layers": self.cfg.gcn_layers,
                "embedding": self.cfg.embedding, "shared_encoder": self.cfg.shared_encoder,
                "widths": list(self.cfg.gcn_widths()), "updates": self.updates,
                "snapshot": self._snapshot.version}
        checkpoint.save(path, self._snapshot.params, meta)
