"""Clipped-surrogate PPO over the GCN + MLP actor-critic."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .. import kernels
from ..core import Allocation, KpmRecord, group_by_slice
from ..gcn import N_FEATURES, GraphBatch, normalize_adjacency
from .networks import (LOG_SQRT_2PI, NumericalHealthError, Params, all_finite, backward,
                       copy_params, forward)

PENALTY_MODES = ("mask", "skip", "full")


@dataclass(frozen=True)
class Hyper:
    gamma: float = 0.95
    lam: float = 0.2
    clip: float = 0.2
    lr: float = 0.005
    epochs: int = 16
    minibatch: int = 10
    rollout: int = 40
    value_coef: float = 1.0
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    penalty: float = -0.2  # in normalized reward units
    penalty_mode: str = "mask"
    penalty_enabled: bool = True
    min_rb: int = 5
    delay_cap_ms: float = 1000.0

    def __post_init__(self):
        if self.penalty_mode not in PENALTY_MODES:
            raise ValueError(f"penalty_mode must be one of {PENALTY_MODES}")
        if not (0 <= self.gamma <= 1 and 0 <= self.lam <= 1):
            raise ValueError("gamma and lambda must lie in [0, 1]")


@dataclass
class Transition:
    a_hat: np.ndarray
    h0: np.ndarray
    pool: np.ndarray
    state: np.ndarray
    raw: np.ndarray
    ratios: np.ndarray
    log_prob: float
    value: float
    reward: float = 0.0
    penalty: bool = False
    round: int = 0
    regret: float = 0.0


@dataclass
class RolloutBuffer:
    transitions: list[Transition] = field(default_factory=list)
    bootstrap: float = 0.0

    def __len__(self) -> int:
        return len(self.transitions)

    def append(self, tr: Transition) -> None:
        if self.transitions and tr.round != self.transitions[-1].round + 1:
            raise ValueError("rollout rounds must be contiguous")
        self.transitions.append(tr)

    def clear(self) -> None:
        self.transitions = []
        self.bootstrap = 0.0


# -- sampling --------------------------------------------------------------

def gaussian_log_prob(x, mu, sigma) -> np.ndarray:
    """Summed independent Gaussian log-density over the last axis."""
    z = (np.asarray(x) - mu) / sigma
    return np.sum(-0.5 * z * z - np.log(sigma) - LOG_SQRT_2PI, axis=-1)


def sample_action(mu, sigma, rng: np.random.Generator):
    """Returns ``(raw, clipped, log_prob)``; the density is taken before clipping."""
    mu = np.asarray(mu, dtype=np.float64)
    raw = mu + np.asarray(sigma) * rng.standard_normal(mu.shape)
    return raw, np.clip(raw, 0.0, 1.0), float(gaussian_log_prob(raw, mu, sigma))


# -- advantages ------------------------------------------------------------

def gae(rewards, values, bootstrap: float, gamma: float, lam: float):
    """Backward GAE recursion. Returns ``(advantages, returns)``."""
    r = np.ascontiguousarray(rewards, dtype=np.float64)
    v = np.ascontiguousarray(values, dtype=np.float64)
    if r.shape != v.shape:
        raise ValueError(f"rewards {r.shape} and values {v.shape} differ in length")
    if r.shape[0] == 0:
        return np.zeros(0), np.zeros(0)
    adv = kernels.gae_advantages(r, v, float(bootstrap), float(gamma), float(lam))
    return adv, adv + v


def normalize(adv: np.ndarray, weights: np.ndarray | None = None,
              std_floor: float = 1e-8) -> np.ndarray:
    """Zero mean, unit std. Statistics come from entries with non-zero ``weights``."""
    ref = adv if weights is None else adv[np.asarray(weights) > 0]
    if ref.shape[0] == 0:
        return np.zeros_like(adv)
    if ref.shape[0] < 2:
        return adv - ref.mean()
    return (adv - ref.mean()) / (ref.std() + std_floor)


# -- loss ------------------------------------------------------------------

@dataclass
class Minibatch:
    batch: GraphBatch
    raw: np.ndarray  # (B, K)
    old_log_prob: np.ndarray  # (B,)
    advantages: np.ndarray  # (B,)
    returns: np.ndarray  # (B,)
    actor_mask: np.ndarray  # (B,) 1 = counts toward the actor term

    def __len__(self) -> int:
        return self.raw.shape[0]


@dataclass
class LossInfo:
    loss: float
    actor: float
    critic: float
    clip_frac: float
    ratio: np.ndarray


def ppo_loss(params: Mapping[str, np.ndarray], mb: Minibatch, clip: float = 0.2,
             value_coef: float = 1.0) -> tuple[LossInfo, Params]:
    """Clipped surrogate plus squared value error, with gradients for every parameter."""
    fwd = forward(params, mb.batch)
    mu, sigma, value = fwd.mu, fwd.sigma, fwd.value
    diff = mb.raw - mu
    logp = gaussian_log_prob(mb.raw, mu, sigma)
    ratio = np.exp(logp - mb.old_log_prob)
    clipped = np.clip(ratio, 1.0 - clip, 1.0 + clip)
    a = mb.advantages
    unclipped_wins = ratio * a <= clipped * a
    surr = np.where(unclipped_wins, ratio * a, clipped * a)
    n_act = max(float(mb.actor_mask.sum()), 1.0)
    actor = -float(np.sum(mb.actor_mask * surr)) / n_act
    verr = value - mb.returns
    critic = float(np.mean(verr * verr))
    loss = actor + value_coef * critic
    if not np.isfinite(loss):
        raise NumericalHealthError("non-finite PPO loss")

    # d loss / d logp; the clipped branch is flat in the ratio
    d_logp = -(mb.actor_mask * np.where(unclipped_wins, a, 0.0) * ratio) / n_act
    d_mu = d_logp[:, None] * diff / sigma ** 2
    d_sigma = np.sum(d_logp[:, None] * (diff ** 2 / sigma ** 3 - 1.0 / sigma), axis=0)
    d_value = value_coef * 2.0 * verr / len(mb)
    grads = backward(params, fwd, d_mu, d_sigma, d_value)
    if not all(np.all(np.isfinite(g)) for g in grads.values() if g is not None):
        raise NumericalHealthError("non-finite gradient")
    clip_frac = float(np.mean(np.abs(ratio - 1.0) > clip))
    return LossInfo(loss, actor, critic, clip_frac, ratio), grads


# -- optimizer -------------------------------------------------------------

class Adam:
    def __init__(self, params: Mapping[str, np.ndarray], lr: float = 0.005,
                 betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, betas[0], betas[1], eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: Params, grads: Mapping[str, np.ndarray | None],
             only: Sequence[str] | None = None) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for name in (only if only is not None else params):
            g = grads.get(name)
            if g is None:
                continue
            self.m[name] = self.b1 * self.m[name] + (1.0 - self.b1) * g
            self.v[name] = self.b2 * self.v[name] + (1.0 - self.b2) * g * g
            params[name] = params[name] - self.lr * (self.m[name] / c1) / (
                np.sqrt(self.v[name] / c2) + self.eps)

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for k in self.m:
            out[f"adam_m/{k}"] = self.m[k]
            out[f"adam_v/{k}"] = self.v[k]
        return out


# -- update ----------------------------------------------------------------

@dataclass
class UpdateStats:
    loss: float = float("nan")
    actor: float = float("nan")
    critic: float = float("nan")
    clip_frac: float = float("nan")
    ok: bool = True
    error: str = ""


def _buffer_arrays(buf: RolloutBuffer, hyper: Hyper):
    trs = buf.transitions
    rewards = np.array([t.reward for t in trs])
    values = np.array([t.value for t in trs])
    adv, ret = gae(rewards, values, buf.bootstrap, hyper.gamma, hyper.lam)
    # skipped transitions still shape the advantages of their neighbours
    if hyper.penalty_mode == "skip":
        idx = [i for i, t in enumerate(trs) if not t.penalty]
    else:
        idx = list(range(len(trs)))
    adv, ret = adv[idx], ret[idx]
    sel = [trs[i] for i in idx]
    if not sel:
        return None
    if hyper.penalty_mode == "mask":
        mask = np.array([0.0 if t.penalty else 1.0 for t in sel])
    else:
        mask = np.ones(len(sel))
    adv = normalize(adv, mask)
    batch = GraphBatch(np.stack([t.a_hat for t in sel]), np.stack([t.h0 for t in sel]),
                       np.stack([t.pool for t in sel]))
    raw = np.stack([t.raw for t in sel])
    old = np.array([t.log_prob for t in sel])
    return batch, raw, old, adv, ret, mask


def update(params: Params, buf: RolloutBuffer, hyper: Hyper, opt: Adam,
           rng: np.random.Generator) -> tuple[Params, UpdateStats]:
    """Run the PPO epochs on a private copy.

    On a numerical-health failure the input parameters are returned untouched.
    The caller owns clearing the buffer.
    """
    stats = UpdateStats()
    if len(buf) == 0:
        return params, stats
    work = copy_params(params)
    backup_m = {k: v.copy() for k, v in opt.m.items()}
    backup_v = {k: v.copy() for k, v in opt.v.items()}
    backup_t = opt.t
    try:
        arrays = _buffer_arrays(buf, hyper)
        if arrays is None:
            return params, stats
        batch, raw, old, adv, ret, mask = arrays
        n = raw.shape[0]
        losses = []
        for _ in range(hyper.epochs):
            order = rng.permutation(n)
            for lo in range(0, n, hyper.minibatch):
                ix = order[lo:lo + hyper.minibatch]
                mb = Minibatch(batch.take(ix), raw[ix], old[ix], adv[ix], ret[ix], mask[ix])
                info, grads = ppo_loss(work, mb, hyper.clip, hyper.value_coef)
                opt.step(work, grads)
                losses.append((info.loss, info.actor, info.critic, info.clip_frac))
        if not all_finite(work):
            raise NumericalHealthError("non-finite parameters after update")
    except NumericalHealthError as exc:
        opt.m, opt.v, opt.t = backup_m, backup_v, backup_t
        return params, UpdateStats(ok=False, error=str(exc))
    last = np.mean(np.array(losses[-max(1, n // hyper.minibatch):]), axis=0)
    return work, UpdateStats(*map(float, last))


# -- penalty ---------------------------------------------------------------

def penalty_triggered(kpms: Sequence[KpmRecord], allocation: Allocation, k: int,
                      min_rb: int = 5, delay_cap_ms: float = 1000.0,
                      prev_kpms: Sequence[KpmRecord] | None = None) -> bool:
    """Starved slice, or a session whose delay just reached the cap.

    A slice counts as backlogged when any of its sessions reports queued
    traffic (non-zero delay) or used PRBs. With ``prev_kpms`` given, the cap
    trigger fires only on the round the session reaches it.
    """
    groups = group_by_slice(kpms, k)
    if allocation.shared:
        sizes = [allocation.total] * k
    else:
        sizes = list(allocation.sizes)
    for sid, g in enumerate(groups):
        busy = [r for r in g if r.delay > 0 or r.prbs_used > 0]
        if busy and sizes[sid] < min_rb * len(g):
            return True
    before = {r.session_id: r.delay for r in prev_kpms} if prev_kpms is not None else {}
    for r in kpms:
        if r.delay >= delay_cap_ms and before.get(r.session_id, 0.0) < delay_cap_ms:
            return True
    return False


def apply_penalty(tr: Transition, kpms: Sequence[KpmRecord], allocation: Allocation, k: int,
                  hyper: Hyper, prev_kpms: Sequence[KpmRecord] | None = None) -> Transition:
    if hyper.penalty_enabled and penalty_triggered(kpms, allocation, k, hyper.min_rb, hyper.delay_cap_ms, prev_kpms):
        tr.reward = hyper.penalty
        tr.penalty = True
    return tr


# -- warm-up ---------------------------------------------------------------

def synthetic_batch(rng: np.random.Generator, n: int, k: int, n_max: int = 16,
                    max_sessions: int | None = None) -> GraphBatch:
    """Random bipartite graphs with uniform [0, 1] session features."""
    max_sessions = n_max if max_sessions is None else max_sessions
    nodes = n_max + k
    a_hat = np.zeros((n, nodes, nodes))
    h0 = np.zeros((n, nodes, N_FEATURES))
    pool = np.zeros((n, k, nodes))
    for b in range(n):
        m = int(rng.integers(1, max_sessions + 1))
        member = rng.integers(0, k, size=m)
        adj = np.zeros((nodes, nodes))
        for i, s in enumerate(member):
            adj[i, n_max + s] = adj[n_max + s, i] = 1.0
            pool[b, s, i] = 1.0
        h0[b, :m] = rng.uniform(0.0, 1.0, size=(m, N_FEATURES))
        a_hat[b] = normalize_adjacency(adj)
        cnt = pool[b].sum(axis=1, keepdims=True)
        pool[b] = np.divide(pool[b], cnt, out=np.zeros_like(pool[b]), where=cnt > 0)
    return GraphBatch(a_hat, h0, pool)


def warmup(params: Params, rounds: int, k: int, rng: np.random.Generator,
           hyper: Hyper = Hyper(), sigma_target: float = 0.1, n_max: int = 16) -> Params:
    """Supervised pre-training of the actor toward the equal split.

    Squared error of mu against 1/K and of sigma against ``sigma_target`` over
    ``rounds`` synthetic states, ``hyper.epochs`` passes in minibatches.
    """
    if rounds <= 0:
        return params
    work = copy_params(params)
    batch = synthetic_batch(rng, rounds, k, n_max)
    opt = Adam(work, hyper.lr, hyper.adam_betas, hyper.adam_eps)
    actor_names = [n for n in work if n.startswith("actor/") or n.startswith("gcn/")]
    target = 1.0 / k
    for _ in range(hyper.epochs):
        order = rng.permutation(rounds)
        for lo in range(0, rounds, hyper.minibatch):
            ix = order[lo:lo + hyper.minibatch]
            fwd = forward(work, batch.take(ix))
            b = len(ix)
            d_mu = 2.0 * (fwd.mu - target) / b
            d_sigma = 2.0 * (fwd.sigma - sigma_target)
            grads = backward(work, fwd, d_mu, d_sigma, np.zeros(b))
            opt.step(work, grads, only=actor_names)
    return work
