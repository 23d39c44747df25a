"""Bipartite session/slice graph and a dense GCN encoder with hand-written gradients.

Node layout: session slots ``0 .. n_max-1`` (real sessions first, then dummy
padding), followed by the ``K`` slice nodes. All batch functions take arrays
with a leading batch axis ``B``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import KpmRecord, SliceSpec

N_FEATURES = 12
FEATURE_NAMES = (
    "throughput", "delay", "bler", "prbs_used", "pusch_snr", "phr", "mcs",
    "current_tbs", "scheduled_rbs", "throughput_demand", "delay_demand", "bler_demand",
)


class CapacityError(ValueError):
    """More sessions than graph slots."""


@dataclass(frozen=True)
class FeatureScaler:
    """Fixed affine maps of each raw feature onto [0, 1]."""

    rate_mbps: float = 1000.0  # shared by achieved and demanded throughput
    delay_ms: float = 1000.0  # shared by measured delay and delay demand
    n_rb: int = 106
    snr_lo: float = -10.0
    snr_hi: float = 40.0
    phr_lo: float = -20.0
    phr_hi: float = 40.0
    max_tbs: int = 200

    def row(self, rec: KpmRecord, spec: SliceSpec) -> np.ndarray:
        raw = np.array([
            rec.throughput / self.rate_mbps,
            rec.delay / self.delay_ms,
            rec.bler,
            rec.prbs_used / self.n_rb,
            (rec.pusch_snr - self.snr_lo) / (self.snr_hi - self.snr_lo),
            (rec.phr - self.phr_lo) / (self.phr_hi - self.phr_lo),
            rec.mcs / 28.0,
            rec.current_tbs / self.max_tbs,
            rec.scheduled_rbs / self.n_rb,
            spec.throughput_demand / self.rate_mbps,
            spec.delay_demand / self.delay_ms,
            spec.bler_demand,
        ])
        return np.clip(raw, 0.0, 1.0)


@dataclass
class SliceGraph:
    adjacency: np.ndarray  # (N, N) 0/1
    features: np.ndarray  # (N, F0)
    membership: np.ndarray  # (N,) slice id per node, -1 for dummy slots
    n_sessions: int
    n_max: int
    k: int
    session_ids: tuple[int, ...] = ()

    @property
    def n_nodes(self) -> int:
        return self.n_max + self.k

    def pool_matrix(self) -> np.ndarray:
        """(K, N) per-slice mean over real session nodes."""
        pool = np.zeros((self.k, self.n_nodes))
        for i in range(self.n_sessions):
            pool[self.membership[i], i] = 1.0
        counts = pool.sum(axis=1, keepdims=True)
        return np.divide(pool, counts, out=np.zeros_like(pool), where=counts > 0)


def build_graph(report: Sequence[KpmRecord], specs: Sequence[SliceSpec], n_max: int = 16,
                scaler: FeatureScaler | None = None) -> SliceGraph:
    if len(report) > n_max:
        raise CapacityError(f"{len(report)} sessions exceed the {n_max} graph slots")
    scaler = scaler or FeatureScaler()
    # canonical slot order, so the encoding depends on the session set only
    report = sorted(report, key=lambda r: (r.slice_id, r.session_id))
    k = len(specs)
    n = n_max + k
    adj = np.zeros((n, n))
    feats = np.zeros((n, N_FEATURES))
    member = np.full(n, -1, dtype=np.int64)
    member[n_max:] = np.arange(k)
    for i, rec in enumerate(report):
        slice_node = n_max + rec.slice_id
        adj[i, slice_node] = adj[slice_node, i] = 1.0
        feats[i] = scaler.row(rec, specs[rec.slice_id])
        member[i] = rec.slice_id
    return SliceGraph(adj, feats, member, len(report), n_max, k,
                      tuple(r.session_id for r in report))


def normalize_adjacency(adj: np.ndarray) -> np.ndarray:
    """D^-1/2 (A + I) D^-1/2 with D the degree matrix of A + I."""
    a = adj + np.eye(adj.shape[-1])
    d = a.sum(axis=-1)
    inv = 1.0 / np.sqrt(d)
    return a * inv[..., :, None] * inv[..., None, :]


@dataclass
class GraphBatch:
    a_hat: np.ndarray  # (B, N, N)
    h0: np.ndarray  # (B, N, F0)
    pool: np.ndarray  # (B, K, N)

    @classmethod
    def stack(cls, graphs: Sequence[SliceGraph]) -> "GraphBatch":
        return cls(np.stack([normalize_adjacency(g.adjacency) for g in graphs]),
                   np.stack([g.features for g in graphs]),
                   np.stack([g.pool_matrix() for g in graphs]))

    def take(self, idx) -> "GraphBatch":
        return GraphBatch(self.a_hat[idx], self.h0[idx], self.pool[idx])

    def __len__(self) -> int:
        return self.a_hat.shape[0]


@dataclass
class GcnParams:
    weights: list[np.ndarray] = field(default_factory=list)

    @property
    def widths(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @classmethod
    def init(cls, widths: Sequence[int], rng: np.random.Generator) -> "GcnParams":
        ws = []
        for f_in, f_out in zip(widths[:-1], widths[1:]):
            a = np.sqrt(6.0 / (f_in + f_out))
            ws.append(rng.uniform(-a, a, size=(f_in, f_out)))
        return cls(ws)


def gcn_forward(batch: GraphBatch, weights: Sequence[np.ndarray]):
    """Return ``(state (B, K*F_L), cache)``.

    Hidden layers use ReLU, the last layer is linear and is mean-pooled per slice.
    """
    h = batch.h0
    hs, pres, aggs = [], [], []
    for layer, w in enumerate(weights):
        agg = batch.a_hat @ h  # (B, N, F_l)
        pre = agg @ w
        hs.append(h)
        aggs.append(agg)
        pres.append(pre)
        h = pre if layer == len(weights) - 1 else np.maximum(pre, 0.0)
    pooled = batch.pool @ h  # (B, K, F_L)
    state = pooled.reshape(pooled.shape[0], -1)
    cache = {"batch": batch, "hs": hs, "aggs": aggs, "pres": pres,
             "weights": [w.copy() for w in weights]}
    return state, cache


def gcn_backward(cache, d_state: np.ndarray, weights: Sequence[np.ndarray] | None = None):
    """Reverse pass. Returns ``(weight_grads, d_features)``.

    ``weights``, when given, must equal the weights the cache was built with.
    """
    if weights is not None:
        if len(weights) != len(cache["weights"]) or not all(
                np.array_equal(w, c) for w, c in zip(weights, cache["weights"])):
            raise ValueError("stale GCN cache: parameters changed since the forward pass")
    batch = cache["batch"]
    ws = cache["weights"]
    b, k, _ = batch.pool.shape
    d_pooled = d_state.reshape(b, k, -1)
    d_h = np.swapaxes(batch.pool, 1, 2) @ d_pooled  # (B, N, F_L)
    a_t = np.swapaxes(batch.a_hat, 1, 2)
    grads = [None] * len(ws)
    for layer in range(len(ws) - 1, -1, -1):
        d_pre = d_h if layer == len(ws) - 1 else d_h * (cache["pres"][layer] > 0.0)
        agg = cache["aggs"][layer]
        grads[layer] = np.einsum("bni,bnj->ij", agg, d_pre)
        d_h = a_t @ (d_pre @ ws[layer].T)
    return grads, d_h


def encode(graph: SliceGraph, weights: Sequence[np.ndarray]) -> np.ndarray:
    """State vector of one graph, concatenated per-slice embeddings."""
    state, _ = gcn_forward(GraphBatch.stack([graph]), weights)
    return state[0]
