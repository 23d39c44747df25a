"""Actor/critic parameters, forward passes and reverse-mode gradients.

Parameters live in one ordered ``dict[str, ndarray]``:

* ``gcn/<l>``: shared graph encoder weights
* ``critic_gcn/<l>``: separate critic encoder, present only when ``shared`` is off
* ``actor/w<i>``, ``actor/b<i>``: tanh MLP producing the mean pre-activation
* ``actor/pre_sigma``: state-independent spread, ``sigma = softplus(pre_sigma)``
* ``critic/w<i>``, ``critic/b<i>``: tanh MLP producing V(s)
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from ..gcn import GcnParams, GraphBatch, gcn_backward, gcn_forward

Params = dict  # str -> np.ndarray, insertion ordered

MLP_LAYERS = 4
LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


class NumericalHealthError(FloatingPointError):
    """A forward pass, loss or gradient produced a non-finite value."""


def softplus(x):
    return np.logaddexp(0.0, x)


def inv_softplus(y: float) -> float:
    return float(y + np.log(-np.expm1(-y)))


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


def _glorot(rng, f_in, f_out):
    a = np.sqrt(6.0 / (f_in + f_out))
    return rng.uniform(-a, a, size=(f_in, f_out))


def _mlp_init(rng, prefix, widths, params, last_scale=1.0):
    for i, (f_in, f_out) in enumerate(zip(widths[:-1], widths[1:])):
        w = _glorot(rng, f_in, f_out)
        if i == len(widths) - 2:
            w = w * last_scale
        params[f"{prefix}/w{i}"] = w
        params[f"{prefix}/b{i}"] = np.zeros(f_out)


def init_params(k: int, rng: np.random.Generator, hidden: int = 32,
                gcn_widths=(12, 12, 12, 12), shared: bool = True, sigma0: float = 0.1,
                last_scale: float = 0.1) -> Params:
    """Fresh parameters. ``last_scale=0`` zeroes both output layers."""
    p: Params = {}
    for i, w in enumerate(GcnParams.init(gcn_widths, rng).weights):
        p[f"gcn/{i}"] = w
    if not shared:
        for i, w in enumerate(GcnParams.init(gcn_widths, rng).weights):
            p[f"critic_gcn/{i}"] = w
    state_dim = k * gcn_widths[-1]
    body = [state_dim] + [hidden] * (MLP_LAYERS - 1)
    _mlp_init(rng, "actor", body + [k], p, last_scale)
    p["actor/pre_sigma"] = np.full(k, inv_softplus(sigma0))
    _mlp_init(rng, "critic", body + [1], p, last_scale)
    return p


def is_shared(params: Mapping[str, np.ndarray]) -> bool:
    return "critic_gcn/0" not in params


def gcn_weights(params: Mapping[str, np.ndarray], prefix: str = "gcn") -> list[np.ndarray]:
    out, i = [], 0
    while f"{prefix}/{i}" in params:
        out.append(params[f"{prefix}/{i}"])
        i += 1
    return out


def _mlp_weights(params, prefix):
    ws, bs, i = [], [], 0
    while f"{prefix}/w{i}" in params:
        ws.append(params[f"{prefix}/w{i}"])
        bs.append(params[f"{prefix}/b{i}"])
        i += 1
    return ws, bs


def mlp_forward(x: np.ndarray, ws, bs):
    """tanh hidden layers, linear output. Returns ``(out, activations)``."""
    acts = [x]
    h = x
    for i, (w, b) in enumerate(zip(ws, bs)):
        h = h @ w + b
        if i < len(ws) - 1:
            h = np.tanh(h)
        acts.append(h)
    return h, acts


def mlp_backward(acts, ws, d_out):
    """Gradients ``(dws, dbs, dx)`` given the activations of ``mlp_forward``."""
    n = len(ws)
    dws, dbs = [None] * n, [None] * n
    d = d_out
    for i in range(n - 1, -1, -1):
        if i < n - 1:
            d = d * (1.0 - acts[i + 1] ** 2)
        dws[i] = acts[i].T @ d
        dbs[i] = d.sum(axis=0)
        d = d @ ws[i].T
    return dws, dbs, d


@dataclass
class Forward:
    mu: np.ndarray  # (B, K)
    sigma: np.ndarray  # (K,)
    value: np.ndarray  # (B,)
    state: np.ndarray  # (B, 12K) actor-side encoding
    cache: dict


def policy_forward(params: Mapping[str, np.ndarray], state: np.ndarray,
                   critic_state: np.ndarray | None = None):
    """Heads on already-encoded states: ``(mu, sigma, value)``.

    Accepts one state ``(12K,)`` or a batch ``(B, 12K)``.
    """
    single = state.ndim == 1
    s = state[None] if single else state
    cs = s if critic_state is None else (critic_state[None] if single else critic_state)
    aw, ab = _mlp_weights(params, "actor")
    cw, cb = _mlp_weights(params, "critic")
    z, a_acts = mlp_forward(s, aw, ab)
    v, c_acts = mlp_forward(cs, cw, cb)
    mu = sigmoid(z)
    sigma = softplus(params["actor/pre_sigma"])
    value = v[:, 0]
    if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(value)) and np.all(np.isfinite(sigma))):
        raise NumericalHealthError("non-finite policy output")
    if single:
        return mu[0], sigma, float(value[0])
    return mu, sigma, value


def forward(params: Mapping[str, np.ndarray], batch: GraphBatch) -> Forward:
    """Graph batch -> policy and value, keeping everything needed for ``backward``."""
    state, g_cache = gcn_forward(batch, gcn_weights(params))
    if is_shared(params):
        c_state, cg_cache = state, None
    else:
        c_state, cg_cache = gcn_forward(batch, gcn_weights(params, "critic_gcn"))
    aw, ab = _mlp_weights(params, "actor")
    cw, cb = _mlp_weights(params, "critic")
    z, a_acts = mlp_forward(state, aw, ab)
    v, c_acts = mlp_forward(c_state, cw, cb)
    mu = sigmoid(z)
    sigma = softplus(params["actor/pre_sigma"])
    out = Forward(mu, sigma, v[:, 0], state,
                  {"g": g_cache, "cg": cg_cache, "a": a_acts, "c": c_acts})
    if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(out.value))):
        raise NumericalHealthError("non-finite policy output")
    return out


def backward(params: Mapping[str, np.ndarray], fwd: Forward, d_mu: np.ndarray,
             d_sigma: np.ndarray, d_value: np.ndarray) -> Params:
    """Chain output gradients back to every parameter."""
    grads: Params = {}
    aw, _ = _mlp_weights(params, "actor")
    cw, _ = _mlp_weights(params, "critic")
    d_z = d_mu * fwd.mu * (1.0 - fwd.mu)
    a_dw, a_db, d_state_a = mlp_backward(fwd.cache["a"], aw, d_z)
    c_dw, c_db, d_state_c = mlp_backward(fwd.cache["c"], cw, d_value[:, None])
    if is_shared(params):
        g, _ = gcn_backward(fwd.cache["g"], d_state_a + d_state_c)
        cg = []
    else:
        g, _ = gcn_backward(fwd.cache["g"], d_state_a)
        cg, _ = gcn_backward(fwd.cache["cg"], d_state_c)
    for name in params:
        grads[name] = None
    for i, gw in enumerate(g):
        grads[f"gcn/{i}"] = gw
    for i, gw in enumerate(cg):
        grads[f"critic_gcn/{i}"] = gw
    for i, (dw, db) in enumerate(zip(a_dw, a_db)):
        grads[f"actor/w{i}"], grads[f"actor/b{i}"] = dw, db
    grads["actor/pre_sigma"] = d_sigma * sigmoid(params["actor/pre_sigma"])
    for i, (dw, db) in enumerate(zip(c_dw, c_db)):
        grads[f"critic/w{i}"], grads[f"critic/b{i}"] = dw, db
    return grads


def checksum(params: Mapping[str, np.ndarray]) -> int:
    crc = 0
    for name, arr in params.items():
        crc = zlib.crc32(name.encode(), crc)
        crc = zlib.crc32(np.ascontiguousarray(arr, dtype="<f8").tobytes(), crc)
    return crc


def copy_params(params: Mapping[str, np.ndarray]) -> Params:
    return {k: np.array(v, dtype=np.float64, copy=True) for k, v in params.items()}


def all_finite(params: Mapping[str, np.ndarray]) -> bool:
    return all(np.all(np.isfinite(v)) for v in params.values())
