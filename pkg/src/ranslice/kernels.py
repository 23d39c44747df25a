"""Inner loops of the simulator and the learner.

Each kernel has a loop implementation (``*_loop``, compiled by numba when
enabled) and a numpy implementation (``*_numpy``). The public names bind to
one of them at import time according to ``ranslice._jit.NUMBA_ENABLED``.
Both paths perform the same floating point operations in the same order, so
they return identical results.
"""

import numpy as np

from ._jit import NUMBA_ENABLED, njit, numba

POLICY_PF = 0
POLICY_RR = 1
POLICY_MT = 2
POLICY_EDF = 3

_EPS = 1e-9


def _hol_arrival(i, drained, pkt_ptr, pkt_bytes, pkt_t0, pkt_t1):
    # arrival time of the first byte still queued after `drained` bytes left
    cum = 0.0
    for j in range(pkt_ptr[i], pkt_ptr[i + 1]):
        b = pkt_bytes[j]
        if cum + b > drained + _EPS:
            frac = (drained - cum) / b
            if frac < 0.0:
                frac = 0.0
            return pkt_t0[j] + frac * (pkt_t1[j] - pkt_t0[j])
        cum += b
    return np.inf


def _pick(policy, n, cap, remaining, avg, served, beta, rr_ptr, deadline_off,
          drained, pkt_ptr, pkt_bytes, pkt_t0, pkt_t1):
    best = -1
    if policy == POLICY_RR:
        for step in range(n):
            i = (rr_ptr + step) % n
            if remaining[i] > _EPS and cap[i] > 0.0:
                return i
        return -1
    best_val = 0.0
    for i in range(n):
        if remaining[i] <= _EPS or cap[i] <= 0.0:
            continue
        if policy == POLICY_PF:
            prov = (1.0 - beta) * avg[i] + beta * served[i]
            if prov < 1.0:
                prov = 1.0
            val = cap[i] / prov
        elif policy == POLICY_MT:
            val = cap[i]
        else:
            val = -(_hol_arrival(i, drained[i], pkt_ptr, pkt_bytes, pkt_t0, pkt_t1)
                    + deadline_off[i])
        if best < 0 or val > best_val:
            best = i
            best_val = val
    return best


def schedule_prbs_loop(policy, n_prb, cap, backlog, avg, beta, rr_ptr,
                       deadline_off, pkt_ptr, pkt_bytes, pkt_t0, pkt_t1):
    n = cap.shape[0]
    prbs = np.zeros(n, dtype=np.int64)
    used = np.zeros(n, dtype=np.int64)
    drained = np.zeros(n, dtype=np.float64)
    remaining = backlog.copy()
    idle_ptr = 0
    for _ in range(n_prb):
        i = _pick(policy, n, cap, remaining, avg, drained, beta, rr_ptr,
                  deadline_off, drained, pkt_ptr, pkt_bytes, pkt_t0, pkt_t1)
        if i < 0:
            # nobody can use the PRB: hand it out cyclically, it carries nothing
            prbs[idle_ptr % n] += 1
            idle_ptr += 1
            continue
        take = cap[i] if cap[i] < remaining[i] else remaining[i]
        prbs[i] += 1
        used[i] += 1
        drained[i] += take
        remaining[i] -= take
        if policy == POLICY_RR:
            rr_ptr = (i + 1) % n
    return prbs, used, drained, rr_ptr


def schedule_prbs_numpy(policy, n_prb, cap, backlog, avg, beta, rr_ptr,
                        deadline_off, pkt_ptr, pkt_bytes, pkt_t0, pkt_t1):
    n = cap.shape[0]
    prbs = np.zeros(n, dtype=np.int64)
    used = np.zeros(n, dtype=np.int64)
    drained = np.zeros(n, dtype=np.float64)
    remaining = backlog.astype(np.float64).copy()
    order = np.arange(n)
    idle_ptr = 0
    for _ in range(n_prb):
        ok = (remaining > _EPS) & (cap > 0.0)
        if not ok.any():
            prbs[idle_ptr % n] += 1
            idle_ptr += 1
            continue
        if policy == POLICY_RR:
            rolled = (order + rr_ptr) % n
            i = int(rolled[np.argmax(ok[rolled])])
            rr_ptr = (i + 1) % n
        else:
            if policy == POLICY_PF:
                prov = np.maximum((1.0 - beta) * avg + beta * drained, 1.0)
                val = cap / prov
            elif policy == POLICY_MT:
                val = cap.astype(np.float64)
            else:
                val = -(_hol_arrivals_numpy(drained, pkt_ptr, pkt_bytes,
                                            pkt_t0, pkt_t1, n) + deadline_off)
            val = np.where(ok, val, -np.inf)
            i = int(np.argmax(val))
        take = min(cap[i], remaining[i])
        prbs[i] += 1
        used[i] += 1
        drained[i] += take
        remaining[i] -= take
    return prbs, used, drained, rr_ptr


def _hol_arrivals_numpy(drained, pkt_ptr, pkt_bytes, t0, t1, n):
    out = np.full(n, np.inf)
    for i in range(n):
        lo, hi = pkt_ptr[i], pkt_ptr[i + 1]
        if hi == lo:
            continue
        seg = pkt_bytes[lo:hi]
        cum_end = np.cumsum(seg)
        cum_before = np.concatenate(([0.0], cum_end[:-1]))
        hit = np.flatnonzero(cum_end > drained[i] + _EPS)
        if hit.size:
            j = hit[0]
            frac = max((drained[i] - cum_before[j]) / seg[j], 0.0)
            out[i] = t0[lo + j] + frac * (t1[lo + j] - t0[lo + j])
    return out


def gae_loop(rewards, values, bootstrap, gamma, lam):
    n = rewards.shape[0]
    adv = np.zeros(n, dtype=np.float64)
    acc = 0.0
    for t in range(n - 1, -1, -1):
        nxt = bootstrap if t == n - 1 else values[t + 1]
        delta = rewards[t] + gamma * nxt - values[t]
        acc = delta + gamma * lam * acc
        adv[t] = acc
    return adv


def gae_numpy(rewards, values, bootstrap, gamma, lam):
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    nxt = np.append(values[1:], bootstrap)
    delta = rewards + gamma * nxt - values
    adv = np.zeros_like(delta)
    acc = 0.0
    # reversed accumulate keeps the exact operation order of the loop path
    for t in range(delta.shape[0] - 1, -1, -1):
        acc = delta[t] + gamma * lam * acc
        adv[t] = acc
    return adv


if numba is not None:
    # helpers are resolved at compile time, so they must be jitted as well
    _hol_arrival = njit(_hol_arrival)  # noqa: F811
    _pick = njit(_pick)  # noqa: F811

schedule_prbs_jit = njit(schedule_prbs_loop)
gae_jit = njit(gae_loop)

if NUMBA_ENABLED:
    schedule_prbs = schedule_prbs_jit
    gae_advantages = gae_jit
else:
    schedule_prbs = schedule_prbs_numpy
    gae_advantages = gae_numpy
