import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ranslice.core import Allocation, KpmRecord, SliceSpec
from ranslice.ppo import (Adam, AgentConfig, Hyper, Minibatch, NumericalHealthError,
                          RolloutBuffer, SnapshotError, Transition, XSliceAgent, apply_penalty,
                          forward, gae, gaussian_log_prob, init_params, normalize,
                          penalty_triggered, policy_forward, ppo_loss, sample_action,
                          synthetic_batch, update, warmup)
from ranslice.ppo.networks import checksum, copy_params


def minibatch(params, rng, n=8, k=3, penalty_frac=0.0):
    batch = synthetic_batch(rng, n, k, n_max=6)
    fwd = forward(params, batch)
    raw = fwd.mu + fwd.sigma * rng.normal(size=fwd.mu.shape)
    old = gaussian_log_prob(raw, fwd.mu, fwd.sigma) + rng.normal(scale=0.1, size=n)
    mask = (rng.random(n) >= penalty_frac).astype(float)
    return Minibatch(batch, raw, old, rng.normal(size=n), rng.normal(size=n), mask)


def perturbed(params, rng, scale=0.05):
    return {k: v + scale * rng.normal(size=v.shape) for k, v in params.items()}


# -- forward -----------------------------------------------------------------

def mlp_oracle(x, params, prefix):
    i = 0
    h = list(x)
    while f"{prefix}/w{i}" in params:
        w, b = params[f"{prefix}/w{i}"], params[f"{prefix}/b{i}"]
        out = [sum(h[r] * w[r, c] for r in range(w.shape[0])) + b[c] for c in range(w.shape[1])]
        i += 1
        h = [math.tanh(v) for v in out] if f"{prefix}/w{i}" in params else out
    return h


class TestPolicyForward:
    def test_zero_state_zero_heads(self):
        p = init_params(3, np.random.default_rng(0), last_scale=0.0)
        mu, sigma, v = policy_forward(p, np.zeros(36))
        np.testing.assert_array_equal(mu, [0.5, 0.5, 0.5])
        assert v == 0.0 and np.all(sigma > 0)

    def test_deterministic(self, rng):
        p = init_params(3, rng)
        s = rng.normal(size=36)
        a, b = policy_forward(p, s), policy_forward(p, s.copy())
        np.testing.assert_array_equal(a[0], b[0])
        assert a[2] == b[2]

    def test_dense_oracle(self, rng):
        p = init_params(2, rng, hidden=8, last_scale=1.0)
        s = rng.normal(size=24)
        mu, sigma, v = policy_forward(p, s)
        z = mlp_oracle(s, p, "actor")
        np.testing.assert_allclose(mu, [1 / (1 + math.exp(-t)) for t in z], rtol=0, atol=1e-10)
        assert v == pytest.approx(mlp_oracle(s, p, "critic")[0], abs=1e-10)
        np.testing.assert_allclose(sigma, np.log1p(np.exp(p["actor/pre_sigma"])), atol=1e-12)

    def test_nonfinite(self, rng):
        p = init_params(2, rng)
        p["actor/w0"][0, 0] = np.nan
        with pytest.raises(NumericalHealthError):
            policy_forward(p, np.ones(24))


class TestSampling:
    def test_density_value(self):
        assert gaussian_log_prob(np.array([0.5]), np.array([0.5]), np.array([1.0])) == \
            pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-15)
        assert gaussian_log_prob([0.5], [0.5], [1.0]) == pytest.approx(-0.9189, abs=1e-4)

    def test_log_prob_grows_as_sigma_shrinks(self):
        mu = np.array([0.3, 1.4])
        prev = -np.inf
        for sigma in (1.0, 0.1, 0.01, 0.001):
            raw, clipped, lp = sample_action(mu, np.full(2, sigma), np.random.default_rng(0))
            assert lp > prev
            prev = lp
        np.testing.assert_allclose(clipped, [0.3, 1.0], atol=0.01)

    def test_clt_mean(self):
        rng = np.random.default_rng(1)
        xs = np.array([sample_action(np.array([0.5]), np.array([0.1]), rng)[0][0]
                       for _ in range(100_000)])
        assert abs(xs.mean() - 0.5) <= 3 * 0.1 / math.sqrt(xs.size)

    def test_log_prob_is_pre_clip(self):
        raw, clipped, lp = sample_action(np.array([0.99]), np.array([0.5]),
                                         np.random.default_rng(3))
        assert lp == pytest.approx(float(gaussian_log_prob(raw, 0.99, 0.5)))


# -- GAE ---------------------------------------------------------------------

def gae_explicit(r, v, boot, gamma, lam):
    nxt = np.append(v[1:], boot)
    delta = r + gamma * nxt - v
    n = len(r)
    return np.array([sum((gamma * lam) ** l * delta[t + l] for l in range(n - t))
                     for t in range(n)])


class TestGae:
    def test_lambda_zero_is_td(self, rng):
        r, v = rng.normal(size=7), rng.normal(size=7)
        adv, ret = gae(r, v, 0.4, 0.95, 0.0)
        np.testing.assert_array_equal(adv, r + 0.95 * np.append(v[1:], 0.4) - v)
        np.testing.assert_array_equal(ret, adv + v)

    def test_single(self):
        adv, _ = gae([1.0], [0.5], 2.0, 0.9, 0.3)
        assert adv[0] == pytest.approx(1.0 + 0.9 * 2.0 - 0.5)

    def test_length_five(self, rng):
        r, v = rng.normal(size=5), rng.normal(size=5)
        np.testing.assert_allclose(gae(r, v, 0.1, 0.95, 0.2)[0], gae_explicit(r, v, 0.1, 0.95, 0.2),
                                   rtol=0, atol=1e-12)

    @given(st.integers(1, 64), st.integers(0, 10_000))
    def test_explicit_sum_oracle(self, n, seed):
        rng = np.random.default_rng(seed)
        r, v, b = rng.normal(size=n), rng.normal(size=n), float(rng.normal())
        np.testing.assert_allclose(gae(r, v, b, 0.95, 0.2)[0], gae_explicit(r, v, b, 0.95, 0.2),
                                   rtol=0, atol=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            gae([1.0, 2.0], [1.0], 0.0, 0.9, 0.9)


def test_normalize_masked_stats():
    adv = np.array([1.0, 2.0, 3.0, 100.0])
    out = normalize(adv, np.array([1, 1, 1, 0]))
    assert out[:3].mean() == pytest.approx(0.0, abs=1e-12)
    assert out[:3].std() == pytest.approx(1.0, rel=1e-6)


# -- loss ----------------------------------------------------------------------

class TestLoss:
    def test_ratio_identity(self, rng):
        p = init_params(3, rng)
        mb = minibatch(p, rng)
        fwd = forward(p, mb.batch)
        mb.old_log_prob = gaussian_log_prob(mb.raw, fwd.mu, fwd.sigma)
        mb.advantages = normalize(rng.normal(size=len(mb)))
        info, _ = ppo_loss(p, mb)
        np.testing.assert_allclose(info.ratio, 1.0, atol=1e-12)
        assert info.actor == pytest.approx(-mb.advantages.mean(), abs=1e-12)
        assert abs(info.actor) < 1e-12

    def test_clip_plateau(self, rng):
        p = init_params(3, rng)
        mb = minibatch(p, rng, n=1)
        fwd = forward(p, mb.batch)
        mb.old_log_prob = gaussian_log_prob(mb.raw, fwd.mu, fwd.sigma) - math.log(1.4)
        mb.advantages = np.array([1.0])
        mb.returns = fwd.value.copy()  # no critic gradient either
        info, grads = ppo_loss(p, mb, clip=0.2)
        assert info.ratio[0] == pytest.approx(1.4)
        assert all(np.all(g == 0) for n, g in grads.items() if g is not None)

    def test_clip_inactive_equals_unclipped(self, rng):
        p = init_params(3, rng)
        mb = minibatch(p, rng)
        fwd = forward(p, mb.batch)
        mb.old_log_prob = gaussian_log_prob(mb.raw, fwd.mu, fwd.sigma) + rng.uniform(-0.1, 0.1, len(mb))
        info, _ = ppo_loss(p, mb, clip=0.2)
        assert np.all(np.abs(info.ratio - 1) <= 0.2)
        assert info.actor == pytest.approx(-np.mean(info.ratio * mb.advantages), abs=1e-14)

    def test_penalty_rows_add_no_actor_gradient(self, rng):
        p = init_params(3, rng)
        mb = minibatch(p, rng, n=6)
        mb.actor_mask = np.array([1, 1, 0, 1, 0, 1.0])
        mb.returns = forward(p, mb.batch).value.copy()
        _, g1 = ppo_loss(p, mb)
        mb.advantages = mb.advantages.copy()
        mb.advantages[[2, 4]] = [50.0, -80.0]
        mb.raw = mb.raw.copy()
        mb.raw[[2, 4]] += 3.0
        _, g2 = ppo_loss(p, mb)
        for name in g1:
            if g1[name] is not None:
                np.testing.assert_array_equal(g1[name], g2[name])

    @pytest.mark.parametrize("seed", range(20))
    def test_gradients_match_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        shared = seed % 2 == 0
        p = perturbed(init_params(2, rng, hidden=8, gcn_widths=(12, 6, 5), shared=shared,
                                  last_scale=1.0), rng)
        mb = minibatch(p, rng, n=5, k=2, penalty_frac=0.3)
        _, grads = ppo_loss(p, mb, clip=0.2)
        h = 1e-6
        for name, arr in p.items():
            for _ in range(3):
                idx = tuple(rng.integers(0, s) for s in arr.shape)
                plus, minus = copy_params(p), copy_params(p)
                plus[name][idx] += h
                minus[name][idx] -= h
                fd = (ppo_loss(plus, mb)[0].loss - ppo_loss(minus, mb)[0].loss) / (2 * h)
                an = grads[name][idx]
                assert abs(fd - an) <= 1e-4 * max(abs(fd), abs(an)) + 1e-7, (name, idx, fd, an)

    def test_nonfinite_loss(self, rng):
        p = init_params(2, rng)
        mb = minibatch(p, rng, k=2)
        mb.returns = np.full(len(mb), np.inf)
        with pytest.raises(NumericalHealthError):
            ppo_loss(p, mb)


def test_adam_first_step():
    p = {"w": np.array([1.0, -2.0])}
    opt = Adam(p, lr=0.1)
    opt.step(p, {"w": np.array([3.0, -0.5])})
    np.testing.assert_allclose(p["w"], [0.9, -1.9], atol=1e-7)


# -- update -------------------------------------------------------------------

def make_buffer(params, rng, n=40, k=3, consistent=False):
    batch = synthetic_batch(rng, n, k, n_max=6)
    fwd = forward(params, batch)
    buf = RolloutBuffer()
    for i in range(n):
        raw, ratios, lp = sample_action(fwd.mu[i], fwd.sigma, rng)
        buf.append(Transition(batch.a_hat[i], batch.h0[i], batch.pool[i], fwd.state[i], raw,
                              ratios, lp, float(fwd.value[i]), float(rng.normal(scale=0.1)),
                              round=i))
    buf.bootstrap = float(fwd.value[-1])
    if consistent:  # with gamma = 0 every TD error is exactly zero
        for t in buf.transitions:
            t.reward = t.value
    return buf


class TestUpdate:
    def test_zero_advantage_keeps_actor_head(self, rng):
        p = init_params(3, rng)
        buf = make_buffer(p, rng, consistent=True)
        new, stats = update(p, buf, Hyper(gamma=0.0), Adam(p), np.random.default_rng(0))
        assert stats.ok
        for name in p:
            if name.startswith("actor/"):
                np.testing.assert_allclose(new[name], p[name], rtol=0, atol=1e-12)

    def test_deterministic(self):
        outs = []
        for _ in range(2):
            rng = np.random.default_rng(5)
            p = init_params(3, rng)
            buf = make_buffer(p, rng)
            new, _ = update(p, buf, Hyper(), Adam(p), np.random.default_rng(1))
            outs.append(checksum(new))
        assert outs[0] == outs[1]

    def test_changes_params(self, rng):
        p = init_params(3, rng)
        new, stats = update(p, make_buffer(p, rng), Hyper(), Adam(p), rng)
        assert stats.ok and checksum(new) != checksum(p)

    def test_health_failure_keeps_old(self, rng):
        p = init_params(3, rng)
        buf = make_buffer(p, rng)
        buf.transitions[3].reward = np.nan
        opt = Adam(p)
        new, stats = update(p, buf, Hyper(), opt, rng)
        assert not stats.ok and new is p and opt.t == 0

    def test_skip_mode_all_penalized(self, rng):
        p = init_params(3, rng)
        buf = make_buffer(p, rng)
        for t in buf.transitions:
            t.penalty = True
        new, stats = update(p, buf, Hyper(penalty_mode="skip"), Adam(p), rng)
        assert new is p

    def test_buffer_contiguity(self, rng):
        p = init_params(3, rng)
        buf = make_buffer(p, rng, n=2)
        with pytest.raises(ValueError):
            buf.append(Transition(*([None] * 8), round=7))


# -- penalty ------------------------------------------------------------------

def k(sid, slice_id, delay=10.0, used=3):
    return KpmRecord(sid, slice_id, 10.0, delay, 0.0, prbs_used=used)


class TestPenalty:
    def test_amply_served(self):
        kpms = [k(0, 0), k(1, 1)]
        assert not penalty_triggered(kpms, Allocation.from_sizes((50, 50)), 2)

    def test_threshold(self):
        kpms = [k(0, 0), k(1, 0), k(2, 1)]
        assert penalty_triggered(kpms, Allocation.from_sizes((9, 50)), 2, min_rb=5)
        assert not penalty_triggered(kpms, Allocation.from_sizes((10, 50)), 2, min_rb=5)

    def test_idle_slice_ignored(self):
        kpms = [k(0, 0, delay=0.0, used=0), k(1, 1)]
        assert not penalty_triggered(kpms, Allocation.from_sizes((1, 50)), 2)

    def test_delay_cap_onset(self):
        now = [k(0, 0, delay=1000.0)]
        alloc = Allocation.from_sizes((50,))
        assert penalty_triggered(now, alloc, 1)
        assert penalty_triggered(now, alloc, 1, prev_kpms=[k(0, 0, delay=900.0)])
        assert not penalty_triggered(now, alloc, 1, prev_kpms=[k(0, 0, delay=1000.0)])

    def test_apply(self):
        tr = Transition(*([None] * 8), reward=0.5)
        kpms = [k(0, 0), k(1, 0)]
        alloc = Allocation.from_sizes((3,))
        apply_penalty(tr, kpms, alloc, 1, Hyper(penalty_enabled=False))
        assert tr.reward == 0.5 and not tr.penalty
        apply_penalty(tr, kpms, alloc, 1, Hyper())
        assert tr.reward == -0.2 and tr.penalty

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            Hyper(penalty_mode="ignore")


# -- warm-up -------------------------------------------------------------------

class TestWarmup:
    def test_zero_rounds(self, rng):
        p = init_params(3, rng)
        assert warmup(p, 0, 3, rng) is p

    def test_equal_split_target(self):
        p = init_params(3, np.random.default_rng(0), sigma0=0.2)
        w = warmup(p, 500, 3, np.random.default_rng(1), Hyper(), sigma_target=0.2)
        rng = np.random.default_rng(2)
        batch = synthetic_batch(rng, 200, 3)
        fwd = forward(w, batch)
        ratios = np.array([sample_action(m, fwd.sigma, rng)[1] for m in fwd.mu])
        assert np.all((ratios.mean(axis=0) >= 0.23) & (ratios.mean(axis=0) <= 0.43))
        assert np.all(np.abs(fwd.mu.mean(axis=0) - 1 / 3) <= 0.1)
        assert np.all((fwd.sigma >= 0.05) & (fwd.sigma <= 0.5))

    def test_deterministic(self):
        a = warmup(init_params(3, np.random.default_rng(0)), 100, 3, np.random.default_rng(1))
        b = warmup(init_params(3, np.random.default_rng(0)), 100, 3, np.random.default_rng(1))
        assert checksum(a) == checksum(b)


# -- agent -------------------------------------------------------------------------

SPECS = [SliceSpec(0, 100.0, 100.0, 0.1), SliceSpec(1, 50.0, 30.0, 0.1)]


def report(rnd, rng):
    return [KpmRecord(i, i % 2, float(rng.uniform(0, 150)), float(rng.uniform(0, 200)),
                      float(rng.uniform(0, 0.3)), int(rng.integers(0, 50))) for i in range(4)]


def drive(agent, rounds, seed=0):
    rng = np.random.default_rng(seed)
    allocs = []
    for r in range(rounds):
        allocs.append(agent.decide(report(r, rng), r))
        agent.after_reply()
    return allocs


class TestAgent:
    cfg = dict(warmup_states=50)

    def test_feasible_and_trains(self):
        ag = XSliceAgent(SPECS, 50, 10.0, AgentConfig(seed=1, **self.cfg))
        allocs = drive(ag, 85)
        for a in allocs:
            a.check(50)
        assert ag.updates == 2 and ag.snapshot.version == 2
        assert len(ag.train_log) == 2

    def test_deterministic(self):
        a = XSliceAgent(SPECS, 50, 10.0, AgentConfig(seed=3, **self.cfg))
        b = XSliceAgent(SPECS, 50, 10.0, AgentConfig(seed=3, **self.cfg))
        assert drive(a, 60) == drive(b, 60)
        assert checksum(a.params()) == checksum(b.params())

    def test_async_matches_sync(self):
        a = XSliceAgent(SPECS, 50, 10.0, AgentConfig(seed=4, **self.cfg))
        b = XSliceAgent(SPECS, 50, 10.0, AgentConfig(seed=4, async_train=True, **self.cfg))
        drive(a, 45)
        rng = np.random.default_rng(0)
        for r in range(45):
            b.decide(report(r, rng), r)
        b.drain()
        b.close()
        assert b.updates == a.updates == 1
        assert checksum(a.params()) == checksum(b.params())

    def test_snapshot_read_only_and_checked(self):
        ag = XSliceAgent(SPECS, 50, 10.0, AgentConfig(seed=1, **self.cfg))
        with pytest.raises(ValueError):
            ag.snapshot.params["actor/w0"][0, 0] = 1.0
        ag.snapshot.verify()
        bad = type(ag.snapshot)(9, ag.snapshot.params, ag.snapshot.crc ^ 1)
        with pytest.raises(SnapshotError):
            bad.verify()

    def test_round_gap_clears_rollout(self):
        ag = XSliceAgent(SPECS, 50, 10.0, AgentConfig(seed=1, **self.cfg))
        rng = np.random.default_rng(0)
        for r in list(range(10)) + list(range(20, 25)):
            ag.decide(report(r, rng), r)
        assert len(ag.buffer) == 4

    def test_save_round_trip(self, tmp_path):
        from ranslice import checkpoint
        ag = XSliceAgent(SPECS, 50, 10.0, AgentConfig(seed=1, **self.cfg))
        drive(ag, 5)
        ag.save(tmp_path / "a.bin")
        arrays, meta = checkpoint.load(tmp_path / "a.bin")
        assert meta["k"] == 2 and meta["widths"] == list(AgentConfig().gcn_widths())
        assert checksum(arrays) == checksum(ag.params())
        clone = XSliceAgent(SPECS, 50, 10.0, AgentConfig(seed=1, **self.cfg), params=arrays)
        assert checksum(clone.params()) == checksum(ag.params())
