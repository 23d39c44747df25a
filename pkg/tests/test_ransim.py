from collections import deque

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ranslice import kernels
from ranslice.core import Allocation, SliceSpec, equal_split, evaluate
from ranslice.ransim import (ChannelState, ProtocolError, RadioConfig, RanEnv, Scenario,
                             ScenarioError, SessionRound, SessionTemplate, compute_kpm,
                             cqi_to_efficiency, generate_traffic, load_scenario, prb_capacity,
                             preset, snr_to_cqi, step_channel)
from ranslice.ransim.channel import stationary_std
from ranslice.ransim.env import SessionState, discard_old, pop_delivered, schedule_slice


def scenario(sessions, slices=None, n_rb=50, **kw):
    slices = slices or [SliceSpec(0, 50.0, 100.0, 0.1)]
    return Scenario(seed=kw.pop("seed", 1), rounds=kw.pop("rounds", 100), slices=slices,
                    sessions=sessions, n_rb=n_rb, **kw)


def session(sid=0, slice_id=0, rate=10.0, snr=25.0, **kw):
    return SessionTemplate(sid, slice_id, snr, [(0, rate)], **kw)


def fake_session(sid, cap_rate=0.0, backlog=0.0, t=0.0):
    tmpl = session(sid)
    s = SessionState(sid, 0, tmpl, ChannelState.at(20.0, 20.0), np.random.default_rng(0),
                     np.random.default_rng(1))
    if backlog:
        s.queue.append([backlog, t, t + 100.0])
    return s


class TestChannel:
    def test_frozen(self):
        s = ChannelState.at(12.0, 20.0, correlation=1 - 1e-12, noise_db=0.0)
        assert step_channel(s, np.random.default_rng(0)).snr_db == pytest.approx(12.0, abs=1e-9)

    def test_memoryless(self):
        s = ChannelState.at(12.0, 20.0, correlation=0.0, noise_db=0.0)
        assert step_channel(s, np.random.default_rng(0)).snr_db == 20.0

    def test_stationary_std(self):
        rng = np.random.default_rng(7)
        s = ChannelState.at(20.0, 20.0, 0.9, 1.5)
        xs = np.empty(100_000)
        for i in range(xs.size):
            s = step_channel(s, rng)
            xs[i] = s.snr_db
        want = stationary_std(0.9, 1.5)
        assert want == pytest.approx(1.5 / np.sqrt(1 - 0.81))
        assert abs(xs.std() - want) / want < 0.1

    def test_bad_correlation(self):
        with pytest.raises(ValueError):
            step_channel(ChannelState.at(0, 0, correlation=1.0), np.random.default_rng(0))

    @pytest.mark.parametrize("snr, cqi", [(-10, 0), (40, 15), (10, 7)])
    def test_cqi(self, snr, cqi):
        assert snr_to_cqi(snr) == cqi

    @given(st.floats(-50, 80), st.floats(0, 20))
    def test_cqi_monotone(self, a, d):
        assert snr_to_cqi(a + d) >= snr_to_cqi(a)

    def test_efficiency_table(self):
        assert cqi_to_efficiency(0) == 0.0
        assert cqi_to_efficiency(15) == 5.5547
        effs = [cqi_to_efficiency(c) for c in range(1, 16)]
        assert all(b > a for a, b in zip(effs, effs[1:]))
        with pytest.raises(IndexError):
            cqi_to_efficiency(16)

    def test_prb_capacity(self):
        assert prb_capacity(0.0, 100.0) == 0.0
        bits = prb_capacity(5.5547, 100.0, 0.7, 0.14)
        assert bits == pytest.approx(5.5547 * 12 * 14 * 200 * 0.7 * 0.86, rel=1e-12)
        assert bits == pytest.approx(1.1236e5, rel=1e-3)  # the formula's value
        assert prb_capacity(3.0, 200.0) == pytest.approx(2 * prb_capacity(3.0, 100.0))

    def test_state_fields_consistent(self):
        s = step_channel(ChannelState.at(18.0, 18.0), np.random.default_rng(3))
        assert s.cqi == snr_to_cqi(s.snr_db) and 0.0 <= s.bler_prob <= 1.0


class TestTraffic:
    def test_unit_conversion(self):
        s = fake_session(0)
        s.template.profile = [(0, 100.0)]
        assert generate_traffic(s, 0, 100.0) == 1.25e6

    def test_inactive(self):
        s = fake_session(0)
        s.active = False
        assert generate_traffic(s, 0, 100.0) == 0.0

    def test_step_profile(self):
        s = fake_session(0)
        s.template.profile = [(0, 20.0), (700, 180.0)]
        got = [generate_traffic(s, r, 100.0) for r in (698, 699, 700, 701)]
        assert got == [2.5e5, 2.5e5, 2.25e6, 2.25e6]


class TestQueues:
    def test_pop_whole_packet_sojourn(self):
        q = deque([[1000.0, 0.0, 0.0]])
        # bytes leave at 10 B/ms starting at t=50: mean sojourn 50 + 50
        assert pop_delivered(q, 1000.0, 50.0, 10.0) / 1000.0 == pytest.approx(100.0)
        assert not q

    def test_partial_pop(self):
        q = deque([[1000.0, 0.0, 100.0]])
        pop_delivered(q, 400.0, 100.0, 100.0)
        assert q[0][0] == pytest.approx(600.0) and q[0][1] == pytest.approx(40.0)

    def test_discard(self):
        q = deque([[100.0, 0.0, 100.0], [100.0, 100.0, 200.0]])
        assert discard_old(q, 150.0) == pytest.approx(150.0)
        assert q[0][0] == pytest.approx(50.0)


class TestSchedule:
    @pytest.mark.parametrize("policy", ["proportional-fair", "round-robin", "max-throughput",
                                        "earliest-deadline-first"])
    def test_single_session_takes_all(self, policy):
        s = fake_session(0, backlog=1e9)
        prbs, used, _, _ = schedule_slice([s], 17, policy, 100.0, np.array([500.0]), 0.5)
        assert prbs[0] == 17 and used[0] == 17

    def test_rr_even_split(self):
        ss = [fake_session(0, backlog=1e9), fake_session(1, backlog=1e9)]
        prbs, *_ = schedule_slice(ss, 20, "round-robin", 100.0, np.array([500.0, 500.0]), 0.5)
        assert list(prbs) == [10, 10]

    def test_empty_slice(self):
        prbs, used, drained, _ = schedule_slice([], 10, "round-robin", 100.0, np.zeros(0), 0.5)
        assert prbs.size == 0

    def test_pf_matches_step_through_oracle(self):
        beta = 0.5
        cap = np.array([300.0, 800.0, 1500.0])
        arrivals = np.array([4000.0, 2500.0, 9000.0])
        backlog = np.array([1000.0, 5000.0, 2000.0])
        avg = np.zeros(3)
        o_backlog, o_avg = backlog.copy(), avg.copy()
        for _ in range(10):
            backlog += arrivals
            o_backlog += arrivals
            args = (kernels.POLICY_PF, 12, cap, backlog, avg, beta, 0, np.zeros(3),
                    np.array([0, 0, 0, 0], dtype=np.int64), np.zeros(0), np.zeros(0), np.zeros(0))
            prbs, _, drained, _ = kernels.schedule_prbs(*args)
            # oracle: greedy per PRB on cap / provisional average
            o_prbs, o_drained = np.zeros(3, int), np.zeros(3)
            rem = o_backlog.copy()
            for _ in range(12):
                best, best_val = -1, -np.inf
                for i in range(3):
                    if rem[i] > 1e-9:
                        val = cap[i] / max((1 - beta) * o_avg[i] + beta * o_drained[i], 1.0)
                        if val > best_val:
                            best, best_val = i, val
                take = min(cap[best], rem[best])
                o_prbs[best] += 1
                o_drained[best] += take
                rem[best] -= take
            np.testing.assert_array_equal(prbs, o_prbs)
            np.testing.assert_allclose(drained, o_drained, rtol=0, atol=1e-9)
            backlog = backlog - drained
            o_backlog = rem
            avg = (1 - beta) * avg + beta * drained
            o_avg = (1 - beta) * o_avg + beta * o_drained


class TestKpm:
    def test_idle(self):
        r = compute_kpm(fake_session(0), SessionRound(), 100.0)
        assert (r.throughput, r.delay, r.bler) == (0.0, 0.0, 0.0)

    def test_rate(self):
        r = compute_kpm(fake_session(0), SessionRound(delivered=1.25e6, sojourn_sum=1.25e6 * 40),
                        100.0)
        assert r.throughput == pytest.approx(100.0) and r.delay == pytest.approx(40.0)

    def test_starved_age(self):
        assert compute_kpm(fake_session(0), SessionRound(hol_age=300.0), 100.0).delay == 300.0

    def test_delay_cap(self):
        assert compute_kpm(fake_session(0), SessionRound(hol_age=5000.0), 100.0).delay == 1000.0


class TestEnv:
    def test_zero_traffic(self):
        sc = scenario([session(0, rate=0.0), session(1, rate=0.0)])
        env = RanEnv(sc)
        env.reset()
        for _ in range(5):
            rep = env.step(equal_split(1, sc.n_rb))
        assert all((r.throughput, r.delay, r.bler) == (0, 0, 0) for r in rep)
        assert evaluate(sc.slices, rep, (sc.n_rb,)).total > 0  # throughput deficit counts

    def test_converges_to_offered_rate(self):
        sc = scenario([session(0, rate=30.0, snr=40.0, noise_db=0.0)],
                      radio=RadioConfig(dl_fraction=0.8))
        env = RanEnv(sc)
        env.reset()
        tps = [env.step(Allocation.from_sizes((50,)))[0].throughput for _ in range(3)]
        assert tps[1] == pytest.approx(30.0, rel=1e-3)
        assert tps[2] == pytest.approx(30.0, rel=1e-3)

    def test_steady_delay_below_round(self):
        sc = scenario([session(0, rate=30.0, snr=40.0, noise_db=0.0)])
        env = RanEnv(sc)
        env.reset()
        delays = [env.step(Allocation.from_sizes((50,)))[0].delay for _ in range(20)]
        assert max(delays[2:]) <= sc.round_ms

    def test_deterministic(self):
        sc = preset("medium", seed=4, rounds=60)
        runs = []
        for _ in range(2):
            env = RanEnv(sc)
            env.reset()
            runs.append([env.step(equal_split(3, sc.n_rb)) for _ in range(60)])
        assert runs[0] == runs[1]

    def test_conservation_and_capacity(self):
        sc = preset("intensive", seed=2, rounds=80)
        env = RanEnv(sc)
        env.reset()
        rng = np.random.default_rng(0)
        for _ in range(80):
            alloc = Allocation.from_sizes(rng.multinomial(sc.n_rb - 3, [1 / 3] * 3) + 1)
            before = {s.session_id: s.delivered for s in env.active_sessions()}
            env.step(alloc)
            caps = {s.session_id: env.capacity_bytes(s) for s in env.active_sessions()}
            for sid, res in env.last_results.items():
                s = env.sessions[sid]
                assert s.delivered - before[sid] <= res.prbs * caps[sid] + 1e-6
            for sid in env.sessions:
                offered, delivered, queued, dropped = env.conservation(sid)
                assert offered == pytest.approx(delivered + queued + dropped, rel=1e-9)

    def test_work_conserving(self):
        sc = preset("intensive", seed=3, rounds=10)
        env = RanEnv(sc)
        env.reset()
        for _ in range(10):
            rep = env.step(Allocation.from_sizes((10, 10, 10)))
        for k in range(3):
            g = [r for r in rep if r.slice_id == k]
            assert sum(r.scheduled_rbs for r in g) == 10
            assert sum(r.prbs_used for r in g) == 10  # every slice is backlogged

    def test_protocol_error(self):
        env = RanEnv(preset("light", 1, 10))
        env.reset()
        with pytest.raises(ProtocolError):
            env.step(Allocation.from_sizes((100, 100)))

    def test_arrival_and_departure(self):
        sc = scenario([session(0), session(1, arrival=3, departure=6)])
        env = RanEnv(sc)
        counts = [len(env.reset())]
        for _ in range(8):
            counts.append(len(env.step(Allocation.from_sizes((50,)))))
        # report after step r describes round r
        assert counts == [1, 1, 1, 1, 2, 2, 2, 1, 1]

    def test_shared_allocation_uses_pf_over_all(self):
        sc = preset("light", 1, 10)
        env = RanEnv(sc)
        env.reset()
        rep = env.step(Allocation((0,), (sc.n_rb,), shared=True))
        assert sum(r.scheduled_rbs for r in rep) == sc.n_rb


class TestScenario:
    def test_yaml_round_trip(self, tmp_path):
        sc = preset("medium", seed=9, rounds=300)
        sc.dump(tmp_path / "s.yaml")
        back = load_scenario(tmp_path / "s.yaml")
        assert back.to_dict() == sc.to_dict()

    def test_parse_error_names_line(self, tmp_path):
        p = tmp_path / "bad.yaml"
        p.write_text("seed: 1\nslices: [\n  {id: 0\n")
        with pytest.raises(ScenarioError, match="line"):
            load_scenario(p)

    def test_missing_field_named(self, tmp_path):
        p = tmp_path / "bad.yaml"
        p.write_text("slices:\n  - {id: 0, delay_demand: 10, bler_demand: 0.1}\n")
        with pytest.raises(ScenarioError, match=r"slices\[0\]\.throughput_demand"):
            load_scenario(p)

    def test_unknown_slice(self):
        with pytest.raises(ScenarioError, match="slice"):
            scenario([session(0, slice_id=3)])

    def test_departure_before_arrival(self):
        with pytest.raises(ScenarioError):
            scenario([session(0, arrival=5, departure=2)])

    def test_preset_ranges(self):
        sc = preset("light", seed=1, rounds=2000)
        rates = [r for t in sc.sessions for _, r in t.profile]
        assert len(sc.sessions) == 10 and sc.k == 3
        assert 20.0 <= min(rates) and max(rates) <= 80.0
        assert preset("light", 1, 2000).to_dict() == sc.to_dict()

    def test_regret_bound_at_least_k(self):
        assert scenario([]).regret_bound() == 1.0
        assert preset("medium", 1).regret_bound() > 3.0
