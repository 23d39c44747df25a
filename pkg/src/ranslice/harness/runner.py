"""One experiment: scenario, policy, E2 endpoints on two threads, outputs on disk.

Run directory layout::

    config.yaml     the experiment config as run
    scenario.yaml   the resolved scenario (events and weight presets applied)
    metrics.csv     one row per round, see ``metrics``
    timing.csv      per-round decision time (wall clock, not reproducible)
    checkpoint.bin  final policy state
    summary.json    means over the summary window, plus a text copy in summary.txt
    train_log.csv   one row per PPO update (xslice only)
"""

from __future__ import annotations

import json
import logging
import shutil
import tempfile
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import checkpoint
from ..baselines import NvsPolicy, PropDemandPolicy, SingleSlicePolicy
from ..core import ConfigurationError, equal_split
from ..e2lite import (RanStatus, RoundInfo, XappStatus, inproc_pair, run_ran_endpoint,
                      run_xapp_endpoint, socket_accept, socket_connect, socket_listen)
from ..ppo import TRAIN_LOG_COLUMNS, XSliceAgent, init_params
from ..ransim import RanEnv, Scenario, TRAFFIC_CLASSES, load_scenario, preset
from .config import ExperimentConfig, dump_config
from .events import inject_event, perturb_weights, weights_case
from .metrics import (format_table, metrics_columns, metrics_row, percentile, rows_to_csv,
                      summarize_columns)

log = logging.getLogger(__name__)


class HarnessError(RuntimeError):
    """The run stopped early; ``rounds`` is how far it got."""

    def __init__(self, msg: str, rounds: int):
        super().__init__(msg)
        self.rounds = rounds


@dataclass
class RunResult:
    out: Path
    summary: dict
    ran: RanStatus
    xapp: XappStatus
    rows: list[dict]


def build_scenario(cfg: ExperimentConfig) -> Scenario:
    if cfg.scenario in TRAFFIC_CLASSES:
        sc = preset(cfg.scenario, cfg.seed, cfg.rounds)
    else:
        sc = load_scenario(cfg.scenario)
    if cfg.weights_case:
        sc = weights_case(sc, cfg.weights_case)
    if cfg.perturb:
        sc = perturb_weights(sc, cfg.perturb)
    for ev in cfg.events:
        sc = inject_event(sc, ev)
    return sc


def _load_params(cfg: ExperimentConfig, sc: Scenario):
    arrays, _ = checkpoint.load(cfg.init_checkpoint)
    ac = cfg.agent_config()
    ref = init_params(sc.k, np.random.default_rng(0), ac.hidden, ac.gcn_widths(),
                      ac.shared_encoder)
    for name, arr in ref.items():
        if name not in arrays or arrays[name].shape != arr.shape:
            got = arrays[name].shape if name in arrays else "missing"
            raise ConfigurationError(
                f"checkpoint tensor {name}: expected shape {arr.shape}, found {got}")
    return {name: arrays[name] for name in ref}


def make_policy(cfg: ExperimentConfig, sc: Scenario):
    if cfg.policy == "single":
        return SingleSlicePolicy(sc.slices, sc.n_rb)
    if cfg.policy == "nvs":
        return NvsPolicy(sc.slices, sc.n_rb)
    if cfg.policy == "prop":
        return PropDemandPolicy(sc.slices, sc.n_rb, sc.min_prb)
    params = _load_params(cfg, sc) if cfg.init_checkpoint else None
    return XSliceAgent(sc.slices, sc.n_rb, sc.regret_bound(), cfg.agent_config(),
                       min_prb=sc.min_prb, params=params)


def _policy_state(policy) -> tuple[dict, dict]:
    meta = {"policy": getattr(policy, "name", type(policy).__name__)}
    if isinstance(policy, XSliceAgent):
        return policy.params(), meta
    if isinstance(policy, NvsPolicy):
        st = policy.state
        return {"nvs/avg": np.asarray(st.avg, dtype=np.float64)}, meta
    return {}, meta


def _connect(cfg: ExperimentConfig):
    """(ran side, xapp side factory, cleanup)."""
    if cfg.transport == "inproc":
        ran, xapp = inproc_pair()
        return ran, (lambda: xapp), (lambda: None)
    tmp = tempfile.mkdtemp(prefix="ranslice-")
    path = str(Path(tmp) / "e2.sock")
    srv = socket_listen(path)
    holder = {}

    def connect():
        holder["x"] = socket_connect(path)
        return holder["x"]

    def cleanup():
        srv.close()
        shutil.rmtree(tmp, ignore_errors=True)

    return srv, connect, cleanup


def run_experiment(cfg: ExperimentConfig, quiet: bool = True) -> RunResult:
    """Run one experiment and write its directory. Deterministic per (config, seed)
    in lock-step mode; a deadline makes command timing depend on the host."""
    sc = build_scenario(cfg)
    policy = make_policy(cfg, sc)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    dump_config(cfg, out / "config.yaml")
    sc.dump(out / "scenario.yaml")

    env = RanEnv(sc)
    r_max = sc.regret_bound()
    rows: list[dict] = []
    timing: list[tuple[int, float]] = []
    name = getattr(policy, "name", cfg.policy)

    def on_round(info: RoundInfo):
        rows.append(metrics_row(info.round, name, info.source, sc.slices, info.report,
                                info.allocation, r_max))

    ran_side, xapp_factory, cleanup = _connect(cfg)
    xstat = XappStatus()
    failure: list[BaseException] = []

    def xapp_main():
        nonlocal xstat
        tr = None
        try:
            tr = xapp_factory()
            xstat = run_xapp_endpoint(policy, tr, on_decision=lambda r, a, dt: timing.append((r, dt)))
        except BaseException as exc:  # surfaced to the caller below
            failure.append(exc)
        finally:
            if tr is not None:
                tr.close()

    th = threading.Thread(target=xapp_main, name="xapp", daemon=True)
    th.start()
    try:
        ran_tr = socket_accept(ran_side) if cfg.transport == "socket" else ran_side
        fallback = equal_split(sc.k, sc.n_rb, sc.min_prb)
        status = run_ran_endpoint(env, ran_tr, cfg.deadline_ms, cfg.rounds, sc.slices, fallback,
                                  on_round=on_round)
        ran_tr.close()
        th.join(timeout=60.0)
    finally:
        cleanup()
        if isinstance(policy, XSliceAgent):
            policy.drain()
            policy.close()
    if failure:
        raise HarnessError(f"xApp failed after {status.rounds} rounds: {failure[0]!r}",
                           status.rounds) from failure[0]
    if status.rounds < cfg.rounds:
        raise HarnessError(f"run stopped at round {status.rounds}: {status.reason}",
                           status.rounds)

    cols = metrics_columns(sc.k)
    (out / "metrics.csv").write_text(rows_to_csv(rows, cols))
    timing.sort()
    (out / "timing.csv").write_text(
        "round,decision_time_us\n" + "".join(f"{r},{dt:.3f}\n" for r, dt in timing))
    arrays, meta = _policy_state(policy)
    meta.update(seed=cfg.seed, rounds=cfg.rounds)
    checkpoint.save(out / "checkpoint.bin", arrays, meta)
    if isinstance(policy, XSliceAgent):
        (out / "train_log.csv").write_text(rows_to_csv(policy.train_log, TRAIN_LOG_COLUMNS))

    summ = summarize_columns({c: np.array([r[c] for r in rows], dtype=object if c in
                                          ("policy", "source") else np.float64)
                              for c in cols}, "metrics.csv",
                             warmup=cfg.warmup_rounds)
    summary = summ.as_dict()
    summary.update(fresh=status.fresh, reused=status.reused, fallback=status.fallback)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    (out / "summary.txt").write_text(format_table([summ]))
    summary["decision_us_p50"] = percentile([dt for _, dt in timing], 50)
    summary["decision_us_p99"] = percentile([dt for _, dt in timing], 99)
    if not quiet:
        print(format_table([summ]), end="")
    return RunResult(out, summary, status, xstat, rows)
