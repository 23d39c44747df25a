"""Command line: ``ranslice run | summarize | sweep | inject``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import yaml

from ..core import ConfigurationError
from .config import POLICIES, TRANSPORTS, ExperimentConfig, load_config
from .events import inject_event
from .metrics import format_table, summarize, table_csv
from .runner import HarnessError, build_scenario, run_experiment
from .sweep import SWEEP_PARAMS, format_sweep, sweep


def _scalar(text: str):
    return yaml.safe_load(text)


def _overrides(items: list[str]) -> tuple[dict, dict]:
    agent, hyper = {}, {}
    for item in items or []:
        key, sep, val = item.partition("=")
        if not sep or "." not in key:
            raise ConfigurationError(f"--set expects agent.KEY=VALUE or hyper.KEY=VALUE, got {item!r}")
        group, name = key.split(".", 1)
        if group not in ("agent", "hyper"):
            raise ConfigurationError(f"--set: unknown group {group!r}")
        (agent if group == "agent" else hyper)[name] = _scalar(val)
    return agent, hyper


def _run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML experiment config; flags override it")
    p.add_argument("--scenario", help="preset (light, medium, intensive) or scenario YAML")
    p.add_argument("--policy", choices=POLICIES)
    p.add_argument("--rounds", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--transport", choices=TRANSPORTS)
    p.add_argument("--deadline-ms", type=float, help="command deadline; omit for lock-step")
    p.add_argument("--warmup-rounds", type=int)
    p.add_argument("--event", action="append", default=[], help="scenario event, repeatable")
    p.add_argument("--weights-case", choices=("A", "B", "C", "D"))
    p.add_argument("--perturb", help="weight perturbation such as tp+ or delay-")
    p.add_argument("--set", action="append", default=[], metavar="GROUP.KEY=VALUE",
                   help="agent or hyper override, e.g. hyper.lr=0.001")


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    kw = {}
    for flag in ("scenario", "policy", "rounds", "seed", "out", "transport", "deadline_ms",
                 "warmup_rounds", "weights_case", "perturb"):
        v = getattr(args, flag)
        if v is not None:
            kw[flag] = v
    agent, hyper = _overrides(args.set)
    kw["agent"] = {**cfg.agent, **agent}
    kw["hyper"] = {**cfg.hyper, **hyper}
    kw["events"] = list(cfg.events) + list(args.event)
    return cfg.replace(**kw)


def _window(text: str | None):
    if not text:
        return None
    a, sep, b = text.partition(":")
    if not sep:
        raise ConfigurationError(f"--window expects A:B, got {text!r}")
    return int(a), int(b)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ranslice", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    _run_flags(sub.add_parser("run", help="run one experiment"))

    s = sub.add_parser("summarize", help="compare metrics CSVs")
    s.add_argument("csv", nargs="+")
    s.add_argument("--window", help="half-open round range A:B (default: after warm-up)")
    s.add_argument("--warmup-rounds", type=int, default=500)
    s.add_argument("--csv-out", help="also write the table as CSV")

    w = sub.add_parser("sweep", help="one run per value of a network size")
    w.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    w.add_argument("--values", required=True, help="comma-separated integers")
    w.add_argument("--parallel", action="store_true")
    _run_flags(w)

    i = sub.add_parser("inject", help="print the scenario with events applied")
    _run_flags(i)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.cmd == "run":
            run_experiment(_config(args), quiet=False)
        elif args.cmd == "summarize":
            rows = summarize(args.csv, _window(args.window), args.warmup_rounds)
            print(format_table(rows), end="")
            if args.csv_out:
                Path(args.csv_out).write_text(table_csv(rows))
        elif args.cmd == "sweep":
            values = [int(v) for v in args.values.split(",") if v.strip()]
            print(format_sweep(sweep(args.param, values, _config(args), args.parallel)), end="")
        elif args.cmd == "inject":
            cfg = _config(args)
            sc = build_scenario(cfg.replace(events=[]))
            for ev in cfg.events:
                sc = inject_event(sc, ev)
            print(yaml.safe_dump(sc.to_dict(), sort_keys=False), end="")
    except HarnessError as exc:
        print(f"ranslice: {exc} (reached round {exc.rounds})", file=sys.stderr)
        return 3
    except (ConfigurationError, ValueError, OSError) as exc:
        print(f"ranslice: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
