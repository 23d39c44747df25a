"""Per-round metrics rows, the CSV schema and summary statistics.

Metrics CSV columns (schema version 1), in order:

``round, policy, source, sessions``, then per slice ``k``: ``s{k}_prbs,
s{k}_tp, s{k}_delay, s{k}_bler, s{k}_regret``, then the aggregates ``tp,
delay, bler, regret, utilization, reward``.

Throughput is summed over sessions (Mbps); delay (ms) and BLER are session
means, zero for an empty slice. ``s{k}_regret`` is the slice's weighted
regret; ``reward`` is the normalized reward. ``source`` says whether the
allocation came from a fresh command, a reused one or the fallback.
Decision times are wall-clock and live in the separate ``timing.csv``
(``round, decision_time_us``) so the metrics file stays reproducible.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..core import Allocation, ConfigurationError, KpmRecord, SliceSpec, evaluate, group_by_slice

SCHEMA_VERSION = 1
SLICE_FIELDS = ("prbs", "tp", "delay", "bler", "regret")
AGGREGATES = ("tp", "delay", "bler", "regret", "utilization", "reward")


def metrics_columns(k: int) -> list[str]:
    cols = ["round", "policy", "source", "sessions"]
    for i in range(k):
        cols += [f"s{i}_{f}" for f in SLICE_FIELDS]
    return cols + list(AGGREGATES)


def _mean(xs) -> float:
    return float(sum(xs) / len(xs)) if xs else 0.0


def metrics_row(rnd: int, policy: str, source: str, specs: Sequence[SliceSpec],
                report: Sequence[KpmRecord], alloc: Allocation, r_max: float) -> dict:
    k = len(specs)
    br = evaluate(specs, report, alloc.sizes, r_max=r_max)
    groups = group_by_slice(report, k)
    row = {"round": rnd, "policy": policy, "source": source, "sessions": len(report)}
    for i, g in enumerate(groups):
        row[f"s{i}_prbs"] = alloc.sizes[0] if alloc.shared else alloc.sizes[i]
        row[f"s{i}_tp"] = float(sum(r.throughput for r in g))
        row[f"s{i}_delay"] = _mean([r.delay for r in g])
        row[f"s{i}_bler"] = _mean([r.bler for r in g])
        row[f"s{i}_regret"] = br.per_slice_weighted[i]
    row["tp"] = float(sum(r.throughput for r in report))
    row["delay"] = _mean([r.delay for r in report])
    row["bler"] = _mean([r.bler for r in report])
    row["regret"] = br.total
    row["utilization"] = br.utilization
    row["reward"] = br.normalized_reward
    return row


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def rows_to_csv(rows: Sequence[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


def read_metrics(path: str | Path) -> tuple[list[str], dict[str, np.ndarray]]:
    """Columns and column arrays of a metrics CSV (numeric where possible)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigurationError(f"{path}: empty metrics file") from None
        raw = list(reader)
    cols: dict[str, np.ndarray] = {}
    for j, name in enumerate(header):
        vals = [r[j] for r in raw]
        try:
            cols[name] = np.array([float(v) for v in vals])
        except ValueError:
            cols[name] = np.array(vals, dtype=object)
    return header, cols


# -- summaries -----------------------------------------------------------------

@dataclass(frozen=True)
class Summary:
    policy: str
    source: str
    rounds: int
    window: tuple[int, int]
    tp: float
    delay: float
    bler: float
    regret: float
    regret_p50: float
    regret_p95: float
    sla: tuple[float, ...]

    def as_dict(self) -> dict:
        d = {f: getattr(self, f) for f in ("policy", "source", "rounds", "tp", "delay", "bler",
                                              "regret", "regret_p50", "regret_p95")}
        d["window"] = list(self.window)
        d["sla"] = list(self.sla)
        return d


def resolve_window(n: int, window: tuple[int, int] | None, warmup: int) -> tuple[int, int]:
    if window is None:
        return (warmup, n) if n > warmup else (0, n)
    a, b = window
    if not 0 <= a < b <= n:
        raise ConfigurationError(
            f"window {a}:{b} exceeds the data; rounds available are 0:{n}")
    return a, b


def summarize_columns(cols: dict[str, np.ndarray], source: str, window=None,
                      warmup: int = 500) -> Summary:
    n = len(cols["round"])
    a, b = resolve_window(n, window, warmup)
    sel = slice(a, b)
    reg = cols["regret"][sel]
    k = sum(1 for c in cols if c.startswith("s") and c.endswith("_regret"))
    sla = tuple(float(np.mean(cols[f"s{i}_regret"][sel] == 0.0)) for i in range(k))
    policy = str(cols["policy"][0]) if n else ""
    return Summary(policy, source, b - a, (a, b), float(np.mean(cols["tp"][sel])),
                   float(np.mean(cols["delay"][sel])), float(np.mean(cols["bler"][sel])),
                   float(np.mean(reg)), float(np.percentile(reg, 50)),
                   float(np.percentile(reg, 95)), sla)


def summarize(paths: Sequence[str | Path], window: tuple[int, int] | None = None,
              warmup: int = 500) -> list[Summary]:
    """One summary per CSV, ordered by policy name (then path)."""
    if not paths:
        raise ConfigurationError("summarize needs at least one CSV")
    out = []
    for p in paths:
        _, cols = read_metrics(p)
        out.append(summarize_columns(cols, str(p), window, warmup))
    return sorted(out, key=lambda s: (s.policy, s.source))


TABLE_COLUMNS = ("policy", "rounds", "tp", "delay", "bler", "regret", "regret_p50", "regret_p95")


def format_table(rows: Sequence[Summary]) -> str:
    """Aligned text table."""
    cells = [list(TABLE_COLUMNS)]
    for s in rows:
        d = s.as_dict()
        cells.append([d["policy"], str(d["rounds"])]
                     + [f"{d[c]:.4f}" for c in TABLE_COLUMNS[2:]])
    widths = [max(len(r[j]) for r in cells) for j in range(len(TABLE_COLUMNS))]
    lines = ["  ".join(c.ljust(w) if j == 0 else c.rjust(w)
                       for j, (c, w) in enumerate(zip(r, widths))) for r in cells]
    return "\n".join(lines) + "\n"


def table_csv(rows: Sequence[Summary]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TABLE_COLUMNS + ("source",))
    for s in rows:
        d = s.as_dict()
        w.writerow([d["policy"], d["rounds"]] + [_fmt(d[c]) for c in TABLE_COLUMNS[2:]]
                   + [d["source"]])
    return buf.getvalue()


def percentile(xs: Sequence[float], q: float) -> float:
    return float(np.percentile(np.asarray(xs, dtype=np.float64), q)) if len(xs) else math.nan
