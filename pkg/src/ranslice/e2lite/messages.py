"""Line-delimited JSON messages between the RAN endpoint and the xApp.

Every message is one UTF-8 line: a JSON object with sorted keys, no spaces,
a ``"type"`` tag and the variant's fields, terminated by ``\\n``. Floats use
Python's shortest round-trip representation, so encode/decode is lossless.

=============  ===========================================================
type           fields
=============  ===========================================================
``subscribe``  ``period_ms`` (number)
``kpm``        ``round`` (int), ``records`` (list of KPM objects),
               ``specs`` (hex digest of the slice configuration)
``cmd``        ``round`` (int), ``starts``, ``sizes`` (int lists),
               ``shared`` (bool)
``ack``        ``round`` (int)
``bye``        none
=============  ===========================================================

A KPM object carries ``session_id``, ``slice_id``, ``throughput`` (Mbps),
``delay`` (ms), ``bler``, ``prbs_used``, ``pusch_snr`` (dB), ``phr`` (dB),
``mcs``, ``current_tbs`` and ``scheduled_rbs``. Unknown keys are ignored on
decode.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterator, Sequence, Union

from ..core import Allocation, KpmRecord, SliceSpec


class DecodeError(ValueError):
    """Malformed line. ``offset`` is the byte position of the fault."""

    def __init__(self, msg: str, offset: int):
        super().__init__(f"{msg} (byte {offset})")
        self.offset = offset


class UnsupportedMessageError(DecodeError):
    """Well-formed line with an unknown ``type`` tag."""


@dataclass(frozen=True)
class Subscribe:
    period_ms: float = 100.0


@dataclass(frozen=True)
class KpmReport:
    round: int
    records: tuple[KpmRecord, ...] = ()
    specs: str = ""


@dataclass(frozen=True)
class SliceCommand:
    round: int
    allocation: Allocation = field(default_factory=lambda: Allocation((), ()))


@dataclass(frozen=True)
class Ack:
    round: int


@dataclass(frozen=True)
class Bye:
    pass


E2Message = Union[Subscribe, KpmReport, SliceCommand, Ack, Bye]

_INT_FIELDS = ("session_id", "slice_id", "prbs_used", "mcs", "current_tbs", "scheduled_rbs")
_FLOAT_FIELDS = ("throughput", "delay", "bler", "pusch_snr", "phr")
KPM_FIELDS = ("session_id", "slice_id", "throughput", "delay", "bler", "prbs_used",
              "pusch_snr", "phr", "mcs", "current_tbs", "scheduled_rbs")


def specs_digest(specs: Sequence[SliceSpec]) -> str:
    """Short stable fingerprint of a slice configuration."""
    doc = [[s.id, s.throughput_demand, s.delay_demand, s.bler_demand, list(s.weights),
            s.scheduler] for s in specs]
    return hashlib.sha256(_dumps(doc).encode()).hexdigest()[:16]


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False,
                      allow_nan=False)


def _record_obj(r: KpmRecord) -> dict:
    d = {name: int(getattr(r, name)) for name in _INT_FIELDS}
    d.update({name: float(getattr(r, name)) for name in _FLOAT_FIELDS})
    return d


def to_obj(msg: E2Message) -> dict:
    if isinstance(msg, Subscribe):
        return {"type": "subscribe", "period_ms": msg.period_ms}
    if isinstance(msg, KpmReport):
        return {"type": "kpm", "round": int(msg.round), "specs": msg.specs,
                "records": [_record_obj(r) for r in msg.records]}
    if isinstance(msg, SliceCommand):
        a = msg.allocation
        return {"type": "cmd", "round": int(msg.round), "starts": [int(s) for s in a.starts],
                "sizes": [int(n) for n in a.sizes], "shared": bool(a.shared)}
    if isinstance(msg, Ack):
        return {"type": "ack", "round": int(msg.round)}
    if isinstance(msg, Bye):
        return {"type": "bye"}
    raise TypeError(f"not an E2 message: {type(msg).__name__}")


def encode(msg: E2Message) -> bytes:
    return (_dumps(to_obj(msg)) + "\n").encode("utf-8")


# -- decoding --------------------------------------------------------------

class _Shape(Exception):
    pass


def _get(d: dict, key: str, kind):
    if key not in d:
        raise _Shape(f"missing field {key!r}")
    v = d[key]
    if kind is int:
        if isinstance(v, bool) or not isinstance(v, int):
            raise _Shape(f"field {key!r} must be an integer")
    elif kind is float:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise _Shape(f"field {key!r} must be a number")
    elif not isinstance(v, kind):
        raise _Shape(f"field {key!r} has the wrong type")
    return v


def _int_list(d: dict, key: str) -> tuple[int, ...]:
    v = _get(d, key, list)
    if not all(isinstance(x, int) and not isinstance(x, bool) for x in v):
        raise _Shape(f"field {key!r} must be a list of integers")
    return tuple(v)


def _record(d) -> KpmRecord:
    if not isinstance(d, dict):
        raise _Shape("KPM record must be an object")
    kw = {name: _get(d, name, int) for name in _INT_FIELDS}
    kw.update({name: _get(d, name, float) for name in _FLOAT_FIELDS})
    return KpmRecord(**kw)


def from_obj(d) -> E2Message:
    if not isinstance(d, dict):
        raise _Shape("message must be a JSON object")
    kind = _get(d, "type", str)
    if kind == "subscribe":
        return Subscribe(_get(d, "period_ms", float))
    if kind == "kpm":
        recs = _get(d, "records", list)
        return KpmReport(_get(d, "round", int), tuple(_record(r) for r in recs),
                         _get(d, "specs", str))
    if kind == "cmd":
        starts, sizes = _int_list(d, "starts"), _int_list(d, "sizes")
        if len(starts) != len(sizes):
            raise _Shape("starts and sizes differ in length")
        return SliceCommand(_get(d, "round", int),
                            Allocation(starts, sizes, _get(d, "shared", bool)))
    if kind == "ack":
        return Ack(_get(d, "round", int))
    if kind == "bye":
        return Bye()
    raise UnsupportedMessageError(f"unsupported message type {kind!r}", 0)


def decode(line: bytes) -> E2Message:
    """Inverse of ``encode``. The trailing newline is optional."""
    if isinstance(line, str):
        line = line.encode("utf-8")
    body = line[:-1] if line.endswith(b"\n") else line
    nl = body.find(b"\n")
    if nl >= 0:
        raise DecodeError("embedded newline", nl)
    try:
        text = body.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DecodeError(f"invalid UTF-8: {exc.reason}", exc.start) from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DecodeError(exc.msg, len(text[:exc.pos].encode("utf-8"))) from None
    except RecursionError:
        raise DecodeError("nesting too deep", 0) from None
    try:
        return from_obj(obj)
    except _Shape as exc:
        raise DecodeError(str(exc), 0) from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, DecodeError):
            raise
        raise DecodeError(str(exc), 0) from None


class LineBuffer:
    """Accumulates stream bytes and yields complete lines.

    A partial trailing line stays buffered, so a reader that hits a truncated
    frame can resume once the rest arrives.
    """

    def __init__(self):
        self._buf = bytearray()
        self.consumed = 0  # bytes handed out as complete lines

    def feed(self, data: bytes) -> None:
        self._buf.extend(data)

    def lines(self) -> Iterator[bytes]:
        while True:
            nl = self._buf.find(b"\n")
            if nl < 0:
                return
            line = bytes(self._buf[:nl + 1])
            del self._buf[:nl + 1]
            self.consumed += len(line)
            yield line

    @property
    def pending(self) -> bytes:
        return bytes(self._buf)
