"""Regenerate the checked-in E2 golden corpus (src/ranslice/data/e2_corpus.jsonl).

Messages come from a seeded medium run, so the output is stable. Only rerun
this after a deliberate wire-format change.
"""

from pathlib import Path

from ranslice.core import Allocation, action_to_allocation, equal_split
from ranslice.e2lite import Ack, Bye, KpmReport, SliceCommand, Subscribe, encode, specs_digest
from ranslice.ransim import RanEnv, preset

OUT = Path(__file__).resolve().parents[1] / "src" / "ranslice" / "data" / "e2_corpus.jsonl"


def messages():
    sc = preset("medium", seed=3, rounds=50)
    env = RanEnv(sc)
    digest = specs_digest(sc.slices)
    report = env.reset()
    yield Subscribe(100.0)
    yield KpmReport(0, tuple(report), digest)
    yield Ack(0)
    alloc = equal_split(sc.k, sc.n_rb)
    for rnd in range(6):
        report = env.step(alloc)
        yield KpmReport(rnd + 1, tuple(report), digest)
        alloc = action_to_allocation([0.5 - 0.05 * rnd, 0.3, 0.2 + 0.04 * rnd], sc.n_rb)
        yield SliceCommand(rnd + 1, alloc)
        yield Ack(rnd + 1)
    yield SliceCommand(7, Allocation((0,), (sc.n_rb,), shared=True))
    yield KpmReport(8, (), digest)
    yield Bye()


if __name__ == "__main__":
    OUT.write_bytes(b"".join(encode(m) for m in messages()))
    print(f"wrote {OUT}")
