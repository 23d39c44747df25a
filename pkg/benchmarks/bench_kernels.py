"""Compare the numba-compiled kernels with their numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat N]

Prints per-call times for the PRB scheduler (each policy) and GAE, then the
wall time of a 200-round medium simulation under each path. The end-to-end
figures come from subprocesses with RANSLICE_DISABLE_NUMBA set accordingly.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from ranslice import kernels

E2E = """
import time
from ranslice.core import equal_split
from ranslice.ransim import RanEnv, preset
sc = preset("medium", seed=1, rounds=200)
env = RanEnv(sc)
env.reset()
env.step(equal_split(sc.k, sc.n_rb))  # compile outside the timed loop
t = time.perf_counter()
for _ in range(200):
    env.step(equal_split(sc.k, sc.n_rb))
print(time.perf_counter() - t)
"""


def sched_args(policy, rng, n=4, n_prb=91, pkts=6):
    cap = rng.uniform(200.0, 2000.0, n)
    backlog = rng.uniform(0.0, 3e5, n)
    ptr = np.arange(n + 1, dtype=np.int64) * pkts
    pb = rng.uniform(1e3, 5e4, n * pkts)
    t0 = np.sort(rng.uniform(0.0, 100.0, n * pkts))
    return (policy, n_prb, cap, backlog, rng.uniform(1e3, 1e5, n), 0.5, 0, rng.uniform(30, 250, n),
            ptr, pb, t0, t0 + 5.0)


def per_call(fn, args, repeat):
    fn(*args)
    return min(timeit.repeat(lambda: fn(*args), number=repeat, repeat=5)) / repeat * 1e6


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':<22}{'numba us':>12}{'numpy us':>12}{'speedup':>10}")
    for name, code in (("PF", kernels.POLICY_PF), ("RR", kernels.POLICY_RR),
                       ("MT", kernels.POLICY_MT), ("EDF", kernels.POLICY_EDF)):
        a = sched_args(code, rng)
        jit = per_call(kernels.schedule_prbs_jit, a, args.repeat)
        npy = per_call(kernels.schedule_prbs_numpy, a, args.repeat)
        print(f"{'schedule_prbs/' + name:<22}{jit:>12.1f}{npy:>12.1f}{npy / jit:>10.1f}")
    g = (rng.normal(size=40), rng.normal(size=40), 0.3, 0.95, 0.2)
    jit = per_call(kernels.gae_jit, g, args.repeat)
    npy = per_call(kernels.gae_numpy, g, args.repeat)
    print(f"{'gae/40':<22}{jit:>12.1f}{npy:>12.1f}{npy / jit:>10.1f}")

    times = {}
    for label, flag in (("numba", "0"), ("numpy", "1")):
        env = dict(os.environ, RANSLICE_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", E2E], env=env, capture_output=True,
                             text=True, check=True)
        times[label] = float(out.stdout.strip())
    print(f"200 medium rounds: numba {times['numba']:.3f} s, numpy {times['numpy']:.3f} s "
          f"({times['numpy'] / times['numba']:.1f}x)")


if __name__ == "__main__":
    main()
