"""Time the numba and numpy kernels on the same inputs.

Usage: python3 benchmarks/bench_backends.py [--repeat 5]
"""

import argparse
import time

import numpy as np

from twophase import _accel
from twophase.interactions import MaskedOutputTable, SparsifierConfig, sparsify_many
from twophase.lattice import mobius_transform, superset_complement_transform


def best_time(fn, repeat):
    fn()  # warm-up, includes numba compilation
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def cases(rng):
    single = rng.normal(size=1 << 16)
    batch = rng.normal(size=(64, 1 << 10))
    tables = [MaskedOutputTable(v) for v in rng.normal(size=(20, 1 << 10))]
    cfg = SparsifierConfig(iters=500, gap_tol=0.0, keep_trace=False)
    return [
        ("mobius n=16", lambda: mobius_transform(single)),
        ("mobius 64 x n=10", lambda: mobius_transform(batch)),
        ("or-kernel 64 x n=10", lambda: superset_complement_transform(batch)),
        ("sparsify 20 x n=10, 500 iters", lambda: sparsify_many(tables, cfg)),
    ]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = ["numpy"] + (["numba"] if _accel.HAVE_NUMBA else [])
    keep = _accel.get_backend()
    print(f"{'case':32s}" + "".join(f"{b:>12s}" for b in backends) + "   speedup")
    for name, fn in cases(np.random.default_rng(0)):
        row = {}
        for b in backends:
            _accel.set_backend(b)
            row[b] = best_time(fn, args.repeat)
        ratio = row["numpy"] / row["numba"] if "numba" in row else float("nan")
        print(f"{name:32s}" + "".join(f"{row[b] * 1e3:10.2f}ms" for b in backends) + f"   {ratio:6.2f}x")
    _accel.set_backend(keep)


if __name__ == "__main__":
    main()
