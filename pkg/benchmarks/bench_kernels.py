"""Compare the compiled and numpy kernels on the backward Snell recursion.

Usage: python3 benchmarks/bench_kernels.py [--depth 18] [--repeat 5] [--threads 1]
"""
import argparse
import time

import numpy as np

from rbsde_horizon import _pykernels
from rbsde_horizon.tree import flat_size

try:
    from rbsde_horizon import _ckernels
except ImportError:
    _ckernels = None


def _inputs(depth, seed=0):
    rng = np.random.default_rng(seed)
    top, below = flat_size(depth), flat_size(depth - 1)
    Y = np.zeros(top)
    Y[below:] = rng.normal(size=top - below)
    return (Y, rng.normal(size=below) * 0.01, rng.normal(size=top) * 0.01,
            rng.normal(size=below))


def _time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench(depth, repeat, threads):
    Y0, drift, gain, obstacle = _inputs(depth)
    below = drift.size
    results = {}
    outputs = {}
    for name, mod in (("python", _pykernels), ("compiled", _ckernels)):
        if mod is None:
            continue
        def run():
            Y = Y0.copy()
            dK, Z = np.zeros(below), np.zeros(below)
            mod.snell_backward(Y, drift, gain, obstacle, True, depth, 1.0, dK, Z, threads)
            outputs[name] = (Y, dK, Z)
        results[f"snell_backward/{name}"] = _time(run, repeat)
        leaves = Y0[below:]
        results[f"halve/{name}"] = _time(lambda: mod.halve(leaves), repeat)
    if len(outputs) == 2:
        same = all(np.array_equal(a, b) for a, b in zip(outputs["python"], outputs["compiled"]))
        results["bitwise_equal"] = same
    return results


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--depth", type=int, default=18)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    res = bench(args.depth, args.repeat, args.threads)
    print(f"depth={args.depth} nodes={flat_size(args.depth)} threads={args.threads}")
    for k, v in res.items():
        print(f"  {k:28s} {v if isinstance(v, bool) else f'{v * 1e3:9.2f} ms'}")
    for op in ("snell_backward", "halve"):
        py, c = res.get(f"{op}/python"), res.get(f"{op}/compiled")
        if py and c:
            print(f"  {op} speedup: {py / c:.1f}x")


if __name__ == "__main__":
    main()
