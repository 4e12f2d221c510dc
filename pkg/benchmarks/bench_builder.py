"""Compiled kernel vs pure-Python fallback on the same clouds.

    python3 benchmarks/bench_builder.py [--sizes 2000,10000,50000] [--repeat 3]
"""
import argparse
import math
import time

import numpy as np

from spam_forge import kernels
from spam_forge.builder import build_accelerated
from spam_forge.model import ModelParams
from spam_forge.points import MarkOracle, sample_points


def timed(fn, repeat):
    best, out = math.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", default="2000,10000,50000")
    ap.add_argument("--gamma", type=float, default=0.8)
    ap.add_argument("--delta", type=float, default=1.2)
    ap.add_argument("--cutoff", type=float, default=math.inf)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    if kernels.BACKEND != "compiled":
        print("compiled kernel not built; run `python3 setup.py build_ext --inplace` first")
        return 1
    print(f"{'n':>8} {'edges':>9} {'compiled s':>11} {'python s':>10} {'speedup':>8}  same")
    for n in (int(float(x)) for x in args.sizes.split(",")):
        P = ModelParams(args.gamma, 1.0, args.delta, 1, float(n), 1.0, args.seed)
        cloud = sample_points(P)
        oracle = MarkOracle(args.seed)
        tc, gc = timed(lambda: build_accelerated(cloud, oracle, range_cutoff=args.cutoff,
                                                 backend="compiled"), args.repeat)
        tp, gp = timed(lambda: build_accelerated(cloud, oracle, range_cutoff=args.cutoff,
                                                 backend="python"), args.repeat)
        same = np.array_equal(gc.edge_keys(), gp.edge_keys())
        print(f"{n:>8} {gc.edge_count:>9} {tc:>11.3f} {tp:>10.3f} {tp / tc:>8.1f}  {same}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
