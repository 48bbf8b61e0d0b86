"""Compare the compiled kernels with the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--traces 10000] [--poi 20] [--repeat 3]
"""

import argparse
import timeit

import numpy as np

from swarmsca import kernels
from swarmsca.kernels import pyimpl


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--traces", type=int, default=10_000)
    ap.add_argument("--poi", type=int, default=20)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    if kernels.cimpl is None:
        print("compiled extension not built; only the fallback is available")
    rng = np.random.default_rng(0)
    feats = rng.standard_normal((args.traces, args.poi))
    tpl = rng.standard_normal((256, args.poi))
    terms = rng.standard_normal((2, args.traces, 256))
    weights = np.array([1.0, 0.5])
    cps = np.unique(np.linspace(1, args.traces, 20).astype(np.intp))
    x = rng.standard_normal((args.traces, 700))
    labels = rng.integers(0, 256, args.traces).astype(np.uint8)

    cases = {
        "class_scores": lambda m: m.class_scores(feats, tpl),
        "accumulate_ranks": lambda m: m.accumulate_ranks(terms, weights, 7, cps),
        "class_stats": lambda m: m.class_stats(x, labels, 256),
    }
    print(f"{'kernel':<18}{'python (s)':>12}{'cython (s)':>12}{'speedup':>10}")
    for name, fn in cases.items():
        t_py = min(timeit.repeat(lambda: fn(pyimpl), number=1, repeat=args.repeat))
        if kernels.cimpl is None:
            print(f"{name:<18}{t_py:>12.4f}{'-':>12}{'-':>10}")
            continue
        t_c = min(timeit.repeat(lambda: fn(kernels.cimpl), number=1, repeat=args.repeat))
        print(f"{name:<18}{t_py:>12.4f}{t_c:>12.4f}{t_py / t_c:>9.1f}x")


if __name__ == "__main__":
    main()
