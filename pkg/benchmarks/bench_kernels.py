"""Time each hot kernel on the numba and numpy paths.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5]

The first numba call compiles (or loads the on-disk cache) and is excluded.
"""

import argparse
import time

import numpy as np

from ergopt import ExpandingMapSpec, Expression
from ergopt import _kernels
from ergopt.dynamics import all_words

DOUBLING = ExpandingMapSpec(["x/2", "(x+1)/2"], 0.5)


def cases():
    cos = Expression("cos(2*pi*x) + x^2/3")
    xs = np.linspace(0.0, 1.0, 200_000)
    pot = _kernels.pack_programs([cos])
    words = all_words(2, 12)
    nodes = np.linspace(0.0, 1.0, 128)
    lin = _kernels.pack_programs([Expression("x")])

    depth = 14
    size = 2**depth
    idx = np.arange(size)
    pre = (np.arange(2)[None, :] * 2 ** (depth - 1) + (idx // 2)[:, None]).astype(np.int64)
    gains = -np.random.default_rng(0).random((size, 2))
    gains[size - 1, 1] = 0.0

    return {
        "eval_program (2e5 points)":
            lambda jit: _kernels.eval_program(cos.code, len(cos.code), cos.consts, xs, jit=jit),
        "word_log_sums (4096 words x 128 nodes)":
            lambda jit: _kernels.word_log_sums(words, nodes, DOUBLING.programs, pot, 1.0, jit=jit),
        "mane_search (depth 16)":
            lambda jit: _kernels.mane_search(1.0, 0.4, 1e-3, 1, 16, 1.0, DOUBLING.programs, lin,
                                             0.01, 10**7, jit=jit),
        "maxplus_table (2^14 cylinders)":
            lambda jit: _kernels.maxplus_table(np.zeros(size), pre, gains, size - 1, 1e-12,
                                               5000, jit=jit),
    }


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    if _kernels.numba is None:
        raise SystemExit("numba is not installed; only the numpy path is available")
    print(f"{'kernel':42s} {'numba [ms]':>11s} {'numpy [ms]':>11s} {'speed-up':>9s}")
    for name, fn in cases().items():
        fn(True)  # compile
        t_jit = best_of(lambda: fn(True), args.repeat)
        t_np = best_of(lambda: fn(False), args.repeat)
        print(f"{name:42s} {1e3 * t_jit:11.2f} {1e3 * t_np:11.2f} {t_np / t_jit:9.1f}")


if __name__ == "__main__":
    main()
