"""Time the compiled kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 20]

Both backends are imported directly, so one process measures both. Each
kernel is also checked for bitwise-equal output before it is timed.
"""

import argparse
import timeit

import numpy as np

from snnmia import _pykernels

try:
    from snnmia import _kernels
except ImportError:
    _kernels = None


def cases(rng):
    a = rng.standard_normal((50, 100)).astype(np.float32)
    b = rng.standard_normal((100, 64)).astype(np.float32)
    u = rng.standard_normal(50 * 64).astype(np.float32)
    c = rng.standard_normal(50 * 64).astype(np.float32)
    one = np.float32(1.0)
    conf = rng.random(2000)
    return {
        "matmul 50x100 @ 100x64": lambda k: k.matmul(a, b),
        "matmul 2000x100 @ 100x64": lambda k: k.matmul(np.tile(a, (40, 1)), b),
        "lif_step 3200": lambda k: k.lif_step(u, c, one, one, np.float32(0.0)),
        "triangle_surrogate 3200": lambda k: k.triangle_surrogate(u, one, one),
        "count_ge 2000 vs 2000": lambda k: k.count_ge(conf, conf),
    }


def same(x, y):
    if isinstance(x, tuple):
        return all(same(p, q) for p, q in zip(x, y))
    return np.array_equal(np.asarray(x), np.asarray(y))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=20)
    args = parser.parse_args(argv)
    if _kernels is None:
        print("compiled extension not built; run `pip install -e . --no-build-isolation` first")
        return 1
    rng = np.random.default_rng(0)
    print(f"{'kernel':28s} {'numpy ms':>10s} {'cython ms':>10s} {'speedup':>8s}  bitwise")
    for name, fn in cases(rng).items():
        eq = same(fn(_pykernels), fn(_kernels))
        t_py = min(timeit.repeat(lambda: fn(_pykernels), number=1, repeat=args.repeat)) * 1e3
        t_cy = min(timeit.repeat(lambda: fn(_kernels), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:28s} {t_py:10.3f} {t_cy:10.3f} {t_py / t_cy:8.1f}x  {eq}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
