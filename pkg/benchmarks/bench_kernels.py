"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np
from scipy.spatial.distance import pdist, squareform

from afgnn._kernels import _pure

try:
    from afgnn._kernels import _core
except ImportError:  # extension not built
    _core = None


def cases(rng):
    x = rng.standard_normal((300, 16))
    dist = squareform(pdist(x))
    weights = rng.integers(1, 5, size=300).astype(float)
    a = np.bincount(rng.integers(0, 12, size=400))
    b = np.bincount(rng.integers(0, 15, size=400))
    return {
        "average_linkage(m=300)": lambda mod: mod.average_linkage(dist, weights),
        "expected_mutual_info(n=400, 12x15)": lambda mod: mod.expected_mutual_info(a, b, 400),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':<38}{'python (s)':>12}{'cython (s)':>12}{'speedup':>10}")
    for name, fn in cases(rng).items():
        t_py = min(timeit.repeat(lambda: fn(_pure), number=1, repeat=args.repeat))
        if _core is None:
            print(f"{name:<38}{t_py:12.4f}{'n/a':>12}{'':>10}")
            continue
        t_c = min(timeit.repeat(lambda: fn(_core), number=1, repeat=args.repeat))
        same = np.allclose(fn(_pure), fn(_core), rtol=1e-12, atol=0)
        print(f"{name:<38}{t_py:12.4f}{t_c:12.4f}{t_py / t_c:9.1f}x" + ("" if same else "  MISMATCH"))


if __name__ == "__main__":
    main()
