"""Time the compiled tree kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--n 1] [--L 16] [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from dyadlab import _pykernels
from dyadlab.grid import GridSpec

try:
    from dyadlab import _ckernels
except ImportError:
    _ckernels = None


def cases(spec, rng):
    cells = rng.lognormal(size=spec.ncells)
    nodes = rng.random(spec.nnodes)
    avg = _pykernels.pyramid_sums(cells, spec.n, spec.L) / np.repeat(
        [spec.branching ** (spec.L - k) for k in range(spec.L + 1)],
        [spec.branching ** k for k in range(spec.L + 1)])
    n, L = spec.n, spec.L
    return {
        "pyramid_sums": (cells, n, L),
        "broadcast_sum": (nodes, n, L),
        "suffix_max_integrals": (avg, n, L),
        "chain_max": (avg, n, L, 0, 0),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=1)
    ap.add_argument("--L", type=int, default=16)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    spec = GridSpec(args.n, args.L)
    rng = np.random.default_rng(0)
    print(f"n={spec.n} L={spec.L} cells={spec.ncells} nodes={spec.nnodes}")
    print(f"{'kernel':24s} {'python ms':>10s} {'cython ms':>10s} {'speedup':>8s} {'max diff':>10s}")
    for name, a in cases(spec, rng).items():
        py = getattr(_pykernels, name)
        t_py = min(timeit.repeat(lambda: py(*a), number=1, repeat=args.repeat)) * 1e3
        if _ckernels is None:
            print(f"{name:24s} {t_py:10.2f} {'n/a':>10s}")
            continue
        cy = getattr(_ckernels, name)
        t_cy = min(timeit.repeat(lambda: cy(*a), number=1, repeat=args.repeat)) * 1e3
        diff = np.max(np.abs(np.asarray(py(*a)) - np.asarray(cy(*a))))
        print(f"{name:24s} {t_py:10.2f} {t_cy:10.2f} {t_py / t_cy:8.1f} {diff:10.2e}")


if __name__ == "__main__":
    main()
