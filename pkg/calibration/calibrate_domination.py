"""Brute-force calibration of the square-function domination constant.

For each sample f on [0,1) at depth L this recomputes, with plain loops over
dyadic intervals and no library code, the stopping cubes of |f|, the
martingale square function and A_S^2(|f|), and records
c(f) = max_x S_d f(x) / A_S^2 |f|(x). The committed threshold is the ensemble
maximum rounded up to two decimals.

    python calibration/calibrate_domination.py [--count 200] [--L 8]
"""
import argparse
import json
import math
from pathlib import Path

import numpy as np

OUT = Path(__file__).with_name("domination.json")
KINDS = ("normal", "lognormal", "spikes")


def sample(i: int, L: int) -> np.ndarray:
    """Sample i of the ensemble: kind i % 3, seeded by (L, i)."""
    rng = np.random.default_rng([L, i])
    N = 2 ** L
    kind = KINDS[i % 3]
    if kind == "normal":
        return rng.normal(size=N)
    if kind == "lognormal":
        return rng.lognormal(0.0, 1.5, N)
    f = np.zeros(N)
    hits = rng.random(N) < 0.05
    hits[rng.integers(N)] = True
    f[hits] = rng.lognormal(0.0, 1.0, hits.sum())
    return f


def interval_avg(f, k, m):
    N = len(f)
    w = N >> k
    return sum(f[m * w:(m + 1) * w]) / w


def brute_constant(f) -> float:
    N = len(f)
    L = int(round(math.log2(N)))
    a = [abs(v) for v in f]
    # stopping cubes: root, then maximal J inside a stopping I with <|f|>_J > 2 <|f|>_I (exact ties excluded)
    stops = []
    owner_avg = {}
    for k in range(L + 1):
        for m in range(2 ** k):
            avg = interval_avg(a, k, m)
            parent = owner_avg.get((k - 1, m >> 1)) if k else None
            if parent is None or avg > 2 * parent * (1 + 1e-12):
                stops.append((k, m))
                owner_avg[(k, m)] = avg
            else:
                owner_avg[(k, m)] = parent
    worst = 0.0
    for x in range(N):
        sq = 0.0
        for k in range(1, L + 1):
            d = interval_avg(f, k, x >> (L - k)) - interval_avg(f, k - 1, x >> (L - k + 1))
            sq += d * d
        dom = sum(interval_avg(a, k, m) ** 2 for k, m in stops if m == x >> (L - k))
        if dom == 0:
            if sq > 0:
                return math.inf
            continue
        worst = max(worst, math.sqrt(sq) / math.sqrt(dom))
    return worst


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--count", type=int, default=200)
    ap.add_argument("--L", type=int, default=8)
    ap.add_argument("--write", action="store_true", help=f"store the result in {OUT.name}")
    args = ap.parse_args()
    cs = [brute_constant(sample(i, args.L)) for i in range(args.count)]
    by_kind = {k: max(cs[i] for i in range(args.count) if i % 3 == j) for j, k in enumerate(KINDS)}
    result = {"L": args.L, "count": args.count, "kinds": list(KINDS), "max_c": max(cs), "max_c_by_kind": by_kind,
              "threshold": math.ceil(max(cs) * 100) / 100}
    print(json.dumps(result, indent=2))
    if args.write:
        OUT.write_text(json.dumps(result, indent=2) + "\n")


if __name__ == "__main__":
    main()
