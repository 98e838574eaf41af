"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--trials N] [--repeat R]

Both backends run on identical inputs; the script also reports the largest
relative disagreement so a speedup never hides a wrong answer.
"""
from __future__ import annotations

import argparse
import math
import time

import numpy as np
from scipy import stats

from covertnet._kernels import backends


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def bench_population_gain(mods, trials, repeat, alpha):
    radius, density = 100.0, 0.1
    cdf = np.ascontiguousarray(stats.poisson.cdf(np.arange(int(density * math.pi * radius**2 * 1.3)),
                                                 density * math.pi * radius**2))
    rows = {}
    for name, mod in mods.items():
        rows[name] = _best(lambda: mod.population_gain(7, 0, trials, 1, cdf, 0.3, radius, alpha, None), repeat)
    return rows


def bench_tail_integral(mods, points, repeat, alpha):
    kappa = np.geomspace(1e-3, 1e2, points)
    x, w = np.polynomial.legendre.leggauss(16)
    return {name: _best(lambda: mod.stable_tail_integral(kappa, alpha, x, w), repeat) for name, mod in mods.items()}


def _report(title, rows):
    base = rows["python"][0]
    print(title)
    ref = np.asarray(rows["python"][1])
    for name, (t, out) in rows.items():
        out = np.asarray(out)
        ok = np.isfinite(ref) & np.isfinite(out)
        err = float(np.max(np.abs(out[ok] - ref[ok]) / np.maximum(np.abs(ref[ok]), 1e-300))) if ok.any() else 0.0
        print(f"  {name:9s} {t * 1e3:9.2f} ms   speedup {base / t:6.1f}x   max rel diff {err:.1e}")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--trials", type=int, default=4096)
    ap.add_argument("--points", type=int, default=200)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    mods = backends()
    if "compiled" not in mods:
        print("compiled backend not built; only the fallback is available")
    for alpha in (4.0, 3.5):
        _report(f"population_gain  alpha={alpha}  trials={args.trials}",
                bench_population_gain(mods, args.trials, args.repeat, alpha))
    for alpha in (4.0, 3.0):
        _report(f"stable_tail_integral  alpha={alpha}  points={args.points}",
                bench_tail_integral(mods, args.points, args.repeat, alpha))


if __name__ == "__main__":
    main()
