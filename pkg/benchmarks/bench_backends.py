"""Compare the numba and numpy statewise-root backends.

    python benchmarks/bench_backends.py [--repeat 5]

Times the raw kernel over batch sizes, then a full lambda sweep with each
backend swapped in.  JIT compilation is triggered before any timing.
"""

import argparse
import time

import numpy as np

from kelly_riskcal import _kernels, logcal
from kelly_riskcal.crra import find_prefix
from kelly_riskcal.market import sort_market
from kelly_riskcal.samples import unique_prefix_markets


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def kernel_inputs(rng, n, lam=3.0, a=2.5):
    t = rng.uniform(0.05, 5.0, n)
    lo = np.maximum(1.0 / t, (a / t) ** (1.0 / (lam + 1.0)))
    hi = (1.0 + a * lo ** (-lam)) / t
    return t, a, lam, lo, hi


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if not _kernels.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    rng = np.random.default_rng(0)
    backends = {"numpy": _kernels.statewise_roots_numpy, "numba": _kernels.statewise_roots_numba}
    _kernels.statewise_roots_numba(*kernel_inputs(rng, 4))

    print(f"{'states':>8} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8} {'max |dw|':>10}")
    for n in (8, 64, 1024, 16384, 262144):
        args_n = kernel_inputs(rng, n)
        t_np = best_of(lambda: backends["numpy"](*args_n), args.repeat)
        t_nb = best_of(lambda: backends["numba"](*args_n), args.repeat)
        diff = np.abs(backends["numpy"](*args_n)[0] - backends["numba"](*args_n)[0]).max()
        print(f"{n:>8} {t_np * 1e3:>10.3f} {t_nb * 1e3:>10.3f} {t_np / t_nb:>8.1f} {diff:>10.1e}")

    markets = [sort_market(m) for m in unique_prefix_markets(rng, 200, (2, 8))]
    sels = [find_prefix(sm) for sm in markets]
    grid = np.geomspace(1.5, 50.0, 20)

    def sweep_all():
        for sel, sm in zip(sels, markets):
            logcal.sweep(sel, sm, grid)

    print(f"\nfull sweep: {len(markets)} markets x {grid.size} lambdas")
    original = _kernels.statewise_roots
    try:
        for name, fn in backends.items():
            _kernels.statewise_roots = fn
            print(f"  {name:>6}: {best_of(sweep_all, max(1, args.repeat // 2)):.3f} s")
    finally:
        _kernels.statewise_roots = original


if __name__ == "__main__":
    main()
