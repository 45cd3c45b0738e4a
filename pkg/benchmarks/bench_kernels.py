"""Compare the compiled and numpy kernels on map evaluation, CRPS and the
replicated PIT used by the Monte Carlo checks.

    python benchmarks/bench_kernels.py [--repeats 5]
"""

import argparse
import timeit

import numpy as np

from modcal import _pykernels

try:
    from modcal import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def cases(rng):
    xs = np.sort(rng.normal(size=2000))
    vs = (np.arange(1, 2001)) / 2001
    u = rng.normal(size=200_000) * 2
    S = np.sort(rng.normal(size=(20_000, 100)), axis=1)
    t = rng.normal(size=20_000)
    s = np.full(20_000, 0.05)
    return {
        "pwl_eval (n=2000, 2e5 pts)": lambda k: k.pwl_eval(xs, vs, 0.01, u),
        "pwl_deriv (n=2000, 2e5 pts)": lambda k: k.pwl_deriv(xs, vs, 0.01, u),
        "pwl_crps (n=2000, 2e5 pts)": lambda k: k.pwl_crps(xs, vs, 0.01, u),
        "replicated_linear_pit (2e4 x 100)": lambda k: k.replicated_linear_pit(S, t, s),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"{'kernel':<36} {'python ms':>10} {'cython ms':>10} {'speedup':>8}")
    for name, fn in cases(rng).items():
        py = min(timeit.repeat(lambda: fn(_pykernels), number=1, repeat=args.repeats))
        if _ckernels is None:
            print(f"{name:<36} {py * 1e3:>10.2f} {'n/a':>10} {'n/a':>8}")
            continue
        cy = min(timeit.repeat(lambda: fn(_ckernels), number=1, repeat=args.repeats))
        print(f"{name:<36} {py * 1e3:>10.2f} {cy * 1e3:>10.2f} {py / cy:>7.1f}x")


if __name__ == "__main__":
    main()
