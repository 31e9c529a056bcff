"""Compare the compiled and numpy tridiagonal kernels.

    python3 benchmarks/bench_kernels.py [--repeat R]

Each workload is timed with ``timeit`` (best of ``R`` repeats) for both
backends after checking that they agree to 1e-12.
"""
import argparse
import timeit

import numpy as np

from adaptive_teki import _tridiag_py

try:
    from adaptive_teki import _tridiag
except ImportError:  # pragma: no cover - depends on build
    _tridiag = None


def _tridiag_case(nb, n, rng):
    lower = np.ascontiguousarray(rng.uniform(-1, 0, (nb, n)))
    upper = np.ascontiguousarray(rng.uniform(-1, 0, (nb, n)))
    diag = np.ascontiguousarray(2.5 + rng.uniform(0, 1, (nb, n)))
    rhs = np.ascontiguousarray(rng.standard_normal((nb, n)))
    return "solve_tridiagonal", (lower, diag, upper, rhs)


def _darcy_case(nb, n, rng):
    kappa = np.ascontiguousarray(np.exp(rng.standard_normal((nb, n + 1))))
    return "darcy_pressure", (kappa, 1.0 / n, np.ones(n - 1), False)


WORKLOADS = (
    ("elliptic ensemble (J=50, n=49)", _tridiag_case, 50, 49),
    ("Darcy ensemble (J=50, n=64)", _darcy_case, 50, 64),
    ("Darcy jacobian batch (J=850, n=64)", _darcy_case, 850, 64),
    ("large systems (nb=200, n=2000)", _tridiag_case, 200, 2000),
)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    if _tridiag is None:
        print("compiled extension not available; nothing to compare")
        return 1
    rng = np.random.default_rng(0)
    print(f"{'workload':38s} {'python [ms]':>12s} {'compiled [ms]':>14s} {'speedup':>8s}")
    for label, make, nb, n in WORKLOADS:
        name, case = make(nb, n, rng)
        fast, slow = getattr(_tridiag, name), getattr(_tridiag_py, name)
        if not np.allclose(fast(*case), slow(*case), rtol=1e-12, atol=1e-12):
            raise SystemExit(f"backends disagree on {label}")
        times = []
        for fn in (slow, fast):
            t = timeit.Timer(lambda: fn(*case))
            number, _ = t.autorange()
            times.append(min(t.repeat(args.repeat, number)) / number * 1e3)
        print(f"{label:38s} {times[0]:12.3f} {times[1]:14.3f} {times[0] / times[1]:7.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
