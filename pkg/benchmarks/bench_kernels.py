"""Compare the compiled and numpy bispectrum kernels.

    python benchmarks/bench_kernels.py [--ellmax 10] [--shells 3 8] [--repeat 5]
"""
import argparse
import time

import numpy as np

from orbitshells import kernels
from orbitshells.invariants import bispectrum
from orbitshells.model import random_coefficients
from orbitshells.recovery import march_system


def best_of(fn, repeat):
    fn()  # warm caches (coupling tables, harmonic matrices)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--ellmax", type=int, default=10)
    p.add_argument("--shells", type=int, nargs="+", default=[3, 8])
    p.add_argument("--repeat", type=int, default=5)
    a = p.parse_args()

    backends = kernels.available_backends()
    print(f"backends: {', '.join(backends)} (default {kernels.BACKEND})")
    print(f"{'task':<28}{'R':>4}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}")
    for R in a.shells:
        c = random_coefficients(0, a.ellmax, R)
        tasks = {
            f"bispectrum l<={a.ellmax}": lambda impl: bispectrum(c, impl=impl),
            f"march systems l<={a.ellmax}": lambda impl: [
                march_system(c, ell, True, impl=impl) for ell in range(2, a.ellmax + 1)
            ],
        }
        ref = bispectrum(c, impl="python").flat()
        for b in backends:
            assert np.allclose(bispectrum(c, impl=b).flat(), ref, atol=1e-10), b
        for name, fn in tasks.items():
            t = {b: best_of(lambda: fn(b), a.repeat) for b in backends}
            speed = t["python"] / t["cython"] if "cython" in t else 1.0
            print(f"{name:<28}{R:>4}" + "".join(f"{t[b] * 1e3:>10.1f}ms" for b in backends) + f"{speed:>9.1f}x")


if __name__ == "__main__":
    main()
