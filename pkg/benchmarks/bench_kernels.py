"""Compare the compiled and numpy sampling kernels.

Usage: python benchmarks/bench_kernels.py [--pixels N] [--mu MU] [--repeat R]
"""

import argparse
import time

import numpy as np

from icesim import _backend
from icesim.photon_model import SourceParams, Stream, sample


def time_call(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--pixels", type=int, default=4096)
    parser.add_argument("--mu", type=float, default=200.0, help="pairs per dwell")
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    source = SourceParams(args.mu, args.mu, 0.7)
    t = np.linspace(0.0, 1.0, args.pixels)
    k = _backend.kernels
    pixel = np.arange(args.pixels)
    lam = np.linspace(0.0, 50.0, args.pixels)
    cases = {
        "sample_entangled": lambda: sample(source, t, t, Stream(1, 0)),
        "poisson": lambda: k().poisson(1, 2, 0, pixel, lam),
        "uniforms": lambda: k().uniforms(1, 6, 0, pixel, np.zeros_like(pixel)),
    }
    results = {}
    previous = _backend.current()
    for name in _backend.available():
        _backend.use(name)
        for case, fn in cases.items():
            results[name, case] = time_call(fn, args.repeat)
    _backend.use(previous)

    pairs = args.pixels * args.mu
    print(f"{'case':<18}{'backend':<10}{'seconds':>12}{'speedup':>10}")
    for case in cases:
        ref = results.get(("python", case))
        for name in _backend.available():
            secs, out = results[name, case]
            speed = ref[0] / secs if ref else float("nan")
            print(f"{case:<18}{name:<10}{secs:>12.4f}{speed:>10.1f}")
        if ("cython", case) in results and ref:
            a, b = results["cython", case][1], ref[1]
            same = all(np.array_equal(x, y) for x, y in zip(
                (a.n_s, a.n_i, a.n_c) if case == "sample_entangled" else a,
                (b.n_s, b.n_i, b.n_c) if case == "sample_entangled" else b))
            print(f"{'':<18}identical output: {same}")
    if ("cython", "sample_entangled") in results:
        print(f"compiled pair throughput: {pairs / results['cython', 'sample_entangled'][0] / 1e6:.1f} M pairs/s")


if __name__ == "__main__":
    main()
