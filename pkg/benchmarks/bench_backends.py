"""Benchmark the numba kernels against the pure-numpy fallback.

Times the hot kernels (fractional-delay pilot rows and the two 1-D peak
searches) and one full estimation trial under each backend.

Usage: python benchmarks/bench_backends.py [--repeats N]
"""

import argparse
import time

import numpy as np

from beamest import CazacConfig, RunConfig, ScenarioConfig, cazac_base, run_trial
from beamest import _kernels

CAZ = CazacConfig()
CBASE = cazac_base(CAZ)
RNG = np.random.default_rng(0)
W_VEC = RNG.standard_normal(16) + 1j * RNG.standard_normal(16)
QT_VEC = RNG.standard_normal(16) + 1j * RNG.standard_normal(16)
TRIAL_CFG = RunConfig(scenario=ScenarioConfig(n_nlos=1, seed=1), trials=1,
                      snr_sweep_db=(10.0,))

CASES = {
    "pilot_row(tau=5.37)": lambda: _kernels.pilot_row(CBASE, 5.37, CAZ.rolloff,
                                                      CAZ.pulse_halfwidth),
    "pilot_row_deriv(tau=5.37)": lambda: _kernels.pilot_row_deriv(
        CBASE, 5.37, CAZ.rolloff, CAZ.pulse_halfwidth),
    "search_tau(64-pt grid + golden)": lambda: _kernels.search_tau(
        W_VEC, CAZ.rolloff, CAZ.pulse_halfwidth, 16, 4.0, 6.0, 64, 1e-7),
    "search_mu(64-pt grid + golden)": lambda: _kernels.search_mu(
        QT_VEC, 1.3, 2 * np.pi / 16, 64, 1e-7),
    "full trial (coarse+refine+bounds)": lambda: run_trial(TRIAL_CFG, 0, 0),
}


def time_case(fn, repeats):
    fn()  # warm-up (jit compile on the numba path)
    best = float("inf")
    for _ in range(repeats):
        n = 1
        t0 = time.perf_counter()
        fn()
        dt = time.perf_counter() - t0
        # repeat tiny kernels enough to be measurable
        while dt < 1e-3:
            n *= 10
            t0 = time.perf_counter()
            for _ in range(n):
                fn()
            dt = time.perf_counter() - t0
        best = min(best, dt / n)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    results = {}
    for backend in ("numpy", "numba"):
        if backend not in _kernels._BACKENDS:
            print(f"backend {backend} unavailable, skipping")
            continue
        prev = _kernels.use_backend(backend)
        try:
            for name, fn in CASES.items():
                results[(backend, name)] = time_case(fn, args.repeats)
        finally:
            _kernels.use_backend(prev)

    # agreement spot-check between the two paths
    a = _kernels._BACKENDS["numpy"]["pilot_row"](CBASE, 5.37, CAZ.rolloff, CAZ.pulse_halfwidth)
    b = _kernels._BACKENDS["numba"]["pilot_row"](CBASE, 5.37, CAZ.rolloff, CAZ.pulse_halfwidth)
    assert np.allclose(a, b, atol=1e-12), "backends disagree"

    width = max(len(n) for n in CASES)
    print(f"{'case':<{width}}  {'numpy':>12}  {'numba':>12}  {'speedup':>8}")
    for name in CASES:
        tn = results.get(("numpy", name))
        tb = results.get(("numba", name))
        if tn is None or tb is None:
            continue
        print(f"{name:<{width}}  {tn * 1e6:>10.2f}us  {tb * 1e6:>10.2f}us  "
              f"{tn / tb:>7.1f}x")


if __name__ == "__main__":
    main()
