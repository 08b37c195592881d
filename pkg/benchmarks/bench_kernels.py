"""Time the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints the best-of-N wall time per kernel and backend plus the speedup.
"""

import argparse
import timeit

import numpy as np

from mcenhance import _backend
from mcenhance.omlsa import OmlsaConfig


def cases(rng):
    F, T, M = 257, 500, 6
    Y = (rng.standard_normal((F, T, M)) + 1j * rng.standard_normal((F, T, M))) / np.sqrt(2)
    w = rng.random((F, T))
    cfg = OmlsaConfig()
    power = rng.exponential(size=(1000, 257)) * rng.lognormal(0, 1, (1000, 1))
    args = (cfg.gain_floor, cfg.dd_alpha, cfg.noise_alpha, cfg.presence_threshold, cfg.smooth_alpha,
            cfg.presence_alpha, 94, cfg.xi_min, cfg.snr_floor, cfg.p_min, cfg.p_max)
    return {
        f"weighted_covariance F={F} T={T} M={M}": lambda b: _backend.weighted_covariance(Y, w, backend=b),
        "omlsa_gains T=1000 F=257": lambda b: _backend.omlsa_gains(power, *args, backend=b),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    try:
        from mcenhance import _kernels  # noqa: F401
    except ImportError:
        raise SystemExit("compiled kernels are not built; run `pip install --no-build-isolation -e .` first")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<42} {'python [ms]':>12} {'cython [ms]':>12} {'speedup':>8}")
    for name, fn in cases(rng).items():
        np.testing.assert_allclose(fn("cython"), fn("python"), rtol=1e-10, atol=1e-12)
        t = {b: min(timeit.repeat(lambda: fn(b), number=1, repeat=args.repeat)) for b in ("python", "cython")}
        print(f"{name:<42} {1e3 * t['python']:>12.2f} {1e3 * t['cython']:>12.2f} {t['python'] / t['cython']:>7.1f}x")


if __name__ == "__main__":
    main()
