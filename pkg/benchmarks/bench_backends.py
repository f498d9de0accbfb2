"""Compare the numba kernels against their pure-numpy fallbacks.

Times the two kernel-backed hot paths — the cyclic Jacobi eigensolver and
grid rounding inside matrix quantization — under both backends and prints a
speedup table.  Run as::

    python3 benchmarks/bench_backends.py [--repeat 5]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

import wushkit
from wushkit import mxfp4_scheme, quantize_matrix, set_backend, sym_eigen
from wushkit._accel import HAS_NUMBA


def _spd(d: int, seed: int) -> np.ndarray:
    g = np.random.default_rng(seed).standard_normal((d, d))
    return g @ g.T / d + np.eye(d)


def time_case(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--d", type=int, default=128, help="eigensolver dimension")
    ap.add_argument("--quant-shape", type=int, nargs=2, default=(4096, 512),
                    metavar=("ROWS", "COLS"))
    args = ap.parse_args()

    mats = [_spd(args.d, s) for s in range(4)]
    big = np.random.default_rng(7).standard_normal(tuple(args.quant_shape))
    scheme = mxfp4_scheme()

    cases = {
        f"sym_eigen d={args.d} (x4)": lambda: [sym_eigen(m) for m in mats],
        f"quantize_matrix {big.shape} mxfp4": lambda: quantize_matrix(big, scheme),
    }

    backends = ["numpy"] + (["numba"] if HAS_NUMBA else [])
    if not HAS_NUMBA:
        print("numba not importable; timing the numpy path only\n")

    results = {}
    for backend in backends:
        set_backend(backend)
        for label, fn in cases.items():
            fn()  # warm-up: triggers JIT compilation on the numba path
            results[(backend, label)] = time_case(fn, args.repeat)
    set_backend("auto")

    width = max(len(label) for label in cases)
    header = f"{'case':<{width}}  " + "".join(f"{b:>12}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for label in cases:
        row = f"{label:<{width}}  "
        for backend in backends:
            row += f"{results[(backend, label)] * 1e3:>10.2f}ms"
        if len(backends) == 2:
            ratio = results[("numpy", label)] / results[("numba", label)]
            row += f"{ratio:>9.2f}x"
        print(row)
    print(f"\nwushkit {wushkit.__version__}; active backend restored to 'auto'")


if __name__ == "__main__":
    main()
