"""Compare the numba and numpy implementations of the smoothing kernels.

    python3 benchmarks/bench_backends.py [--sizes 256 1024 4096] [--hidden 32] [--batch 8]

Prints per-routine median times and the max abs difference between backends.
Requires numba; run with ``NEXUS_JIT`` unset.
"""

from __future__ import annotations

import argparse

import numpy as np

from nexus import kernels
from nexus.bench import median_time
from nexus.metrics import format_table


def _inputs(batch: int, n: int, d: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    e = rng.standard_normal((batch, n, d))
    phi = np.exp(e - e.max(axis=-1, keepdims=True))
    phi /= phi.sum(axis=-1, keepdims=True)
    h = rng.standard_normal((batch, n, d))
    g = rng.standard_normal((batch, n, d))
    return phi, h, g


def run(sizes, hidden: int, batch: int, dense_limit: int = 2048):
    rows = [["routine", "N", "numba_s", "numpy_s", "speedup", "max_abs_diff"]]
    for n in sizes:
        phi, h, g = _inputs(batch, n, hidden)
        routines = {
            "kernelized_fwd": lambda b: kernels.kernelized_forward(phi, h, backend=b)[0],
            "kernelized_bwd": lambda b: kernels.kernelized_backward(
                kernels.kernelized_forward(phi, h, backend=b)[1], g, backend=b)[0],
        }
        if n <= dense_limit:
            routines["dense_fwd"] = lambda b: kernels.dense_forward(phi, h, backend=b)
        for name, fn in routines.items():
            t_nb = median_time(lambda: fn("numba"))
            t_np = median_time(lambda: fn("numpy"))
            diff = float(np.max(np.abs(fn("numba") - fn("numpy"))))
            rows.append([name, n, f"{t_nb:.3g}", f"{t_np:.3g}", f"{t_np / t_nb:.2f}x", f"{diff:.2e}"])
    return rows


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", type=int, nargs="+", default=[256, 1024, 4096])
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--batch", type=int, default=8)
    args = p.parse_args()
    if not kernels.JIT_ENABLED:
        raise SystemExit("numba backend unavailable (NEXUS_JIT=0 or numba missing)")
    print(format_table(run(args.sizes, args.hidden, args.batch)))


if __name__ == "__main__":
    main()
