"""Scaling benchmark: kernelized vs dense space mixing over node counts."""

from __future__ import annotations

import statistics
import time
import tracemalloc
from dataclasses import dataclass

import numpy as np

from . import kernels
from . import numerics as nm
from .errors import DomainError
from .mixers import SpaceMixerParams, space_mix_dense, space_mix_kernelized


@dataclass
class BenchRow:
    n: int
    t_kernelized: float
    t_dense: float | None
    bytes: int
    bytes_dense: int | None
    max_abs_diff: float | None

    def to_dict(self) -> dict:
        return {
            "N": self.n,
            "t_kernelized": self.t_kernelized,
            "t_dense": self.t_dense,
            "bytes": self.bytes,
            "bytes_dense": self.bytes_dense,
            "max_abs_diff": self.max_abs_diff,
        }


def median_time(fn, repeats: int = 5, min_seconds: float = 0.02) -> float:
    """Median per-call seconds over ``repeats`` samples.

    Each sample loops ``fn`` until ``min_seconds`` elapse so short calls are
    not dominated by clock resolution.
    """
    fn()  # warm caches and JIT
    samples = []
    for _ in range(max(repeats, 1)):
        calls, t0 = 0, time.perf_counter()
        while True:
            fn()
            calls += 1
            elapsed = time.perf_counter() - t0
            if elapsed >= min_seconds:
                break
        samples.append(elapsed / calls)
    return statistics.median(samples)


def peak_bytes(fn) -> int:
    """Peak traced allocation during one call to ``fn``.

    Measured on the numpy backend: arrays allocated inside compiled kernels
    bypass the tracer.
    """
    prev = kernels.set_backend("numpy")
    try:
        tracemalloc.start()
        tracemalloc.reset_peak()
        fn()
        _, peak = tracemalloc.get_traced_memory()
    finally:
        tracemalloc.stop()
        kernels.set_backend(prev)
    return int(peak)


def _case(n: int, hidden: int, kernel: str, seed: int):
    rng = np.random.default_rng(seed)
    params = SpaceMixerParams.init(hidden, rng, kernel=kernel)
    h = rng.standard_normal((n, hidden))
    e = rng.standard_normal((n, hidden))
    return h, e, params


def bench_scaling(sizes, hidden: int = 32, kernel: str = "softmax", repeats: int = 5, seed: int = 0,
                  dense: bool = True, min_seconds: float = 0.02) -> list[BenchRow]:
    """Time one space-mixing layer forward for every ``N`` in ``sizes``."""
    sizes = [int(n) for n in sizes]
    if not sizes or min(sizes) < 1:
        raise DomainError("sizes must be a non-empty list of positive node counts")
    rows = []
    with nm.no_grad():
        for n in sizes:
            h, e, params = _case(n, hidden, kernel, seed)
            run_k = lambda: space_mix_kernelized(h, e, params)  # noqa: E731
            run_d = lambda: space_mix_dense(h, e, params)  # noqa: E731
            t_k = median_time(run_k, repeats, min_seconds)
            b_k = peak_bytes(run_k)
            t_d = b_d = diff = None
            if dense:
                t_d = median_time(run_d, repeats, min_seconds)
                b_d = peak_bytes(run_d)
                diff = float(np.max(np.abs(run_k().value - run_d().value)))
            rows.append(BenchRow(n, t_k, t_d, b_k, b_d, diff))
    return rows


def growth_ratios(rows: list[BenchRow], factor: int = 4) -> list[dict]:
    """Time and byte ratios for every row pair whose node counts differ by ``factor``."""
    by_n = {r.n: r for r in rows}
    out = []
    for a in rows:
        b = by_n.get(a.n * factor)
        if b is None:
            continue
        out.append({
            "from_N": a.n,
            "to_N": b.n,
            "t_kernelized_ratio": b.t_kernelized / a.t_kernelized,
            "t_dense_ratio": None if a.t_dense is None or b.t_dense is None else b.t_dense / a.t_dense,
            "bytes_ratio": b.bytes / a.bytes,
        })
    return out


def bytes_linearity(rows: list[BenchRow]) -> float:
    """Largest relative deviation of ``bytes / N`` from its value at the smallest N."""
    base = rows[0].bytes / rows[0].n
    return max(abs(r.bytes / r.n - base) / base for r in rows)


__all__ = ["BenchRow", "median_time", "peak_bytes", "bench_scaling", "growth_ratios", "bytes_linearity"]
