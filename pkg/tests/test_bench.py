import numpy as np
import pytest

from nexus import kernels
from nexus.bench import BenchRow, bench_scaling, bytes_linearity, growth_ratios, median_time, peak_bytes
from nexus.errors import DomainError


def test_median_time_positive():
    assert median_time(lambda: sum(range(100)), repeats=3, min_seconds=0.001) > 0


def test_peak_bytes_tracks_allocation():
    small = peak_bytes(lambda: np.ones(1_000))
    large = peak_bytes(lambda: np.ones(100_000))
    assert large > 50 * small / 2 and large >= 800_000


def test_peak_bytes_restores_backend():
    prev = kernels.get_backend()
    peak_bytes(lambda: None)
    assert kernels.get_backend() == prev


def test_bench_rows_agree_with_dense():
    rows = bench_scaling([8, 32], hidden=8, repeats=1, min_seconds=0.001)
    assert [r.n for r in rows] == [8, 32]
    for r in rows:
        assert r.t_kernelized > 0 and r.t_dense > 0 and r.bytes > 0
        assert r.max_abs_diff < 1e-9
    assert set(rows[0].to_dict()) == {"N", "t_kernelized", "t_dense", "bytes", "bytes_dense", "max_abs_diff"}


def test_bench_without_dense():
    (row,) = bench_scaling([16], hidden=4, repeats=1, min_seconds=0.001, dense=False)
    assert row.t_dense is None and row.max_abs_diff is None


@pytest.mark.parametrize("sizes", [[], [0, 4]])
def test_bench_rejects_bad_sizes(sizes):
    with pytest.raises(DomainError):
        bench_scaling(sizes)


def test_growth_ratios_pairs():
    rows = [BenchRow(n, n * 1.0, n * n * 1.0, 10 * n, None, None) for n in (4, 8, 16)]
    ratios = growth_ratios(rows, 4)
    assert len(ratios) == 1
    g = ratios[0]
    assert (g["from_N"], g["to_N"]) == (4, 16)
    assert g["t_kernelized_ratio"] == 4.0 and g["t_dense_ratio"] == 16.0 and g["bytes_ratio"] == 4.0
    assert bytes_linearity(rows) == 0.0
    assert growth_ratios(rows[:1]) == []
