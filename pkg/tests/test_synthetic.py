import math

import numpy as np
import pytest

from nexus.errors import DomainError, StabilityError
from nexus.model import fit_linear_ar
from nexus.synthetic import (
    community_graph,
    contextual_floor,
    gen_gpvar,
    gen_multivalued_spatial,
    gen_multivalued_temporal,
    generate,
    gpvar_oracle_forecast,
    gpvar_transition,
    shared_floor,
)


def test_floor_values():
    assert shared_floor(1.0, 0.0) == 1.0
    assert contextual_floor(0.0) == 0.0
    assert contextual_floor(0.2) == pytest.approx(0.2 * math.sqrt(2 / math.pi))
    # folded normal mean, checked by sampling
    z = np.random.default_rng(0).standard_normal(2_000_000)
    assert shared_floor(0.3, 0.5) == pytest.approx(np.abs(0.3 + 0.5 * z).mean(), rel=2e-3)


def _cycles(ds):
    c, h = ds.meta["cycle"], ds.meta["history"]
    n = ds.n_steps // c
    v = ds.values[: n * c, :, 0].reshape(n, c, ds.n_nodes)
    return v[:, :h], v[:, h:]


def test_spatial_pairs_share_history_and_split():
    ds = gen_multivalued_spatial(n_pairs=3, amplitude=0.7, steps=24 * 20)
    hist, fut = _cycles(ds)
    for k in range(3):
        np.testing.assert_array_equal(hist[:, :, 2 * k], hist[:, :, 2 * k + 1])
        np.testing.assert_allclose(fut[:, :, 2 * k] - hist[:, -1:, 2 * k], 0.7)
        np.testing.assert_allclose(fut[:, :, 2 * k + 1] - hist[:, -1:, 2 * k + 1], -0.7)
    assert ds.meta["floor_shared"] == pytest.approx(0.7)
    assert ds.meta["floor_contextual"] == 0.0


def test_temporal_events_share_history():
    ds = gen_multivalued_temporal(amplitude=1.0, steps=48 * 10, n_nodes=3)
    hist, fut = _cycles(ds)
    np.testing.assert_array_equal(hist[0::2], hist[1::2])
    np.testing.assert_allclose(fut[0::2] - hist[0::2, -1:], 1.0)
    np.testing.assert_allclose(fut[1::2] - hist[1::2, -1:], -1.0)
    assert ds.period == 48 and ds.meta["cycle"] == 24


def test_temporal_period_validation():
    with pytest.raises(DomainError):
        gen_multivalued_temporal(period=30)
    with pytest.raises(DomainError):
        gen_multivalued_spatial(amplitude=0.0)


@pytest.mark.parametrize("gen", [gen_multivalued_spatial, gen_multivalued_temporal])
def test_tabular_predictors_hit_floors(gen):
    """Noiseless twin gives the clean signal; its futures are the context-aware optimum."""
    noisy = gen(noise=0.3, steps=24 * 4000, seed=4)
    clean = gen(noise=0.0, steps=24 * 4000, seed=4)
    _, fut_noisy = _cycles(noisy)
    hist_clean, fut_clean = _cycles(clean)
    aware = np.abs(fut_noisy - fut_clean).mean()
    blind = np.abs(fut_noisy - hist_clean[:, -1:]).mean()
    assert aware == pytest.approx(noisy.meta["floor_contextual"], rel=0.02)
    assert blind == pytest.approx(noisy.meta["floor_shared"], rel=0.02)


def test_generators_deterministic():
    a = gen_multivalued_spatial(noise=0.1, seed=3)
    b = gen_multivalued_spatial(noise=0.1, seed=3)
    np.testing.assert_array_equal(a.values, b.values)
    c = gen_gpvar(steps=300, seed=3)
    d = gen_gpvar(steps=300, seed=3)
    np.testing.assert_array_equal(c.values, d.values)
    assert not np.array_equal(c.values, gen_gpvar(steps=300, seed=4).values)


def test_community_graph_structure():
    A = community_graph(3, 4, 0.5, np.random.default_rng(0))
    np.testing.assert_array_equal(A, A.T)
    assert np.all(np.diag(A) == 0)
    assert A[:4, 4:].sum() == 0 and A[4:8, 8:].sum() == 0
    assert np.all(A.sum(axis=1) >= 2)


def test_gpvar_transition_polynomial():
    A = np.array([[0, 1.0], [1.0, 0]])
    np.testing.assert_allclose(gpvar_transition(A, (0.2, 0.5, 0.1)), [[0.3, 0.5], [0.5, 0.3]])


def test_gpvar_unstable_rejected():
    with pytest.raises(StabilityError):
        gen_gpvar(coeffs=(0.6, 0.6), steps=100)


def test_gpvar_zero_coeffs_is_white_noise():
    ds = gen_gpvar(coeffs=(0.0,), steps=20000, noise=1.0, seed=1)
    windows = ds.values[None, :-1].transpose(0, 2, 1, 3)
    assert np.all(gpvar_oracle_forecast(ds.meta["transition"], windows, 1) == 0)
    assert np.abs(ds.values[1:]).mean() == pytest.approx(math.sqrt(2 / math.pi), rel=0.02)


def test_gpvar_oracle_matches_matrix_power():
    ds = gen_gpvar(steps=200, seed=2)
    M = ds.meta["transition"]
    x = ds.values[None, :12].transpose(0, 2, 1, 3)  # (1, N, 12, 1)
    out = gpvar_oracle_forecast(M, x, 3)
    np.testing.assert_allclose(out[0, :, 2, 0], np.linalg.matrix_power(M, 3) @ ds.values[11, :, 0])


def test_gpvar_single_community_self_coefficient():
    ds = gen_gpvar(communities=1, nodes_per_community=5, coeffs=(0.9,), steps=20000, seed=0)
    series = ds.values[:, :, 0].T  # (N, steps)
    x = series[:, :-1].reshape(-1, 1)
    y = series[:, 1:].reshape(-1, 1)
    ar = fit_linear_ar(x, y)
    assert float(np.ravel(ar.weights)[0]) == pytest.approx(0.9, abs=0.01)


def test_gpvar_variance_stable_in_graph_size():
    small = gen_gpvar(communities=4, steps=20000, seed=0).values.var()
    large = gen_gpvar(communities=8, steps=20000, seed=0).values.var()
    assert abs(large / small - 1) < 0.10


def test_generate_dispatch():
    ds = generate("gpvar", steps=100, coeffs=[0.5])
    assert ds.meta["coeffs"] == [0.5]
    with pytest.raises(DomainError):
        generate("nope")
