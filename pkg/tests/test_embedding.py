import numpy as np
import pytest

from nexus import numerics as nm
from nexus.embedding import (StnEmbedding, constant_time_encoding, fuse_stne, init_node_embedding,
                             sinusoidal_time_encoding)
from nexus.errors import DomainError, ShapeError


def stne(rng, n=5, T=12, D=8, d_emb=4):
    return StnEmbedding.init(n, T, D, d_emb, rng, seed=3)


def test_encoding_origin_and_quarter():
    np.testing.assert_allclose(sinusoidal_time_encoding([0], 288).U, [[0.0, 1.0]], atol=1e-15)
    np.testing.assert_allclose(sinusoidal_time_encoding([72], 288).U, [[1.0, 0.0]], atol=1e-15)


def test_encoding_periodicity_and_unit_rows():
    a = sinusoidal_time_encoding([300], 288).U
    b = sinusoidal_time_encoding([12], 288).U
    assert a.tobytes() == b.tobytes()
    u = sinusoidal_time_encoding(np.arange(1000), 288).U
    np.testing.assert_allclose(np.linalg.norm(u, axis=-1), 1.0, atol=1e-12)


def test_encoding_period_zero():
    with pytest.raises(DomainError):
        sinusoidal_time_encoding([1, 2], 0)


def test_constant_encoding_rows():
    U = constant_time_encoding(3, (2,))
    assert U.shape == (2, 3, 2)
    np.testing.assert_array_equal(U[..., 0], 0.0)
    np.testing.assert_array_equal(U[..., 1], 1.0)


def test_node_embedding_determinism_and_mean():
    a, b = init_node_embedding(100, 100, 7), init_node_embedding(100, 100, 7)
    assert a.value.tobytes() == b.value.tobytes()
    assert not np.array_equal(a.value, init_node_embedding(100, 100, 8).value)
    # uniform(-1/10, 1/10): sd = 0.1 / sqrt(3)
    se = (0.1 / np.sqrt(3)) / np.sqrt(a.value.size)
    assert abs(a.value.mean()) <= 3 * se
    assert np.all(np.abs(a.value) <= 0.1)


def test_fuse_shape_and_chain(rng):
    emb = stne(rng)
    U = sinusoidal_time_encoding(np.arange(12), 24)
    assert fuse_stne(emb, U).shape == (5, 8)
    U_batch = sinusoidal_time_encoding(np.arange(12)[None] + np.array([[0], [5], [9]]), 24)
    assert fuse_stne(emb, U_batch).shape == (3, 5, 8)


def test_fuse_shape_mismatch(rng):
    emb = stne(rng)
    with pytest.raises(ShapeError):
        fuse_stne(emb, sinusoidal_time_encoding(np.arange(11), 24))


def test_zero_time_projection_gives_identical_rows(rng):
    emb = stne(rng)
    emb.W_u.value[:] = 0.0
    out = fuse_stne(emb, sinusoidal_time_encoding(np.arange(12), 24)).value
    assert np.all(out == out[0])


def test_same_time_of_day_same_embedding(rng):
    emb = stne(rng)
    a = fuse_stne(emb, sinusoidal_time_encoding(np.arange(12) + 3, 24)).value
    b = fuse_stne(emb, sinusoidal_time_encoding(np.arange(12) + 3 + 24 * 5, 24)).value
    assert a.tobytes() == b.tobytes()


def test_time_of_day_changes_embedding(rng):
    emb = stne(rng)
    morning = fuse_stne(emb, sinusoidal_time_encoding(np.arange(12) + 70, 288)).value
    evening = fuse_stne(emb, sinusoidal_time_encoding(np.arange(12) + 210, 288)).value
    assert np.max(np.abs(morning - evening)) > 1e-8


def test_permuting_dictionary_permutes_rows(rng):
    emb = stne(rng)
    U = sinusoidal_time_encoding(np.arange(12), 24)
    base = fuse_stne(emb, U).value
    perm = np.array([3, 0, 4, 1, 2])
    emb.E.value = emb.E.value[perm]
    np.testing.assert_array_equal(fuse_stne(emb, U).value, base[perm])


def test_fuse_gradients(rng):
    emb = stne(rng, n=3, T=4, D=5, d_emb=3)
    U = sinusoidal_time_encoding(np.arange(4) + 2, 7)
    w = rng.standard_normal((3, 5))
    rep = nm.grad_check(lambda: nm.sum(nm.mul(fuse_stne(emb, U), w)), emb.tensors())
    assert rep.passed, rep.failures
