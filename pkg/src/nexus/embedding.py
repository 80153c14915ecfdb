"""Spatiotemporal node embedding: node dictionary fused with time-of-day encodings."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from .errors import DomainError, ShapeError
from .numerics import Tensor

TIME_DIM = 2  # sine and cosine channels


@dataclass
class TimeEncoding:
    U: np.ndarray  # (..., T, 2)
    period: int


def sinusoidal_time_encoding(step_indices, period: int) -> TimeEncoding:
    """Rows ``(sin(2 pi p / period), cos(2 pi p / period))`` per absolute step ``p``.

    Any leading axes of ``step_indices`` are kept, so a ``(B, T)`` array of
    window steps encodes a whole batch at once.
    """
    if int(period) < 1:
        raise DomainError(f"period must be >= 1, got {period}")
    p = np.mod(np.asarray(step_indices, dtype=np.int64), int(period)).astype(np.float64)
    angle = 2.0 * np.pi * p / period
    return TimeEncoding(np.stack([np.sin(angle), np.cos(angle)], axis=-1), int(period))


def constant_time_encoding(window: int, batch_shape=()) -> np.ndarray:
    """Time-blind stand-in: every row is the encoding of step 0."""
    U = np.zeros(tuple(batch_shape) + (window, TIME_DIM))
    U[..., 1] = 1.0
    return U


def init_node_embedding(n_nodes: int, d_emb: int, seed: int) -> Tensor:
    """Uniform(-1/sqrt(d_emb), 1/sqrt(d_emb)) dictionary, deterministic in ``seed``."""
    if n_nodes < 1 or d_emb < 1:
        raise DomainError("n_nodes and d_emb must be >= 1")
    bound = 1.0 / np.sqrt(d_emb)
    rng = np.random.default_rng(seed)
    return Tensor(rng.uniform(-bound, bound, size=(n_nodes, d_emb)), requires_grad=True, name="stne.E")


def _uniform(rng, fan_in, shape, name):
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True, name=name)


@dataclass
class StnEmbedding:
    E: Tensor  # (N, d_emb)
    W_u: Tensor  # (D, T)
    W_e: Tensor  # (d_emb, d_u)
    fc1_w: Tensor
    fc1_b: Tensor
    fc2_w: Tensor
    fc2_b: Tensor

    @classmethod
    def init(cls, n_nodes: int, window: int, hidden: int, d_emb: int, rng: np.random.Generator, seed: int):
        z = lambda n, name: Tensor(np.zeros(n), requires_grad=True, name=name)  # noqa: E731
        return cls(
            E=init_node_embedding(n_nodes, d_emb, seed),
            W_u=_uniform(rng, window, (hidden, window), "stne.W_u"),
            W_e=_uniform(rng, d_emb, (d_emb, TIME_DIM), "stne.W_e"),
            fc1_w=_uniform(rng, hidden, (hidden, hidden), "stne.fc1.w"),
            fc1_b=z(hidden, "stne.fc1.b"),
            fc2_w=_uniform(rng, hidden, (hidden, hidden), "stne.fc2.w"),
            fc2_b=z(hidden, "stne.fc2.b"),
        )

    def tensors(self) -> list[Tensor]:
        return [self.E, self.W_u, self.W_e, self.fc1_w, self.fc1_b, self.fc2_w, self.fc2_b]

    @property
    def n_nodes(self) -> int:
        return self.E.shape[0]

    @property
    def hidden(self) -> int:
        return self.W_u.shape[0]


def fuse_stne(emb: StnEmbedding, time) -> Tensor:
    """``MLP((E W_e) (W_u U)^T)`` -> (..., N, D).

    ``time`` is a :class:`TimeEncoding` or a raw ``(..., T, 2)`` array.
    """
    U = time.U if isinstance(time, TimeEncoding) else np.asarray(time, dtype=np.float64)
    T = emb.W_u.shape[1]
    if U.ndim < 2 or U.shape[-2:] != (T, emb.W_e.shape[1]):
        raise ShapeError(
            f"time encoding shape {U.shape} does not fit W_u {emb.W_u.shape} / W_e {emb.W_e.shape}"
        )
    if emb.E.shape[1] != emb.W_e.shape[0]:
        raise ShapeError(f"E {emb.E.shape} and W_e {emb.W_e.shape} do not chain")
    U_proj = nm.matmul(emb.W_u, U)  # (..., D, d_u)
    E_proj = nm.matmul(emb.E, emb.W_e)  # (N, d_u)
    mixed = nm.matmul(E_proj, nm.swapaxes(U_proj))  # (..., N, D)
    hidden = nm.gelu(nm.linear(mixed, emb.fc1_w, emb.fc1_b))
    return nm.linear(hidden, emb.fc2_w, emb.fc2_b)
