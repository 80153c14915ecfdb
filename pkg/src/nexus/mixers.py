"""Time mixing with spatial context and kernelized space mixing with temporal context."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from .errors import DegenerateError, DomainError, ShapeError
from .numerics import Tensor

KERNELS = ("softmax", "elu_plus_one", "relu_normalized", "exp", "identity_normalized")


def fold(x):
    """(..., N, T, d) -> (..., N, T*d), time-major within each row."""
    shape = x.shape
    if len(shape) < 3:
        raise ShapeError(f"fold expects (..., N, T, d), got {shape}")
    new = shape[:-2] + (shape[-2] * shape[-1],)
    return nm.reshape(x, new) if isinstance(x, Tensor) else np.reshape(x, new)


def unfold(y, horizon: int, d_out: int):
    """Inverse of :func:`fold`: (..., N, H*d_out) -> (..., N, H, d_out)."""
    shape = y.shape
    if shape[-1] != horizon * d_out:
        raise ShapeError(f"last extent {shape[-1]} != horizon*d_out = {horizon}*{d_out}")
    new = shape[:-1] + (horizon, d_out)
    return nm.reshape(y, new) if isinstance(y, Tensor) else np.reshape(y, new)


def _param(rng, fan_in, shape, name):
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True, name=name)


def _zeros(n, name):
    return Tensor(np.zeros(n), requires_grad=True, name=name)


def _ones(n, name):
    return Tensor(np.ones(n), requires_grad=True, name=name)


@dataclass
class TimeMixerParams:
    proj_w: Tensor  # (T*d_in, D)
    proj_b: Tensor
    ff1_w: Tensor  # (2D, D): rows [:D] act on the series state, rows [D:] on the embedding
    ff1_b: Tensor
    ff2_w: Tensor  # (D, D)
    ff2_b: Tensor
    ln_g: Tensor
    ln_b: Tensor

    @classmethod
    def init(cls, window: int, d_in: int, hidden: int, rng: np.random.Generator):
        return cls(
            proj_w=_param(rng, window * d_in, (window * d_in, hidden), "time.proj.w"),
            proj_b=_zeros(hidden, "time.proj.b"),
            ff1_w=_param(rng, 2 * hidden, (2 * hidden, hidden), "time.ff1.w"),
            ff1_b=_zeros(hidden, "time.ff1.b"),
            ff2_w=_param(rng, hidden, (hidden, hidden), "time.ff2.w"),
            ff2_b=_zeros(hidden, "time.ff2.b"),
            ln_g=_ones(hidden, "time.ln.g"),
            ln_b=_zeros(hidden, "time.ln.b"),
        )

    def tensors(self) -> list[Tensor]:
        return [self.proj_w, self.proj_b, self.ff1_w, self.ff1_b, self.ff2_w, self.ff2_b, self.ln_g, self.ln_b]

    @property
    def hidden(self) -> int:
        return self.proj_w.shape[1]

    @property
    def theta_series(self) -> np.ndarray:
        return self.ff1_w.value[: self.hidden]

    @property
    def theta_context(self) -> np.ndarray:
        return self.ff1_w.value[self.hidden:]


@dataclass
class SpaceMixerParams:
    theta_w: Tensor  # (D, D), one copy shared by every layer
    theta_b: Tensor
    ln_g: Tensor
    ln_b: Tensor
    kernel: str = "softmax"
    layers: int = 1

    def __post_init__(self):
        if self.kernel not in KERNELS:
            raise DomainError(f"unknown kernel {self.kernel!r}; choose from {KERNELS}")
        if self.layers < 1:
            raise DomainError("space mixer needs at least one layer")

    @classmethod
    def init(cls, hidden: int, rng: np.random.Generator, kernel: str = "softmax", layers: int = 1):
        return cls(
            theta_w=_param(rng, hidden, (hidden, hidden), "space.theta.w"),
            theta_b=_zeros(hidden, "space.theta.b"),
            ln_g=_ones(hidden, "space.ln.g"),
            ln_b=_zeros(hidden, "space.ln.b"),
            kernel=kernel,
            layers=layers,
        )

    def tensors(self) -> list[Tensor]:
        return [self.theta_w, self.theta_b, self.ln_g, self.ln_b]


def time_mix(x_window, e_t, params: TimeMixerParams) -> Tensor:
    """Flatten-and-project the window, then mix with the node context.

    ``H0 = fold(x) W + b``; ``H1 = LayerNorm(H0 + MLP([H0 || e_t]))``.
    Passing ``e_t=None`` feeds a zero context.
    """
    x = fold(x_window)
    if x.shape[-1] != params.proj_w.shape[0]:
        raise ShapeError(f"folded window width {x.shape[-1]} != projection input {params.proj_w.shape[0]}")
    h0 = nm.linear(x, params.proj_w, params.proj_b)
    ctx = Tensor(np.zeros(h0.shape)) if e_t is None else nm.as_tensor(e_t)
    if ctx.shape != h0.shape:
        raise ShapeError(f"context shape {ctx.shape} != hidden state shape {h0.shape}")
    z = nm.linear(nm.concat([h0, ctx], axis=-1), params.ff1_w, params.ff1_b)
    mixed = nm.linear(nm.gelu(z), params.ff2_w, params.ff2_b)
    return nm.layer_norm(nm.add(h0, mixed), params.ln_g, params.ln_b)


def apply_kernel(kind: str, x) -> Tensor:
    """Row-wise feature map phi for K(a, b) = phi(a) . phi(b)."""
    x = nm.as_tensor(x)
    if kind == "softmax":
        return nm.softmax(x, axis=-1)
    if kind == "elu_plus_one":
        return nm.add(nm.elu(x), 1.0)
    if kind == "relu_normalized":
        return nm.relu(nm.l2_normalize(x))
    if kind == "exp":
        return nm.exp(x)
    if kind == "identity_normalized":
        return nm.l2_normalize(x)
    raise DomainError(f"unknown kernel {kind!r}; choose from {KERNELS}")


def smooth_dense(phi, h) -> Tensor:
    """sum_j K_ij h_j / sum_j K_ij through the explicit N x N kernel matrix."""
    phi, h = nm.as_tensor(phi), nm.as_tensor(h)
    K = nm.matmul(phi, nm.swapaxes(phi))
    den = nm.sum(K, axis=-1, keepdims=True)
    if not np.all(np.abs(den.value) >= 1e-12):
        raise DegenerateError("kernel normalizer vanished for at least one node")
    return nm.div(nm.matmul(K, h), den)


def smooth_kernelized(phi, h) -> Tensor:
    """Same map as :func:`smooth_dense` at O(N) cost."""
    return nm.kernel_smooth(phi, h)


def _feature_map(e_t, kernel: str, like: Tensor) -> Tensor:
    if e_t is None:
        # Zero context: every kernel weight is equal, so smoothing is a plain mean.
        return Tensor(np.ones(like.shape[:-1] + (1,)))
    return apply_kernel(kernel, e_t)


def _space_layer(h, e_t, params: SpaceMixerParams, smoother) -> Tensor:
    h = nm.as_tensor(h)
    if e_t is not None and nm.as_tensor(e_t).shape[:-1] != h.shape[:-1]:
        raise ShapeError(f"embedding shape {nm.as_tensor(e_t).shape} does not match node states {h.shape}")
    context = smoother(_feature_map(e_t, params.kernel, h), h)
    update = nm.gelu(nm.add(nm.linear(h, params.theta_w, params.theta_b), context))
    return nm.layer_norm(nm.add(h, update), params.ln_g, params.ln_b)


def space_mix_dense(h, e_t, params: SpaceMixerParams) -> Tensor:
    """One space-mixing layer, quadratic in N. Kept as the exactness oracle."""
    return _space_layer(h, e_t, params, smooth_dense)


def space_mix_kernelized(h, e_t, params: SpaceMixerParams) -> Tensor:
    """One space-mixing layer, linear in N: ``LayerNorm(h + gelu(h Theta + Psi h))``."""
    return _space_layer(h, e_t, params, smooth_kernelized)
