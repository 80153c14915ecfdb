"""Dense float64 tensors with tape-based reverse-mode differentiation.

A :class:`Tensor` wraps a numpy array. Operations on tensors that require
gradients record their parents and a backward closure; :meth:`Tensor.backward`
replays the tape in reverse topological order. Leading batch axes broadcast
the way numpy does, and gradients are summed back to each operand's shape.
"""

from __future__ import annotations

import builtins
import contextlib
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .errors import DegenerateError, NumericError, ShapeError

_GELU_C = math.sqrt(2.0 / math.pi)
_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference)."""
    global _grad_enabled
    previous, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = previous


class Tensor:
    """Value node in the differentiation graph."""

    __slots__ = ("value", "grad", "requires_grad", "name", "_parents", "_backward")
    __array_priority__ = 100

    def __init__(self, value, requires_grad: bool = False, name: str | None = None):
        self.value = np.array(value, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    @property
    def data(self) -> np.ndarray:
        """Flat row-major view of the values."""
        return self.value.reshape(-1)

    def numpy(self) -> np.ndarray:
        return self.value

    def item(self) -> float:
        return float(self.value.item())

    def detach(self) -> Tensor:
        return Tensor(self.value)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    def backward(self, grad=None) -> None:
        """Accumulate d(self)/d(leaf) into ``leaf.grad`` for every leaf requiring grad."""
        if grad is None:
            if self.value.size != 1:
                raise ShapeError(f"backward() without a seed needs a scalar, got shape {self.shape}")
            grad = np.ones_like(self.value)
        order = _toposort(self)
        grads = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(value: np.ndarray, parents: Sequence[Tensor], backward: Callable, op: str) -> Tensor:
    if not np.all(np.isfinite(value)):
        raise NumericError(f"{op} produced non-finite values")
    out = Tensor.__new__(Tensor)
    out.value = value
    out.grad = None
    out.name = None
    out.requires_grad = _grad_enabled and any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward
    else:
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.value + b.value, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.value - b.value, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.value * b.value, (a, b),
                 lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)), "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.value / b.value

    def backward(g):
        ga = g / b.value
        return _unbroadcast(ga, a.shape), _unbroadcast(-ga * out, b.shape)

    return _make(out, (a, b), backward, "div")


def matmul(a, b) -> Tensor:
    """Matrix product over the last two axes; leading axes broadcast."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out = np.matmul(a.value, b.value)

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.value, -1, -2)) if a.requires_grad else None
        gb = np.matmul(np.swapaxes(a.value, -1, -2), g) if b.requires_grad else None
        return (None if ga is None else _unbroadcast(ga, a.shape),
                None if gb is None else _unbroadcast(gb, b.shape))

    return _make(out, (a, b), backward, "matmul")


# ---------------------------------------------------------------------------
# shape manipulation and reductions
# ---------------------------------------------------------------------------


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    try:
        out = x.value.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"cannot reshape {x.shape} to {tuple(shape)}") from exc
    return _make(out, (x,), lambda g: (g.reshape(x.shape),), "reshape")


def swapaxes(x, a1: int = -1, a2: int = -2) -> Tensor:
    x = as_tensor(x)
    return _make(np.swapaxes(x.value, a1, a2), (x,), lambda g: (np.swapaxes(g, a1, a2),), "swapaxes")


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.value for t in ts], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"cannot concatenate shapes {[t.shape for t in ts]} on axis {axis}") from exc
    bounds = np.cumsum([t.shape[axis] for t in ts])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _make(out, ts, backward, "concat")


def split(x, sizes: Sequence[int], axis: int = -1) -> list[Tensor]:
    x = as_tensor(x)
    if builtins.sum(sizes) != x.shape[axis]:
        raise ShapeError(f"split sizes {list(sizes)} do not cover axis of length {x.shape[axis]}")
    parts = []
    start = 0
    for n in sizes:
        idx = [slice(None)] * x.ndim
        idx[axis] = slice(start, start + n)
        parts.append(_slice(x, tuple(idx)))
        start += n
    return parts


def _slice(x: Tensor, idx) -> Tensor:
    def backward(g):
        full = np.zeros_like(x.value)
        full[idx] = g
        return (full,)

    return _make(x.value[idx].copy(), (x,), backward, "slice")


def sum(x, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001 - mirrors numpy
    x = as_tensor(x)
    out = np.sum(x.value, axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _make(np.asarray(out), (x,), backward, "sum")


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    n = x.value.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / float(n))


# ---------------------------------------------------------------------------
# nonlinearities
# ---------------------------------------------------------------------------


def gelu(x) -> Tensor:
    """Tanh-approximated GELU; smooth everywhere, gelu(0) == 0."""
    x = as_tensor(x)
    v = x.value
    inner = _GELU_C * (v + 0.044715 * v**3)
    t = np.tanh(inner)
    out = 0.5 * v * (1.0 + t)

    def backward(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * v**2)
        return (g * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * dinner),)

    return _make(out, (x,), backward, "gelu")


activation = gelu


def exp(x) -> Tensor:
    x = as_tensor(x)
    out = np.exp(x.value)
    return _make(out, (x,), lambda g: (g * out,), "exp")


def relu(x) -> Tensor:
    x = as_tensor(x)
    on = x.value > 0
    return _make(np.where(on, x.value, 0.0), (x,), lambda g: (g * on,), "relu")


def elu(x) -> Tensor:
    x = as_tensor(x)
    v = x.value
    neg = np.expm1(np.minimum(v, 0.0))
    out = np.where(v > 0, v, neg)
    return _make(out, (x,), lambda g: (g * np.where(v > 0, 1.0, neg + 1.0),), "elu")


def abs(x) -> Tensor:  # noqa: A001
    x = as_tensor(x)
    return _make(np.abs(x.value), (x,), lambda g: (g * np.sign(x.value),), "abs")


def square(x) -> Tensor:
    x = as_tensor(x)
    return _make(x.value * x.value, (x,), lambda g: (2.0 * g * x.value,), "square")


def pinball(r, q: float) -> Tensor:
    """Elementwise tilted loss max(q r, (q - 1) r) of residuals ``r``."""
    r = as_tensor(r)
    slope = np.where(r.value >= 0, q, q - 1.0)
    return _make(slope * r.value, (r,), lambda g: (g * slope,), "pinball")


def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    z = x.value - x.value.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make(out, (x,), backward, "softmax")


def l2_normalize(x, axis: int = -1) -> Tensor:
    """Rows divided by their Euclidean norm; an all-zero row is an error."""
    x = as_tensor(x)
    norm = np.sqrt((x.value * x.value).sum(axis=axis, keepdims=True))
    if np.any(norm == 0.0):
        raise DegenerateError("cannot normalize an all-zero row")
    out = x.value / norm

    def backward(g):
        return ((g - out * (g * out).sum(axis=axis, keepdims=True)) / norm,)

    return _make(out, (x,), backward, "l2_normalize")


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis (population variance), then scale and shift."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    d = x.shape[-1] if x.ndim else 0
    if d == 0:
        raise ShapeError("layer_norm over an empty dimension")
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(f"layer_norm gain/bias must have shape ({d},), got {gain.shape} and {bias.shape}")
    mu = x.value.mean(axis=-1, keepdims=True)
    xc = x.value - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.value + bias.value

    def backward(g):
        gx = g * gain.value
        dx = inv * (gx - gx.mean(axis=-1, keepdims=True) - xhat * (gx * xhat).mean(axis=-1, keepdims=True))
        lead = tuple(range(g.ndim - 1))
        return dx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return _make(out, (x, gain, bias), backward, "layer_norm")


def linear(x, w, b=None) -> Tensor:
    out = matmul(x, w)
    return out if b is None else add(out, b)


def kernel_smooth(phi, h) -> Tensor:
    """Normalized kernel smoothing of node states ``h`` (..., N, D) by feature maps ``phi`` (..., N, P).

    Linear in N; forward and backward run through the fused kernels in
    :mod:`nexus.kernels`.
    """
    phi, h = as_tensor(phi), as_tensor(h)
    if phi.ndim < 2 or phi.shape[:-1] != h.shape[:-1]:
        raise ShapeError(f"kernel_smooth needs matching (..., N) prefixes, got {phi.shape} and {h.shape}")
    lead = phi.shape[:-2]
    n = phi.shape[-2]
    phi3 = phi.value.reshape((-1, n, phi.shape[-1]))
    h3 = h.value.reshape((-1, n, h.shape[-1]))
    out, cache = kernels.kernelized_forward(phi3, h3)

    def backward(g):
        dphi, dh = kernels.kernelized_backward(cache, g.reshape(out.shape))
        return dphi.reshape(phi.shape), dh.reshape(h.shape)

    return _make(out.reshape(lead + out.shape[1:]), (phi, h), backward, "kernel_smooth")


# ---------------------------------------------------------------------------
# finite-difference gradient checking
# ---------------------------------------------------------------------------


@dataclass
class GradCheckReport:
    """Per-parameter maximum relative error between analytic and numeric gradients."""

    max_rel_error: dict[str, float]
    tolerance: float
    failures: list[tuple[str, tuple[int, ...], float, float]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values(), default=0.0)


def grad_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    step: float = 1e-5,
    tolerance: float = 1e-4,
    max_coords: int | None = None,
    seed: int = 0,
    floor: float = 1e-6,
) -> GradCheckReport:
    """Compare backprop gradients of scalar ``f()`` with central differences.

    ``f`` is re-evaluated after in-place perturbation of ``params``. Tensors
    with more than ``max_coords`` entries are checked on a random subsample.
    Relative error is ``|a - n| / max(|a|, |n|, floor)``.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    for p in params:
        p.requires_grad = True
        p.grad = None
    out = f()
    if not np.isfinite(out.value).all():
        raise NumericError("grad_check: f is not finite at the base point")
    out.backward()
    analytic = [np.zeros_like(p.value) if p.grad is None else p.grad.copy() for p in params]

    def value() -> float:
        v = float(f().value)
        if not math.isfinite(v):
            raise NumericError("grad_check: f is not finite at a perturbed point")
        return v

    rng = np.random.default_rng(seed)
    report = GradCheckReport({}, tolerance)
    for k, (p, ga) in enumerate(zip(params, analytic)):
        name = p.name or f"param{k}"
        flat = p.value.reshape(-1)
        idx = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            idx = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        worst = 0.0
        for i in idx:
            orig = flat[i]
            flat[i] = orig + step
            fp = value()
            flat[i] = orig - step
            fm = value()
            flat[i] = orig
            num = (fp - fm) / (2 * step)
            a = ga.reshape(-1)[i]
            rel = builtins.abs(a - num) / max(builtins.abs(a), builtins.abs(num), floor)
            worst = max(worst, rel)
            if rel > tolerance:
                report.failures.append((name, np.unravel_index(i, p.shape), float(a), float(num)))
        report.max_rel_error[name] = worst
    for p in params:
        p.grad = None
    return report
