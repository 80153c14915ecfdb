"""Hot kernels for kernel smoothing over nodes.

Every routine exists twice: an ``@njit`` loop version and a vectorized numpy
version. ``NEXUS_JIT=0`` (or :func:`set_backend`) selects numpy. Both take
batched, C-contiguous float64 arrays: feature maps ``phi`` of shape
``(B, N, P)`` and node states ``h`` of shape ``(B, N, D)``.

The smoother computes, per node ``i``::

    out_i = sum_j (phi_i . phi_j) h_j / sum_j (phi_i . phi_j)

The kernelized variant reorders this as ``phi_i S / phi_i z`` with
``S = sum_j phi_j h_j^T`` and ``z = sum_j phi_j`` so the cost is O(N P D)
instead of O(N^2 (P + D)).
"""

from __future__ import annotations

import numpy as np

from ._jit import JIT_ENABLED, njit
from .errors import DegenerateError

# |sum_j K(e_i, e_j)| below this is treated as a vanished normalizer.
DEN_FLOOR = 1e-12

_backend = "numba" if JIT_ENABLED else "numpy"


def get_backend() -> str:
    return _backend


def set_backend(name: str) -> str:
    """Switch backend at runtime; returns the previous one."""
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not JIT_ENABLED:
        raise RuntimeError("numba backend requested but JIT is disabled (NEXUS_JIT=0 or numba missing)")
    previous, _backend = _backend, name
    return previous


def _check_den(den: np.ndarray) -> None:
    if not np.all(np.abs(den) >= DEN_FLOOR):
        raise DegenerateError("kernel normalizer vanished for at least one node (sum_j K(e_i, e_j) == 0)")


# ---------------------------------------------------------------------------
# numpy path
# ---------------------------------------------------------------------------


def _kernelized_fwd_np(phi, h):
    S = np.matmul(phi.transpose(0, 2, 1), h)
    z = phi.sum(axis=1)
    num = np.matmul(phi, S)
    den = np.matmul(phi, z[:, :, None])[:, :, 0]
    return num, den, S, z


def _kernelized_bwd_np(phi, h, S, z, den, out, g):
    G = g / den[:, :, None]
    a = -(g * out).sum(axis=-1) / den
    dS = np.matmul(phi.transpose(0, 2, 1), G)
    dz = (phi * a[:, :, None]).sum(axis=1)
    dphi = np.matmul(G, S.transpose(0, 2, 1)) + a[:, :, None] * z[:, None, :]
    dphi += np.matmul(h, dS.transpose(0, 2, 1)) + dz[:, None, :]
    dh = np.matmul(phi, dS)
    return dphi, dh


def _dense_fwd_np(phi, h):
    K = np.matmul(phi, phi.transpose(0, 2, 1))
    return np.matmul(K, h), K.sum(axis=-1)


# ---------------------------------------------------------------------------
# numba path
# ---------------------------------------------------------------------------


@njit(cache=True)
def _kernelized_fwd_nb(phi, h):
    B, N, P = phi.shape
    D = h.shape[2]
    S = np.zeros((B, P, D))
    z = np.zeros((B, P))
    num = np.empty((B, N, D))
    den = np.empty((B, N))
    for b in range(B):
        for j in range(N):
            for p in range(P):
                f = phi[b, j, p]
                z[b, p] += f
                for d in range(D):
                    S[b, p, d] += f * h[b, j, d]
        for i in range(N):
            acc = 0.0
            for p in range(P):
                acc += phi[b, i, p] * z[b, p]
            den[b, i] = acc
            # axpy over contiguous rows; per-element summation order stays p = 0..P-1
            for d in range(D):
                num[b, i, d] = 0.0
            for p in range(P):
                f = phi[b, i, p]
                for d in range(D):
                    num[b, i, d] += f * S[b, p, d]
    return num, den, S, z


@njit(cache=True)
def _kernelized_bwd_nb(phi, h, S, z, den, out, g):
    B, N, P = phi.shape
    D = h.shape[2]
    dphi = np.zeros((B, N, P))
    dh = np.zeros((B, N, D))
    G = np.empty((N, D))
    a = np.empty(N)
    dS = np.empty((P, D))
    dz = np.empty(P)
    ST = np.empty((D, P))
    dST = np.empty((D, P))
    for b in range(B):
        dS[:, :] = 0.0
        dz[:] = 0.0
        for i in range(N):
            inv = 1.0 / den[b, i]
            s = 0.0
            for d in range(D):
                G[i, d] = g[b, i, d] * inv
                s += g[b, i, d] * out[b, i, d]
            a[i] = -s * inv
        for i in range(N):
            for p in range(P):
                f = phi[b, i, p]
                dz[p] += f * a[i]
                for d in range(D):
                    dS[p, d] += f * G[i, d]
        # transposed copies keep every inner loop contiguous
        for p in range(P):
            for d in range(D):
                ST[d, p] = S[b, p, d]
                dST[d, p] = dS[p, d]
        for i in range(N):
            for p in range(P):
                dphi[b, i, p] = a[i] * z[b, p] + dz[p]
            for d in range(D):
                gd = G[i, d]
                hd = h[b, i, d]
                for p in range(P):
                    dphi[b, i, p] += gd * ST[d, p] + hd * dST[d, p]
            for p in range(P):
                f = phi[b, i, p]
                for d in range(D):
                    dh[b, i, d] += f * dS[p, d]
    return dphi, dh


@njit(cache=True)
def _dense_fwd_nb(phi, h):
    B, N, P = phi.shape
    D = h.shape[2]
    num = np.zeros((B, N, D))
    den = np.zeros((B, N))
    for b in range(B):
        for i in range(N):
            for j in range(N):
                k = 0.0
                for p in range(P):
                    k += phi[b, i, p] * phi[b, j, p]
                den[b, i] += k
                for d in range(D):
                    num[b, i, d] += k * h[b, j, d]
    return num, den


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


def _prep(phi, h):
    phi = np.ascontiguousarray(phi, dtype=np.float64)
    h = np.ascontiguousarray(h, dtype=np.float64)
    if phi.ndim != 3 or h.ndim != 3 or phi.shape[:2] != h.shape[:2]:
        raise ValueError(f"expected phi (B,N,P) and h (B,N,D) with matching B,N; got {phi.shape} and {h.shape}")
    return phi, h


def kernelized_forward(phi, h, backend=None):
    """Linear-cost smoothing. Returns ``(out, cache)``; cache feeds the backward."""
    phi, h = _prep(phi, h)
    fn = _kernelized_fwd_nb if (backend or _backend) == "numba" else _kernelized_fwd_np
    num, den, S, z = fn(phi, h)
    _check_den(den)
    out = num / den[:, :, None]
    return out, (phi, h, S, z, den, out)


def kernelized_backward(cache, g, backend=None):
    phi, h, S, z, den, out = cache
    g = np.ascontiguousarray(g, dtype=np.float64)
    fn = _kernelized_bwd_nb if (backend or _backend) == "numba" else _kernelized_bwd_np
    return fn(phi, h, S, z, den, out, g)


def dense_forward(phi, h, backend=None):
    """Quadratic-cost smoothing through the explicit N x N kernel matrix."""
    phi, h = _prep(phi, h)
    fn = _dense_fwd_nb if (backend or _backend) == "numba" else _dense_fwd_np
    num, den = fn(phi, h)
    _check_den(den)
    return num / den[:, :, None]
