"""Synthetic generators with known optimal predictors.

The two multivalued generators build series in fixed-length cycles of
``history`` steps followed by ``horizon`` steps. Windows aligned to the cycle
start (``stride=meta["cycle"]``, ``align=meta["align"]``) see only the history
part as input and only the divergent part as target.
"""

from __future__ import annotations

import math

import numpy as np

from .data import SeriesDataset
from .errors import DomainError, StabilityError


def shared_floor(amplitude: float, noise: float) -> float:
    """Expected MAE of the best context-blind predictor on divergent steps.

    Targets are ``base +/- amplitude + eps``; the blind optimum predicts
    ``base`` and pays the folded-normal mean of ``amplitude + eps``.
    """
    a, s = float(amplitude), float(noise)
    if s == 0:
        return a
    return s * math.sqrt(2 / math.pi) * math.exp(-a * a / (2 * s * s)) + a * math.erf(a / (s * math.sqrt(2)))


def contextual_floor(noise: float) -> float:
    """Expected MAE of the context-aware optimum: E|eps| for Gaussian noise."""
    return float(noise) * math.sqrt(2 / math.pi)


def _shapes(rng, count, history):
    freq = rng.uniform(0.5, 1.5, size=count)
    phase = rng.uniform(0, 2 * np.pi, size=count)
    tau = np.arange(history)
    return np.sin(2 * np.pi * freq[:, None] * tau[None, :] / history + phase[:, None])


def gen_multivalued_spatial(n_pairs: int = 2, amplitude: float = 1.0, steps: int = 4800, noise: float = 0.0,
                            seed: int = 0, history: int = 12, horizon: int = 12) -> SeriesDataset:
    """Node pairs share every history segment; their futures split to +a / -a.

    Node ``2k`` continues at ``last + a`` and node ``2k + 1`` at ``last - a``,
    so only the node's identity resolves the continuation.
    """
    if amplitude <= 0:
        raise DomainError("amplitude must be positive")
    if n_pairs < 1 or history < 1 or horizon < 1:
        raise DomainError("n_pairs, history and horizon must be >= 1")
    rng = np.random.default_rng(seed)
    cycle = history + horizon
    n_cycles = -(-steps // cycle)
    shapes = _shapes(rng, n_pairs, history)
    scale = rng.uniform(0.5, 1.5, size=(n_cycles, n_pairs))
    sign = np.tile([1.0, -1.0], n_pairs)
    values = np.zeros((n_cycles, cycle, 2 * n_pairs))
    for k in range(n_pairs):
        hist = scale[:, k, None] * shapes[k][None, :]
        for j, node in enumerate((2 * k, 2 * k + 1)):
            values[:, :history, node] = hist
            values[:, history:, node] = hist[:, -1:] + sign[node] * amplitude
    values = values.reshape(-1, 2 * n_pairs)[:steps]
    values = values + noise * rng.standard_normal(values.shape)
    meta = {
        "generator": "spatial_multivalued",
        "cycle": cycle,
        "align": 0,
        "history": history,
        "horizon": horizon,
        "amplitude": float(amplitude),
        "noise": float(noise),
        "floor_shared": shared_floor(amplitude, noise),
        "floor_contextual": contextual_floor(noise),
    }
    return SeriesDataset(values[:, :, None], np.arange(steps), period=cycle, meta=meta)


def gen_multivalued_temporal(amplitude: float = 1.0, period: int | None = None, steps: int = 9600,
                             noise: float = 0.0, seed: int = 0, n_nodes: int = 4, history: int = 12,
                             horizon: int = 12) -> SeriesDataset:
    """Two events per day with identical histories and opposite continuations.

    The day of ``period`` steps holds an event at phase 0 (future ``last + a``)
    and one at phase ``period / 2`` (future ``last - a``). Both histories of a
    day are equal for every node, so only the time of day resolves them.
    """
    if amplitude <= 0:
        raise DomainError("amplitude must be positive")
    period = 2 * (history + horizon) if period is None else int(period)
    half = period // 2
    if period % 2 or half < history + horizon:
        raise DomainError(f"period must be even and >= 2*(history+horizon) = {2 * (history + horizon)}")
    rng = np.random.default_rng(seed)
    n_days = -(-steps // period)
    shapes = _shapes(rng, n_nodes, history)
    scale = rng.uniform(0.5, 1.5, size=n_days)
    values = np.zeros((n_days, 2, half, n_nodes))
    hist = scale[:, None, None] * shapes.T[None, :, :]  # (days, history, nodes)
    for event, sign in enumerate((1.0, -1.0)):
        values[:, event, :history] = hist
        values[:, event, history:history + horizon] = hist[:, -1:, :] + sign * amplitude
    values = values.reshape(-1, n_nodes)[:steps]
    values = values + noise * rng.standard_normal(values.shape)
    meta = {
        "generator": "temporal_multivalued",
        "cycle": half,
        "align": 0,
        "history": history,
        "horizon": horizon,
        "amplitude": float(amplitude),
        "noise": float(noise),
        "floor_shared": shared_floor(amplitude, noise),
        "floor_contextual": contextual_floor(noise),
    }
    return SeriesDataset(values[:, :, None], np.arange(steps), period=period, meta=meta)


def community_graph(communities: int, nodes_per_community: int, edge_prob: float, rng) -> np.ndarray:
    """Block-diagonal symmetric graph; each block is a ring plus random chords. No self loops."""
    n = communities * nodes_per_community
    A = np.zeros((n, n))
    m = nodes_per_community
    for c in range(communities):
        off = c * m
        block = np.triu((rng.random((m, m)) < edge_prob).astype(float), 1)
        if m > 1:
            ring = np.arange(m)
            block[ring, (ring + 1) % m] = 1.0
        block = np.triu(block + block.T, 1)
        block = block + block.T
        np.fill_diagonal(block, 0.0)
        A[off:off + m, off:off + m] = (block > 0).astype(float)
    return A


def gpvar_transition(adjacency: np.ndarray, coeffs) -> np.ndarray:
    """``sum_k coeffs[k] * A_norm^k`` with ``A_norm`` the row-normalized adjacency."""
    A = np.asarray(adjacency, dtype=np.float64)
    deg = A.sum(axis=1, keepdims=True)
    A_norm = np.divide(A, deg, out=np.zeros_like(A), where=deg > 0)
    M = np.zeros_like(A)
    P = np.eye(A.shape[0])
    for k, c in enumerate(coeffs):
        if k:
            P = P @ A_norm
        M += float(c) * P
    return M


def gen_gpvar(communities: int = 4, nodes_per_community: int = 5, steps: int = 10000,
              coeffs=(0.1, 0.5, 0.3), noise: float = 1.0, seed: int = 0, edge_prob: float = 0.5,
              period: int = 288, burn_in: int = 200) -> SeriesDataset:
    """Graph polynomial VAR(1): ``x_{t+1} = sum_k c_k A^k x_t + eps``.

    ``coeffs[0]`` weights the node itself, ``coeffs[k]`` the k-hop neighbors.
    The transition matrix is kept in ``meta["transition"]`` for oracle use.
    """
    rng = np.random.default_rng(seed)
    A = community_graph(communities, nodes_per_community, edge_prob, rng)
    M = gpvar_transition(A, coeffs)
    radius = float(np.max(np.abs(np.linalg.eigvals(M)))) if M.size else 0.0
    if radius >= 1.0:
        raise StabilityError(f"GPVAR transition has spectral radius {radius:.4f} >= 1")
    n = A.shape[0]
    x = np.zeros(n)
    out = np.empty((steps, n))
    eps = noise * rng.standard_normal((burn_in + steps, n))
    for t in range(burn_in + steps):
        x = M @ x + eps[t]
        if t >= burn_in:
            out[t - burn_in] = x
    deg = A.sum(axis=1, keepdims=True)
    meta = {
        "generator": "gpvar",
        "communities": communities,
        "nodes_per_community": nodes_per_community,
        "coeffs": [float(c) for c in coeffs],
        "noise": float(noise),
        "spectral_radius": radius,
        "transition": M,
    }
    return SeriesDataset(out[:, :, None], np.arange(steps), period=period,
                         adjacency=np.divide(A, deg, out=np.zeros_like(A), where=deg > 0), meta=meta)


def gpvar_oracle_forecast(transition: np.ndarray, x: np.ndarray, horizon: int) -> np.ndarray:
    """Conditional-mean forecast ``M^h x_t``: windows (..., N, T, 1) -> (..., N, H, 1)."""
    last = np.asarray(x)[..., -1, 0]  # (..., N)
    preds = []
    cur = last
    for _ in range(horizon):
        cur = cur @ transition.T
        preds.append(cur)
    return np.stack(preds, axis=-1)[..., None]


GENERATORS = {
    "spatial_multivalued": gen_multivalued_spatial,
    "temporal_multivalued": gen_multivalued_temporal,
    "gpvar": gen_gpvar,
}


def generate(name: str, **params) -> SeriesDataset:
    if name not in GENERATORS:
        raise DomainError(f"unknown generator {name!r}; choose from {sorted(GENERATORS)}")
    if name == "gpvar" and "coeffs" in params:
        params["coeffs"] = tuple(params["coeffs"])
    return GENERATORS[name](**params)
