"""Full forecasting pipeline: embedding -> time mixer -> space mixers -> readout."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import numerics as nm
from .embedding import StnEmbedding, constant_time_encoding, fuse_stne, sinusoidal_time_encoding
from .errors import ConfigError, DomainError, ShapeError
from .mixers import KERNELS, SpaceMixerParams, TimeMixerParams, space_mix_kernelized, time_mix, unfold
from .numerics import Tensor

CHECKPOINT_FORMAT = "nexus-checkpoint/1"


@dataclass
class ModelConfig:
    n_nodes: int
    window: int = 12
    horizon: int = 12
    d_in: int = 1
    d_out: int = 1
    hidden: int = 32
    d_emb: int = 16
    layers: int = 1
    kernel: str = "softmax"
    period: int = 288
    use_stne: bool = True
    use_space_mixer: bool = True
    use_time_encoding: bool = True
    quantiles: tuple[float, ...] = ()
    seed: int = 0

    def __post_init__(self):
        self.quantiles = tuple(float(q) for q in self.quantiles)
        for name in ("n_nodes", "window", "horizon", "d_in", "d_out", "hidden", "d_emb", "layers", "period"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"model.{name} must be >= 1, got {getattr(self, name)}")
        if self.kernel not in KERNELS:
            raise ConfigError(f"model.kernel must be one of {KERNELS}, got {self.kernel!r}")
        if self.use_time_encoding and not self.use_stne:
            raise ConfigError("use_time_encoding requires use_stne")
        if any(not 0.0 < q < 1.0 for q in self.quantiles) or list(self.quantiles) != sorted(set(self.quantiles)):
            raise ConfigError(f"quantile levels must be strictly increasing in (0, 1), got {self.quantiles}")

    @classmethod
    def from_dict(cls, d: dict) -> ModelConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["quantiles"] = list(self.quantiles)
        return d

    @property
    def n_heads(self) -> int:
        return 1 + len(self.quantiles)


@dataclass
class ModelParams:
    config: ModelConfig
    stne: StnEmbedding
    time: TimeMixerParams
    space: SpaceMixerParams | None
    readout: dict = field(default_factory=dict)  # fc1.w, fc1.b, fc2.w, fc2.b

    def named_tensors(self) -> dict[str, Tensor]:
        ts = self.stne.tensors() + self.time.tensors()
        if self.space is not None:
            ts += self.space.tensors()
        ts += list(self.readout.values())
        return {t.name: t for t in ts}

    def parameter_count(self) -> int:
        return int(sum(t.value.size for t in self.named_tensors().values()))

    def state(self) -> dict[str, np.ndarray]:
        return {k: t.value.copy() for k, t in self.named_tensors().items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        tensors = self.named_tensors()
        if set(state) != set(tensors):
            raise ShapeError(f"state keys differ: {sorted(set(state) ^ set(tensors))}")
        for k, t in tensors.items():
            if state[k].shape != t.shape:
                raise ShapeError(f"{k}: expected {t.shape}, got {state[k].shape}")
            t.value = np.array(state[k], dtype=np.float64)

    def copy(self) -> ModelParams:
        clone = build_model(self.config)
        clone.load_state(self.state())
        return clone


def build_model(config: ModelConfig) -> ModelParams:
    """Initialize every parameter deterministically from ``config.seed``."""
    c = config
    rng = np.random.default_rng(c.seed)
    stne = StnEmbedding.init(c.n_nodes, c.window, c.hidden, c.d_emb, rng, seed=c.seed + 7919)
    time = TimeMixerParams.init(c.window, c.d_in, c.hidden, rng)
    space = SpaceMixerParams.init(c.hidden, rng, c.kernel, c.layers) if c.use_space_mixer else None
    width = c.n_heads * c.horizon * c.d_out
    b1, b2 = 1.0 / np.sqrt(c.hidden), 1.0 / np.sqrt(c.hidden)
    readout = {
        "fc1.w": Tensor(rng.uniform(-b1, b1, (c.hidden, c.hidden)), True, "readout.fc1.w"),
        "fc1.b": Tensor(np.zeros(c.hidden), True, "readout.fc1.b"),
        "fc2.w": Tensor(rng.uniform(-b2, b2, (c.hidden, width)), True, "readout.fc2.w"),
        "fc2.b": Tensor(np.zeros(width), True, "readout.fc2.b"),
    }
    return ModelParams(c, stne, time, space, readout)


def expected_parameter_count(c: ModelConfig) -> int:
    D, T = c.hidden, c.window
    stne = c.n_nodes * c.d_emb + D * T + c.d_emb * 2 + 2 * (D * D + D)
    time = T * c.d_in * D + D + 2 * D * D + D + D * D + D + 2 * D
    space = D * D + D + 2 * D if c.use_space_mixer else 0
    out = c.n_heads * c.horizon * c.d_out
    readout = D * D + D + D * out + out
    return stne + time + space + readout


def node_context(model: ModelParams, steps) -> Tensor | None:
    """Spatiotemporal embedding for windows whose input steps are ``steps`` (..., T)."""
    c = model.config
    if not c.use_stne:
        return None
    steps = np.asarray(steps)
    if c.use_time_encoding:
        U = sinusoidal_time_encoding(steps, c.period).U
    else:
        U = constant_time_encoding(c.window, steps.shape[:-1])
    return fuse_stne(model.stne, U)


def forward_heads(model: ModelParams, x, steps) -> list[Tensor]:
    """Run the pipeline on a batch ``x`` (..., N, T, d_in) with input steps (..., T).

    Returns the mean head followed by one head per quantile level, each
    shaped (..., N, H, d_out).
    """
    c = model.config
    x = np.asarray(x, dtype=np.float64) if not isinstance(x, Tensor) else x
    if tuple(x.shape[-3:]) != (c.n_nodes, c.window, c.d_in):
        raise ShapeError(f"window shape {tuple(x.shape[-3:])} != (N, T, d_in) = {(c.n_nodes, c.window, c.d_in)}")
    if np.shape(steps)[-1] != c.window:
        raise ShapeError(f"steps last extent {np.shape(steps)[-1]} != window {c.window}")
    e_t = node_context(model, steps)
    h = time_mix(x, e_t, model.time)
    if model.space is not None:
        for _ in range(model.space.layers):
            h = space_mix_kernelized(h, e_t, model.space)
    r = model.readout
    y = nm.linear(nm.gelu(nm.linear(h, r["fc1.w"], r["fc1.b"])), r["fc2.w"], r["fc2.b"])
    width = c.horizon * c.d_out
    if c.n_heads == 1:
        return [unfold(y, c.horizon, c.d_out)]
    return [unfold(part, c.horizon, c.d_out) for part in nm.split(y, [width] * c.n_heads)]


def forward(model: ModelParams, window) -> Tensor:
    """Mean forecast (N, H, d_out) for one :class:`~nexus.data.GraphSignalWindow`."""
    return forward_heads(model, window.x, window.input_steps)[0]


def forward_with_quantiles(model: ModelParams, window, levels) -> tuple[Tensor, list[Tensor]]:
    levels = tuple(float(q) for q in levels)
    if any(not 0.0 < q < 1.0 for q in levels):
        raise DomainError(f"quantile levels must lie in (0, 1), got {levels}")
    if levels != model.config.quantiles:
        raise DomainError(f"model was built for quantiles {model.config.quantiles}, asked for {levels}")
    heads = forward_heads(model, window.x, window.input_steps)
    return heads[0], heads[1:]


def predict(model: ModelParams, x, steps, batch_size: int = 256) -> np.ndarray:
    """Inference over many windows; returns (B, heads, N, H, d_out) as numpy."""
    x = np.asarray(x)
    steps = np.asarray(steps)
    outs = []
    with nm.no_grad():
        for i in range(0, len(x), batch_size):
            heads = forward_heads(model, x[i:i + batch_size], steps[i:i + batch_size])
            outs.append(np.stack([h.value for h in heads], axis=1))
    return np.concatenate(outs, axis=0)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(model: ModelParams, path, extra: dict | None = None) -> Path:
    path = Path(path)
    meta = {"format": CHECKPOINT_FORMAT, "config": model.config.to_dict(), "extra": extra or {}}
    arrays = {name: t.value for name, t in model.named_tensors().items()}
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta, sort_keys=True)), **arrays)
    return path


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    """Returns the model and the ``extra`` dictionary stored with it."""
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["__meta__"]))
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ConfigError(f"{path}: unsupported checkpoint format {meta.get('format')!r}")
        model = build_model(ModelConfig.from_dict(meta["config"]))
        model.load_state({k: z[k] for k in z.files if k != "__meta__"})
    return model, meta.get("extra", {})


# ---------------------------------------------------------------------------
# reference predictors
# ---------------------------------------------------------------------------


@dataclass
class LinearAR:
    """Per-horizon linear autoregression shared by all nodes.

    ``weights[h, k]`` multiplies ``x_{t-k}`` (k = 0 is the latest input).
    """

    weights: np.ndarray  # (H, T)
    bias: np.ndarray  # (H,)

    def predict(self, x: np.ndarray) -> np.ndarray:
        """x: (..., T) or (..., T, 1) chronological windows -> (..., H) or (..., H, 1)."""
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim >= 2 and x.shape[-1] == 1 and x.shape[-2] == self.weights.shape[1]
        if squeeze:
            x = x[..., 0]
        out = x[..., ::-1] @ self.weights.T + self.bias
        return out[..., None] if squeeze else out


def baseline_linear_ar(series, window: int, horizon: int, ridge: float = 1e-6, mask=None) -> LinearAR:
    """Least-squares AR fit over every (node, time) sample of ``series`` (steps, N).

    Samples whose inputs or targets touch a masked cell are dropped.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.ndim == 3:
        x = x[..., 0]
    if x.ndim == 1:
        x = x[:, None]
    n_steps = x.shape[0]
    if n_steps <= window + horizon:
        raise DomainError(f"series length {n_steps} must exceed window + horizon = {window + horizon}")
    span = window + horizon
    idx = np.arange(n_steps - span + 1)[:, None] + np.arange(span)[None, :]
    blocks = np.transpose(x[idx], (0, 2, 1)).reshape(-1, span)  # (samples, span)
    if mask is not None:
        m = np.asarray(mask, dtype=bool)
        if m.ndim == 3:
            m = m[..., 0]
        keep = np.transpose(m[idx], (0, 2, 1)).reshape(-1, span).all(axis=1)
        blocks = blocks[keep]
    return fit_linear_ar(blocks[:, :window], blocks[:, window:], ridge)


def fit_linear_ar(inputs, targets, ridge: float = 1e-6) -> LinearAR:
    """Ridge-stabilized least squares on chronological inputs (S, T) and targets (S, H)."""
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    window = inputs.shape[1]
    design = np.hstack([inputs[:, ::-1], np.ones((len(inputs), 1))])
    reg = np.eye(window + 1) * ridge
    reg[-1, -1] = 0.0
    sol = np.linalg.solve(design.T @ design + reg, design.T @ targets)
    return LinearAR(weights=sol[:-1].T.copy(), bias=sol[-1].copy())


def persistence_forecast(x: np.ndarray, horizon: int) -> np.ndarray:
    """Repeat the last observed input step: (..., T, d) -> (..., H, d)."""
    x = np.asarray(x)
    last = x[..., -1:, :]
    return np.repeat(last, horizon, axis=-2)
