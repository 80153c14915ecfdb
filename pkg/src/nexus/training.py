"""Losses, optimizer, training loop, embedding-only transfer and weight corruption."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import numerics as nm
from .data import WindowSet
from .embedding import init_node_embedding
from .errors import ConfigError, DegenerateError, DivergenceError, DomainError, NumericError, TransferError
from .metrics import mae
from .model import ModelParams, build_model, forward_heads, predict
from .numerics import Tensor

log = logging.getLogger(__name__)

LOSS_KINDS = ("l1", "l2", "tilted")


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------


def _mask_weights(mask, shape) -> tuple[np.ndarray, float]:
    m = np.ones(shape) if mask is None else np.asarray(mask, dtype=np.float64)
    while m.ndim < len(shape):
        m = m[..., None]
    m = np.broadcast_to(m, shape)
    count = float(m.sum())
    if count == 0:
        raise DegenerateError("loss over an empty mask (degenerate batch)")
    return m, count


def _masked_mean(elementwise: Tensor, mask) -> Tensor:
    m, count = _mask_weights(mask, elementwise.shape)
    return nm.mul(nm.sum(nm.mul(elementwise, m)), 1.0 / count)


def loss(kind: str, preds, targets, mask=None, levels=()) -> Tensor:
    """Masked mean loss.

    ``l1``/``l2`` take one prediction tensor. ``tilted`` takes one prediction
    per quantile level and returns the sum over levels of the mean pinball loss.
    """
    targets = np.asarray(targets, dtype=np.float64)
    if kind in ("l1", "l2"):
        preds = nm.as_tensor(preds)
        if preds.shape != targets.shape:
            raise ConfigError(f"prediction shape {preds.shape} != target shape {targets.shape}")
        r = nm.sub(preds, targets)
        return _masked_mean(nm.abs(r) if kind == "l1" else nm.square(r), mask)
    if kind == "tilted":
        if isinstance(preds, Tensor) or isinstance(preds, np.ndarray):
            preds = [preds]
        levels = list(levels)
        if len(levels) != len(preds) or not levels:
            raise ConfigError(f"tilted loss needs one prediction per level ({len(preds)} vs {len(levels)})")
        total = None
        for p, q in zip(preds, levels):
            if not 0.0 < q < 1.0:
                raise DomainError(f"quantile level {q} outside (0, 1)")
            term = _masked_mean(nm.pinball(nm.sub(targets, p), q), mask)
            total = term if total is None else nm.add(total, term)
        return total
    raise ConfigError(f"unknown loss kind {kind!r}; choose from {LOSS_KINDS}")


def objective(kind: str, heads: list[Tensor], targets, mask, levels=()) -> Tensor:
    """Training objective: point loss on the mean head plus pinball terms on quantile heads."""
    if kind == "tilted" and not levels:
        raise ConfigError("tilted loss requires a model with quantile heads")
    base = loss("l2" if kind == "l2" else "l1", heads[0], targets, mask)
    if levels:
        base = nm.add(base, loss("tilted", heads[1:], targets, mask, levels))
    return base


# ---------------------------------------------------------------------------
# config and history
# ---------------------------------------------------------------------------


@dataclass
class TrainConfig:
    loss: str = "l1"
    lr: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 10
    clip_norm: float = 5.0
    seed: int = 0
    log_every: int = 0

    def __post_init__(self):
        if self.loss not in LOSS_KINDS:
            raise ConfigError(f"train.loss must be one of {LOSS_KINDS}")
        if not self.lr >= 0:
            raise ConfigError("train.lr must be non-negative")
        if self.patience < 1 or self.batch_size < 1 or self.max_epochs < 1:
            raise ConfigError("train.patience, batch_size and max_epochs must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> TrainConfig:
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_mae: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)
    best_epoch: int = 0
    best_val_mae: float = float("inf")
    stopped_early: bool = False
    checkpoint: str | None = None

    def to_dict(self, timings: bool = True) -> dict:
        d = asdict(self)
        if not timings:
            d.pop("seconds")
        return d

    def to_json(self, timings: bool = True) -> str:
        return json.dumps(self.to_dict(timings), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> TrainHistory:
        return cls(**d)


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------


class Adam:
    """Adam with global-norm gradient clipping."""

    def __init__(self, params: list[Tensor], lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8,
                 clip_norm: float | None = 5.0):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.clip_norm = clip_norm
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in params]
        self.v = [np.zeros_like(p.value) for p in params]

    def step(self) -> float:
        grads = [np.zeros_like(p.value) if p.grad is None else p.grad for p in self.params]
        norm = float(np.sqrt(sum(float((g * g).sum()) for g in grads)))
        if not np.isfinite(norm):
            raise NumericError("non-finite gradient norm")
        scale = 1.0
        if self.clip_norm and norm > self.clip_norm:
            scale = self.clip_norm / norm
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            g = g * scale
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            if self.lr:
                p.value = p.value - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.grad = None
        return norm


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------


def predict_windows(model: ModelParams, ws: WindowSet, batch_size: int = 256) -> np.ndarray:
    """Predictions in data units, shaped (W, heads, N, H, d_out)."""
    out = predict(model, ws.x, ws.input_steps, batch_size)
    return ws.to_raw(out)


def validation_mae(model: ModelParams, ws: WindowSet) -> float:
    preds = predict_windows(model, ws)[:, 0]
    return mae(preds, ws.y_raw, ws.mask)


def _set_trainable(model: ModelParams, trainable) -> list[Tensor]:
    tensors = model.named_tensors()
    if trainable is not None:
        missing = set(trainable) - set(tensors)
        if missing:
            raise ConfigError(f"unknown trainable tensors: {sorted(missing)}")
    chosen = []
    for name, t in tensors.items():
        t.requires_grad = trainable is None or name in trainable
        t.grad = None
        if t.requires_grad:
            chosen.append(t)
    return chosen


def train(model: ModelParams, train_ws: WindowSet, valid_ws: WindowSet, config: TrainConfig,
          trainable=None) -> tuple[ModelParams, TrainHistory]:
    """Mini-batch Adam with early stopping on validation MAE (data units).

    ``model`` is updated in place; the returned model is a separate copy of
    the best-validation parameters. ``trainable`` restricts updates to the
    named tensors; every other tensor is left untouched.
    """
    if len(train_ws) == 0 or len(valid_ws) == 0:
        raise ConfigError("training and validation splits must be non-empty")
    levels = model.config.quantiles
    params = _set_trainable(model, trainable)
    opt = Adam(params, lr=config.lr, clip_norm=config.clip_norm)
    rng = np.random.default_rng(config.seed)
    hist = TrainHistory()
    best_state = model.state()
    n = len(train_ws)
    quiet = np.errstate(over="ignore", invalid="ignore", divide="ignore")
    quiet.__enter__()
    try:
        for epoch in range(1, config.max_epochs + 1):
            t0 = time.perf_counter()
            order = rng.permutation(n)
            total, count = 0.0, 0
            for i in range(0, n, config.batch_size):
                idx = order[i:i + config.batch_size]
                mask = train_ws.mask[idx]
                if not mask.any():
                    continue
                heads = forward_heads(model, train_ws.x[idx], train_ws.input_steps[idx])
                obj = objective(config.loss, heads, train_ws.y[idx], mask, levels)
                obj.backward()
                opt.step()
                total += float(obj.value) * len(idx)
                count += len(idx)
            val = validation_mae(model, valid_ws)
            if not np.isfinite(val):
                raise NumericError("non-finite validation MAE")
            hist.train_loss.append(total / max(count, 1))
            hist.val_mae.append(val)
            hist.seconds.append(time.perf_counter() - t0)
            if val < hist.best_val_mae:
                hist.best_val_mae, hist.best_epoch = val, epoch
                best_state = model.state()
            if config.log_every and epoch % config.log_every == 0:
                log.info("epoch %d loss %.5f val_mae %.5f", epoch, hist.train_loss[-1], val)
            if epoch - hist.best_epoch >= config.patience:
                hist.stopped_early = epoch < config.max_epochs
                break
    except (NumericError, FloatingPointError, DegenerateError) as exc:
        best = model.copy()
        best.load_state(best_state)
        raise DivergenceError(f"training diverged at epoch {len(hist.val_mae) + 1}: {exc}", best, hist) from exc
    finally:
        quiet.__exit__(None, None, None)
        for t in model.named_tensors().values():
            t.requires_grad = True
            t.grad = None
    best = model.copy()
    best.load_state(best_state)
    return best, hist


# ---------------------------------------------------------------------------
# transfer
# ---------------------------------------------------------------------------

EMBEDDING_TENSOR = "stne.E"


def transfer_finetune(pretrained: ModelParams, train_ws: WindowSet, valid_ws: WindowSet, config: TrainConfig,
                      seed: int = 0) -> tuple[ModelParams, TrainHistory]:
    """Re-initialize the node dictionary for the target graph and train only it.

    When the target has the pretrained node count, the pretrained dictionary
    is also scored on the target validation split and kept if it is better.
    """
    c = pretrained.config
    _, n_new, T, d_in = train_ws.x.shape
    H, d_out = train_ws.y.shape[2:]
    if (T, d_in, H, d_out) != (c.window, c.d_in, c.horizon, c.d_out):
        raise TransferError(
            f"target windows (T={T}, d_in={d_in}, H={H}, d_out={d_out}) do not match the pretrained model "
            f"(T={c.window}, d_in={c.d_in}, H={c.horizon}, d_out={c.d_out})"
        )
    model = build_model(replace(c, n_nodes=n_new))
    state = pretrained.state()
    state[EMBEDDING_TENSOR] = init_node_embedding(n_new, c.d_emb, seed).value
    model.load_state(state)
    tuned, hist = train(model, train_ws, valid_ws, config, trainable={EMBEDDING_TENSOR})
    if n_new == c.n_nodes:
        if validation_mae(pretrained, valid_ws) < hist.best_val_mae:
            tuned = pretrained.copy()
            hist.best_val_mae = validation_mae(tuned, valid_ws)
            hist.best_epoch = 0
    return tuned, hist


# ---------------------------------------------------------------------------
# robustness
# ---------------------------------------------------------------------------

ATTACK_STAGES = {"input": "time.proj.w", "readout": "readout.fc2.w"}


def corrupt_weights(model: ModelParams, stage: str, fraction: float, seed: int = 0) -> ModelParams:
    """Copy of ``model`` with a uniformly random ``fraction`` of one layer's weights zeroed."""
    if stage not in ATTACK_STAGES:
        raise DomainError(f"stage must be one of {sorted(ATTACK_STAGES)}")
    if not 0.0 <= fraction <= 1.0:
        raise DomainError(f"fraction must lie in [0, 1], got {fraction}")
    out = model.copy()
    w = out.named_tensors()[ATTACK_STAGES[stage]]
    k = int(round(fraction * w.value.size))
    if k:
        rng = np.random.default_rng(seed)
        flat = w.value.reshape(-1).copy()
        flat[rng.choice(flat.size, size=k, replace=False)] = 0.0
        w.value = flat.reshape(w.shape)
    return out


def attack_sweep(model: ModelParams, ws: WindowSet, fractions, stages=("input", "readout"), seed: int = 0):
    """Rows ``(stage, fraction, mae)`` for every stage and fraction."""
    rows = []
    for stage in stages:
        for p in fractions:
            attacked = corrupt_weights(model, stage, float(p), seed)
            rows.append((stage, float(p), validation_mae(attacked, ws)))
    return rows
