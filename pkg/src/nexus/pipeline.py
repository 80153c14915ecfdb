"""Glue between datasets, windows, models and reports."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .data import SeriesDataset, Standardizer, WindowSet, chronological_split, window_set
from .metrics import MetricReport, evaluate, mae
from .model import ModelConfig, ModelParams, build_model, fit_linear_ar, persistence_forecast
from .training import TrainConfig, TrainHistory, predict_windows, train


@dataclass
class Bundle:
    train: WindowSet
    valid: WindowSet
    test: WindowSet
    scaler: Standardizer
    splits: tuple[SeriesDataset, SeriesDataset, SeriesDataset]


def prepare(ds: SeriesDataset, window: int, horizon: int, fractions=(0.7, 0.1, 0.2), standardize: str = "node",
            scale_labels: bool = True, stride: int = 1, align: int | None = None,
            scaler: Standardizer | None = None) -> Bundle:
    """Split chronologically, fit the scaler on train (unless given), and window every split."""
    parts = chronological_split(ds, fractions, min_length=window + horizon)
    if scaler is None:
        scaler = Standardizer.fit(parts[0], standardize)
    sets = [window_set(p, window, horizon, stride, align, scaler, scale_labels) for p in parts]
    return Bundle(*sets, scaler=scaler, splits=parts)


def aligned_prepare(ds: SeriesDataset, window: int, horizon: int, **kw) -> Bundle:
    """Windows aligned to the generator's cycle when the dataset declares one."""
    if "cycle" in ds.meta:
        kw.setdefault("stride", int(ds.meta["cycle"]))
        kw.setdefault("align", int(ds.meta.get("align", 0)))
    return prepare(ds, window, horizon, **kw)


def fit(ds_or_bundle, model_config: ModelConfig, train_config: TrainConfig, **prep) -> tuple[ModelParams, TrainHistory, Bundle]:
    bundle = ds_or_bundle if isinstance(ds_or_bundle, Bundle) else aligned_prepare(
        ds_or_bundle, model_config.window, model_config.horizon, **prep)
    model = build_model(replace(model_config, n_nodes=bundle.train.n_nodes))
    best, hist = train(model, bundle.train, bundle.valid, train_config)
    return best, hist, bundle


def holdout_mae(model: ModelParams, ws: WindowSet) -> float:
    return mae(predict_windows(model, ws)[:, 0], ws.y_raw, ws.mask)


def report(model: ModelParams, ws: WindowSet, metrics=("mae", "mse", "mape"), baselines: dict | None = None) -> MetricReport:
    """Metric report on ``ws``; ``baselines`` maps a label to raw-unit predictions scored alongside."""
    preds = predict_windows(model, ws)
    levels = model.config.quantiles
    rep = evaluate(preds[:, 0], ws.y_raw, ws.mask, metrics,
                   quantiles=np.moveaxis(preds[:, 1:], 1, 0) if levels else None,
                   levels=levels or None)
    for name, bp in (baselines or {}).items():
        rep.extra[f"{name}_mae"] = mae(bp, ws.y_raw, ws.mask)
    if levels:
        rep.notes.append("quantile heads are unconstrained; crossings are possible")
    return rep


def raw_inputs(ws: WindowSet) -> np.ndarray:
    """Window inputs in data units."""
    if ws.scaler is None:
        return ws.x
    return ws.scaler.inverse_transform(ws.x, node_axis=-3)


def persistence_predictions(ws: WindowSet) -> np.ndarray:
    return persistence_forecast(raw_inputs(ws), ws.y.shape[2])


def ar_predictions(bundle: Bundle, ws: WindowSet) -> np.ndarray:
    """Shared linear AR fitted on the train split's raw windows, applied to ``ws``."""
    tr = bundle.train
    T, H = tr.x.shape[2], tr.y.shape[2]
    x_tr = raw_inputs(tr)[..., 0].reshape(-1, T)
    y_tr = tr.y_raw[..., 0].reshape(-1, H)
    keep = tr.mask.reshape(-1, H).all(axis=1)
    return fit_linear_ar(x_tr[keep], y_tr[keep]).predict(raw_inputs(ws))


__all__ = [
    "Bundle",
    "prepare",
    "aligned_prepare",
    "fit",
    "holdout_mae",
    "report",
    "raw_inputs",
    "persistence_predictions",
    "ar_predictions",
]
