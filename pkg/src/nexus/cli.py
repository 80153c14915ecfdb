"""``nexus <command> --config <path> [--out <dir>] [--seed <n>]``.

Every command reads one JSON config with the sections ``data``, ``model``,
``train`` and ``eval`` (all optional, unknown keys rejected), writes its
artifacts into ``--out`` and finishes with ``manifest.json``. Reports are
written as JSON plus aligned text; tabular results also go to CSV.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import platform
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .bench import bench_scaling, bytes_linearity, growth_ratios
from .data import SeriesDataset, Standardizer, load_adjacency, load_csv, write_csv
from .errors import (ConfigError, DataError, DivergenceError, DomainError, NexusError, TransferError)
from .metrics import DEFAULT_BUCKETS, POINT_METRICS, evaluate, format_table, mae
from .mixers import KERNELS
from .model import ModelConfig, ModelParams, build_model, load_checkpoint, save_checkpoint
from .pipeline import Bundle, ar_predictions, persistence_predictions, prepare
from .synthetic import GENERATORS, generate
from .training import ATTACK_STAGES, TrainConfig, attack_sweep, predict_windows, train, transfer_finetune, \
    validation_mae

log = logging.getLogger("nexus")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4

COMMANDS = ("synth", "train", "evaluate", "forecast", "ablate", "bench", "transfer", "attack")
SECTIONS = ("data", "model", "train", "eval")

DATA_DEFAULTS = {
    "generator": None,
    "params": {},
    "path": None,
    "layout": "wide",
    "period": None,
    "nodes": None,
    "adjacency": None,
    "mask_zeros": False,
    "fractions": [0.7, 0.1, 0.2],
    "standardize": "node",
    "scale_labels": True,
    "stride": None,
    "align": None,
    "permute_seed": None,
}

EVAL_DEFAULTS = {
    "checkpoint": None,
    "split": "test",
    "metrics": ["mae", "mse", "mape", "wape"],
    "buckets": list(DEFAULT_BUCKETS),
    "baselines": True,
    "variants": ["full", "no_et", "no_space", "no_u"],
    "kernels": [],
    "seeds": None,
    "sizes": [512, 1024, 2048, 4096],
    "repeats": 5,
    "hidden": 32,
    "dense": True,
    "fractions": [0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
    "stages": ["input", "readout"],
    "attack_seed": 0,
    "finetune": {},
}

# Ablation variants as model-config overrides. Dropping the embedding also drops
# the time encoding that feeds it.
VARIANTS = {
    "full": {},
    "no_et": {"use_stne": False, "use_time_encoding": False},
    "no_space": {"use_space_mixer": False},
    "no_u": {"use_time_encoding": False},
}


class UsageError(NexusError):
    """Invalid invocation: bad config, missing checkpoint, unknown names."""


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    data: dict
    model: dict
    train: TrainConfig
    eval: dict
    source: Path | None = None
    raw: dict = field(default_factory=dict)

    def resolved(self) -> dict:
        return {"data": self.data, "model": self.model, "train": self.train.to_dict(), "eval": self.eval}


def _merge(section: str, given: dict, defaults: dict) -> dict:
    if not isinstance(given, dict):
        raise ConfigError(f"config section {section!r} must be an object")
    unknown = set(given) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown {section} config keys: {sorted(unknown)}")
    out = json.loads(json.dumps(defaults))
    out.update(given)
    return out


def _resolve_path(value, base: Path | None):
    if value is None:
        return None
    p = Path(value)
    if not p.is_absolute() and base is not None:
        p = base / p
    return str(p)


def parse_config(doc: dict, source: Path | None = None, seed: int | None = None) -> RunConfig:
    """Validate a config document; relative paths resolve against the config's folder."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(doc) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}; allowed: {list(SECTIONS)}")
    base = source.parent if source is not None else None
    data = _merge("data", doc.get("data", {}), DATA_DEFAULTS)
    ev = _merge("eval", doc.get("eval", {}), EVAL_DEFAULTS)
    model = doc.get("model", {})
    if not isinstance(model, dict):
        raise ConfigError("config section 'model' must be an object")
    known_model = set(ModelConfig.__dataclass_fields__)
    bad = set(model) - known_model
    if bad:
        raise ConfigError(f"unknown model config keys: {sorted(bad)}")
    model = dict(model)
    train_doc = dict(doc.get("train", {}))
    if seed is not None:
        model["seed"] = seed
        train_doc["seed"] = seed
        if data["generator"] is not None:
            data["params"] = {**data["params"], "seed": seed}
    try:
        tc = TrainConfig.from_dict(train_doc)
        TrainConfig.from_dict(ev["finetune"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid train config: {exc}") from exc
    for key in ("path", "adjacency"):
        data[key] = _resolve_path(data[key], base)
    ev["checkpoint"] = _resolve_path(ev["checkpoint"], base)
    if ev["split"] not in ("train", "valid", "test"):
        raise ConfigError("eval.split must be one of train, valid, test")
    for m in ev["metrics"]:
        if m not in POINT_METRICS:
            raise ConfigError(f"unknown metric {m!r}; choose from {sorted(POINT_METRICS)}")
    for v in ev["variants"]:
        if v not in VARIANTS:
            raise ConfigError(f"unknown ablation variant {v!r}; choose from {sorted(VARIANTS)}")
    for k in ev["kernels"]:
        if k not in KERNELS:
            raise ConfigError(f"unknown kernel {k!r}; choose from {list(KERNELS)}")
    for s in ev["stages"]:
        if s not in ATTACK_STAGES:
            raise ConfigError(f"unknown attack stage {s!r}; choose from {sorted(ATTACK_STAGES)}")
    return RunConfig(data=data, model=model, train=tc, eval=ev, source=source, raw=doc)


def load_config(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


# ---------------------------------------------------------------------------
# data
# ---------------------------------------------------------------------------


def _sidecar(path: Path) -> dict:
    side = path.with_suffix(".meta.json")
    return json.loads(side.read_text()) if side.is_file() else {}


def load_dataset(data: dict) -> SeriesDataset:
    """Build the dataset named by the ``data`` section (generator or CSV)."""
    if (data["generator"] is None) == (data["path"] is None):
        raise ConfigError("data needs exactly one of 'generator' or 'path'")
    if data["generator"] is not None:
        if data["generator"] not in GENERATORS:
            raise UsageError(f"unknown generator {data['generator']!r}; choose from {sorted(GENERATORS)}")
        try:
            ds = generate(data["generator"], **dict(data["params"]))
        except TypeError as exc:
            raise ConfigError(f"bad generator params: {exc}") from exc
        if data["period"] is not None:
            ds = replace(ds, period=int(data["period"]))
    else:
        path = Path(data["path"])
        if not path.is_file():
            raise DataError(f"data file not found: {path}")
        meta = _sidecar(path)
        period = data["period"] or meta.get("period", 288)
        ds = load_csv(path, data["layout"], int(period), data["nodes"], data["mask_zeros"])
        ds.meta.update({k: v for k, v in meta.items() if k != "period"})
        if data["adjacency"] is not None:
            ds.adjacency = load_adjacency(data["adjacency"], ds.node_ids)
    if data["permute_seed"] is not None:
        ds = ds.permute_nodes(np.random.default_rng(int(data["permute_seed"])).permutation(ds.n_nodes))
    return ds


def _window_layout(data: dict, ds: SeriesDataset) -> tuple[int, int | None]:
    stride = data["stride"] if data["stride"] is not None else ds.meta.get("cycle", 1)
    align = data["align"] if data["align"] is not None else ds.meta.get("align")
    return int(stride), None if align is None else int(align)


def model_config(rc: RunConfig, ds: SeriesDataset, overrides: dict | None = None) -> ModelConfig:
    d = dict(rc.model)
    if d.setdefault("n_nodes", ds.n_nodes) != ds.n_nodes:
        raise DataError(f"model.n_nodes={d['n_nodes']} but the data has {ds.n_nodes} nodes")
    d.setdefault("period", ds.period)
    d.setdefault("d_in", ds.n_features)
    d.update(overrides or {})
    try:
        return ModelConfig.from_dict(d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid model config: {exc}") from exc


def make_bundle(rc: RunConfig, ds: SeriesDataset, window: int, horizon: int,
                scaler: Standardizer | None = None) -> Bundle:
    stride, align = _window_layout(rc.data, ds)
    if rc.data["standardize"] not in ("node", "global", "none"):
        raise ConfigError("data.standardize must be node, global or none")
    return prepare(ds, window, horizon, tuple(rc.data["fractions"]), rc.data["standardize"],
                   rc.data["scale_labels"], stride, align, scaler=scaler)


def _split(bundle: Bundle, name: str):
    return {"train": bundle.train, "valid": bundle.valid, "test": bundle.test}[name]


def _checkpoint(rc: RunConfig) -> tuple[ModelParams, dict]:
    path = rc.eval["checkpoint"]
    if path is None:
        raise UsageError("this command needs eval.checkpoint")
    if not Path(path).is_file():
        raise UsageError(f"checkpoint not found: {path}")
    return load_checkpoint(path)


def _checked_bundle(rc: RunConfig, ds: SeriesDataset, model: ModelParams, extra: dict) -> Bundle:
    c = model.config
    if ds.n_nodes != c.n_nodes:
        raise DataError(f"checkpoint expects {c.n_nodes} nodes, data has {ds.n_nodes}")
    if ds.n_features != c.d_in:
        raise DataError(f"checkpoint expects {c.d_in} input channels, data has {ds.n_features}")
    scaler = Standardizer.from_dict(extra["scaler"]) if "scaler" in extra else None
    return make_bundle(rc, ds, c.window, c.horizon, scaler)


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


def write_rows(path: Path, header: list[str], rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                        for v in r])
    return path


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, (float, np.floating)):
        return f"{v:.6g}"
    return str(v)


def write_table(stem: Path, header: list[str], rows, extra: dict | None = None) -> list[Path]:
    """Same table as JSON records, aligned text and CSV."""
    rows = [list(r) for r in rows]
    records = [dict(zip(header, r)) for r in rows]
    j = write_json(stem.with_suffix(".json"), {"rows": records, **(extra or {})})
    text = format_table([header, *[[_fmt(v) for v in r] for r in rows]])
    if extra:
        text += "\n" + "\n".join(f"{k}: {_fmt(v) if not isinstance(v, (dict, list)) else json.dumps(_jsonable(v))}"
                                 for k, v in sorted(extra.items()))
    t = stem.with_suffix(".txt")
    t.write_text(text + "\n")
    c = write_rows(stem.with_suffix(".csv"), header, rows)
    return [j, t, c]


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _versions() -> dict:
    v = {"nexus": __version__, "python": platform.python_version(), "numpy": np.__version__}
    try:
        import numba

        v["numba"] = numba.__version__
    except ImportError:
        v["numba"] = None
    return v


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _synth_meta(ds: SeriesDataset) -> dict:
    meta = {k: v for k, v in ds.meta.items() if k != "transition"}
    meta["period"] = ds.period
    return meta


def cmd_synth(rc: RunConfig, out: Path) -> dict:
    if rc.data["generator"] is None:
        raise UsageError("synth needs data.generator")
    ds = load_dataset(rc.data)
    files = [write_csv(ds, out / "dataset.csv")]
    meta = _synth_meta(ds)
    files.append(write_json(out / "dataset.meta.json", meta))
    if ds.adjacency is not None:
        idx = np.argwhere(ds.adjacency != 0)
        files.append(write_rows(out / "adjacency.csv", ["src", "dst", "weight"],
                                [(ds.node_ids[i], ds.node_ids[j], ds.adjacency[i, j]) for i, j in idx]))
    if "transition" in ds.meta:
        M = np.asarray(ds.meta["transition"])
        files.append(write_rows(out / "transition.csv", ["row", *ds.node_ids],
                                [(ds.node_ids[i], *M[i]) for i in range(len(M))]))
    return {"files": files, "summary": meta}


def _baseline_extra(bundle: Bundle, ws, enabled: bool) -> dict:
    if not enabled:
        return {}
    out = {"persistence_mae": mae(persistence_predictions(ws), ws.y_raw, ws.mask)}
    try:
        out["ar_mae"] = mae(ar_predictions(bundle, ws), ws.y_raw, ws.mask)
    except (np.linalg.LinAlgError, NexusError, ValueError):
        out["ar_mae"] = None
    return out


def _report(rc: RunConfig, model: ModelParams, bundle: Bundle, ws) -> tuple:
    preds = predict_windows(model, ws)
    levels = model.config.quantiles
    rep = evaluate(preds[:, 0], ws.y_raw, ws.mask, rc.eval["metrics"], buckets=tuple(rc.eval["buckets"]),
                   quantiles=np.moveaxis(preds[:, 1:], 1, 0) if levels else None, levels=levels or None)
    rep.extra.update(_baseline_extra(bundle, ws, rc.eval["baselines"]))
    rep.extra["split"] = rc.eval["split"]
    rep.extra["windows"] = len(ws)
    if levels:
        rep.notes.append("quantile heads are unconstrained; crossings are possible")
    return rep


def _write_report(rep, out: Path, stem: str = "report") -> list[Path]:
    j = out / f"{stem}.json"
    j.write_text(rep.to_json() + "\n")
    t = out / f"{stem}.txt"
    extra = "".join(f"\n{k}: {_fmt(v)}" for k, v in sorted(rep.extra.items()))
    t.write_text(rep.to_text() + extra + "\n")
    names = list(rep.per_horizon)
    c = write_rows(out / f"{stem}_per_horizon.csv", ["horizon", "count", *names],
                   [(h + 1, rep.counts[h], *(rep.per_horizon[n][h] for n in names)) for h in range(len(rep.counts))])
    return [j, t, c]


def _history_files(hist, out: Path, stem: str = "history") -> list[Path]:
    j = write_json(out / f"{stem}.json", hist.to_dict(timings=False))
    c = write_rows(out / f"{stem}.csv", ["epoch", "train_loss", "val_mae"],
                   [(i + 1, a, b) for i, (a, b) in enumerate(zip(hist.train_loss, hist.val_mae))])
    return [j, c]


def cmd_train(rc: RunConfig, out: Path) -> dict:
    ds = load_dataset(rc.data)
    mc = model_config(rc, ds)
    bundle = make_bundle(rc, ds, mc.window, mc.horizon)
    extra = {"scaler": bundle.scaler.to_dict(), "data": rc.data}
    try:
        best, hist = train(build_model(mc), bundle.train, bundle.valid, rc.train)
    except DivergenceError as exc:
        files = [save_checkpoint(exc.checkpoint, out / "checkpoint.npz", {**extra, "diverged": True})]
        if exc.history is not None:
            files += _history_files(exc.history, out)
        exc.files = files
        raise
    files = [save_checkpoint(best, out / "checkpoint.npz", extra)]
    files += _history_files(hist, out)
    rep = _report(rc, best, bundle, _split(bundle, rc.eval["split"]))
    files += _write_report(rep, out)
    return {"files": files, "summary": {"best_epoch": hist.best_epoch, "best_val_mae": hist.best_val_mae,
                                        "mae": rep.overall.get("mae")},
            "timings": {"epoch_seconds": hist.seconds}}


def cmd_evaluate(rc: RunConfig, out: Path) -> dict:
    model, extra = _checkpoint(rc)
    ds = load_dataset(rc.data)
    bundle = _checked_bundle(rc, ds, model, extra)
    rep = _report(rc, model, bundle, _split(bundle, rc.eval["split"]))
    return {"files": _write_report(rep, out), "summary": rep.overall}


def cmd_forecast(rc: RunConfig, out: Path) -> dict:
    model, extra = _checkpoint(rc)
    ds = load_dataset(rc.data)
    bundle = _checked_bundle(rc, ds, model, extra)
    ws = _split(bundle, rc.eval["split"])
    preds = predict_windows(model, ws)  # (W, heads, N, H, d)
    levels = model.config.quantiles
    header = ["window", "node", "horizon", "step", "dim", "prediction", "target"]
    header += [f"q{q:g}" for q in levels]
    rows = []
    W, _, N, H, d = preds.shape
    for w in range(W):
        for n in range(N):
            for h in range(H):
                for k in range(d):
                    target = ws.y_raw[w, n, h, k] if ws.mask[w, n, h] else None
                    rows.append((w, ds.node_ids[n], h + 1, int(ws.target_steps[w, h]), k, preds[w, 0, n, h, k],
                                 target, *(preds[w, 1 + i, n, h, k] for i in range(len(levels)))))
    f = write_rows(out / "forecast.csv", header, rows)
    return {"files": [f], "summary": {"windows": W, "rows": len(rows)}}


def _variant_list(rc: RunConfig) -> list[tuple[str, dict]]:
    out = [(v, VARIANTS[v]) for v in rc.eval["variants"]]
    out += [(f"kernel:{k}", {"kernel": k}) for k in rc.eval["kernels"]]
    return out


def cmd_ablate(rc: RunConfig, out: Path) -> dict:
    ds = load_dataset(rc.data)
    base = model_config(rc, ds)
    bundle = make_bundle(rc, ds, base.window, base.horizon)
    ws = _split(bundle, rc.eval["split"])
    seeds = rc.eval["seeds"] if rc.eval["seeds"] is not None else [rc.train.seed]
    header = ["variant", "seed", "status", "best_epoch", "val_mae", "mae", "mse"]
    rows = []
    for name, over in _variant_list(rc):
        for s in seeds:
            mc = replace(base, **over, seed=int(s))
            run = replace(rc, train=replace(rc.train, seed=int(s)))
            status = "ok"
            try:
                model, hist = train(build_model(mc), bundle.train, bundle.valid, run.train)
                epoch, val = hist.best_epoch, hist.best_val_mae
            except DivergenceError as exc:
                # Score the last finite parameters so the row stays comparable.
                status, model = "diverged", exc.checkpoint
                epoch = exc.history.best_epoch if exc.history else 0
                val = exc.history.best_val_mae if exc.history else None
            preds = predict_windows(model, ws)[:, 0]
            err = preds - ws.y_raw
            m = np.broadcast_to(ws.mask[..., None], err.shape)
            rows.append((name, int(s), status, epoch, val, float(np.abs(err)[m].mean()),
                         float((err ** 2)[m].mean())))
    summary = {}
    for name, _ in _variant_list(rc):
        vals = [r[5] for r in rows if r[0] == name]
        summary[name] = float(np.mean(vals))
    files = write_table(out / "ablation", header, rows, {"mean_mae": summary, "split": rc.eval["split"]})
    return {"files": files, "summary": summary}


def cmd_bench(rc: RunConfig, out: Path) -> dict:
    ev = rc.eval
    rows = bench_scaling(ev["sizes"], hidden=int(ev["hidden"]), kernel=rc.model.get("kernel", "softmax"),
                         repeats=max(int(ev["repeats"]), 5), seed=rc.train.seed, dense=bool(ev["dense"]))
    csv_path = write_rows(out / "bench.csv", ["N", "t_kernelized", "t_dense", "bytes"],
                          [(r.n, r.t_kernelized, r.t_dense, r.bytes) for r in rows])
    ratios = growth_ratios(rows, 4)
    info = {
        "rows": [r.to_dict() for r in rows],
        "ratios_4x": ratios,
        "bytes_per_node_deviation": bytes_linearity(rows),
        "backend": kernels.get_backend(),
        "hidden": int(ev["hidden"]),
    }
    j = write_json(out / "bench.json", info)
    lines = [format_table([["N", "t_kernelized", "t_dense", "bytes", "bytes_dense", "max_abs_diff"],
                           *[[r.n, _fmt(r.t_kernelized), _fmt(r.t_dense), r.bytes, _fmt(r.bytes_dense),
                              _fmt(r.max_abs_diff)] for r in rows]])]
    if ratios:
        lines.append(format_table([["from_N", "to_N", "t_kernelized_ratio", "t_dense_ratio", "bytes_ratio"],
                                   *[[g["from_N"], g["to_N"], _fmt(g["t_kernelized_ratio"]),
                                      _fmt(g["t_dense_ratio"]), _fmt(g["bytes_ratio"])] for g in ratios]]))
    t = out / "bench.txt"
    t.write_text("\n\n".join(lines) + "\n")
    return {"files": [csv_path, j, t], "summary": {"ratios_4x": ratios}, "wallclock_reports": True}


def cmd_transfer(rc: RunConfig, out: Path) -> dict:
    pretrained, extra = _checkpoint(rc)
    ds = load_dataset(rc.data)
    c = pretrained.config
    bundle = make_bundle(rc, ds, c.window, c.horizon)
    ft_cfg = TrainConfig.from_dict({**rc.train.to_dict(), **rc.eval["finetune"]})
    tuned, ft_hist = transfer_finetune(pretrained, bundle.train, bundle.valid, ft_cfg, seed=rc.train.seed)
    scratch_cfg = replace(c, n_nodes=ds.n_nodes, seed=rc.train.seed)
    scratch, sc_hist = train(build_model(scratch_cfg), bundle.train, bundle.valid, rc.train)
    ps, ts = pretrained.state(), tuned.state()
    frozen = sorted(k for k in ps if k != "stne.E")
    identical = all(ps[k].tobytes() == ts[k].tobytes() for k in frozen)
    ft_val, sc_val = validation_mae(tuned, bundle.valid), validation_mae(scratch, bundle.valid)
    files = [save_checkpoint(tuned, out / "finetuned.npz", {"scaler": bundle.scaler.to_dict(), "data": rc.data})]
    header = ["model", "val_mae", "best_epoch", "trained_tensors"]
    rows = [("finetuned", ft_val, ft_hist.best_epoch, "stne.E"),
            ("scratch", sc_val, sc_hist.best_epoch, "all"),
            ("pretrained", validation_mae(pretrained, bundle.valid) if ds.n_nodes == c.n_nodes else None, None,
             "-")]
    info = {"relative_gap": ft_val / sc_val - 1.0, "frozen_identical": identical, "frozen_tensors": frozen}
    files += write_table(out / "transfer", header, rows, info)
    return {"files": files, "summary": info}


def cmd_attack(rc: RunConfig, out: Path) -> dict:
    model, extra = _checkpoint(rc)
    ds = load_dataset(rc.data)
    bundle = _checked_bundle(rc, ds, model, extra)
    ws = _split(bundle, rc.eval["split"])
    clean = validation_mae(model, ws)
    table = attack_sweep(model, ws, rc.eval["fractions"], rc.eval["stages"], int(rc.eval["attack_seed"]))
    rows = [(stage, p, m, m - clean) for stage, p, m in table]
    files = write_table(out / "attack", ["stage", "fraction", "mae", "delta"], rows,
                        {"clean_mae": clean, "split": rc.eval["split"]})
    return {"files": files, "summary": {"clean_mae": clean}}


HANDLERS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "forecast": cmd_forecast,
    "ablate": cmd_ablate,
    "bench": cmd_bench,
    "transfer": cmd_transfer,
    "attack": cmd_attack,
}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, DivergenceError):
        return EXIT_DIVERGED
    if isinstance(exc, (UsageError, ConfigError, DomainError)):
        return EXIT_USAGE
    if isinstance(exc, (DataError, TransferError)):
        return EXIT_DATA
    return EXIT_ERROR


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nexus", description="Contextualized MLP-Mixer forecasting toolkit")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="JSON config with sections data/model/train/eval")
    p.add_argument("--out", default=None, help="output directory (default: nexus-out/<command>)")
    p.add_argument("--seed", type=int, default=None, help="override model/train seeds (generator seed for synth)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def write_manifest(out: Path, command: str, rc: RunConfig | None, argv, status: str, result: dict | None,
                   error: str | None, elapsed: float) -> Path:
    files = [Path(f) for f in (result or {}).get("files", [])]
    manifest = {
        "command": command,
        "argv": list(argv),
        "status": status,
        "error": error,
        "config": rc.resolved() if rc else None,
        "config_source": str(rc.source) if rc and rc.source else None,
        "seed": {"model": rc.model.get("seed", 0), "train": rc.train.seed} if rc else None,
        "versions": _versions(),
        "environment": {
            "backend": kernels.get_backend(),
            "NEXUS_JIT": os.environ.get("NEXUS_JIT"),
            "NEXUS_THREADS": os.environ.get("NEXUS_THREADS", "1"),
        },
        "outputs": {f.name: _sha256(f) for f in files if f.is_file()},
        "summary": (result or {}).get("summary"),
        "wallclock": {"elapsed_seconds": elapsed, **(result or {}).get("timings", {})},
    }
    return write_json(out / "manifest.json", manifest)


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out) if args.out else Path("nexus-out") / args.command
    rc = None
    t0 = time.perf_counter()
    try:
        out.mkdir(parents=True, exist_ok=True)
        src = Path(args.config).resolve()
        rc = parse_config(load_config(src), src, args.seed)
        result = HANDLERS[args.command](rc, out)
    except (NexusError, OSError) as exc:
        code = exit_code(exc) if isinstance(exc, NexusError) else EXIT_DATA
        print(f"nexus {args.command}: error: {exc}", file=sys.stderr)
        if out.is_dir():
            files = getattr(exc, "files", [])
            write_manifest(out, args.command, rc, argv, type(exc).__name__, {"files": files}, str(exc),
                           time.perf_counter() - t0)
        return code
    write_manifest(out, args.command, rc, argv, "ok", result, None, time.perf_counter() - t0)
    summary = result.get("summary")
    print(f"nexus {args.command}: ok -> {out}")
    if summary:
        print(json.dumps(_jsonable(summary), sort_keys=True))
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
