"""Series containers, CSV ingestion, chronological splits, windowing and scaling."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DataError


@dataclass
class SeriesDataset:
    """Dense chronological multivariate series.

    ``values`` is (steps, N, d); ``mask`` is (steps, N) with True for observed
    cells. ``steps`` holds contiguous absolute step indices.
    """

    values: np.ndarray
    steps: np.ndarray
    period: int = 288
    mask: np.ndarray | None = None
    adjacency: np.ndarray | None = None
    node_ids: list[str] | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim == 2:
            self.values = self.values[:, :, None]
        if self.values.ndim != 3:
            raise DataError(f"values must be (steps, N, d), got shape {self.values.shape}")
        self.steps = np.asarray(self.steps, dtype=np.int64)
        if self.steps.shape != (self.values.shape[0],):
            raise DataError("one step index per row is required")
        if len(self.steps) > 1 and not np.all(np.diff(self.steps) == 1):
            raise DataError("step indices must be strictly increasing and contiguous")
        if self.mask is None:
            self.mask = np.ones(self.values.shape[:2], dtype=bool)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != self.values.shape[:2]:
            raise DataError(f"mask shape {self.mask.shape} != (steps, N) {self.values.shape[:2]}")
        if self.node_ids is None:
            self.node_ids = [str(i) for i in range(self.n_nodes)]
        if int(self.period) < 1:
            raise DataError("period must be >= 1")

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.values.shape[1]

    @property
    def n_features(self) -> int:
        return self.values.shape[2]

    def slice(self, start: int, stop: int) -> SeriesDataset:
        return replace(self, values=self.values[start:stop], steps=self.steps[start:stop],
                       mask=self.mask[start:stop], meta=dict(self.meta))

    def permute_nodes(self, order) -> SeriesDataset:
        order = np.asarray(order)
        adj = None if self.adjacency is None else self.adjacency[np.ix_(order, order)]
        return replace(self, values=self.values[:, order], mask=self.mask[:, order], adjacency=adj,
                       node_ids=[self.node_ids[i] for i in order], meta=dict(self.meta))


@dataclass
class GraphSignalWindow:
    x: np.ndarray  # (N, T, d_in)
    y: np.ndarray  # (N, H, d_out)
    input_steps: np.ndarray  # (T,)
    target_steps: np.ndarray  # (H,)
    mask: np.ndarray  # (N, H)


@dataclass
class WindowSet:
    """Stacked windows ready for batched training.

    ``x``/``y`` live in model (scaled) space, ``y_raw`` in data units.
    """

    x: np.ndarray  # (W, N, T, d_in)
    y: np.ndarray  # (W, N, H, d_out)
    y_raw: np.ndarray
    mask: np.ndarray  # (W, N, H) bool
    input_steps: np.ndarray  # (W, T)
    target_steps: np.ndarray  # (W, H)
    scaler: Standardizer | None = None
    labels_scaled: bool = False

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.x.shape[1]

    def to_raw(self, pred: np.ndarray) -> np.ndarray:
        """Map predictions (..., N, H, d) from model space to data units."""
        if self.scaler is None or not self.labels_scaled:
            return pred
        return self.scaler.inverse_transform(pred, node_axis=-3)

    def subset(self, idx) -> WindowSet:
        return replace(self, x=self.x[idx], y=self.y[idx], y_raw=self.y_raw[idx], mask=self.mask[idx],
                       input_steps=self.input_steps[idx], target_steps=self.target_steps[idx])

    def window(self, i: int) -> GraphSignalWindow:
        return GraphSignalWindow(self.x[i], self.y[i], self.input_steps[i], self.target_steps[i], self.mask[i])


# ---------------------------------------------------------------------------
# standardization
# ---------------------------------------------------------------------------


@dataclass
class Standardizer:
    """z-score scaling with statistics from the training split only.

    ``mode`` is ``"node"`` (per node and channel), ``"global"`` (one mean/std
    per channel) or ``"none"``.
    """

    mean: np.ndarray  # (N, d)
    std: np.ndarray
    mode: str = "node"

    @classmethod
    def fit(cls, ds: SeriesDataset, mode: str = "node") -> Standardizer:
        if mode not in ("node", "global", "none"):
            raise DataError(f"unknown standardization mode {mode!r}")
        n, d = ds.n_nodes, ds.n_features
        if mode == "none":
            return cls(np.zeros((n, d)), np.ones((n, d)), mode)
        w = ds.mask[:, :, None].astype(np.float64) * np.ones((1, 1, d))
        if mode == "node":
            cnt = w.sum(axis=0)
            mean = (ds.values * w).sum(axis=0) / np.maximum(cnt, 1)
            var = (((ds.values - mean) ** 2) * w).sum(axis=0) / np.maximum(cnt, 1)
        else:
            cnt = w.sum(axis=(0, 1))
            mean = (ds.values * w).sum(axis=(0, 1)) / np.maximum(cnt, 1)
            var = (((ds.values - mean) ** 2) * w).sum(axis=(0, 1)) / np.maximum(cnt, 1)
            mean = np.broadcast_to(mean, (n, d)).copy()
            var = np.broadcast_to(var, (n, d)).copy()
        std = np.sqrt(var)
        std[std == 0] = 1.0
        return cls(mean, std, mode)

    def _stats(self, node_axis: int, ndim: int):
        shape = [1] * ndim
        ax = node_axis % ndim
        shape[ax] = self.mean.shape[0]
        shape[-1] = self.mean.shape[1]
        return self.mean.reshape(shape), self.std.reshape(shape)

    def transform(self, x: np.ndarray, node_axis: int = -2) -> np.ndarray:
        """Scale ``x`` whose node axis is ``node_axis`` and channel axis is last."""
        x = np.asarray(x, dtype=np.float64)
        mean, std = self._stats(node_axis, x.ndim)
        return (x - mean) / std

    def inverse_transform(self, x: np.ndarray, node_axis: int = -2) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        mean, std = self._stats(node_axis, x.ndim)
        return x * std + mean

    def to_dict(self) -> dict:
        return {"mode": self.mode, "mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> Standardizer:
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64), d["mode"])


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def _parse(cell: str):
    cell = cell.strip()
    if cell == "" or cell.lower() in ("nan", "na", "null"):
        return None
    try:
        return float(cell)
    except ValueError as exc:
        raise DataError(f"cannot parse value {cell!r}") from exc


def load_csv(path, layout: str = "wide", period: int = 288, nodes=None, mask_zeros: bool = False) -> SeriesDataset:
    """Read a series CSV.

    ``wide``: header ``step,<node>,<node>,...``; one row per step.
    ``long``: header ``step,node,value``; one row per observed cell.
    Blank cells and absent (step, node) pairs are masked and zero-filled;
    gaps in the step sequence become fully masked rows. With ``mask_zeros``
    exact zeros are also masked (sensor convention: zero means no reading).
    """
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header, body = [h.strip() for h in rows[0]], [r for r in rows[1:] if r]
    cells: dict[tuple[int, str], float] = {}
    step_list: list[int] = []
    if layout == "wide":
        if header[0] != "step":
            raise DataError(f"{path}: wide layout needs 'step' as first column")
        node_ids = header[1:]
        if nodes is not None:
            extra = set(node_ids) - {str(n) for n in nodes}
            if extra:
                raise DataError(f"{path}: unknown node ids {sorted(extra)}")
        for r in body:
            if len(r) != len(header):
                raise DataError(f"{path}: row {r!r} has {len(r)} cells, expected {len(header)}")
            s = int(r[0])
            if step_list and s <= step_list[-1]:
                raise DataError(f"{path}: timestamps not strictly increasing at step {s}")
            step_list.append(s)
            for nid, cell in zip(node_ids, r[1:]):
                v = _parse(cell)
                if v is not None:
                    cells[(s, nid)] = v
    elif layout == "long":
        if header[:3] != ["step", "node", "value"]:
            raise DataError(f"{path}: long layout needs columns step,node,value")
        node_ids = [str(n) for n in nodes] if nodes is not None else []
        known = set(node_ids)
        last = None
        for r in body:
            s, nid = int(r[0]), r[1].strip()
            if last is not None and s < last:
                raise DataError(f"{path}: timestamps not monotone at step {s}")
            last = s
            if nid not in known:
                if nodes is not None:
                    raise DataError(f"{path}: unknown node id {nid!r}")
                known.add(nid)
                node_ids.append(nid)
            if (s, nid) in cells:
                raise DataError(f"{path}: duplicate cell (step={s}, node={nid})")
            if not step_list or step_list[-1] != s:
                step_list.append(s)
            v = _parse(r[2]) if len(r) > 2 else None
            if v is not None:
                cells[(s, nid)] = v
    else:
        raise DataError(f"unknown layout {layout!r}")
    if not step_list:
        raise DataError(f"{path}: no rows")
    steps = np.arange(step_list[0], step_list[-1] + 1)
    values = np.zeros((len(steps), len(node_ids)))
    mask = np.zeros((len(steps), len(node_ids)), dtype=bool)
    col = {nid: j for j, nid in enumerate(node_ids)}
    for (s, nid), v in cells.items():
        i, j = s - steps[0], col[nid]
        values[i, j] = v
        mask[i, j] = not (mask_zeros and v == 0.0)
    return SeriesDataset(values[:, :, None], steps, period, mask, node_ids=list(node_ids))


def write_csv(ds: SeriesDataset, path, layout: str = "wide") -> Path:
    """Inverse of :func:`load_csv` for single-channel data; masked cells are left blank."""
    if ds.n_features != 1:
        raise DataError("CSV export supports single-channel series only")
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if layout == "wide":
            w.writerow(["step", *ds.node_ids])
            for i, s in enumerate(ds.steps):
                w.writerow([int(s), *(repr(float(v)) if m else "" for v, m in zip(ds.values[i, :, 0], ds.mask[i]))])
        elif layout == "long":
            w.writerow(["step", "node", "value"])
            for i, s in enumerate(ds.steps):
                for j, nid in enumerate(ds.node_ids):
                    if ds.mask[i, j]:
                        w.writerow([int(s), nid, repr(float(ds.values[i, j, 0]))])
        else:
            raise DataError(f"unknown layout {layout!r}")
    return path


def load_adjacency(path, node_ids) -> np.ndarray:
    """Edge list ``src,dst,weight`` -> dense (N, N) matrix."""
    col = {str(n): i for i, n in enumerate(node_ids)}
    A = np.zeros((len(col), len(col)))
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["src", "dst"]:
            raise DataError(f"{path}: adjacency needs header src,dst[,weight]")
        for r in reader:
            if not r:
                continue
            if r[0].strip() not in col or r[1].strip() not in col:
                raise DataError(f"{path}: unknown node in edge {r!r}")
            A[col[r[0].strip()], col[r[1].strip()]] = float(r[2]) if len(r) > 2 and r[2].strip() else 1.0
    return A


# ---------------------------------------------------------------------------
# splits and windows
# ---------------------------------------------------------------------------


def chronological_split(ds: SeriesDataset, fractions=(0.7, 0.1, 0.2), min_length: int | None = None):
    """Contiguous (train, valid, test) segments in time order."""
    fr = [float(f) for f in fractions]
    if len(fr) != 3 or any(f < 0 for f in fr) or not math.isclose(sum(fr), 1.0, abs_tol=1e-9):
        raise DataError(f"fractions must be three non-negative numbers summing to 1, got {fractions}")
    n = ds.n_steps
    n_train = int(round(fr[0] * n))
    n_valid = int(round(fr[1] * n))
    n_test = n - n_train - n_valid
    sizes = (n_train, n_valid, n_test)
    floor = max(1, min_length or 1)
    if min(sizes) < floor:
        raise DataError(f"split sizes {sizes} leave a segment shorter than {floor} steps")
    cut1, cut2 = n_train, n_train + n_valid
    return ds.slice(0, cut1), ds.slice(cut1, cut2), ds.slice(cut2, n)


def window_starts(segment: SeriesDataset, window: int, horizon: int, stride: int = 1, align: int | None = None):
    """Row offsets of window starts inside ``segment``.

    With ``align`` set, starts are the rows whose absolute step ``p`` satisfies
    ``p % stride == align % stride``.
    """
    if stride < 1:
        raise DataError("stride must be >= 1")
    span = window + horizon
    if segment.n_steps < span:
        raise DataError(f"segment of {segment.n_steps} steps is shorter than window + horizon = {span}")
    if align is None:
        return np.arange(0, segment.n_steps - span + 1, stride)
    first = (align - segment.steps[0]) % stride
    return np.arange(first, segment.n_steps - span + 1, stride)


def window_set(segment: SeriesDataset, window: int, horizon: int, stride: int = 1, align: int | None = None,
               scaler: Standardizer | None = None, scale_labels: bool = True, d_out: int | None = None) -> WindowSet:
    starts = window_starts(segment, window, horizon, stride, align)
    d_out = segment.n_features if d_out is None else d_out
    vals = segment.values * segment.mask[:, :, None]
    scaled = scaler.transform(vals) * segment.mask[:, :, None] if scaler is not None else vals
    idx_in = starts[:, None] + np.arange(window)[None, :]
    idx_out = starts[:, None] + window + np.arange(horizon)[None, :]
    x = np.transpose(scaled[idx_in], (0, 2, 1, 3))
    y_raw = np.transpose(vals[idx_out][..., :d_out], (0, 2, 1, 3))
    y = np.transpose(scaled[idx_out][..., :d_out], (0, 2, 1, 3)) if scale_labels and scaler is not None else y_raw
    mask = np.transpose(segment.mask[idx_out], (0, 2, 1))
    return WindowSet(x=np.ascontiguousarray(x), y=np.ascontiguousarray(y), y_raw=np.ascontiguousarray(y_raw),
                     mask=np.ascontiguousarray(mask), input_steps=segment.steps[idx_in],
                     target_steps=segment.steps[idx_out], scaler=scaler,
                     labels_scaled=bool(scale_labels and scaler is not None))


def make_windows(segment: SeriesDataset, window: int, horizon: int, stride: int = 1,
                 align: int | None = None) -> list[GraphSignalWindow]:
    """Unscaled (history, future) windows; count is floor((len - T - H) / stride) + 1 when unaligned."""
    ws = window_set(segment, window, horizon, stride, align)
    return [ws.window(i) for i in range(len(ws))]
