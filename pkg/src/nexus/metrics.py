"""Point and probabilistic forecast metrics over masked entries."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateError, DomainError, ShapeError


def _prep(preds, targets, mask):
    p = np.asarray(preds, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if p.shape != t.shape:
        raise ShapeError(f"predictions {p.shape} and targets {t.shape} differ")
    if mask is None:
        m = np.ones(p.shape, dtype=bool)
    else:
        m = np.asarray(mask, dtype=bool)
        while m.ndim < p.ndim:
            m = m[..., None]
        m = np.broadcast_to(m, p.shape)
    return p, t, m


def mae(preds, targets, mask=None) -> float:
    p, t, m = _prep(preds, targets, mask)
    if not m.any():
        raise DegenerateError("MAE undefined: mask selects no entries")
    return float(np.abs(p - t)[m].mean())


def mse(preds, targets, mask=None) -> float:
    p, t, m = _prep(preds, targets, mask)
    if not m.any():
        raise DegenerateError("MSE undefined: mask selects no entries")
    return float(((p - t) ** 2)[m].mean())


def mape(preds, targets, mask=None) -> float:
    """Percentage error over valid entries with nonzero targets."""
    p, t, m = _prep(preds, targets, mask)
    m = m & (t != 0)
    if not m.any():
        raise DegenerateError("MAPE undefined: no nonzero targets")
    return float(np.abs((p[m] - t[m]) / t[m]).mean() * 100.0)


def wape(preds, targets, mask=None) -> float:
    """sum|error| / sum|target| in percent."""
    p, t, m = _prep(preds, targets, mask)
    den = np.abs(t[m]).sum()
    if den == 0:
        raise DegenerateError("WAPE undefined: targets sum to zero")
    return float(np.abs(p[m] - t[m]).sum() / den * 100.0)


# Both labels share the sum-normalized absolute error.
def nmae(preds, targets, mask=None) -> float:
    return wape(preds, targets, mask)


def mre(preds, targets, mask=None) -> float:
    return wape(preds, targets, mask)


def pinball(preds, targets, level: float, mask=None) -> float:
    p, t, m = _prep(preds, targets, mask)
    if not m.any():
        raise DegenerateError("pinball loss undefined: mask selects no entries")
    r = (t - p)[m]
    return float(np.maximum(level * r, (level - 1.0) * r).mean())


def crps_from_quantiles(quantile_preds, targets, levels, mask=None) -> float:
    """CRPS approximated as ``2 * mean_q pinball_q``.

    ``quantile_preds`` has one leading entry per level.
    """
    levels = np.asarray(levels, dtype=np.float64)
    if levels.ndim != 1 or len(levels) == 0 or np.any(levels <= 0) or np.any(levels >= 1) \
            or np.any(np.diff(levels) <= 0):
        raise DomainError(f"levels must be strictly increasing in (0, 1), got {levels.tolist()}")
    qp = np.asarray(quantile_preds, dtype=np.float64)
    if qp.shape[0] != len(levels):
        raise ShapeError(f"{qp.shape[0]} quantile predictions for {len(levels)} levels")
    return float(2.0 * np.mean([pinball(qp[i], targets, q, mask) for i, q in enumerate(levels)]))


POINT_METRICS = {"mae": mae, "mse": mse, "mape": mape, "wape": wape, "nmae": nmae, "mre": mre}
DEFAULT_BUCKETS = (3, 6, 12)


@dataclass
class MetricReport:
    """Overall values, per-horizon values and fixed-step horizon buckets.

    ``per_horizon[name][h]`` is the metric over horizon step ``h + 1``;
    ``counts[h]`` is the number of entries it averaged. ``buckets`` reports
    the per-horizon value at each bucket step (e.g. 3, 6, 12).
    """

    overall: dict[str, float]
    per_horizon: dict[str, list[float | None]]
    counts: list[int]
    buckets: dict[str, dict[str, float | None]] = field(default_factory=dict)
    n_entries: int = 0
    notes: list[str] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "overall": self.overall,
            "per_horizon": self.per_horizon,
            "counts": self.counts,
            "buckets": self.buckets,
            "n_entries": self.n_entries,
            "notes": self.notes,
            "extra": self.extra,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_text(self) -> str:
        names = list(self.overall)
        rows = [["horizon", *names]]
        for label, vals in self.buckets.items():
            rows.append([label, *(_fmt(vals.get(n)) for n in names)])
        rows.append(["avg", *(_fmt(self.overall[n]) for n in names)])
        return format_table(rows) + "".join(f"\nnote: {n}" for n in self.notes)


def _fmt(v) -> str:
    return "-" if v is None else f"{v:.6g}"


def format_table(rows: list[list]) -> str:
    """Aligned plain-text table; first row is the header."""
    cells = [[str(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(cells[0]))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def evaluate(preds, targets, mask=None, metrics=("mae", "mse", "mape"), buckets=DEFAULT_BUCKETS,
             horizon_axis: int = -2, quantiles=None, levels=None) -> MetricReport:
    """Build a :class:`MetricReport` for predictions shaped (..., H, d).

    A metric that is undefined on some subset (e.g. MAPE with all-zero
    targets at one horizon) is reported as ``None`` there.
    """
    p, t, m = _prep(preds, targets, mask)
    ax = horizon_axis % p.ndim
    H = p.shape[ax]
    overall, per_h = {}, {}
    for name in metrics:
        fn = POINT_METRICS[name]
        overall[name] = _safe(fn, p, t, m)
        per_h[name] = [_safe(fn, np.take(p, h, ax), np.take(t, h, ax), np.take(m, h, ax)) for h in range(H)]
    counts = [int(np.take(m, h, ax).sum()) for h in range(H)]
    if quantiles is not None:
        qp = np.asarray(quantiles)
        overall["crps"] = crps_from_quantiles(qp, t, levels, m)
        per_h["crps"] = [
            _safe(lambda a, b, c: crps_from_quantiles(a, b, levels, c), np.take(qp, h, ax + 1), np.take(t, h, ax),
                  np.take(m, h, ax))
            for h in range(H)
        ]
    bucket_vals = {
        str(b): {n: per_h[n][b - 1] for n in per_h} for b in buckets if 1 <= b <= H
    }
    notes = []
    if "nmae" in metrics and "mre" in metrics:
        notes.append("nmae and mre share the formula sum|error| / sum|target| (x100)")
    return MetricReport(overall, per_h, counts, bucket_vals, int(m.sum()), notes)


def _safe(fn, *args):
    try:
        return fn(*args)
    except DegenerateError:
        return None
