"""Segmentation metrics (recall, precision, Dice, average Hausdorff distance)
and localization metrics (skeleton error, endpoint error) in physical units."""

from __future__ import annotations

import json
from dataclasses import dataclass, fields

import numpy as np
from scipy.spatial import cKDTree

from .localize import point_polyline_distance
from .volume import Mask3

TABLE_COLUMNS = ("Recall (%)", "Precision (%)", "Dice (%)", "AHD (voxel)", "SE (mm)", "EE (mm)")


@dataclass
class MetricsReport:
    recall: float
    precision: float
    dice: float
    ahd_voxels: float | None = None
    se_mm: float | None = None
    ee_mm: float | None = None

    def row(self) -> list[float | None]:
        return [
            100 * self.recall,
            100 * self.precision,
            100 * self.dice,
            self.ahd_voxels,
            self.se_mm,
            self.ee_mm,
        ]


def overlap_metrics(pred: Mask3 | np.ndarray, truth: Mask3 | np.ndarray):
    """(recall, precision, dice) from voxel counts.  Two empty masks count as
    perfect agreement; an empty side against a nonempty one scores 0."""
    p = (pred.data if isinstance(pred, Mask3) else np.asarray(pred)).astype(bool)
    t = (truth.data if isinstance(truth, Mask3) else np.asarray(truth)).astype(bool)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {t.shape}")
    tp = int(np.count_nonzero(p & t))
    fp = int(np.count_nonzero(p & ~t))
    fn = int(np.count_nonzero(~p & t))
    if tp + fp + fn == 0:
        return 1.0, 1.0, 1.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    precision = tp / (tp + fp) if tp + fp else 0.0
    dice = 2 * tp / (2 * tp + fp + fn)
    return recall, precision, dice


def ahd(pred: Mask3 | np.ndarray, truth: Mask3 | np.ndarray) -> float:
    """Average Hausdorff distance in voxel units: the symmetric mean of the
    two directed mean nearest-neighbor distances."""
    p = np.argwhere((pred.data if isinstance(pred, Mask3) else np.asarray(pred)) == 1)
    t = np.argwhere((truth.data if isinstance(truth, Mask3) else np.asarray(truth)) == 1)
    if p.shape[0] == 0 or t.shape[0] == 0:
        raise ValueError("AHD is undefined for empty masks")
    d_pt = cKDTree(t).query(p)[0]
    d_tp = cKDTree(p).query(t)[0]
    return 0.5 * (float(np.mean(d_pt)) + float(np.mean(d_tp)))


def _arc_length_samples(polyline: np.ndarray, fractions) -> np.ndarray:
    """Points at given arc-length fractions along a polyline."""
    poly = np.asarray(polyline, dtype=np.float64)
    if poly.shape[0] == 1:
        return np.repeat(poly, len(fractions), axis=0)
    seglen = np.linalg.norm(np.diff(poly, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seglen)])
    total = cum[-1]
    if total == 0:
        return np.repeat(poly[:1], len(fractions), axis=0)
    out = np.empty((len(fractions), 3))
    for i, f in enumerate(fractions):
        s = f * total
        j = int(np.searchsorted(cum, s, side="right")) - 1
        j = min(j, len(seglen) - 1)
        r = (s - cum[j]) / seglen[j] if seglen[j] > 0 else 0.0
        out[i] = poly[j] + r * (poly[j + 1] - poly[j])
    return out


def skeleton_error(fitted_polyline: np.ndarray, truth_polyline: np.ndarray, spacing_mm) -> float:
    """Mean distance (mm) from 5 equal-arc-length samples of the fitted curve
    to the annotation skeleton."""
    fitted = np.atleast_2d(np.asarray(fitted_polyline, dtype=np.float64))
    truth = np.atleast_2d(np.asarray(truth_polyline, dtype=np.float64))
    if fitted.shape[0] == 0 or truth.shape[0] == 0:
        raise ValueError("polylines must be nonempty")
    sp = np.asarray(spacing_mm, dtype=np.float64)
    samples = _arc_length_samples(fitted * sp, (0.0, 0.25, 0.5, 0.75, 1.0))
    dists = point_polyline_distance(samples, truth * sp)
    return float(np.mean(dists))


def endpoint_error(fitted_polyline: np.ndarray, truth_polyline: np.ndarray, spacing_mm) -> float:
    """Mean distance (mm) between fitted and annotated endpoints under the
    assignment minimizing total distance."""
    fitted = np.atleast_2d(np.asarray(fitted_polyline, dtype=np.float64))
    truth = np.atleast_2d(np.asarray(truth_polyline, dtype=np.float64))
    if fitted.shape[0] == 0 or truth.shape[0] == 0:
        raise ValueError("polylines must be nonempty")
    sp = np.asarray(spacing_mm, dtype=np.float64)
    fa, fb = fitted[0] * sp, fitted[-1] * sp
    ta, tb = truth[0] * sp, truth[-1] * sp
    straight = np.linalg.norm(fa - ta) + np.linalg.norm(fb - tb)
    crossed = np.linalg.norm(fa - tb) + np.linalg.norm(fb - ta)
    return float(min(straight, crossed) / 2.0)


def aggregate(reports: list[MetricsReport]) -> dict:
    """Mean +- std per column over the reports that carry each value."""
    out = {}
    names = [f.name for f in fields(MetricsReport)]
    for col, name in zip(TABLE_COLUMNS, names):
        scale = 100.0 if name in ("recall", "precision", "dice") else 1.0
        vals = [scale * getattr(r, name) for r in reports if getattr(r, name) is not None]
        if vals:
            out[col] = {"mean": float(np.mean(vals)), "std": float(np.std(vals)), "n": len(vals)}
        else:
            out[col] = {"mean": None, "std": None, "n": 0}
    return out


def format_table(rows: list[tuple[str, MetricsReport]], agg: dict | None = None) -> str:
    """Aligned text table with the standard column order."""
    header = ["Volume"] + list(TABLE_COLUMNS)
    lines = [rows_fmt(header)]
    for name, rep in rows:
        cells = [name] + [("-" if v is None else f"{v:.2f}") for v in rep.row()]
        lines.append(rows_fmt(cells))
    if agg is not None:
        cells = ["mean+-std"]
        for col in TABLE_COLUMNS:
            a = agg[col]
            cells.append("-" if a["mean"] is None else f"{a['mean']:.1f}+-{a['std']:.1f}")
        lines.append(rows_fmt(cells))
    return "\n".join(lines)


def rows_fmt(cells) -> str:
    return "  ".join(f"{c:>14}" for c in cells)


def save_report(rows: list[tuple[str, MetricsReport]], agg: dict, path: str) -> None:
    payload = {
        "per_volume": {
            name: {f.name: getattr(rep, f.name) for f in fields(MetricsReport)}
            for name, rep in rows
        },
        "aggregate": agg,
    }
    with open(path, "w") as f:
        json.dump(payload, f, indent=1)
