"""Catheter localization: connectivity clustering, per-cluster skeleton
extraction into a sparse point set, and sparse-plus-dense RANSAC fitting of a
3-control-point cubic spline scored by dense-voxel inlier counts."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.interpolate import CubicSpline

from .volume import Mask3

_STRUCT_26 = np.ones((3, 3, 3), dtype=bool)


@dataclass(frozen=True)
class SparseVolume:
    """Skeleton points pooled over all clusters (the RANSAC sampling set)."""

    points: np.ndarray  # [n, 3] float, voxel coordinates
    source_cluster: np.ndarray  # [n] int, 1-based cluster label


@dataclass(frozen=True)
class CatheterModel:
    control_points: np.ndarray  # [3, 3] ordered
    polyline: np.ndarray  # [S, 3] sampled along the spline
    score: int = 0


def connected_components(mask: Mask3 | np.ndarray) -> np.ndarray:
    """Label positive voxels under 26-connectivity; labels dense from 1,
    0 = background."""
    data = mask.data if isinstance(mask, Mask3) else np.asarray(mask)
    labels, _ = ndimage.label(data, structure=_STRUCT_26)
    return labels


def _principal_axis(coords: np.ndarray) -> np.ndarray:
    centered = coords - coords.mean(axis=0)
    cov = centered.T @ centered
    _, vecs = np.linalg.eigh(cov)
    return vecs[:, -1]


def extract_sparse(labels: np.ndarray) -> SparseVolume:
    """Per cluster: project voxels onto the cluster's dominant direction
    (principal covariance eigenvector), partition into unit-length bins, and
    emit each bin's voxel centroid."""
    n_clusters = int(labels.max())
    if n_clusters == 0:
        raise ValueError("no clusters to skeletonize")
    points, sources = [], []
    for lab in range(1, n_clusters + 1):
        coords = np.argwhere(labels == lab).astype(np.float64)
        if coords.shape[0] == 1:
            points.append(coords[0])
            sources.append(lab)
            continue
        axis = _principal_axis(coords)
        t = coords @ axis
        bins = np.floor(t - t.min()).astype(np.int64)
        for b in np.unique(bins):
            points.append(coords[bins == b].mean(axis=0))
            sources.append(lab)
    return SparseVolume(points=np.asarray(points), source_cluster=np.asarray(sources))


def rank_control_points(p0, p1, p2) -> np.ndarray:
    """Order three points by scalar projection onto their principal axis,
    oriented so the first point is lexicographically smaller than the last."""
    pts = np.asarray([p0, p1, p2], dtype=np.float64)
    for i in range(3):
        for j in range(i + 1, 3):
            if np.array_equal(pts[i], pts[j]):
                raise ValueError("control points must be distinct")
    axis = _principal_axis(pts)
    order = np.argsort(pts @ axis, kind="stable")
    ordered = pts[order]
    if tuple(ordered[0]) > tuple(ordered[-1]):
        ordered = ordered[::-1]
    return np.ascontiguousarray(ordered)


def fit_spline(ordered_points: np.ndarray, n_samples: int = 100) -> CatheterModel:
    """Natural cubic spline through 3 ordered points under chord-length
    parameterization, sampled at `n_samples` parameters."""
    pts = np.asarray(ordered_points, dtype=np.float64)
    if pts.shape != (3, 3):
        raise ValueError(f"expected 3 control points, got shape {pts.shape}")
    chords = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    if np.any(chords == 0):
        raise ValueError("degenerate (coincident) control points")
    t = np.concatenate([[0.0], np.cumsum(chords)])
    t = t / t[-1]
    spline = CubicSpline(t, pts, bc_type="natural", axis=0)
    # sample parameters include the knots so the polyline passes through the
    # control points exactly
    params = np.unique(np.concatenate([np.linspace(0.0, 1.0, n_samples), t]))
    polyline = spline(params)
    return CatheterModel(control_points=pts, polyline=polyline)


def point_polyline_distance(points: np.ndarray, polyline: np.ndarray, chunk: int = 8192) -> np.ndarray:
    """Minimum Euclidean distance of each point to the polyline's segments."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    poly = np.asarray(polyline, dtype=np.float64)
    if poly.shape[0] == 1:
        return np.linalg.norm(points - poly[0], axis=1)
    a = poly[:-1]
    d = poly[1:] - a
    dd = (d * d).sum(axis=1)
    dd[dd == 0] = 1.0  # repeated sample points: fall back to point distance
    out = np.empty(points.shape[0])
    for start in range(0, points.shape[0], chunk):
        p = points[start : start + chunk]
        w = p[:, None, :] - a[None, :, :]
        t = np.clip((w * d[None]).sum(axis=2) / dd[None], 0.0, 1.0)
        closest = a[None] + t[..., None] * d[None]
        out[start : start + chunk] = np.sqrt(
            ((p[:, None, :] - closest) ** 2).sum(axis=2).min(axis=1)
        )
    return out


def spd_ransac(
    sparse: SparseVolume,
    dense: Mask3 | np.ndarray,
    inlier_thresh_vox: float = 3.0,
    iters: int = 500,
    seed: int = 0,
    n_samples: int = 100,
) -> CatheterModel:
    """Sparse-plus-dense RANSAC: control points drawn from the skeleton set
    only; candidate splines scored by dense voxels within the inlier
    threshold.  Returns the argmax-score model (ties: first reached)."""
    n = sparse.points.shape[0]
    if n < 3:
        raise ValueError(f"need at least 3 sparse points, got {n}")
    dense_data = dense.data if isinstance(dense, Mask3) else np.asarray(dense)
    dense_pts = np.argwhere(dense_data == 1).astype(np.float64)
    if dense_pts.shape[0] == 0:
        raise ValueError("dense volume is empty")
    rng = np.random.default_rng(seed)
    best: CatheterModel | None = None
    for _ in range(iters):
        idx = rng.choice(n, size=3, replace=False)
        try:
            ordered = rank_control_points(*sparse.points[idx])
            model = fit_spline(ordered, n_samples=n_samples)
        except ValueError:
            continue
        score = int((point_polyline_distance(dense_pts, model.polyline) <= inlier_thresh_vox).sum())
        if best is None or score > best.score:
            best = CatheterModel(model.control_points, model.polyline, score)
    if best is None:
        raise ValueError("no valid control-point triple found")
    return best


def skeleton_from_mask(mask: Mask3 | np.ndarray) -> np.ndarray:
    """Skeleton polyline of an annotation mask: per-cluster skeleton points,
    pooled and ordered along the principal axis of the whole point set."""
    labels = connected_components(mask)
    sparse = extract_sparse(labels)
    pts = sparse.points
    if pts.shape[0] == 1:
        return pts
    axis = _principal_axis(pts)
    order = np.argsort(pts @ axis, kind="stable")
    ordered = pts[order]
    if tuple(ordered[0]) > tuple(ordered[-1]):
        ordered = ordered[::-1]
    return np.ascontiguousarray(ordered)


def save_model(model: CatheterModel, path: str, inlier_thresh_vox: float = 3.0, seed: int = 0) -> None:
    payload = {
        "control_points": model.control_points.tolist(),
        "polyline": model.polyline.tolist(),
        "score": model.score,
        "inlier_thresh_vox": inlier_thresh_vox,
        "seed": seed,
    }
    with open(path, "w") as f:
        json.dump(payload, f)


def load_model(path: str) -> CatheterModel:
    with open(path) as f:
        payload = json.load(f)
    return CatheterModel(
        control_points=np.asarray(payload["control_points"]),
        polyline=np.asarray(payload["polyline"]),
        score=int(payload["score"]),
    )
