"""Volume-level orchestration: patch-based prediction with tiling/stitching,
fold-wise training on a dataset manifest, per-volume evaluation, and the
voxel-gap sweep."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .localize import (
    CatheterModel,
    connected_components,
    extract_sparse,
    skeleton_from_mask,
    spd_ransac,
)
from .metrics import MetricsReport, ahd, endpoint_error, overlap_metrics, skeleton_error
from .network import Network, forward_df, forward_single_axis
from .slicing import AXES, stitch, tile
from .training import TrainConfig, train
from .volume import Mask3, Volume3, extract_patch, load_mask, load_volume, normalize


def predict_volume(
    net: Network,
    vol: Volume3,
    mode: str = "df",
    d: int | None = None,
    n: int = 32,
    m: int = 48,
    axis: str | None = None,
    seed: int | None = None,
    threshold: float = 0.5,
) -> tuple[Volume3, Mask3]:
    """Normalize, tile into N/M patches, run the chosen forward mode, stitch,
    and threshold.  Returns (probability volume, binary mask)."""
    if mode not in ("df", "single_axis"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "single_axis" and axis is None:
        if seed is None:
            raise ValueError("single_axis mode needs an explicit axis or a seed")
        axis = AXES[np.random.default_rng(seed).integers(0, 3)]
    norm = normalize(vol)
    regions = tile(norm.dims, n, m)
    predictions = []
    for region in regions:
        patch = extract_patch(norm, region)
        if mode == "df":
            prob = forward_df(net, patch, d)
        else:
            prob = forward_single_axis(net, patch, d, axis=axis)
        predictions.append((region, prob))
    prob_vol = stitch(predictions, norm.dims, spacing_mm=vol.spacing_mm)
    mask = Mask3(data=(prob_vol.data >= threshold).astype(np.uint8))
    return prob_vol, mask


def localize_mask(
    mask: Mask3, inlier_thresh_vox: float = 3.0, iters: int = 500, seed: int = 0
) -> CatheterModel:
    """Segmentation mask -> fitted catheter model (components -> skeleton ->
    SPD-RANSAC).  Raises ValueError("no catheter found") on empty input."""
    if mask.data.sum() == 0:
        raise ValueError("no catheter found: segmentation is empty")
    labels = connected_components(mask)
    sparse = extract_sparse(labels)
    if sparse.points.shape[0] < 3:
        raise ValueError("no catheter found: fewer than 3 skeleton points")
    return spd_ransac(sparse, mask, inlier_thresh_vox=inlier_thresh_vox, iters=iters, seed=seed)


def evaluate_volume(
    pred_mask: Mask3,
    truth_mask: Mask3,
    spacing_mm,
    model: CatheterModel | None = None,
    truth_skeleton: np.ndarray | None = None,
) -> MetricsReport:
    recall, precision, dice = overlap_metrics(pred_mask, truth_mask)
    report = MetricsReport(recall=recall, precision=precision, dice=dice)
    if pred_mask.data.sum() > 0 and truth_mask.data.sum() > 0:
        report.ahd_voxels = ahd(pred_mask, truth_mask)
    if model is not None:
        if truth_skeleton is None:
            truth_skeleton = skeleton_from_mask(truth_mask)
        report.se_mm = skeleton_error(model.polyline, truth_skeleton, spacing_mm)
        report.ee_mm = endpoint_error(model.polyline, truth_skeleton, spacing_mm)
    return report


@dataclass
class ManifestEntry:
    name: str
    volume: Volume3
    mask: Mask3
    skeleton: np.ndarray
    spacing_mm: tuple[float, float, float]


def load_manifest(path: str) -> tuple[list[ManifestEntry], list[list[int]]]:
    base = os.path.dirname(path)
    with open(path) as f:
        manifest = json.load(f)
    entries = []
    for m in manifest["members"]:
        vol = load_volume(os.path.join(base, m["volume"]))
        mask = load_mask(os.path.join(base, m["mask"]))
        with open(os.path.join(base, m["skeleton"])) as f:
            skeleton = np.asarray(json.load(f))
        entries.append(
            ManifestEntry(
                name=m["name"],
                volume=vol,
                mask=mask,
                skeleton=skeleton,
                spacing_mm=tuple(m["spacing_mm"]),
            )
        )
    return entries, manifest["folds"]


def fold_split(entries: list, folds: list[list[int]], fold: int):
    """fold f is held out; the rest trains."""
    if not 0 <= fold < len(folds):
        raise ValueError(f"fold {fold} out of range (have {len(folds)} folds)")
    test_ids = set(folds[fold])
    train_set = [e for i, e in enumerate(entries) if i not in test_ids]
    test_set = [e for i, e in enumerate(entries) if i in test_ids]
    return train_set, test_set


def train_on_entries(net: Network, entries: list[ManifestEntry], cfg: TrainConfig):
    dataset = [(e.volume, e.mask) for e in entries]
    return train(net, dataset, cfg)


def evaluate_fold(
    net: Network,
    test_entries: list[ManifestEntry],
    mode: str = "df",
    d: int | None = None,
    n: int = 32,
    m: int = 48,
    localize: bool = False,
    seed: int = 0,
) -> list[MetricsReport]:
    reports = []
    for e in test_entries:
        _, pred_mask = predict_volume(net, e.volume, mode=mode, d=d, n=n, m=m, seed=seed)
        model = None
        if localize:
            try:
                model = localize_mask(pred_mask, seed=seed)
            except ValueError:
                model = None
        reports.append(
            evaluate_volume(pred_mask, e.mask, e.spacing_mm, model=model, truth_skeleton=e.skeleton)
        )
    return reports
