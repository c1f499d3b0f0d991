"""Tri-axial slicing of cubic patches into 3-channel plane images, the inverse
feature stacking, feature fusion, and full-volume tiling/stitching.

In-plane orientation per axis (row, col), chosen cyclically so that stacking is
a strict inverse of slicing and cyclic axis permutations commute with
slice/stack round trips:

    axis X: image[r, c] = patch[k, r, c]   (row=y, col=z)
    axis Y: image[r, c] = patch[c, k, r]   (row=z, col=x)
    axis Z: image[r, c] = patch[r, c, k]   (row=x, col=y)

A slice stack for gap d holds, per plane k, the clamped planes k-d, k, k+d as
channels 0/1/2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .volume import PatchRegion, Volume3

AXES = ("X", "Y", "Z")

# Permutation taking a per-plane map array [M, F, rows, cols] to [F, x, y, z].
STACK_PERM = {"X": (1, 0, 2, 3), "Y": (1, 3, 0, 2), "Z": (1, 2, 3, 0)}


@dataclass(frozen=True)
class TriSliceStack:
    """All M 3-channel plane images of one patch along one axis."""

    axis: str
    gap_d: int
    images: np.ndarray  # [M, 3, M, M]

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}, got {self.axis!r}")


def _check_cubic(data: np.ndarray) -> int:
    if data.ndim != 3 or len(set(data.shape)) != 1:
        raise ValueError(f"patch must be cubic, got shape {data.shape}")
    return data.shape[0]


def slice_axis(patch: Volume3 | np.ndarray, axis: str, d: int) -> TriSliceStack:
    """Decompose a cubic M^3 patch into M 3-channel images along `axis`.

    Channels of image k are planes k-d, k, k+d, indices clamped to [0, M-1].
    """
    data = patch.data if isinstance(patch, Volume3) else patch
    m = _check_cubic(data)
    if axis not in AXES:
        raise ValueError(f"axis must be one of {AXES}, got {axis!r}")
    if d < 0 or d >= m:
        raise ValueError(f"gap d={d} must satisfy 0 <= d < M={m}")
    idx = np.clip(np.arange(m)[:, None] + np.array([-d, 0, d])[None, :], 0, m - 1)
    if axis == "X":
        images = data[idx]  # [M, 3, y, z]
    elif axis == "Y":
        images = data[:, idx, :].transpose(1, 2, 3, 0)  # [M, 3, z, x]
    else:
        images = data[:, :, idx].transpose(2, 3, 0, 1)  # [M, 3, x, y]
    return TriSliceStack(axis=axis, gap_d=d, images=np.ascontiguousarray(images))


def stack_features(per_plane: np.ndarray, axis: str) -> np.ndarray:
    """Reassemble M per-plane F-channel maps into an [F, M, M, M] feature
    volume, inverting the geometric indexing of slice_axis.

    per_plane: array [M, F, M, M] ordered by plane index.
    """
    per_plane = np.asarray(per_plane)
    if axis not in AXES:
        raise ValueError(f"axis must be one of {AXES}, got {axis!r}")
    if per_plane.ndim != 4:
        raise ValueError(f"expected [M, F, M, M] maps, got shape {per_plane.shape}")
    m, _, rows, cols = per_plane.shape
    if rows != m or cols != m:
        raise ValueError(f"plane count {m} does not match spatial dims ({rows}, {cols})")
    return np.ascontiguousarray(per_plane.transpose(STACK_PERM[axis]))


def fuse(fx: np.ndarray, fy: np.ndarray, fz: np.ndarray) -> np.ndarray:
    """Elementwise sum of the three per-axis feature volumes.

    The addends are value-sorted per voxel before summing so the result is
    bit-identical under any permutation of the arguments (plain left-to-right
    float addition is not associative).
    """
    if fx.shape != fy.shape or fy.shape != fz.shape:
        raise ValueError(f"shape mismatch: {fx.shape}, {fy.shape}, {fz.shape}")
    s = np.sort(np.stack([fx, fy, fz]), axis=0)
    return (s[0] + s[1]) + s[2]


def tile(dims: tuple[int, int, int], n: int, m: int) -> list[PatchRegion]:
    """Partition a volume into adjacent N^3 core regions, each centered in an
    M^3 outer region.  When N does not divide a dimension the final patch
    along that axis is tail-aligned (overlaps resolved at stitch time by
    last-writer precedence)."""
    if n > m:
        raise ValueError(f"N={n} exceeds M={m}")
    if any(n > d for d in dims):
        raise ValueError(f"N={n} exceeds volume dims {dims}")
    starts = []
    for dim in dims:
        s = list(range(0, dim - n + 1, n))
        if s[-1] + n < dim:
            s.append(dim - n)  # tail-aligned final patch
        starts.append(s)
    regions = []
    for x in starts[0]:
        for y in starts[1]:
            for z in starts[2]:
                regions.append(PatchRegion(core_origin=(x, y, z), core_size=n, outer_size=m))
    return regions


def stitch(
    predictions: list[tuple[PatchRegion, np.ndarray | Volume3]],
    dims: tuple[int, int, int],
    spacing_mm=(1.0, 1.0, 1.0),
) -> Volume3:
    """Write the central N^3 of each M^3 patch prediction into its core region.

    Regions must cover the volume; overlapping cores follow tile order
    (last writer wins).
    """
    out = np.zeros(dims, dtype=np.float64)
    written = np.zeros(dims, dtype=bool)
    for region, pred in predictions:
        data = pred.data if isinstance(pred, Volume3) else np.asarray(pred)
        if data.shape != (region.outer_size,) * 3:
            raise ValueError(
                f"prediction shape {data.shape} does not match outer size {region.outer_size}"
            )
        g = region.margin
        core = data[g : g + region.core_size, g : g + region.core_size, g : g + region.core_size]
        sl = tuple(
            slice(region.core_origin[ax], region.core_origin[ax] + region.core_size)
            for ax in range(3)
        )
        out[sl] = core
        written[sl] = True
    if not written.all():
        raise ValueError(f"{int((~written).sum())} voxels left uncovered by predictions")
    return Volume3(data=out.astype(data.dtype, copy=False), spacing_mm=spacing_mm)
