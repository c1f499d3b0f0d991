"""3D volume containers, raw+JSON file I/O, normalization and patch extraction.

Volumes live on a regular grid with dims (nx, ny, nz) and physical voxel
spacing in millimeters.  Arrays are indexed ``data[x, y, z]``; on disk the
voxels are stored x-fastest (index = x + nx*(y + ny*z)), little-endian.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

_DTYPES = {"f32le": np.dtype("<f4"), "u8": np.dtype("u1")}


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Volume3:
    """Scalar 3D voxel grid with physical spacing.

    data: ndarray of shape (nx, ny, nz), real scalars, immutable.
    spacing_mm: millimeters per voxel along each axis.
    """

    data: np.ndarray
    spacing_mm: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ValueError(f"volume data must be 3D, got shape {self.data.shape}")
        if any(s <= 0 for s in self.data.shape):
            raise ValueError(f"non-positive dims {self.data.shape}")
        if len(self.spacing_mm) != 3 or any(s <= 0 for s in self.spacing_mm):
            raise ValueError(f"spacing must be 3 positive reals, got {self.spacing_mm}")
        object.__setattr__(self, "spacing_mm", tuple(float(s) for s in self.spacing_mm))
        object.__setattr__(self, "data", _freeze(np.ascontiguousarray(self.data)))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape


@dataclass(frozen=True)
class Mask3:
    """Binary voxel labeling (1 = catheter), same grid conventions as Volume3."""

    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ValueError(f"mask data must be 3D, got shape {self.data.shape}")
        arr = np.ascontiguousarray(self.data, dtype=np.uint8)
        if arr.size and arr.max() > 1:
            raise ValueError("mask labels must be 0 or 1")
        object.__setattr__(self, "data", _freeze(arr))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape


@dataclass(frozen=True)
class PatchRegion:
    """A core N^3 region centered inside an outer M^3 region.

    The outer region may extend beyond the volume; the core must not.
    M - N must be even so the core sits exactly centered.
    """

    core_origin: tuple[int, int, int]
    core_size: int
    outer_size: int

    def __post_init__(self):
        if self.core_size > self.outer_size:
            raise ValueError(f"core size {self.core_size} exceeds outer size {self.outer_size}")
        if (self.outer_size - self.core_size) % 2 != 0:
            raise ValueError("outer_size - core_size must be even for a centered core")
        object.__setattr__(self, "core_origin", tuple(int(c) for c in self.core_origin))

    @property
    def margin(self) -> int:
        return (self.outer_size - self.core_size) // 2

    @property
    def outer_origin(self) -> tuple[int, int, int]:
        m = self.margin
        return tuple(c - m for c in self.core_origin)


def _paths(path: str) -> tuple[str, str]:
    base = path[:-5] if path.endswith(".json") else path
    return base + ".json", base + ".raw"


def load_volume(path: str) -> Volume3:
    """Load a volume from a ``<name>.json`` header + ``<name>.raw`` data pair.

    8-bit data is promoted to float32 without rescaling.
    """
    header_path, raw_path = _paths(path)
    with open(header_path) as f:
        header = json.load(f)
    dims = tuple(int(d) for d in header["dims"])
    spacing = tuple(float(s) for s in header["spacing_mm"])
    dtype_name = header["dtype"]
    if dtype_name not in _DTYPES:
        raise ValueError(f"unknown dtype {dtype_name!r}")
    if len(dims) != 3 or any(d <= 0 for d in dims):
        raise ValueError(f"non-positive dims {dims}")
    dtype = _DTYPES[dtype_name]
    raw = np.fromfile(raw_path, dtype=dtype)
    expected = dims[0] * dims[1] * dims[2]
    if raw.size != expected:
        raise ValueError(
            f"data size mismatch: header declares {expected} voxels, "
            f"raw file holds {raw.size}"
        )
    data = raw.reshape(dims, order="F")
    if dtype_name == "u8":
        data = data.astype(np.float32)
    return Volume3(data=data, spacing_mm=spacing)


def load_mask(path: str) -> Mask3:
    """Load a binary mask stored with dtype u8."""
    header_path, raw_path = _paths(path)
    with open(header_path) as f:
        header = json.load(f)
    dims = tuple(int(d) for d in header["dims"])
    raw = np.fromfile(raw_path, dtype=np.uint8)
    expected = dims[0] * dims[1] * dims[2]
    if raw.size != expected:
        raise ValueError(
            f"data size mismatch: header declares {expected} voxels, "
            f"raw file holds {raw.size}"
        )
    return Mask3(data=raw.reshape(dims, order="F"))


def save_volume(vol: Volume3, path: str, dtype: str = "f32le") -> None:
    """Write the header/raw pair; round trip reproduces the volume bit-exactly."""
    if dtype not in _DTYPES:
        raise ValueError(f"unknown dtype {dtype!r}")
    header_path, raw_path = _paths(path)
    header = {
        "dims": list(vol.dims),
        "spacing_mm": list(vol.spacing_mm),
        "dtype": dtype,
    }
    with open(header_path, "w") as f:
        json.dump(header, f)
    vol.data.astype(_DTYPES[dtype]).ravel(order="F").tofile(raw_path)


def save_mask(mask: Mask3, path: str, spacing_mm=(1.0, 1.0, 1.0)) -> None:
    header_path, raw_path = _paths(path)
    header = {"dims": list(mask.dims), "spacing_mm": list(spacing_mm), "dtype": "u8"}
    with open(header_path, "w") as f:
        json.dump(header, f)
    mask.data.ravel(order="F").tofile(raw_path)


def normalize(vol: Volume3) -> Volume3:
    """Min-max rescale intensities to [0, 1]; constant volumes map to zeros."""
    data = vol.data.astype(np.float32, copy=False)
    lo = float(data.min())
    hi = float(data.max())
    if hi == lo:
        out = np.zeros_like(data, dtype=np.float32)
    else:
        out = (data - lo) / (hi - lo)
    return Volume3(data=out, spacing_mm=vol.spacing_mm)


def crop_replicated(data: np.ndarray, origin, size: int) -> np.ndarray:
    """Crop a cubic region, replicating boundary planes where it overhangs."""
    dims = data.shape
    lo_pad, hi_pad, slices = [], [], []
    for ax in range(3):
        start, stop = origin[ax], origin[ax] + size
        lo_pad.append(max(0, -start))
        hi_pad.append(max(0, stop - dims[ax]))
        slices.append(slice(max(0, start), min(dims[ax], stop)))
    out = data[tuple(slices)]
    if any(lo_pad) or any(hi_pad):
        out = np.pad(out, list(zip(lo_pad, hi_pad)), mode="edge")
    return out


def extract_patch(vol: Volume3, region: PatchRegion) -> Volume3:
    """Return the M^3 outer region of `region`, edge-replicated where it
    overhangs the volume. The core region must lie fully inside."""
    dims = vol.dims
    for ax in range(3):
        start = region.core_origin[ax]
        if start < 0 or start + region.core_size > dims[ax]:
            raise ValueError(
                f"core region out of bounds on axis {ax}: "
                f"[{start}, {start + region.core_size}) vs dim {dims[ax]}"
            )
    out = crop_replicated(vol.data, region.outer_origin, region.outer_size)
    return Volume3(data=out, spacing_mm=vol.spacing_mm)
