"""Weight manifest I/O: a JSON index of named shapes plus a little-endian
float32 blob holding the values in the same order.

The manifest may carry an arbitrary ``config`` JSON block (used to embed the
network configuration alongside its parameters).
"""

from __future__ import annotations

import json

import numpy as np


def _paths(path: str) -> tuple[str, str]:
    base = path[:-5] if path.endswith(".json") else path
    return base + ".json", base + ".bin"


def save_weights(named_arrays: list[tuple[str, np.ndarray]], path: str, config: dict | None = None) -> None:
    """Write named arrays as manifest + float32 blob, preserving order."""
    names = [n for n, _ in named_arrays]
    if len(set(names)) != len(names):
        raise ValueError("duplicate names in weight manifest")
    manifest_path, blob_path = _paths(path)
    manifest = {"entries": [{"name": n, "shape": list(a.shape)} for n, a in named_arrays]}
    if config is not None:
        manifest["config"] = config
    with open(manifest_path, "w") as f:
        json.dump(manifest, f, indent=1)
    with open(blob_path, "wb") as f:
        for _, a in named_arrays:
            np.asarray(a, dtype="<f4").ravel().tofile(f)


def load_weights(path: str) -> tuple[dict[str, np.ndarray], dict | None]:
    """Read a manifest back as (name -> float32 array, embedded config)."""
    manifest_path, blob_path = _paths(path)
    with open(manifest_path) as f:
        manifest = json.load(f)
    blob = np.fromfile(blob_path, dtype="<f4")
    arrays: dict[str, np.ndarray] = {}
    offset = 0
    for entry in manifest["entries"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape)) if shape else 1
        if offset + n > blob.size:
            raise ValueError(f"weight blob too short for entry {entry['name']!r}")
        arrays[entry["name"]] = blob[offset : offset + n].reshape(shape)
        offset += n
    if offset != blob.size:
        raise ValueError(f"weight blob has {blob.size - offset} trailing values")
    return arrays, manifest.get("config")
