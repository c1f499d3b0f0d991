"""Training-patch sampling, on-the-fly augmentation, and the training loop."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .network import Network, forward_df_logits, forward_single_axis_logits
from .optim import AdamState, adam_step
from .slicing import AXES
from .volume import Mask3, Volume3, crop_replicated, normalize


@dataclass(frozen=True)
class TrainSample:
    patch: np.ndarray  # [M, M, M] float
    label: np.ndarray  # [M, M, M] {0,1}
    provenance: str  # "catheter_centered" | "negative"


@dataclass
class TrainConfig:
    lr: float = 1e-5
    epochs: int = 1
    batch: int = 1
    seed: int = 0
    d: int = 3
    patch_size: int = 16
    mode: str = "df"  # "df" or "single_axis"
    max_steps: int | None = None
    positive_cap: int = 2000
    augment: bool = True


def sample_training_patches(
    vol: Volume3, mask: Mask3, m: int, seed: int = 0, positive_cap: int = 2000
) -> list[TrainSample]:
    """One patch per annotated catheter voxel (capped), centered on it, plus an
    equal count of patches centered on randomly sampled non-catheter voxels.
    Patches overhanging the volume are edge-replicated; labels are cropped
    with the same geometry."""
    pos = np.argwhere(mask.data == 1)
    if pos.shape[0] == 0:
        raise ValueError("mask has no positive voxels")
    rng = np.random.default_rng(seed)
    if pos.shape[0] > positive_cap:
        pos = pos[rng.choice(pos.shape[0], size=positive_cap, replace=False)]
    neg = np.argwhere(mask.data == 0)
    neg = neg[rng.choice(neg.shape[0], size=pos.shape[0], replace=pos.shape[0] > neg.shape[0])]
    samples = []
    half = m // 2
    for centers, tag in ((pos, "catheter_centered"), (neg, "negative")):
        for c in centers:
            origin = tuple(int(v) - half for v in c)
            patch = crop_replicated(vol.data, origin, m)
            label = crop_replicated(mask.data, origin, m)
            samples.append(TrainSample(patch=patch, label=label, provenance=tag))
    return samples


@dataclass(frozen=True)
class AugmentParams:
    """One draw of the augmentation composition: a 90-degree-multiple rotation
    about one axis, optional axis mirrorings, and an affine intensity map."""

    rot_axis: int = 0
    rot_k: int = 0
    flips: tuple[bool, bool, bool] = (False, False, False)
    scale: float = 1.0
    shift: float = 0.0

    @staticmethod
    def identity() -> "AugmentParams":
        return AugmentParams()

    @staticmethod
    def draw(rng: np.random.Generator) -> "AugmentParams":
        return AugmentParams(
            rot_axis=int(rng.integers(0, 3)),
            rot_k=int(rng.integers(0, 4)),
            flips=tuple(bool(b) for b in rng.integers(0, 2, size=3)),
            scale=float(rng.uniform(0.8, 1.2)),
            shift=float(rng.uniform(-0.1, 0.1)),
        )


def _apply_geometric(arr: np.ndarray, params: AugmentParams) -> np.ndarray:
    plane = tuple(ax for ax in range(3) if ax != params.rot_axis)
    out = np.rot90(arr, k=params.rot_k, axes=plane)
    for ax, f in enumerate(params.flips):
        if f:
            out = np.flip(out, axis=ax)
    return np.ascontiguousarray(out)


def apply_augment(sample: TrainSample, params: AugmentParams) -> TrainSample:
    """Apply a fixed augmentation draw: label gets the identical geometric
    transform and no intensity transform."""
    patch = _apply_geometric(sample.patch, params) * params.scale + params.shift
    label = _apply_geometric(sample.label, params)
    return TrainSample(patch=patch.astype(sample.patch.dtype, copy=False), label=label,
                       provenance=sample.provenance)


def augment(sample: TrainSample, seed) -> TrainSample:
    """Random on-the-fly augmentation (rotation, mirroring, intensity scale
    and shift); seeded and deterministic."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return apply_augment(sample, AugmentParams.draw(rng))


def build_sample_pool(
    dataset: list[tuple[Volume3, Mask3]], cfg: TrainConfig
) -> list[TrainSample]:
    ss = np.random.SeedSequence([cfg.seed, 0xA5])
    pool: list[TrainSample] = []
    for child, (vol, mask) in zip(ss.spawn(len(dataset)), dataset):
        seed = int(child.generate_state(1)[0])
        pool.extend(
            sample_training_patches(
                normalize(vol), mask, cfg.patch_size, seed=seed, positive_cap=cfg.positive_cap
            )
        )
    return pool


def train(
    net: Network, dataset: list[tuple[Volume3, Mask3]], cfg: TrainConfig
) -> tuple[Network, list[float]]:
    """Adam on per-voxel cross-entropy of the chosen forward mode.

    Deterministic given cfg.seed (single-threaded).  Aborts on non-finite
    loss.  Returns the trained network and the per-step loss trace.
    """
    if not dataset:
        raise ValueError("empty dataset")
    if cfg.mode not in ("df", "single_axis"):
        raise ValueError(f"unknown training mode {cfg.mode!r}")
    pool = build_sample_pool(dataset, cfg)
    order_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xB6]))
    aug_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xC7]))
    drop_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xD8]))
    axis_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xE9]))
    params = net.parameters()
    state = AdamState(lr=cfg.lr)
    trace: list[float] = []
    steps_per_epoch = math.ceil(len(pool) / cfg.batch)
    total_steps = cfg.epochs * steps_per_epoch
    if cfg.max_steps is not None:
        total_steps = min(total_steps, cfg.max_steps)
    step = 0
    while step < total_steps:
        order = order_rng.permutation(len(pool))
        for b in range(steps_per_epoch):
            if step >= total_steps:
                break
            idx = order[b * cfg.batch : (b + 1) * cfg.batch]
            if idx.size == 0:
                break
            ad.zero_grad(params)
            losses = []
            for i in idx:
                sample = pool[int(i)]
                if cfg.augment:
                    sample = augment(sample, aug_rng)
                if cfg.mode == "df":
                    logits = forward_df_logits(net, sample.patch, cfg.d, training=True, rng=drop_rng)
                else:
                    axis = AXES[int(axis_rng.integers(0, 3))]
                    logits = forward_single_axis_logits(
                        net, sample.patch, cfg.d, axis, training=True, rng=drop_rng
                    )
                loss, _ = ad.softmax_ce(logits, sample.label)
                scaled = ad.mul(loss, np.asarray(1.0 / idx.size, dtype=loss.data.dtype))
                ad.backward(scaled)
                losses.append(float(loss.data))
            mean_loss = float(np.mean(losses))
            if not np.isfinite(mean_loss):
                raise RuntimeError(f"non-finite loss at step {step}: {mean_loss}")
            trace.append(mean_loss)
            grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]
            adam_step([p.data for p in params], grads, state)
            step += 1
    return net, trace
