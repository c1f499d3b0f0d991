"""Encoder-decoder FCN with summation skip connections, the direction-fused
forward pass over three axes, and the single-axis baseline.

The same 2D network (shared weights) processes the 3-channel plane images of
all three axes; per-plane feature maps are stacked back into feature volumes,
summed, and classified by a 3D convolution + softmax.  The single-axis
baseline stacks per-plane probability maps along one axis with no fusion.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .slicing import AXES, STACK_PERM, fuse, slice_axis
from .volume import Volume3
from .weights import load_weights, save_weights


@dataclass(frozen=True)
class NetConfig:
    """Architecture profile.

    stage_widths: encoder conv widths per resolution stage (a maxpool follows
    each stage).  bottleneck_widths: the three convs after the last pool, the
    last of which produces the 2-class score map.  deconv_specs: (kernel,
    stride) per decoder stage; strides must multiply back to 2**num_pools.
    feature_channels: width of the decoder stages and of the fused feature
    volumes.  gap_d: default voxel gap for tri-slice images.
    """

    profile: str
    stage_widths: tuple[tuple[int, ...], ...]
    bottleneck_widths: tuple[int, int, int]
    deconv_specs: tuple[tuple[int, int], ...]
    feature_channels: int
    p_drop: float
    gap_d: int = 3
    fusion_kernel: int = 3

    def __post_init__(self):
        if self.bottleneck_widths[-1] != 2:
            raise ValueError("last bottleneck conv must produce 2 channels")
        if not 0 <= self.gap_d <= 5:
            raise ValueError(f"gap_d must be in [0, 5], got {self.gap_d}")
        if not 0.0 <= self.p_drop < 1.0:
            raise ValueError(f"p_drop must be in [0, 1), got {self.p_drop}")
        total = 1
        for _, s in self.deconv_specs:
            total *= s
        if total != 2**self.num_pools:
            raise ValueError(
                f"deconv strides recover x{total} but {self.num_pools} pools downsample "
                f"x{2**self.num_pools}"
            )

    @property
    def num_pools(self) -> int:
        return len(self.stage_widths)

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @staticmethod
    def from_json(d: dict) -> "NetConfig":
        return NetConfig(
            profile=d["profile"],
            stage_widths=tuple(tuple(s) for s in d["stage_widths"]),
            bottleneck_widths=tuple(d["bottleneck_widths"]),
            deconv_specs=tuple(tuple(s) for s in d["deconv_specs"]),
            feature_channels=int(d["feature_channels"]),
            p_drop=float(d["p_drop"]),
            gap_d=int(d["gap_d"]),
            fusion_kernel=int(d["fusion_kernel"]),
        )


def tiny_config(**overrides) -> NetConfig:
    """Reduced profile for desk-scale training and tests."""
    base = dict(
        profile="tiny",
        stage_widths=((8, 8), (16, 16)),
        bottleneck_widths=(32, 32, 2),
        deconv_specs=((2, 2), (2, 2)),
        feature_channels=16,
        p_drop=0.15,
        gap_d=3,
    )
    base.update(overrides)
    return NetConfig(**base)


def paper_config(**overrides) -> NetConfig:
    """VGG16-layout encoder: 13 convs, 5 maxpools, 1024/1024/2 bottleneck,
    deconv masks 2,2,2,4."""
    base = dict(
        profile="paper_faithful",
        stage_widths=(
            (64, 64),
            (128, 128),
            (256, 256, 256),
            (512, 512, 512),
            (512, 512, 512),
        ),
        bottleneck_widths=(1024, 1024, 2),
        deconv_specs=((2, 2), (2, 2), (2, 2), (4, 4)),
        feature_channels=64,
        p_drop=0.85,
        gap_d=3,
    )
    base.update(overrides)
    return NetConfig(**base)


def _decoder_plan(config: NetConfig) -> list[dict]:
    """Channel/skip wiring per decoder stage.

    After each deconv the feature map is summed with the last encoder map of
    equal resolution (through a 1x1 projection when channel counts differ),
    then refined by a 3x3 conv + ReLU.
    """
    f = config.feature_channels
    plan = []
    factor = 2**config.num_pools
    cin = 2  # bottleneck score map
    for k, s in config.deconv_specs:
        factor //= s
        stage_idx = int(np.log2(factor)) if factor > 1 else 0
        if 2**stage_idx != max(factor, 1):
            raise ValueError(f"no encoder stage at downsample factor {factor}")
        skip_ch = config.stage_widths[stage_idx][-1]
        plan.append(
            {"kernel": k, "stride": s, "cin": cin, "skip_stage": stage_idx, "skip_ch": skip_ch}
        )
        cin = f
    return plan


class Network:
    """Parameter store plus the forward passes.  Parameters are Tensors with
    requires_grad=True, keyed by name in manifest order."""

    def __init__(self, config: NetConfig, params: dict[str, Tensor]):
        self.config = config
        self.params = params

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return list(self.params.items())

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def save(self, path: str) -> None:
        save_weights(
            [(n, p.data) for n, p in self.params.items()], path, config=self.config.to_json()
        )


def _param_shapes(config: NetConfig) -> list[tuple[str, tuple[int, ...]]]:
    shapes: list[tuple[str, tuple[int, ...]]] = []
    cin = 3
    for s, widths in enumerate(config.stage_widths):
        for i, w in enumerate(widths):
            shapes.append((f"enc{s}.conv{i}.w", (w, cin, 3, 3)))
            shapes.append((f"enc{s}.conv{i}.b", (w,)))
            cin = w
    for i, w in enumerate(config.bottleneck_widths):
        shapes.append((f"bott.conv{i}.w", (w, cin, 3, 3)))
        shapes.append((f"bott.conv{i}.b", (w,)))
        cin = w
    f = config.feature_channels
    for t, stage in enumerate(_decoder_plan(config)):
        k = stage["kernel"]
        shapes.append((f"dec{t}.deconv.w", (stage["cin"], f, k, k)))
        if stage["skip_ch"] != f:
            shapes.append((f"dec{t}.proj.w", (f, stage["skip_ch"], 1, 1)))
            shapes.append((f"dec{t}.proj.b", (f,)))
        shapes.append((f"dec{t}.conv.w", (f, f, 3, 3)))
        shapes.append((f"dec{t}.conv.b", (f,)))
    shapes.append(("head2d.w", (2, f, 1, 1)))
    shapes.append(("head2d.b", (2,)))
    fk = config.fusion_kernel
    shapes.append(("fuse3d.w", (2, f, fk, fk, fk)))
    shapes.append(("fuse3d.b", (2,)))
    return shapes


def _glorot(rng: np.random.Generator, shape, dtype) -> np.ndarray:
    if len(shape) == 1:
        return np.zeros(shape, dtype=dtype)
    receptive = int(np.prod(shape[2:])) if len(shape) > 2 else 1
    fan_in = shape[1] * receptive
    fan_out = shape[0] * receptive
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def build_network(
    config: NetConfig,
    seed: int = 0,
    encoder_import: dict[str, np.ndarray] | None = None,
    dtype=np.float32,
) -> Network:
    """Seeded deterministic initialization (uniform +-sqrt(6/(fan_in+fan_out))).

    encoder_import, when given, replaces encoder parameters (names starting
    with "enc") by the provided arrays; everything else stays random.
    """
    rng = np.random.default_rng(seed)
    params: dict[str, Tensor] = {}
    for name, shape in _param_shapes(config):
        arr = _glorot(rng, shape, dtype)
        if encoder_import is not None and name.startswith("enc"):
            if name not in encoder_import:
                raise ValueError(f"import manifest missing encoder tensor {name!r}")
            imp = np.asarray(encoder_import[name])
            if imp.shape != shape:
                raise ValueError(
                    f"import shape mismatch for {name!r}: expected {shape}, got {imp.shape}"
                )
            arr = imp.astype(dtype)
        params[name] = Tensor(arr, requires_grad=True)
    return Network(config, params)


def load_network(path: str, dtype=np.float32) -> Network:
    arrays, config_json = load_weights(path)
    if config_json is None:
        raise ValueError("weight manifest carries no network config block")
    config = NetConfig.from_json(config_json)
    net = build_network(config, seed=0, dtype=dtype)
    for name, p in net.params.items():
        if name not in arrays:
            raise ValueError(f"manifest missing tensor {name!r}")
        if arrays[name].shape != p.data.shape:
            raise ValueError(
                f"shape mismatch for {name!r}: expected {p.data.shape}, got {arrays[name].shape}"
            )
        p.data = arrays[name].astype(dtype)
    return net


_IDENTITY_RNG = np.random.default_rng(0)


def _forward_2d_batch(net: Network, x: Tensor, training: bool, rng=None):
    """Run the 2D FCN on a batch [B, 3, H, W]; returns (features [B, F, H, W],
    logits [B, 2, H, W]) as graph Tensors."""
    cfg = net.config
    p = net.params
    h, w = x.data.shape[-2:]
    div = 2**cfg.num_pools
    if h % div or w % div:
        raise ValueError(f"spatial dims ({h}, {w}) must be divisible by {div}")
    if training and rng is None:
        rng = _IDENTITY_RNG
    skips = []
    cur = x
    for s, widths in enumerate(cfg.stage_widths):
        for i in range(len(widths)):
            cur = ad.relu(ad.conv2d(cur, p[f"enc{s}.conv{i}.w"], p[f"enc{s}.conv{i}.b"], same_pad=True))
        skips.append(cur)
        cur, _ = ad.maxpool2d(cur)
    for i in range(len(cfg.bottleneck_widths)):
        cur = ad.conv2d(cur, p[f"bott.conv{i}.w"], p[f"bott.conv{i}.b"], same_pad=True)
        if i < len(cfg.bottleneck_widths) - 1:
            cur = ad.relu(cur)
            cur = ad.dropout(cur, cfg.p_drop, training, rng)
    for t, stage in enumerate(_decoder_plan(cfg)):
        cur = ad.deconv2d(cur, p[f"dec{t}.deconv.w"], stride=stage["stride"])
        skip = skips[stage["skip_stage"]]
        if f"dec{t}.proj.w" in p:
            skip = ad.conv2d(skip, p[f"dec{t}.proj.w"], p[f"dec{t}.proj.b"], same_pad=True)
        cur = ad.add(cur, skip)
        cur = ad.relu(ad.conv2d(cur, p[f"dec{t}.conv.w"], p[f"dec{t}.conv.b"], same_pad=True))
    features = cur
    logits = ad.conv2d(features, p["head2d.w"], p["head2d.b"], same_pad=True)
    return features, logits


def forward_2d(net: Network, image: np.ndarray, training: bool = False, rng=None):
    """Single-image forward: returns (features [F, M, M], probs [2, M, M])."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[0] != 3:
        raise ValueError(f"expected a [3, M, M] image, got shape {image.shape}")
    x = Tensor(image[None].astype(_param_dtype(net)))
    features, logits = _forward_2d_batch(net, x, training, rng)
    return features.data[0], ad.softmax(logits.data[0], axis=0)


def _param_dtype(net: Network):
    return next(iter(net.params.values())).data.dtype


def _patch_data(patch) -> np.ndarray:
    return patch.data if isinstance(patch, Volume3) else np.asarray(patch)


def forward_df_logits(net: Network, patch, d: int, training: bool = False, rng=None) -> Tensor:
    """Fused-direction logits [2, M, M, M] as a graph Tensor (training path)."""
    data = _patch_data(patch).astype(_param_dtype(net))
    fused = None
    for axis in AXES:
        stack = slice_axis(data, axis, d).images
        feats, _ = _forward_2d_batch(net, Tensor(stack), training, rng)
        fv = ad.permute(feats, STACK_PERM[axis])
        fused = fv if fused is None else ad.add(fused, fv)
    return ad.conv3d(fused, net.params["fuse3d.w"], net.params["fuse3d.b"], same_pad=True)


def forward_df(net: Network, patch, d: int | None = None) -> np.ndarray:
    """Direction-fused catheter probability volume [M, M, M] (inference)."""
    if d is None:
        d = net.config.gap_d
    logits = forward_df_logits(net, patch, d, training=False)
    return ad.softmax(logits.data, axis=0)[1]


def fused_features(net: Network, patch, d: int) -> np.ndarray:
    """Fused pre-head feature volume [F, M, M, M] (inference)."""
    data = _patch_data(patch).astype(_param_dtype(net))
    volumes = []
    for axis in AXES:
        stack = slice_axis(data, axis, d).images
        feats, _ = _forward_2d_batch(net, Tensor(stack), training=False)
        volumes.append(np.ascontiguousarray(feats.data.transpose(STACK_PERM[axis])))
    return fuse(*volumes)


def forward_single_axis_logits(
    net: Network, patch, d: int, axis: str, training: bool = False, rng=None
) -> Tensor:
    """Per-plane logits of one axis stacked into a [2, M, M, M] Tensor."""
    data = _patch_data(patch).astype(_param_dtype(net))
    stack = slice_axis(data, axis, d).images
    _, logits = _forward_2d_batch(net, Tensor(stack), training, rng)
    return ad.permute(logits, STACK_PERM[axis])


def forward_single_axis(
    net: Network, patch, d: int | None = None, axis: str | None = None, seed: int | None = None
) -> np.ndarray:
    """Single-axis baseline probability volume [M, M, M].

    The axis must be given explicitly or drawn from a seeded default.
    """
    if d is None:
        d = net.config.gap_d
    if axis is None:
        if seed is None:
            raise ValueError("single-axis forward needs an explicit axis or a seed")
        axis = AXES[np.random.default_rng(seed).integers(0, 3)]
    logits = forward_single_axis_logits(net, patch, d, axis, training=False)
    return ad.softmax(logits.data, axis=0)[1]
