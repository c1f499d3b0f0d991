"""Catheter segmentation and localization in 3D ultrasound: tri-axial
slicing, a shared 2D FCN with direction-fused 2.5D features, patch-based
inference, spline-model localization, and evaluation metrics."""

from .volume import Mask3, PatchRegion, Volume3, extract_patch, load_mask, load_volume, normalize, save_mask, save_volume
from .slicing import TriSliceStack, fuse, slice_axis, stack_features, stitch, tile
from .autodiff import Tensor, backward
from .optim import AdamState, adam_step
from .network import (
    NetConfig,
    Network,
    build_network,
    forward_2d,
    forward_df,
    forward_single_axis,
    load_network,
    paper_config,
    tiny_config,
)
from .training import TrainConfig, TrainSample, augment, sample_training_patches, train
from .localize import (
    CatheterModel,
    SparseVolume,
    connected_components,
    extract_sparse,
    fit_spline,
    rank_control_points,
    spd_ransac,
)
from .metrics import MetricsReport, ahd, endpoint_error, overlap_metrics, skeleton_error
from .phantom import PhantomConfig, generate, generate_dataset, make_folds, write_dataset
from .pipeline import localize_mask, predict_volume

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
