import json

import numpy as np
import pytest

from catseg.localize import point_polyline_distance
from catseg.phantom import PhantomConfig, generate, generate_dataset, make_folds, write_dataset
from catseg.volume import load_mask, load_volume


@pytest.fixture(scope="module")
def default_case():
    return generate(PhantomConfig(seed=4))


def test_generation_is_seed_deterministic():
    a_vol, a_mask, a_sk = generate(PhantomConfig(seed=3))
    b_vol, b_mask, b_sk = generate(PhantomConfig(seed=3))
    c_vol, _, _ = generate(PhantomConfig(seed=5))
    assert np.array_equal(a_vol.data, b_vol.data)
    assert np.array_equal(a_mask.data, b_mask.data)
    assert np.array_equal(a_sk, b_sk)
    assert not np.array_equal(a_vol.data, c_vol.data)


def test_output_shapes_and_spacing(default_case):
    vol, mask, skeleton = default_case
    assert vol.dims == (64, 64, 64)
    assert vol.spacing_mm == (0.54, 0.54, 0.54)
    assert mask.data.shape == (64, 64, 64)
    assert set(np.unique(mask.data)) == {0, 1}
    assert skeleton.shape[1] == 3 and skeleton.shape[0] >= 50


def test_mask_is_tube_around_skeleton(default_case):
    _, mask, skeleton = default_case
    pos = np.argwhere(mask.data == 1).astype(float)
    d = point_polyline_distance(pos, skeleton)
    # every mask voxel lies within the tube radius (plus slack for the
    # 100-point downsampling of the returned skeleton)
    assert d.max() <= 2.1 + 0.4
    # skeleton stays inside the mask
    on_grid = np.clip(np.round(skeleton).astype(int), 0, 63)
    assert mask.data[tuple(on_grid.T)].mean() > 0.95


def test_straight_tube_volume_matches_cylinder():
    cfg = PhantomConfig(curvature=0.0, seed=1)
    _, mask, skeleton = generate(cfg)
    # skeleton is straight: chord length equals arc length
    seg = np.linalg.norm(np.diff(skeleton, axis=0), axis=1).sum()
    chord = np.linalg.norm(skeleton[-1] - skeleton[0])
    assert abs(seg - chord) < 1e-6
    expected = np.pi * cfg.tube_radius_vox**2 * seg
    assert abs(int(mask.data.sum()) - expected) / expected < 0.10


def test_tube_brighter_than_background(default_case):
    vol, mask, _ = default_case
    tube_mean = float(vol.data[mask.data == 1].mean())
    bg_mean = float(vol.data[mask.data == 0].mean())
    assert tube_mean > 2.0 * bg_mean


def test_distractors_do_not_touch_tube():
    # distractor blobs brighten the background but never overlap the mask;
    # check that bright background regions exist away from the tube
    cfg = PhantomConfig(seed=2, n_distractors=3)
    vol, mask, skeleton = generate(cfg)
    bg = vol.data[mask.data == 0]
    tube_mean = float(vol.data[mask.data == 1].mean())
    bright_bg = np.argwhere((mask.data == 0) & (vol.data > 0.8 * tube_mean)).astype(float)
    if bright_bg.shape[0] > 20:  # distractors present
        d = point_polyline_distance(bright_bg, skeleton)
        assert np.median(d) > cfg.tube_radius_vox + 2
    assert bg.min() >= 0.0


def test_config_validation():
    with pytest.raises(ValueError, match="curvature"):
        PhantomConfig(curvature=1.5)
    with pytest.raises(ValueError, match="fit"):
        PhantomConfig(dims=(6, 6, 6))
    with pytest.raises(ValueError):
        generate_dataset(0)


def test_dataset_seeds_are_distinct():
    members = generate_dataset(4, base_seed=11)
    seeds = [cfg.seed for cfg, _, _, _ in members]
    assert len(set(seeds)) == 4
    again = generate_dataset(4, base_seed=11)
    assert [c.seed for c, _, _, _ in again] == seeds


def test_make_folds_round_robin():
    folds = make_folds(25, 3)
    assert sorted(len(f) for f in folds) == [8, 8, 9]
    assert sorted(i for f in folds for i in f) == list(range(25))
    assert folds[0][:3] == [0, 3, 6]


def test_write_dataset_files_and_manifest(tmp_path):
    members = generate_dataset(3, base_seed=0)
    manifest_path = write_dataset(str(tmp_path / "data"), members, k_folds=3)
    with open(manifest_path) as f:
        manifest = json.load(f)
    assert len(manifest["members"]) == 3
    assert manifest["folds"] == [[0], [1], [2]]
    entry = manifest["members"][1]
    vol = load_volume(str(tmp_path / "data" / entry["volume"][: -len(".json")]))
    mask = load_mask(str(tmp_path / "data" / entry["mask"][: -len(".json")]))
    assert np.array_equal(vol.data, members[1][1].data)
    assert np.array_equal(mask.data, members[1][2].data)
    with open(tmp_path / "data" / entry["skeleton"]) as f:
        skeleton = np.asarray(json.load(f))
    assert np.allclose(skeleton, members[1][3])
