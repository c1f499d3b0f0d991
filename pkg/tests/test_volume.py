import json

import numpy as np
import pytest

from catseg.volume import (
    Mask3,
    PatchRegion,
    Volume3,
    extract_patch,
    load_mask,
    load_volume,
    normalize,
    save_mask,
    save_volume,
)


def make_volume(dims, seed=0, spacing=(0.54, 0.54, 0.54)):
    rng = np.random.default_rng(seed)
    return Volume3(data=rng.random(dims).astype(np.float32), spacing_mm=spacing)


def test_load_tiny_volume(tmp_path):
    base = tmp_path / "v"
    with open(str(base) + ".json", "w") as f:
        json.dump({"dims": [2, 2, 2], "spacing_mm": [0.54, 0.54, 0.54], "dtype": "f32le"}, f)
    np.arange(8, dtype="<f4").tofile(str(base) + ".raw")
    vol = load_volume(str(base))
    assert vol.dims == (2, 2, 2)
    # x-fastest order: linear index 1 is voxel (1,0,0)
    assert vol.data[1, 0, 0] == 1.0
    assert vol.data[0, 1, 0] == 2.0
    assert vol.data[0, 0, 1] == 4.0


def test_load_accepts_acquisition_geometry(tmp_path):
    base = tmp_path / "full"
    with open(str(base) + ".json", "w") as f:
        json.dump({"dims": [128, 128, 128], "spacing_mm": [0.54, 0.54, 0.54], "dtype": "u8"}, f)
    np.zeros(128**3, dtype=np.uint8).tofile(str(base) + ".raw")
    vol = load_volume(str(base))
    assert vol.dims == (128, 128, 128)
    assert vol.spacing_mm == (0.54, 0.54, 0.54)
    assert vol.data.dtype == np.float32  # u8 promoted without rescaling


def test_load_size_mismatch(tmp_path):
    base = tmp_path / "bad"
    with open(str(base) + ".json", "w") as f:
        json.dump({"dims": [2, 2, 2], "spacing_mm": [1, 1, 1], "dtype": "u8"}, f)
    np.zeros(7, dtype=np.uint8).tofile(str(base) + ".raw")
    with pytest.raises(ValueError, match="size mismatch"):
        load_volume(str(base))


def test_load_unknown_dtype(tmp_path):
    base = tmp_path / "bad"
    with open(str(base) + ".json", "w") as f:
        json.dump({"dims": [2, 2, 2], "spacing_mm": [1, 1, 1], "dtype": "f64"}, f)
    with pytest.raises(ValueError, match="dtype"):
        load_volume(str(base))


def test_save_load_round_trip(tmp_path):
    vol = make_volume((5, 4, 3), seed=1)
    save_volume(vol, str(tmp_path / "v"))
    back = load_volume(str(tmp_path / "v"))
    assert back.dims == vol.dims
    assert back.spacing_mm == vol.spacing_mm
    assert np.array_equal(back.data, vol.data)


def test_save_records_spacing_verbatim(tmp_path):
    vol = make_volume((3, 3, 3), spacing=(0.54, 0.54, 0.54))
    save_volume(vol, str(tmp_path / "v"))
    with open(tmp_path / "v.json") as f:
        header = json.load(f)
    assert header["spacing_mm"] == [0.54, 0.54, 0.54]


def test_save_unwritable_path():
    vol = make_volume((2, 2, 2))
    with pytest.raises(OSError):
        save_volume(vol, "/nonexistent_dir/deeper/v")


def test_mask_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    mask = Mask3(data=(rng.random((4, 5, 6)) > 0.5).astype(np.uint8))
    save_mask(mask, str(tmp_path / "m"))
    back = load_mask(str(tmp_path / "m"))
    assert np.array_equal(back.data, mask.data)


def test_mask_rejects_nonbinary():
    with pytest.raises(ValueError, match="0 or 1"):
        Mask3(data=np.full((2, 2, 2), 3, dtype=np.uint8))


def test_volume_rejects_bad_spacing():
    with pytest.raises(ValueError, match="spacing"):
        Volume3(data=np.zeros((2, 2, 2)), spacing_mm=(0.0, 1.0, 1.0))


def test_normalize_affine_endpoints():
    data = np.zeros((3, 1, 1))
    data[:, 0, 0] = [0.0, 127.5, 255.0]
    out = normalize(Volume3(data=data))
    assert np.allclose(out.data[:, 0, 0], [0.0, 0.5, 1.0])


def test_normalize_constant_volume():
    out = normalize(Volume3(data=np.full((3, 3, 3), 7.0)))
    assert np.all(out.data == 0)


def test_normalize_random_range_and_idempotence():
    vol = make_volume((8, 8, 8), seed=2)
    out = normalize(vol)
    assert abs(float(out.data.min())) < 1e-6
    assert abs(float(out.data.max()) - 1.0) < 1e-6
    again = normalize(out)
    assert np.allclose(again.data, out.data, atol=1e-6)


def test_extract_patch_interior_equals_naive_crop():
    vol = make_volume((32, 32, 32), seed=4)
    region = PatchRegion(core_origin=(10, 8, 12), core_size=8, outer_size=12)
    patch = extract_patch(vol, region)
    ox, oy, oz = region.outer_origin
    naive = np.zeros((12, 12, 12), dtype=vol.data.dtype)
    for x in range(12):
        for y in range(12):
            for z in range(12):
                naive[x, y, z] = vol.data[ox + x, oy + y, oz + z]
    assert np.array_equal(patch.data, naive)


def test_extract_patch_boundary_replication():
    vol = make_volume((128, 128, 128), seed=5)
    region = PatchRegion(core_origin=(0, 0, 0), core_size=32, outer_size=48)
    patch = extract_patch(vol, region)
    assert patch.dims == (48, 48, 48)
    # the first 8 planes along each axis replicate the volume boundary
    for k in range(8):
        assert np.array_equal(patch.data[k], patch.data[8])
        assert np.array_equal(patch.data[:, k], patch.data[:, 8])
        assert np.array_equal(patch.data[:, :, k], patch.data[:, :, 8])


def test_extract_patch_no_enlargement():
    vol = make_volume((16, 16, 16), seed=6)
    region = PatchRegion(core_origin=(4, 4, 4), core_size=8, outer_size=8)
    patch = extract_patch(vol, region)
    assert np.array_equal(patch.data, vol.data[4:12, 4:12, 4:12])


def test_extract_patch_core_out_of_bounds():
    vol = make_volume((16, 16, 16))
    with pytest.raises(ValueError, match="out of bounds"):
        extract_patch(vol, PatchRegion(core_origin=(12, 0, 0), core_size=8, outer_size=8))


def test_edge_replication_idempotent():
    from catseg.volume import crop_replicated

    vol = make_volume((16, 16, 16), seed=7)
    direct = crop_replicated(vol.data, (-8, -8, -8), 32)
    padded = crop_replicated(vol.data, (-4, -4, -4), 24)
    via_padded = crop_replicated(padded, (-4, -4, -4), 32)
    assert np.array_equal(via_padded, direct)
